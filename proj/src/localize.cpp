#include "skillfix/localize.hpp"

#include <algorithm>
#include <map>
#include <random>
#include <stdexcept>
#include <tuple>

namespace skillfix {

std::string to_string(SiteType t) {
  switch (t) {
    case SiteType::Selector: return "selector";
    case SiteType::Precondition: return "precondition";
    case SiteType::PostAssertion: return "post_assertion";
    case SiteType::Recovery: return "recovery";
    case SiteType::Args: return "args";
  }
  std::abort();
}

namespace {

bool blocked_by_modal(const Evidence& ev) {
  for (const auto& e : ev.record.events) {
    if (e.cause == "occluded_by_modal") return true;
  }
  return false;
}

RepairSite site_for(const SkillArtifact& s, const Verdict& v) {
  const int m = static_cast<int>(s.steps.size());
  const Evidence& ev = *v.evidence;
  switch (v.code) {
    case ErrorCode::NotFound:
      return {SiteType::Selector, v.step_index, false};
    case ErrorCode::WrongState:
      if (blocked_by_modal(ev)) return {SiteType::Recovery, 0, false};
      return {SiteType::Precondition, 0, false};
    case ErrorCode::AssertFail: {
      if (v.step_index > m) return {SiteType::PostAssertion, 0, true};
      // No observable effect means the claim itself is the suspect; an
      // effect that still fails the claim points at the wrong element.
      if (ev.record.post_hash == ev.record.pre_hash) {
        return {SiteType::PostAssertion, v.step_index, false};
      }
      return {SiteType::Selector, v.step_index, false};
    }
    case ErrorCode::LoopTimeout:
      return {SiteType::Recovery, 0, false};
    case ErrorCode::InputInvalid:
      return {SiteType::Args, v.step_index, false};
  }
  std::abort();
}

}  // namespace

std::vector<RepairSite> enumerate_sites(const SkillArtifact& s) {
  const int m = static_cast<int>(s.steps.size());
  std::vector<RepairSite> sites;
  for (int j = 1; j <= m; ++j) sites.push_back({SiteType::Selector, j, false});
  for (int j = 1; j <= m; ++j) sites.push_back({SiteType::Args, j, false});
  for (int j = 1; j <= m; ++j) sites.push_back({SiteType::PostAssertion, j, false});
  sites.push_back({SiteType::PostAssertion, 0, true});
  sites.push_back({SiteType::Precondition, 0, false});
  sites.push_back({SiteType::Recovery, 0, false});
  return sites;
}

Diagnosis localize(const SkillArtifact& s, const Trace& trace,
                   const Verdict& verdict) {
  (void)trace;  // the verdict's evidence already carries the failing record
  if (verdict.success) {
    throw std::logic_error("localize called on a successful verdict");
  }
  if (!verdict.evidence.has_value()) {
    throw std::logic_error("failure verdict carries no evidence");
  }
  Diagnosis d;
  d.step_index = verdict.step_index;
  d.code = verdict.code;
  d.evidence = *verdict.evidence;
  d.site = site_for(s, verdict);
  return d;
}

Diagnosis localize_random(const SkillArtifact& s, const Trace& trace,
                          const Verdict& verdict, std::uint64_t seed) {
  Diagnosis d = localize(s, trace, verdict);
  const std::vector<RepairSite> sites = enumerate_sites(s);
  std::mt19937_64 rng(seed);
  d.site = sites[rng() % sites.size()];
  return d;
}

std::vector<DiagnosisGroup> aggregate_diagnoses(
    const std::vector<Diagnosis>& diags) {
  if (diags.empty()) {
    throw std::invalid_argument("aggregate_diagnoses: empty input");
  }
  using Key = std::tuple<int, int, int>;  // step, code, site kind
  std::map<Key, DiagnosisGroup> groups;
  for (const auto& d : diags) {
    Key key{d.step_index, static_cast<int>(d.code), static_cast<int>(d.site.type)};
    auto [it, fresh] = groups.try_emplace(key, DiagnosisGroup{d, 0});
    it->second.count += 1;
    if (!fresh) {
      // Keep the member with the smallest canonical encoding so the result
      // is identical for any permutation of the input.
      if (to_json(d).dump() < to_json(it->second.representative).dump()) {
        it->second.representative = d;
      }
    }
  }
  std::vector<DiagnosisGroup> out;
  for (auto& [key, group] : groups) out.push_back(std::move(group));
  std::stable_sort(out.begin(), out.end(),
                   [](const DiagnosisGroup& a, const DiagnosisGroup& b) {
                     if (a.count != b.count) return a.count > b.count;
                     if (a.representative.step_index != b.representative.step_index) {
                       return a.representative.step_index < b.representative.step_index;
                     }
                     return static_cast<int>(a.representative.code) <
                            static_cast<int>(b.representative.code);
                   });
  return out;
}

nlohmann::json to_json(const RepairSite& site) {
  nlohmann::json j{{"kind", to_string(site.type)}};
  if (site.step > 0) j["step"] = site.step;
  if (site.final) j["final"] = true;
  return j;
}

nlohmann::json to_json(const Diagnosis& d) {
  nlohmann::json ev{{"record", to_json(d.evidence.record)},
                    {"pre_hash", snapshot_hash(d.evidence.pre_snapshot)},
                    {"initial_url", d.evidence.initial_url}};
  if (d.evidence.post_snapshot.has_value()) {
    ev["post_hash"] = snapshot_hash(*d.evidence.post_snapshot);
  }
  return nlohmann::json{{"step_index", d.step_index},
                        {"code", to_string(d.code)},
                        {"site", to_json(d.site)},
                        {"evidence", std::move(ev)}};
}

}  // namespace skillfix
