#include "skillfix/repair.hpp"

#include <algorithm>
#include <random>
#include <set>
#include <stdexcept>

#include "skillfix/digest.hpp"

namespace skillfix {

std::string to_string(RepairMode m) {
  switch (m) {
    case RepairMode::Full: return "full";
    case RepairMode::NoLocalization: return "no_localization";
    case RepairMode::Unconstrained: return "unconstrained";
    case RepairMode::TextOnlyRewrite: return "text_only_rewrite";
  }
  std::abort();
}

double j_of(double succ, double cost, int edit, const RepairConfig& cfg) {
  return succ - cfg.lambda * cost - cfg.gamma * edit;
}

namespace {

struct InstanceOutcome {
  Trace trace;
  Verdict verdict;
  bool full_success = false;
  int action_budget = 0;
};

Budgets budgets_for(const SkillArtifact& s, const RepairConfig& cfg) {
  if (cfg.budgets.max_total_actions > 0) return cfg.budgets;
  Budgets b = default_budgets(s);
  b.requery_window = cfg.budgets.requery_window;
  b.max_repeats_without_progress = cfg.budgets.max_repeats_without_progress;
  return b;
}

std::vector<InstanceOutcome> run_all(const SkillArtifact& s,
                                     const std::vector<TaskInstance>& repair_set,
                                     const RepairConfig& cfg) {
  std::vector<InstanceOutcome> out;
  out.reserve(repair_set.size());
  const Budgets b = budgets_for(s, cfg);
  for (const auto& inst : repair_set) {
    EnvState env = make_env(inst);
    auto [trace, verdict] = execute_artifact(s, env, b);
    const bool ok = verdict.success && final_verify(inst.spec, trace);
    out.push_back({std::move(trace), std::move(verdict), ok, b.max_total_actions});
  }
  return out;
}

Score score_outcomes(const std::vector<InstanceOutcome>& outcomes, int edit,
                     const RepairConfig& cfg) {
  Score sc;
  sc.edit = edit;
  double cost_sum = 0.0;
  int ok = 0;
  for (const auto& oc : outcomes) {
    ok += oc.full_success ? 1 : 0;
    cost_sum += static_cast<double>(oc.trace.total_actions) / oc.action_budget;
  }
  sc.succ = static_cast<double>(ok) / static_cast<double>(outcomes.size());
  sc.cost = cost_sum / static_cast<double>(outcomes.size());
  sc.j_value = j_of(sc.succ, sc.cost, sc.edit, cfg);
  return sc;
}

// A step-verifier pass that still fails the task-level check is reported as
// a failure of the final assertions, with the closing record as evidence.
Verdict demote_to_final_failure(const SkillArtifact& s, const Trace& trace) {
  Verdict v;
  v.success = false;
  v.step_index = static_cast<int>(s.steps.size()) + 1;
  v.code = ErrorCode::AssertFail;
  Evidence ev;
  ev.record = trace.records.back();
  ev.pre_snapshot = trace.final_snapshot;
  ev.post_snapshot = trace.final_snapshot;
  ev.initial_url = trace.initial_snapshot.url;
  v.evidence = std::move(ev);
  return v;
}

std::vector<Diagnosis> diagnose_failures(const SkillArtifact& s,
                                         const std::vector<InstanceOutcome>& outcomes) {
  std::vector<Diagnosis> out;
  for (const auto& oc : outcomes) {
    if (oc.full_success) continue;
    if (oc.verdict.success) {
      out.push_back(localize(s, oc.trace, demote_to_final_failure(s, oc.trace)));
    } else {
      out.push_back(localize(s, oc.trace, oc.verdict));
    }
  }
  return out;
}

Diagnosis top_diagnosis(const SkillArtifact& s,
                        const std::vector<InstanceOutcome>& outcomes,
                        const RepairConfig& cfg, int round) {
  const auto diags = diagnose_failures(s, outcomes);
  Diagnosis top = aggregate_diagnoses(diags)[0].representative;
  if (cfg.mode == RepairMode::NoLocalization) {
    Verdict v;
    v.success = false;
    v.step_index = top.step_index;
    v.code = top.code;
    v.evidence = top.evidence;
    top = localize_random(s, Trace{}, v,
                          cfg.rng_seed * 1000003ULL + static_cast<std::uint64_t>(round));
  }
  return top;
}

// One scored candidate: the patched artifact plus the chain that built it.
struct ChainCandidate {
  SkillArtifact artifact;
  std::vector<InstanceOutcome> outcomes;
  Score sc;
  nlohmann::json chain = nlohmann::json::array();
  std::string digest;
};

std::vector<Patch> patches_for(const Diagnosis& d, const SkillArtifact& s,
                               const RepairConfig& cfg) {
  if (cfg.mode != RepairMode::Unconstrained) {
    return candidates_for_site(d, s, cfg.per_operator_cap).candidates;
  }
  // Broad revisions: propose for every site the artifact has, reusing the
  // diagnosis evidence everywhere.
  std::vector<Patch> all;
  for (const auto& site : enumerate_sites(s)) {
    Diagnosis forced = d;
    forced.site = site;
    std::vector<Patch> got;
    try {
      got = candidates_for_site(forced, s, cfg.per_operator_cap).candidates;
    } catch (const PatchError&) {
      continue;
    }
    for (auto& p : got) all.push_back(std::move(p));
  }
  return all;
}

bool better_candidate(const ChainCandidate& a, const ChainCandidate& b) {
  if (a.sc.j_value != b.sc.j_value) return a.sc.j_value > b.sc.j_value;
  if (a.sc.edit != b.sc.edit) return a.sc.edit < b.sc.edit;
  return a.digest < b.digest;
}

void check_config(const RepairConfig& cfg) {
  if (cfg.K < 0 || cfg.max_rounds < 1) {
    throw std::invalid_argument("repair config: K and max_rounds must be positive");
  }
  if (cfg.mode != RepairMode::Unconstrained &&
      (cfg.per_round_edit_budget < 1 || cfg.per_round_edit_budget > 3)) {
    throw std::invalid_argument("repair config: per_round_edit_budget must be 1..3");
  }
  if (cfg.lambda < 0.0 || cfg.gamma < 0.0) {
    throw std::invalid_argument("repair config: weights must be nonnegative");
  }
}

void check_draft(const SkillArtifact& s0) {
  const auto violations = validate_schema(s0);
  if (!violations.empty()) {
    throw std::invalid_argument("draft artifact invalid: " +
                                violations.front().path + ": " +
                                violations.front().reason);
  }
}

}  // namespace

Score score(const SkillArtifact& s, const std::vector<TaskInstance>& repair_set,
            const SkillArtifact& s0, const RepairConfig& cfg) {
  if (repair_set.empty()) {
    throw std::invalid_argument("score: empty repair set");
  }
  return score_outcomes(run_all(s, repair_set, cfg), edit_distance(s, s0), cfg);
}

bool accept(const Score& candidate, const Score& incumbent) {
  return candidate.j_value > incumbent.j_value;
}

std::pair<SkillArtifact, RepairHistory> repair_loop(
    const SkillArtifact& s0, const std::vector<TaskInstance>& repair_set,
    const RepairConfig& cfg) {
  check_config(cfg);
  check_draft(s0);
  if (repair_set.empty()) {
    throw std::invalid_argument("repair_loop: empty repair set");
  }

  RepairHistory history;
  SkillArtifact incumbent = s0;
  auto inc_outcomes = run_all(incumbent, repair_set, cfg);
  Score inc_score = score_outcomes(inc_outcomes, 0, cfg);

  const int ceiling = cfg.mode == RepairMode::Unconstrained
                          ? std::max(cfg.K, 1)
                          : cfg.per_round_edit_budget;

  for (int round = 1; round <= cfg.max_rounds; ++round) {
    RoundRecord rr;
    rr.round = round;
    rr.incumbent = inc_score;
    if (inc_score.succ >= 1.0) {
      history.rounds.push_back(std::move(rr));
      break;
    }

    const Diagnosis top = top_diagnosis(incumbent, inc_outcomes, cfg, round);
    rr.diagnosis = to_json(top);

    // Candidates already tried this round (or equal to the incumbent).
    std::set<std::string> seen{canonical_digest(incumbent)};
    std::vector<ChainCandidate> level;  // previous depth's candidates
    bool accepted_this_round = false;

    for (int depth = 1; depth <= ceiling && !accepted_this_round; ++depth) {
      std::vector<ChainCandidate> current;

      auto extend = [&](const SkillArtifact& base, const nlohmann::json& base_chain,
                        const Diagnosis& d) {
        for (const auto& p : patches_for(d, base, cfg)) {
          SkillArtifact patched;
          try {
            patched = apply_patch(base, p);
          } catch (const PatchError&) {
            continue;
          }
          if (edit_distance(patched, s0) > cfg.K) continue;
          std::string digest = canonical_digest(patched);
          if (!seen.insert(digest).second) continue;
          ChainCandidate cand;
          cand.artifact = std::move(patched);
          cand.chain = base_chain;
          cand.chain.push_back(
              {{"patch", to_json(p)}, {"site", to_json(d.site)}});
          cand.digest = std::move(digest);
          cand.outcomes = run_all(cand.artifact, repair_set, cfg);
          cand.sc = score_outcomes(cand.outcomes,
                                   edit_distance(cand.artifact, s0), cfg);
          current.push_back(std::move(cand));
        }
      };

      if (depth == 1) {
        extend(incumbent, nlohmann::json::array(), top);
      } else {
        for (const auto& base : level) {
          if (base.sc.succ >= 1.0) continue;  // nothing left to diagnose
          Diagnosis redone =
              top_diagnosis(base.artifact, base.outcomes, cfg,
                            round * 100 + depth);
          extend(base.artifact, base.chain, redone);
        }
      }

      // Record every scored candidate, then take the best strict improvement.
      std::size_t best_idx = current.size();
      for (std::size_t i = 0; i < current.size(); ++i) {
        if (best_idx == current.size() ||
            better_candidate(current[i], current[best_idx])) {
          best_idx = i;
        }
      }
      const std::size_t row_base = rr.candidates.size();
      for (const auto& c : current) {
        rr.candidates.push_back({c.digest, c.sc, false, false, c.chain});
      }
      if (best_idx < current.size() &&
          accept(current[best_idx].sc, inc_score)) {
        rr.candidates[row_base + best_idx].accepted = true;
        rr.any_accepted = true;
        accepted_this_round = true;
        incumbent = current[best_idx].artifact;
        inc_outcomes = std::move(current[best_idx].outcomes);
        inc_score = current[best_idx].sc;
      }
      level = std::move(current);
    }

    const bool stop = !rr.any_accepted;
    history.rounds.push_back(std::move(rr));
    if (stop) break;
  }

  history.final = incumbent;
  history.final_score = inc_score;
  return {std::move(incumbent), std::move(history)};
}

std::pair<SkillArtifact, RepairHistory> run_text_only_rewrite(
    const SkillArtifact& s0, const std::vector<TaskInstance>& repair_set,
    const RepairConfig& cfg, const Rewriter& rewriter) {
  check_draft(s0);
  if (repair_set.empty()) {
    throw std::invalid_argument("run_text_only_rewrite: empty repair set");
  }

  RepairHistory history;
  SkillArtifact incumbent = s0;
  Score inc_score = score_outcomes(run_all(incumbent, repair_set, cfg), 0, cfg);

  for (int round = 1; round <= cfg.max_rounds; ++round) {
    RoundRecord rr;
    rr.round = round;
    rr.incumbent = inc_score;
    if (inc_score.succ >= 1.0) {
      history.rounds.push_back(std::move(rr));
      break;
    }

    const std::string text = serialize_canonical(incumbent);
    const std::string rewritten = rewriter(
        text, cfg.rng_seed * 1000003ULL + static_cast<std::uint64_t>(round));

    CandidateRecord cr;
    bool no_op = false;
    try {
      SkillArtifact cand = parse_artifact(rewritten);
      cr.digest = canonical_digest(cand);
      if (content_equal(cand, incumbent)) {
        // The rewriter stands by the current text; nothing more will change.
        cr.score = inc_score;
        no_op = true;
      } else {
        cr.score = score_outcomes(run_all(cand, repair_set, cfg),
                                  edit_distance(cand, s0), cfg);
        if (accept(cr.score, inc_score)) {
          cr.accepted = true;
          rr.any_accepted = true;
          incumbent = std::move(cand);
          inc_score = cr.score;
        }
      }
    } catch (const ParseError&) {
      cr.parse_failed = true;
      cr.digest = sha256_hex(rewritten);
      cr.score = Score{0.0, 0.0, 0, -1.0};
    } catch (const SchemaError&) {
      cr.parse_failed = true;
      cr.digest = sha256_hex(rewritten);
      cr.score = Score{0.0, 0.0, 0, -1.0};
    }
    rr.candidates.push_back(std::move(cr));
    history.rounds.push_back(std::move(rr));
    if (no_op) break;
  }

  history.final = incumbent;
  history.final_score = inc_score;
  return {std::move(incumbent), std::move(history)};
}

std::string builtin_seeded_rewriter(std::string_view text, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::string original(text);
  if (rng() % 10 == 0) {
    // A free-form editor sometimes hands back broken syntax.
    const std::size_t cut = original.rfind('}');
    return cut == std::string::npos ? original + "}" : original.substr(0, cut);
  }

  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(original);
  } catch (const nlohmann::json::parse_error&) {
    return original;
  }

  // Collect every string value in the document, then mangle one of them.
  std::vector<nlohmann::json*> strings;
  std::function<void(nlohmann::json&)> walk = [&](nlohmann::json& node) {
    if (node.is_string()) {
      strings.push_back(&node);
    } else if (node.is_object() || node.is_array()) {
      for (auto& child : node) walk(child);
    }
  };
  walk(doc);
  if (strings.empty()) return original;

  nlohmann::json* slot = strings[rng() % strings.size()];
  std::string value = slot->get<std::string>();
  if (value.empty()) {
    value = "x";
  } else {
    const std::size_t pos = rng() % value.size();
    switch (rng() % 3) {
      case 0:
        value.erase(pos, 1);
        break;
      case 1:
        value.insert(pos, 1, value[pos]);
        break;
      default:
        if (pos + 1 < value.size()) std::swap(value[pos], value[pos + 1]);
        else value.push_back('x');
        break;
    }
  }
  *slot = value;
  return doc.dump();
}

nlohmann::json to_json(const Score& s) {
  return nlohmann::json{{"succ", s.succ},
                        {"cost", s.cost},
                        {"edit", s.edit},
                        {"j_value", s.j_value}};
}

nlohmann::json to_json(const CandidateRecord& c) {
  nlohmann::json j{{"digest", c.digest},
                   {"score", to_json(c.score)},
                   {"accepted", c.accepted}};
  if (c.parse_failed) j["parse_failed"] = true;
  if (!c.patch_chain.is_null() && !c.patch_chain.empty()) {
    j["patch_chain"] = c.patch_chain;
  }
  return j;
}

nlohmann::json to_json(const RoundRecord& r) {
  nlohmann::json cands = nlohmann::json::array();
  for (const auto& c : r.candidates) cands.push_back(to_json(c));
  nlohmann::json j{{"round", r.round},
                   {"incumbent", to_json(r.incumbent)},
                   {"any_accepted", r.any_accepted},
                   {"candidates", std::move(cands)}};
  if (!r.diagnosis.is_null()) j["diagnosis"] = r.diagnosis;
  return j;
}

void write_history(const RepairHistory& h, std::ostream& out) {
  for (const auto& r : h.rounds) out << to_json(r).dump() << "\n";
  out << nlohmann::json{{"final_digest", canonical_digest(h.final)},
                        {"final_score", to_json(h.final_score)}}
             .dump()
      << "\n";
}

}  // namespace skillfix
