#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "skillfix/localize.hpp"
#include "skillfix/tasks.hpp"

using namespace skillfix;

namespace {

// A three-step artifact with every site populated, used as the shape under
// diagnosis. The content is irrelevant; localization reads the verdict.
SkillArtifact shape_artifact() {
  SkillArtifact s;
  s.skill_name = "shape";
  s.goal = "fill the form and submit";
  Assertion url;
  url.kind = AssertionKind::UrlMatches;
  url.pattern = "start";
  s.preconditions.push_back(url);
  for (int i = 0; i < 3; ++i) {
    Step st;
    st.selector.role = "button";
    st.selector.text = TextMatch{TextMode::Equals, "Step" + std::to_string(i)};
    st.action = ActionKind::Click;
    s.steps.push_back(st);
  }
  s.postconditions.push_back(url);
  s.terminate.push_back(url);
  return s;
}

PageSnapshot snapshot_with(const std::string& url, bool with_modal) {
  PageSnapshot snap;
  snap.url = url;
  snap.root.stable_id = "root";
  snap.root.role = Role::Container;
  if (with_modal) {
    Element dlg;
    dlg.stable_id = "dlg";
    dlg.role = Role::Dialog;
    snap.modal_stack.push_back(dlg);
  }
  return snap;
}

// Builds a synthetic failing verdict without running the simulator, so each
// localization rule is exercised in isolation.
struct FailureParts {
  int step = 1;
  ErrorCode code = ErrorCode::NotFound;
  bool occluded = false;
  bool hash_moved = false;
};

std::pair<Trace, Verdict> synthetic_failure(const FailureParts& parts) {
  Trace trace;
  trace.initial_snapshot = snapshot_with("https://x.local/start", false);
  trace.final_snapshot = snapshot_with("https://x.local/start", parts.occluded);

  StepRecord rec;
  rec.step_index = parts.step;
  rec.pre_hash = "h0";
  rec.post_hash = parts.hash_moved ? "h1" : "h0";
  if (parts.code == ErrorCode::WrongState && parts.occluded) {
    Event e;
    e.kind = EventKind::BlockedAction;
    e.cause = "occluded_by_modal";
    rec.events.push_back(e);
  }
  if (parts.code == ErrorCode::InputInvalid) {
    Event e;
    e.kind = EventKind::RejectedInput;
    e.detail = "max_length=8";
    rec.events.push_back(e);
  }
  if (parts.code == ErrorCode::AssertFail) {
    AssertionResult ar;
    ar.assertion.kind = AssertionKind::StateChanged;
    ar.pass = false;
    ar.observed = "state unchanged";
    rec.assertion_results.push_back(ar);
  }
  trace.records.push_back(rec);

  Verdict v;
  v.success = false;
  v.step_index = parts.step;
  v.code = parts.code;
  Evidence ev;
  ev.record = rec;
  ev.pre_snapshot = trace.initial_snapshot;
  ev.post_snapshot = trace.final_snapshot;
  ev.initial_url = trace.initial_snapshot.url;
  v.evidence = ev;
  return {trace, v};
}

Diagnosis diagnose(const FailureParts& parts) {
  SkillArtifact s = shape_artifact();
  auto [trace, verdict] = synthetic_failure(parts);
  return localize(s, trace, verdict);
}

}  // namespace

TEST_CASE("NOT_FOUND points at the failing step's selector") {
  Diagnosis d = diagnose({.step = 2, .code = ErrorCode::NotFound});
  CHECK(d.site.type == SiteType::Selector);
  CHECK(d.site.step == 2);
  CHECK(d.step_index == 2);
  CHECK(d.code == ErrorCode::NotFound);
}

TEST_CASE("WRONG_STATE splits on modal evidence") {
  SUBCASE("blocked by a modal: fix recovery") {
    Diagnosis d =
        diagnose({.step = 2, .code = ErrorCode::WrongState, .occluded = true});
    CHECK(d.site.type == SiteType::Recovery);
    CHECK(d.site.step == 0);
  }
  SUBCASE("anything else: fix the preconditions") {
    Diagnosis d = diagnose({.step = 1, .code = ErrorCode::WrongState});
    CHECK(d.site.type == SiteType::Precondition);
    CHECK(d.site.step == 0);
  }
}

TEST_CASE("ASSERT_FAIL distinguishes wrong claims from wrong targets") {
  SUBCASE("page never moved: the claim is suspect") {
    Diagnosis d = diagnose(
        {.step = 2, .code = ErrorCode::AssertFail, .hash_moved = false});
    CHECK(d.site.type == SiteType::PostAssertion);
    CHECK(d.site.step == 2);
    CHECK(!d.site.final);
  }
  SUBCASE("page moved: the wrong element was acted on") {
    Diagnosis d = diagnose(
        {.step = 2, .code = ErrorCode::AssertFail, .hash_moved = true});
    CHECK(d.site.type == SiteType::Selector);
    CHECK(d.site.step == 2);
  }
  SUBCASE("failing final checks target the artifact-level assertions") {
    Diagnosis d = diagnose(
        {.step = 4, .code = ErrorCode::AssertFail, .hash_moved = true});
    CHECK(d.site.type == SiteType::PostAssertion);
    CHECK(d.site.final);
  }
}

TEST_CASE("LOOP_TIMEOUT always lands on recovery") {
  Diagnosis d = diagnose({.step = 3, .code = ErrorCode::LoopTimeout});
  CHECK(d.site.type == SiteType::Recovery);
}

TEST_CASE("INPUT_INVALID points at the failing step's arguments") {
  Diagnosis d = diagnose({.step = 2, .code = ErrorCode::InputInvalid});
  CHECK(d.site.type == SiteType::Args);
  CHECK(d.site.step == 2);
}

TEST_CASE("localizing a success is a logic error") {
  SkillArtifact s = shape_artifact();
  auto [trace, verdict] = synthetic_failure({});
  verdict.success = true;
  CHECK_THROWS_AS(localize(s, trace, verdict), std::logic_error);
}

TEST_CASE("aggregation groups identical sites and orders by weight") {
  SUBCASE("five identical diagnoses collapse into one group") {
    std::vector<Diagnosis> diags(5, diagnose({.step = 2, .code = ErrorCode::NotFound}));
    auto groups = aggregate_diagnoses(diags);
    REQUIRE(groups.size() == 1);
    CHECK(groups[0].count == 5);
    CHECK(groups[0].representative.site.type == SiteType::Selector);
  }
  SUBCASE("higher counts come first") {
    std::vector<Diagnosis> diags;
    for (int i = 0; i < 3; ++i) diags.push_back(diagnose({.step = 2, .code = ErrorCode::NotFound}));
    for (int i = 0; i < 2; ++i) {
      diags.push_back(diagnose(
          {.step = 4, .code = ErrorCode::AssertFail, .hash_moved = true}));
    }
    auto groups = aggregate_diagnoses(diags);
    REQUIRE(groups.size() == 2);
    CHECK(groups[0].count == 3);
    CHECK(groups[0].representative.code == ErrorCode::NotFound);
    CHECK(groups[1].count == 2);
  }
  SUBCASE("equal counts break ties on the earlier step") {
    std::vector<Diagnosis> diags;
    diags.push_back(diagnose({.step = 4, .code = ErrorCode::AssertFail, .hash_moved = true}));
    diags.push_back(diagnose({.step = 2, .code = ErrorCode::NotFound}));
    auto groups = aggregate_diagnoses(diags);
    REQUIRE(groups.size() == 2);
    CHECK(groups[0].representative.step_index == 2);
    CHECK(groups[1].representative.step_index == 4);
  }
  SUBCASE("equal count and step break ties on code declaration order") {
    std::vector<Diagnosis> diags;
    diags.push_back(diagnose({.step = 2, .code = ErrorCode::InputInvalid}));
    diags.push_back(diagnose({.step = 2, .code = ErrorCode::NotFound}));
    auto groups = aggregate_diagnoses(diags);
    REQUIRE(groups.size() == 2);
    CHECK(groups[0].representative.code == ErrorCode::NotFound);
    CHECK(groups[1].representative.code == ErrorCode::InputInvalid);
  }
  SUBCASE("input permutation never changes the output") {
    std::vector<Diagnosis> diags;
    diags.push_back(diagnose({.step = 1, .code = ErrorCode::NotFound}));
    diags.push_back(diagnose({.step = 2, .code = ErrorCode::NotFound}));
    diags.push_back(diagnose({.step = 2, .code = ErrorCode::NotFound}));
    diags.push_back(diagnose({.step = 2, .code = ErrorCode::InputInvalid}));
    diags.push_back(diagnose({.step = 3, .code = ErrorCode::LoopTimeout}));

    auto reference = aggregate_diagnoses(diags);
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
      for (std::size_t i = diags.size(); i > 1; --i) {
        std::swap(diags[i - 1], diags[rng() % i]);
      }
      auto shuffled = aggregate_diagnoses(diags);
      REQUIRE(shuffled.size() == reference.size());
      for (std::size_t g = 0; g < reference.size(); ++g) {
        CHECK(shuffled[g].count == reference[g].count);
        CHECK(to_json(shuffled[g].representative) ==
              to_json(reference[g].representative));
      }
    }
  }
  SUBCASE("empty input is rejected") {
    CHECK_THROWS_AS(aggregate_diagnoses({}), std::invalid_argument);
  }
}

TEST_CASE("site enumeration walks steps then artifact-level blocks") {
  SkillArtifact s = shape_artifact();
  auto sites = enumerate_sites(s);
  // 3 per step (selector, args, post) + final post + precondition + recovery.
  REQUIRE(sites.size() == 3 * s.steps.size() + 3);
  int selectors = 0, args = 0, posts = 0, finals = 0, pres = 0, recs = 0;
  for (const auto& site : sites) {
    switch (site.type) {
      case SiteType::Selector: ++selectors; break;
      case SiteType::Args: ++args; break;
      case SiteType::PostAssertion:
        site.final ? ++finals : ++posts;
        break;
      case SiteType::Precondition: ++pres; break;
      case SiteType::Recovery: ++recs; break;
    }
  }
  CHECK(selectors == 3);
  CHECK(args == 3);
  CHECK(posts == 3);
  CHECK(finals == 1);
  CHECK(pres == 1);
  CHECK(recs == 1);
}

TEST_CASE("random localization is seeded and covers the whole site space") {
  SkillArtifact s = shape_artifact();
  auto [trace, verdict] = synthetic_failure({.step = 2, .code = ErrorCode::NotFound});

  SUBCASE("same seed, same site") {
    Diagnosis a = localize_random(s, trace, verdict, 42);
    Diagnosis b = localize_random(s, trace, verdict, 42);
    CHECK(to_json(a.site) == to_json(b.site));
    CHECK(a.code == verdict.code);
    CHECK(a.step_index == verdict.step_index);
  }
  SUBCASE("across seeds, every enumerable site appears") {
    std::set<std::string> seen;
    for (std::uint64_t seed = 0; seed < 400; ++seed) {
      seen.insert(to_json(localize_random(s, trace, verdict, seed).site).dump());
    }
    CHECK(seen.size() == enumerate_sites(s).size());
  }
}

TEST_CASE("localization handles real executor failures") {
  ensure_builtin_templates();
  auto [inst, gold] = generate_task("click_button", 1);
  SkillArtifact broken = gold;
  broken.steps[0].selector.text = TextMatch{TextMode::Equals, "Nonexistent"};
  EnvState env = make_env(inst);
  auto [trace, verdict] = execute_artifact(broken, env, default_budgets(broken));
  REQUIRE(!verdict.success);
  Diagnosis d = localize(broken, trace, verdict);
  CHECK(d.site.type == SiteType::Selector);
  CHECK(d.site.step == 1);
  CHECK(d.code == ErrorCode::NotFound);
}
