#ifndef SKILLFIX_LOCALIZE_HPP
#define SKILLFIX_LOCALIZE_HPP

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "skillfix/artifact.hpp"
#include "skillfix/verifier.hpp"

namespace skillfix {

// ---------------------------------------------------------------------------
// Fault localization: turn a failing verdict into a concrete repair site.
// Different failures call for different fixes, so the error code (plus a
// little evidence) picks the part of the artifact to edit.
// ---------------------------------------------------------------------------

enum class SiteType {
  Selector,       // step j's selector
  Precondition,   // artifact-level P
  PostAssertion,  // step j's assertions, or the final Q/T when `final`
  Recovery,       // artifact-level R
  Args,           // step j's action arguments
};

std::string to_string(SiteType t);

struct RepairSite {
  SiteType type = SiteType::Selector;
  int step = 0;        // 1-based for step-scoped kinds, 0 for artifact level
  bool final = false;  // PostAssertion only: targets Q/T instead of a step
};

struct Diagnosis {
  int step_index = 0;  // failing step from the verdict (m+1 = final checks)
  ErrorCode code = ErrorCode::AssertFail;
  Evidence evidence;
  RepairSite site;
};

// Identical-site diagnoses collapsed across a repair set.
struct DiagnosisGroup {
  Diagnosis representative;
  int count = 0;
};

// Maps a failure onto the site to edit:
//
//   NOT_FOUND      -> selector(i)
//   WRONG_STATE    -> recovery when the step was blocked by a modal,
//                     otherwise precondition
//   ASSERT_FAIL    -> post_assertion(final) for the final pseudo-step;
//                     post_assertion(i) when the page hash never moved
//                     (the action had no effect, so the claim is suspect);
//                     selector(i) otherwise (acted on the wrong element)
//   LOOP_TIMEOUT   -> recovery
//   INPUT_INVALID  -> args(i)
//
// Throws std::logic_error when called on a Success verdict.
Diagnosis localize(const SkillArtifact& s, const Trace& trace,
                   const Verdict& verdict);

// Ablation hook: same code and evidence, but the site is drawn uniformly
// from every site the artifact has (selector/args/post_assertion per step,
// plus precondition, recovery, and the final post_assertion), seeded.
Diagnosis localize_random(const SkillArtifact& s, const Trace& trace,
                          const Verdict& verdict, std::uint64_t seed);

// Every concrete site an artifact exposes, in a fixed order: selectors,
// args, and per-step assertions for steps 1..m, then the final assertion
// site, the precondition block, and the recovery block.
std::vector<RepairSite> enumerate_sites(const SkillArtifact& s);

// Groups diagnoses by (step_index, code, site kind) and orders groups by
// count descending, then step ascending, then error-code declaration order.
// The representative is the member with the smallest canonical encoding, so
// permuting the input never changes the output. Throws std::invalid_argument
// on an empty input.
std::vector<DiagnosisGroup> aggregate_diagnoses(const std::vector<Diagnosis>& diags);

nlohmann::json to_json(const RepairSite& site);
nlohmann::json to_json(const Diagnosis& d);

}  // namespace skillfix

#endif
