#ifndef SKILLFIX_PATCHGEN_HPP
#define SKILLFIX_PATCHGEN_HPP

#include <cstdint>
#include <functional>
#include <vector>

#include "skillfix/artifact.hpp"
#include "skillfix/localize.hpp"
#include "skillfix/pagesim.hpp"

namespace skillfix {

// ---------------------------------------------------------------------------
// Candidate patch generation. One generator per operator; each takes a
// diagnosis for its site kind and proposes a short, deterministically
// ordered list of patches. Generation never executes anything; scoring
// candidates is the repair loop's job.
// ---------------------------------------------------------------------------

struct CandidateSet {
  Diagnosis diagnosis;
  std::vector<Patch> candidates;  // deduplicated, deterministic order
  int per_operator_cap = 4;
};

// Replacement selectors for a selector(j) diagnosis, drawn from the
// snapshot: the original selector with its text match relaxed to contains,
// per-element contains-text selectors, and attribute-based selectors from
// the top-scoring elements. Ranked by token overlap with the original
// needle and the goal text (descending), then selector specificity, then
// document order; only selectors that resolve on the snapshot survive.
std::vector<Patch> gen_sel_replace(const Diagnosis& d, const PageSnapshot& snap,
                                   const SkillArtifact& s, int cap);

// Preconditions that negate the observed blocker for a precondition
// diagnosis: element_absent(dialog) when a modal blocked the step or sits in
// the snapshot, element_exists(target, enabled) for a disabled target,
// element_exists(target) for an invisible one, url_matches(start url) when
// the page drifted. No recognizable blocker yields an empty list.
std::vector<Patch> gen_pre_insert(const Diagnosis& d, const PageSnapshot& snap,
                                  int cap);

// Missing completion evidence for a post_assertion diagnosis: on a step
// site, the action's default postconditions not already claimed; on the
// final site, url/text assertions built from goal tokens observable in the
// final snapshot.
std::vector<Patch> gen_post_insert(const Diagnosis& d, const SkillArtifact& s,
                                   int cap);

// Fallback rules for a recovery diagnosis, in fixed order: close_popup on a
// visible dialog, reload on stalled progress, scroll(down) and wait(2) on
// the failed step's selector being absent. Rules the artifact already has
// are filtered out; each new rule allows two firings.
std::vector<Patch> gen_recovery_insert(const Diagnosis& d,
                                       const SkillArtifact& s, int cap);

// Argument fixes for an args(j) diagnosis: for select, the resolved
// element's real options ranked by edit distance to the rejected one; for
// type, the text truncated or filtered to meet the constraint the page
// reported.
std::vector<Patch> gen_arg_correct(const Diagnosis& d, const PageSnapshot& snap,
                                   const SkillArtifact& s, int cap);

// Dispatches on the diagnosis site, then keeps only patches that apply
// cleanly to `s` (dedup against existing content happens there too).
CandidateSet candidates_for_site(const Diagnosis& d, const SkillArtifact& s,
                                 int per_operator_cap);

// Everything reachable from s0 by composing at most K patches, s0 included.
// `provider` returns the candidate patches for a given artifact (typically
// re-diagnosis plus candidates_for_site). Deduplicated by content digest;
// throws std::length_error past max_size artifacts.
using PatchProvider = std::function<std::vector<Patch>(const SkillArtifact&)>;
std::vector<SkillArtifact> neighborhood(const SkillArtifact& s0, int K,
                                        const PatchProvider& provider,
                                        std::size_t max_size = 10000);

// Levenshtein distance; exposed for tests and option ranking.
std::size_t edit_distance_chars(const std::string& a, const std::string& b);

}  // namespace skillfix

#endif
