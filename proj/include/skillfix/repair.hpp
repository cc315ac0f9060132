#ifndef SKILLFIX_REPAIR_HPP
#define SKILLFIX_REPAIR_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "skillfix/artifact.hpp"
#include "skillfix/localize.hpp"
#include "skillfix/patchgen.hpp"
#include "skillfix/verifier.hpp"

namespace skillfix {

// ---------------------------------------------------------------------------
// The execute-diagnose-patch-validate loop. Candidates are judged by
//
//   j = succ - lambda * cost - gamma * edit
//
// and a candidate replaces the incumbent only on a strict j improvement, so
// accepted scores always climb.
// ---------------------------------------------------------------------------

enum class RepairMode { Full, NoLocalization, Unconstrained, TextOnlyRewrite };

std::string to_string(RepairMode m);

struct RepairConfig {
  double lambda = 0.01;  // cost weight; one extra task success outweighs
  double gamma = 0.02;   // edit weight; any <= 3-edit penalty
  int K = 3;             // edit-distance radius around the draft
  int max_rounds = 4;
  int per_round_edit_budget = 3;  // 1..3; escalation ceiling within a round
  Budgets budgets;                // max_total_actions 0 = per-artifact default
  RepairMode mode = RepairMode::Full;
  int per_operator_cap = 4;
  std::uint64_t rng_seed = 0;  // drives the no-localization site draw
};

struct Score {
  double succ = 0.0;  // fraction of repair instances fully succeeding
  double cost = 0.0;  // mean actions used, normalized by the action budget
  int edit = 0;       // edit_distance to the draft
  double j_value = 0.0;
};

// Pinned evaluation order so the hand-checked value reproduces exactly.
double j_of(double succ, double cost, int edit, const RepairConfig& cfg);

// Executes s on every instance. Success counts only when the step verifier
// and the task-level final verifier both pass.
Score score(const SkillArtifact& s, const std::vector<TaskInstance>& repair_set,
            const SkillArtifact& s0, const RepairConfig& cfg);

// Strict improvement, nothing else.
bool accept(const Score& candidate, const Score& incumbent);

struct CandidateRecord {
  std::string digest;
  Score score;
  bool accepted = false;
  bool parse_failed = false;   // text-rewrite candidates that never parsed
  nlohmann::json patch_chain;  // per patch: the patch and the site that bred it
};

struct RoundRecord {
  int round = 0;  // 1-based
  Score incumbent;
  nlohmann::json diagnosis;  // the round's chosen diagnosis, if any
  std::vector<CandidateRecord> candidates;
  bool any_accepted = false;
};

struct RepairHistory {
  std::vector<RoundRecord> rounds;
  SkillArtifact final;
  Score final_score;
};

// Runs up to cfg.max_rounds rounds: score the incumbent (stop at full
// success), diagnose the failing instances, aggregate, and generate patches
// for the top group's site. Within a round, single patches are tried first;
// chains of 2 and then 3 (re-diagnosing after each patch) are attempted only
// while nothing shorter was accepted. Only candidates within edit distance
// cfg.K of s0 are considered; the best strict improvement wins, ties broken
// by smaller edit then lexicographically smaller digest; a round with no
// acceptance ends the loop.
//
// Mode NoLocalization replaces the diagnosed site with a seeded random one.
// Mode Unconstrained generates candidates for every site of the artifact and
// lifts the per-round escalation ceiling to K.
std::pair<SkillArtifact, RepairHistory> repair_loop(
    const SkillArtifact& s0, const std::vector<TaskInstance>& repair_set,
    const RepairConfig& cfg);

// Whole-artifact rewriting baseline: each round the rewriter transforms the
// incumbent's canonical text and the result is accepted under the same
// strict-improvement rule. Output that fails to parse or validate is
// recorded as a failed candidate and the incumbent stays. A rewrite that
// changes nothing ends the loop (the rewriter had its say); otherwise
// rounds continue to cfg.max_rounds even without acceptance, each with a
// fresh seed, which is the strongest reasonable form of this baseline.
using Rewriter = std::function<std::string(std::string_view, std::uint64_t)>;
std::pair<SkillArtifact, RepairHistory> run_text_only_rewrite(
    const SkillArtifact& s0, const std::vector<TaskInstance>& repair_set,
    const RepairConfig& cfg, const Rewriter& rewriter);

// Default rewriter: seeded mutation of one string value in the artifact
// JSON; roughly a tenth of rewrites are deliberately unparseable, mimicking
// a free-form editor with no format guarantees.
std::string builtin_seeded_rewriter(std::string_view text, std::uint64_t seed);

nlohmann::json to_json(const Score& s);
nlohmann::json to_json(const CandidateRecord& c);
nlohmann::json to_json(const RoundRecord& r);

// History as line-delimited JSON: one line per round.
void write_history(const RepairHistory& h, std::ostream& out);

}  // namespace skillfix

#endif
