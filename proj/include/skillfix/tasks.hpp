#ifndef SKILLFIX_TASKS_HPP
#define SKILLFIX_TASKS_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "skillfix/artifact.hpp"
#include "skillfix/repair.hpp"
#include "skillfix/verifier.hpp"

namespace skillfix {

// ---------------------------------------------------------------------------
// Built-in task suite: ten small page templates, a gold artifact per task,
// seeded corruption of that gold into a plausibly broken draft, and the
// evaluation harness that turns all of it into a metrics report.
//
// Seeding is two-axis: the task seed (content axis) fixes labels, ids, and
// credentials, while variation seeds change only timing and layout. The
// repair set and the held-out eval set are disjoint variation seeds of one
// content seed, so a draft repaired on one set can be judged fairly on the
// other.
// ---------------------------------------------------------------------------

// Registers the built-in templates; safe to call repeatedly.
void ensure_builtin_templates();

// The ten built-in template ids, in canonical order.
const std::vector<std::string>& builtin_template_ids();

// Builds the task (spec plus base instance) and its gold artifact for one
// content seed. The gold passes both verification levels on every variation
// seed of the task. Throws EnvError for an unknown template.
std::pair<TaskInstance, SkillArtifact> generate_task(const std::string& template_id,
                                                     std::uint64_t seed);

enum class CorruptionKind {
  CorruptSelectorText,
  DropPrecondition,
  DropPostAssertion,
  WrongArg,
  DropRecovery,
  PrematureTerminate,
};

std::string to_string(CorruptionKind k);

struct CorruptionResult {
  SkillArtifact draft;
  std::vector<std::string> notices;  // one entry per skipped (inapplicable) kind
};

// Applies each corruption at a seeded-random applicable site. The draft
// still validates (drop_post_assertion leaves an empty assertion list, which
// is legal and exercises default auto-fill). Inapplicable kinds are skipped
// with a notice. Throws std::invalid_argument on an empty kind list.
CorruptionResult corrupt_draft(const SkillArtifact& gold,
                               const std::vector<CorruptionKind>& kinds,
                               std::uint64_t seed);

// The (corruption kind, template) pairings the default suite runs: every
// pairing produces a draft whose failure mode matches the kind's expected
// error code. drop_precondition rows also set popup_at_start so the missing
// check has something to miss.
std::vector<std::pair<CorruptionKind, std::string>> corruption_pairings();

// Scripted baseline: a seeded explorer that clicks, types, and selects at
// random until the task predicate holds or the budget runs out. Returns
// success and the number of actions spent.
std::pair<bool, int> run_no_skill(const TaskInstance& inst, std::uint64_t seed,
                                  int max_actions = 24);

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

struct MetricsRow {
  std::string method;
  std::string template_id;
  std::string corruption;  // "none" for uncorrupted rows
  int episodes = 0;
  int successes = 0;
  double success_pct = 0.0;  // successes / episodes * 100
  double avg_steps = 0.0;    // mean primary actions per episode
  double avg_cost = 0.0;     // mean total actions (recovery included)
};

struct MetricsReport {
  std::vector<MetricsRow> rows;  // sorted by (method, template, corruption)
};

// CSV: "# metrics v1" header line, then
// method,template,corruption,success_pct,avg_steps,avg_cost
// with the three numbers fixed to two decimals.
std::string to_csv(const MetricsReport& report);

// Aligned table for reading, with per-method totals appended.
std::string to_text(const MetricsReport& report);

struct SuiteConfig {
  std::vector<std::string> methods;    // subset of the six method names
  std::vector<std::string> templates;  // pairing filter; empty = all
  std::vector<std::uint64_t> content_seeds{1};
  RepairConfig repair;
};

// Runs every (method, pairing, content seed) row: repairing methods repair
// on the repair seeds and are judged on the held-out eval seeds; the others
// run on the eval seeds directly. Deterministic. Throws
// std::invalid_argument for an unknown method or template name.
MetricsReport eval_suite(const SuiteConfig& cfg);

// ---------------------------------------------------------------------------
// Exhaustive repair oracle (test-grade; K <= 2)
// ---------------------------------------------------------------------------

struct OracleResult {
  double best_j = 0.0;
  std::string best_digest;
  bool fix_exists = false;  // some neighborhood member fully succeeds
};

// Scores every member of the K-step neighborhood of s0 (candidates from all
// diagnosis groups, not just the top one) on the task's repair seeds.
// Throws std::invalid_argument for K > 2 and std::length_error when the
// neighborhood outgrows the exhaustive bound.
OracleResult bruteforce_repair_oracle(const SkillArtifact& s0,
                                      const TaskInstance& inst,
                                      const RepairConfig& cfg);

}  // namespace skillfix

#endif
