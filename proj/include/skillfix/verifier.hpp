#ifndef SKILLFIX_VERIFIER_HPP
#define SKILLFIX_VERIFIER_HPP

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "skillfix/artifact.hpp"
#include "skillfix/pagesim.hpp"

namespace skillfix {

// ---------------------------------------------------------------------------
// Two-level verification: a step verifier that watches resolution, action
// events, and per-step assertions, and a final verifier that judges task
// success independently of whatever the artifact claims about itself.
// ---------------------------------------------------------------------------

enum class ErrorCode {
  // Declaration order is the canonical code order used for tie-breaks.
  NotFound,      // selector matched nothing after the whole requery window
  WrongState,    // blocked action or failed precondition
  AssertFail,    // a step/postcondition/termination assertion failed
  LoopTimeout,   // action budget, progress budget, or recovery cap exceeded
  InputInvalid,  // page rejected the action's arguments
};

std::string to_string(ErrorCode c);

enum class ResolutionStatus { Unique, Ambiguous, NotFound };

struct Resolution {
  ResolutionStatus status = ResolutionStatus::NotFound;
  std::string stable_id;  // first match in document order when not NotFound
  int match_count = 0;
};

struct AssertionResult {
  Assertion assertion;
  bool pass = false;
  std::string observed;
};

struct RecoveryFiring {
  int rule_index = 0;  // 0-based into artifact recovery list
  std::vector<RecoveryAction> actions;
};

struct StepRecord {
  int step_index = 0;  // 1-based; m+1 for the final Q/T pseudo-step
  Resolution resolution;
  std::optional<SimAction> action_taken;
  std::string pre_hash;
  std::string post_hash;
  std::vector<AssertionResult> assertion_results;
  std::vector<RecoveryFiring> recovery_firings;
  int wait_ticks_used = 0;  // requery ticks; never counted as actions
  std::vector<Event> events;
};

struct Trace {
  std::vector<AssertionResult> precondition_results;
  std::vector<StepRecord> records;
  int total_actions = 0;  // primary + recovery actions
  PageSnapshot initial_snapshot;
  PageSnapshot final_snapshot;
};

// What a Failure verdict hands to localization: the failing step's record
// plus the snapshots needed to re-check every recorded assertion.
struct Evidence {
  StepRecord record;
  PageSnapshot pre_snapshot;
  std::optional<PageSnapshot> post_snapshot;
  std::string initial_url;
};

struct Verdict {
  bool success = false;
  int step_index = 0;  // failing step, 1-based; m+1 means final verification
  ErrorCode code = ErrorCode::AssertFail;
  std::optional<Evidence> evidence;
};

struct Budgets {
  int max_total_actions = 0;
  int requery_window = 3;
  int max_repeats_without_progress = 3;
};

// 4m+8 actions leaves gold artifacts slack while catching loops quickly.
Budgets default_budgets(const SkillArtifact& s);

// ---------------------------------------------------------------------------
// Task plumbing. These types live here (not in the tasks module) because the
// final verifier consumes them and the repair loop carries them around.
// ---------------------------------------------------------------------------

struct TaskSpec {
  std::string template_id;
  std::string goal_text;
  std::vector<Assertion> success_predicate;  // conjunction
  EnvOverrides overrides;
  std::vector<std::uint64_t> repair_seeds;  // variation seeds, disjoint from
  std::vector<std::uint64_t> eval_seeds;    // these held-out ones
};

struct TaskInstance {
  TaskSpec spec;
  std::uint64_t content_seed = 0;
  std::uint64_t variation_seed = 0;
};

EnvState make_env(const TaskInstance& inst);

// One TaskInstance per repair (or eval) variation seed.
std::vector<TaskInstance> repair_instances(const TaskInstance& inst);
std::vector<TaskInstance> eval_instances(const TaskInstance& inst);

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

// Matches visible elements satisfying every present criterion (role, text,
// attributes; the reserved attribute key "enabled" matches the element's
// enabled state). Multiple matches resolve to the first in document order
// (page tree pre-order, then modal stack bottom to top) with the ambiguity
// count recorded. Occluded or disabled elements still resolve; acting on
// them is what fails, so state problems surface as WRONG_STATE instead of
// being shadowed by NOT_FOUND.
Resolution resolve_selector(const Selector& sel, const PageSnapshot& snap);

struct RequeryResult {
  Resolution resolution;
  int ticks_used = 0;
  std::vector<Event> events;  // schedule events observed while waiting
};

// Wait-and-requery: when resolution fails, advance one tick and retry, up to
// `window` ticks, returning the first non-NotFound result.
RequeryResult resolve_with_requery(const Selector& sel, EnvState& env, int window);

// Action-specific assertion templates for steps that carry no explicit ones.
std::vector<Assertion> default_postconditions(ActionKind action,
                                              const ActionArgs& args,
                                              const Selector& sel);

// Pure check of one assertion against a before/after snapshot pair.
// url_matches and text_present read `after`; state_changed compares the two
// snapshot hashes; element/form/option kinds resolve their selector on
// `after`. Returns pass plus the observed value for evidence.
std::pair<bool, std::string> check_assertion(const Assertion& a,
                                             const PageSnapshot& before,
                                             const PageSnapshot& after);

// Runs the full step-verifier loop and always returns the complete trace:
// preconditions first (failure => step 1, WRONG_STATE), then per step:
// recovery scan, resolve with requery, act, budget checks, assertions;
// finally the artifact's Q and T on the last snapshot (failure => step m+1).
std::pair<Trace, Verdict> execute_artifact(const SkillArtifact& s, EnvState& env,
                                           const Budgets& budgets);

// Task-level success on the final snapshot, independent of the artifact's
// own postconditions. An empty trace (nothing executed) is never a success.
bool final_verify(const TaskSpec& task, const Trace& trace);

// Digest over the canonical trace encoding; the determinism anchor.
std::string trace_digest(const Trace& trace);

nlohmann::json to_json(const Resolution& r);
nlohmann::json to_json(const SimAction& a);
nlohmann::json to_json(const AssertionResult& r);
nlohmann::json to_json(const StepRecord& r);
nlohmann::json to_json(const Trace& t);
nlohmann::json to_json(const Verdict& v);

// Line-delimited trace export: a header line naming the digest algorithm and
// artifact digest, the precondition results, one line per step record, and a
// final verdict line (with the diagnosis embedded when one is supplied).
void write_trace(const Trace& trace, const Verdict& verdict,
                 const std::string& artifact_digest,
                 const std::optional<nlohmann::json>& diagnosis, std::ostream& out);

}  // namespace skillfix

#endif
