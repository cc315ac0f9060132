#include "skillfix/verifier.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>

#include "skillfix/digest.hpp"

namespace skillfix {

std::string to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::NotFound: return "NOT_FOUND";
    case ErrorCode::WrongState: return "WRONG_STATE";
    case ErrorCode::AssertFail: return "ASSERT_FAIL";
    case ErrorCode::LoopTimeout: return "LOOP_TIMEOUT";
    case ErrorCode::InputInvalid: return "INPUT_INVALID";
  }
  std::abort();
}

Budgets default_budgets(const SkillArtifact& s) {
  Budgets b;
  b.max_total_actions = 4 * static_cast<int>(s.steps.size()) + 8;
  return b;
}

EnvState make_env(const TaskInstance& inst) {
  return init_env(inst.spec.template_id, inst.content_seed, inst.variation_seed,
                  inst.spec.overrides);
}

std::vector<TaskInstance> repair_instances(const TaskInstance& inst) {
  std::vector<TaskInstance> out;
  for (std::uint64_t v : inst.spec.repair_seeds) {
    TaskInstance copy = inst;
    copy.variation_seed = v;
    out.push_back(std::move(copy));
  }
  return out;
}

std::vector<TaskInstance> eval_instances(const TaskInstance& inst) {
  std::vector<TaskInstance> out;
  for (std::uint64_t v : inst.spec.eval_seeds) {
    TaskInstance copy = inst;
    copy.variation_seed = v;
    out.push_back(std::move(copy));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Selector resolution
// ---------------------------------------------------------------------------

namespace {

bool text_matches(const TextMatch& tm, const std::string& text) {
  if (tm.mode == TextMode::Equals) return text == tm.needle;
  return text.find(tm.needle) != std::string::npos;
}

bool element_matches(const Selector& sel, const Element& e) {
  if (!e.visible) return false;
  if (sel.role && to_string(e.role) != *sel.role) return false;
  if (sel.text && !text_matches(*sel.text, e.visible_text)) return false;
  for (const auto& [key, want] : sel.attributes) {
    if (key == "enabled") {
      // Reserved key: matches live element state, not a literal attribute.
      if ((e.enabled ? "true" : "false") != want) return false;
      continue;
    }
    auto it = e.attributes.find(key);
    if (it == e.attributes.end() || it->second != want) return false;
  }
  return true;
}

void collect_matches(const Selector& sel, const Element& e,
                     std::vector<const Element*>& out) {
  if (element_matches(sel, e)) out.push_back(&e);
  for (const auto& c : e.children) collect_matches(sel, c, out);
}

}  // namespace

Resolution resolve_selector(const Selector& sel, const PageSnapshot& snap) {
  std::vector<const Element*> matches;
  collect_matches(sel, snap.root, matches);
  for (const auto& dlg : snap.modal_stack) collect_matches(sel, dlg, matches);
  Resolution res;
  res.match_count = static_cast<int>(matches.size());
  if (matches.empty()) {
    res.status = ResolutionStatus::NotFound;
  } else {
    res.status = matches.size() == 1 ? ResolutionStatus::Unique
                                     : ResolutionStatus::Ambiguous;
    res.stable_id = matches.front()->stable_id;
  }
  return res;
}

RequeryResult resolve_with_requery(const Selector& sel, EnvState& env, int window) {
  RequeryResult out;
  out.resolution = resolve_selector(sel, observe(env));
  while (out.resolution.status == ResolutionStatus::NotFound &&
         out.ticks_used < window) {
    auto events = advance_tick(env);
    out.events.insert(out.events.end(), events.begin(), events.end());
    out.ticks_used += 1;
    out.resolution = resolve_selector(sel, observe(env));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Assertions
// ---------------------------------------------------------------------------

std::vector<Assertion> default_postconditions(ActionKind action,
                                              const ActionArgs& args,
                                              const Selector& sel) {
  std::vector<Assertion> out;
  Assertion a;
  switch (action) {
    case ActionKind::Type:
      a.kind = AssertionKind::FormValue;
      a.selector = sel;
      a.pattern = args.text;
      break;
    case ActionKind::Select:
      a.kind = AssertionKind::OptionSelected;
      a.selector = sel;
      a.pattern = args.option;
      break;
    case ActionKind::Click:
    case ActionKind::Scroll:
      a.kind = AssertionKind::StateChanged;
      break;
  }
  out.push_back(std::move(a));
  return out;
}

namespace {

// Any visible element whose text contains the pattern.
std::string lowercase(const std::string& s) {
  std::string out = s;
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Case-insensitive: text evidence is matched the way a person reads it, so
// a goal phrased in lowercase still matches the page's own capitalization.
bool visible_text_contains(const Element& e, const std::string& pattern) {
  if (e.visible && lowercase(e.visible_text).find(lowercase(pattern)) != std::string::npos) {
    return true;
  }
  for (const auto& c : e.children) {
    if (visible_text_contains(c, pattern)) return true;
  }
  return false;
}

const Element* find_in_snapshot(const PageSnapshot& snap, const std::string& id) {
  if (const Element* hit = find_by_id(snap.root, id)) return hit;
  for (const auto& dlg : snap.modal_stack) {
    if (const Element* hit = find_by_id(dlg, id)) return hit;
  }
  return nullptr;
}

}  // namespace

std::pair<bool, std::string> check_assertion(const Assertion& a,
                                             const PageSnapshot& before,
                                             const PageSnapshot& after) {
  switch (a.kind) {
    case AssertionKind::UrlMatches: {
      const bool pass = after.url.find(*a.pattern) != std::string::npos;
      return {pass, after.url};
    }
    case AssertionKind::TextPresent: {
      bool pass = visible_text_contains(after.root, *a.pattern);
      for (const auto& dlg : after.modal_stack) {
        pass = pass || visible_text_contains(dlg, *a.pattern);
      }
      return {pass, pass ? *a.pattern : "text not found"};
    }
    case AssertionKind::ElementExists: {
      Resolution r = resolve_selector(*a.selector, after);
      return {r.status != ResolutionStatus::NotFound,
              r.status == ResolutionStatus::NotFound ? "no match" : r.stable_id};
    }
    case AssertionKind::ElementAbsent: {
      Resolution r = resolve_selector(*a.selector, after);
      return {r.status == ResolutionStatus::NotFound,
              r.status == ResolutionStatus::NotFound ? "absent" : r.stable_id};
    }
    case AssertionKind::FormValue: {
      Resolution r = resolve_selector(*a.selector, after);
      if (r.status == ResolutionStatus::NotFound) return {false, "element not found"};
      const Element* e = find_in_snapshot(after, r.stable_id);
      return {e && e->value == *a.pattern, e ? e->value : ""};
    }
    case AssertionKind::OptionSelected: {
      Resolution r = resolve_selector(*a.selector, after);
      if (r.status == ResolutionStatus::NotFound) return {false, "element not found"};
      const Element* e = find_in_snapshot(after, r.stable_id);
      return {e && e->value == *a.pattern, e ? e->value : ""};
    }
    case AssertionKind::StateChanged: {
      const std::string h0 = snapshot_hash(before);
      const std::string h1 = snapshot_hash(after);
      return {h0 != h1, h0 == h1 ? "state unchanged" : h1};
    }
  }
  std::abort();
}

// ---------------------------------------------------------------------------
// Execution loop
// ---------------------------------------------------------------------------

namespace {

SimAction to_sim_action(const Step& step, const std::string& target_id) {
  SimAction act;
  act.target_id = target_id;
  switch (step.action) {
    case ActionKind::Click:
      act.kind = SimActionKind::Click;
      break;
    case ActionKind::Type:
      act.kind = SimActionKind::Type;
      act.text = step.args.text;
      break;
    case ActionKind::Select:
      act.kind = SimActionKind::Select;
      act.option = step.args.option;
      break;
    case ActionKind::Scroll:
      act.kind = SimActionKind::Scroll;
      act.direction = step.args.direction;
      act.amount = step.args.amount;
      break;
  }
  return act;
}

SimAction to_sim_action(const RecoveryAction& a) {
  SimAction act;
  switch (a.kind) {
    case RecoveryActionKind::ClosePopup:
      act.kind = SimActionKind::ClosePopup;
      break;
    case RecoveryActionKind::Reload:
      act.kind = SimActionKind::Reload;
      break;
    case RecoveryActionKind::Scroll:
      act.kind = SimActionKind::Scroll;
      act.direction = a.direction;
      act.amount = 5;  // half a default viewport per nudge
      break;
    case RecoveryActionKind::Wait:
      act.kind = SimActionKind::Wait;
      act.amount = a.ticks;
      break;
  }
  return act;
}

// Keeps the executor's bookkeeping in one place.
struct ExecCursor {
  int total_actions = 0;
  int no_progress_streak = 0;
  bool over_action_budget = false;
  bool over_progress_budget = false;

  void note_action(const std::string& pre_hash, const std::string& post_hash,
                   const Budgets& budgets) {
    total_actions += 1;
    if (total_actions > budgets.max_total_actions) over_action_budget = true;
    if (pre_hash == post_hash) {
      no_progress_streak += 1;
      if (no_progress_streak >= budgets.max_repeats_without_progress) {
        over_progress_budget = true;
      }
    } else {
      no_progress_streak = 0;
    }
  }

  bool timed_out() const { return over_action_budget || over_progress_budget; }
};

// A recovery trigger "holds" on the current snapshot. state_changed triggers
// are stall detectors: they hold when the page hash has NOT moved since the
// previous step's scan (there is nothing to compare at step 1).
bool trigger_holds(const Assertion& trigger, const PageSnapshot& now,
                   const std::string& stall_reference) {
  if (trigger.kind == AssertionKind::StateChanged) {
    return !stall_reference.empty() && snapshot_hash(now) == stall_reference;
  }
  return check_assertion(trigger, now, now).first;
}

}  // namespace

std::pair<Trace, Verdict> execute_artifact(const SkillArtifact& s, EnvState& env,
                                           const Budgets& budgets) {
  Trace trace;
  trace.initial_snapshot = observe(env);

  ExecCursor cursor;
  Verdict verdict;
  auto fail = [&](int step_index, ErrorCode code, const StepRecord& rec,
                  const PageSnapshot& pre,
                  const std::optional<PageSnapshot>& post) {
    trace.total_actions = cursor.total_actions;
    verdict.success = false;
    verdict.step_index = step_index;
    verdict.code = code;
    Evidence ev;
    ev.record = rec;
    ev.pre_snapshot = pre;
    ev.post_snapshot = post;
    ev.initial_url = trace.initial_snapshot.url;
    verdict.evidence = std::move(ev);
  };

  // Artifact preconditions, once, on the snapshot as loaded.
  bool pre_ok = true;
  for (const auto& a : s.preconditions) {
    auto [pass, observed] =
        check_assertion(a, trace.initial_snapshot, trace.initial_snapshot);
    trace.precondition_results.push_back({a, pass, observed});
    pre_ok = pre_ok && pass;
  }
  trace.final_snapshot = trace.initial_snapshot;
  if (!pre_ok) {
    StepRecord rec;
    rec.step_index = 1;
    rec.assertion_results = trace.precondition_results;
    fail(1, ErrorCode::WrongState, rec, trace.initial_snapshot, std::nullopt);
    return {trace, verdict};
  }

  std::vector<int> firings(s.recovery.size(), 0);
  std::string prev_scan_hash;  // empty until step 2

  for (std::size_t j = 1; j <= s.steps.size(); ++j) {
    const Step& step = s.steps[j - 1];
    StepRecord rec;
    rec.step_index = static_cast<int>(j);

    // --- recovery scan: fire triggered rules, in order, until quiet -------
    const std::string scan_entry_hash = snapshot_hash(observe(env));
    bool scanning = !s.recovery.empty();
    while (scanning) {
      scanning = false;
      PageSnapshot now = observe(env);
      for (std::size_t r = 0; r < s.recovery.size(); ++r) {
        const RecoveryRule& rule = s.recovery[r];
        if (!trigger_holds(rule.trigger, now, prev_scan_hash)) continue;
        if (firings[r] >= rule.max_firings) {
          // The rule is spent but its trigger still holds: a loop.
          trace.records.push_back(rec);
          trace.final_snapshot = observe(env);
          fail(static_cast<int>(j), ErrorCode::LoopTimeout, rec, now,
               std::nullopt);
          return {trace, verdict};
        }
        firings[r] += 1;
        rec.recovery_firings.push_back({static_cast<int>(r), rule.fallback});
        for (const auto& ra : rule.fallback) {
          const std::string h0 = snapshot_hash(observe(env));
          auto events = step_env(env, to_sim_action(ra));
          rec.events.insert(rec.events.end(), events.begin(), events.end());
          cursor.note_action(h0, snapshot_hash(observe(env)), budgets);
          if (cursor.timed_out()) {
            trace.records.push_back(rec);
            trace.final_snapshot = observe(env);
            fail(static_cast<int>(j), ErrorCode::LoopTimeout, rec,
                 observe(env), std::nullopt);
            return {trace, verdict};
          }
        }
        scanning = true;  // state moved; rescan from the first rule
        break;
      }
    }
    prev_scan_hash = scan_entry_hash;

    // --- resolve, with bounded wait-and-requery ---------------------------
    RequeryResult rq = resolve_with_requery(step.selector, env,
                                            budgets.requery_window);
    rec.resolution = rq.resolution;
    rec.wait_ticks_used = rq.ticks_used;
    rec.events.insert(rec.events.end(), rq.events.begin(), rq.events.end());
    if (rq.resolution.status == ResolutionStatus::NotFound) {
      PageSnapshot pre = observe(env);
      rec.pre_hash = snapshot_hash(pre);
      trace.records.push_back(rec);
      trace.final_snapshot = pre;
      fail(static_cast<int>(j), ErrorCode::NotFound, rec, pre, std::nullopt);
      return {trace, verdict};
    }

    // --- act ---------------------------------------------------------------
    PageSnapshot pre = observe(env);
    rec.pre_hash = snapshot_hash(pre);
    SimAction act = to_sim_action(step, rq.resolution.stable_id);
    rec.action_taken = act;
    auto events = step_env(env, act);
    rec.events.insert(rec.events.end(), events.begin(), events.end());
    PageSnapshot post = observe(env);
    rec.post_hash = snapshot_hash(post);
    cursor.note_action(rec.pre_hash, rec.post_hash, budgets);

    if (cursor.timed_out()) {
      trace.records.push_back(rec);
      trace.final_snapshot = post;
      fail(static_cast<int>(j), ErrorCode::LoopTimeout, rec, pre, post);
      return {trace, verdict};
    }
    const bool blocked = std::any_of(events.begin(), events.end(), [](const Event& e) {
      return e.kind == EventKind::BlockedAction || e.kind == EventKind::NoSuchElement;
    });
    if (blocked) {
      trace.records.push_back(rec);
      trace.final_snapshot = post;
      fail(static_cast<int>(j), ErrorCode::WrongState, rec, pre, post);
      return {trace, verdict};
    }
    const bool rejected = std::any_of(events.begin(), events.end(), [](const Event& e) {
      return e.kind == EventKind::RejectedInput;
    });
    if (rejected) {
      trace.records.push_back(rec);
      trace.final_snapshot = post;
      fail(static_cast<int>(j), ErrorCode::InputInvalid, rec, pre, post);
      return {trace, verdict};
    }

    // --- step assertions ----------------------------------------------------
    // An empty contract is filled from the action's default templates; the
    // artifact itself is never mutated.
    const std::vector<Assertion> effective =
        step.post_assertions.empty()
            ? default_postconditions(step.action, step.args, step.selector)
            : step.post_assertions;
    bool all_pass = true;
    for (const auto& a : effective) {
      auto [pass, observed] = check_assertion(a, pre, post);
      rec.assertion_results.push_back({a, pass, observed});
      all_pass = all_pass && pass;
    }
    trace.records.push_back(rec);
    trace.final_snapshot = post;
    if (!all_pass) {
      fail(static_cast<int>(j), ErrorCode::AssertFail, rec, pre, post);
      return {trace, verdict};
    }
  }

  // --- artifact postconditions and termination checks -----------------------
  trace.final_snapshot = observe(env);
  StepRecord final_rec;
  final_rec.step_index = static_cast<int>(s.steps.size()) + 1;
  final_rec.pre_hash = snapshot_hash(trace.initial_snapshot);
  final_rec.post_hash = snapshot_hash(trace.final_snapshot);
  bool final_ok = true;
  for (const auto& a : s.postconditions) {
    auto [pass, observed] =
        check_assertion(a, trace.initial_snapshot, trace.final_snapshot);
    final_rec.assertion_results.push_back({a, pass, observed});
    final_ok = final_ok && pass;
  }
  for (const auto& a : s.terminate) {
    auto [pass, observed] =
        check_assertion(a, trace.initial_snapshot, trace.final_snapshot);
    final_rec.assertion_results.push_back({a, pass, observed});
    final_ok = final_ok && pass;
  }
  trace.records.push_back(final_rec);
  trace.total_actions = cursor.total_actions;
  if (!final_ok) {
    fail(final_rec.step_index, ErrorCode::AssertFail, final_rec,
         trace.initial_snapshot, trace.final_snapshot);
    return {trace, verdict};
  }
  verdict.success = true;
  verdict.step_index = 0;
  return {trace, verdict};
}

bool final_verify(const TaskSpec& task, const Trace& trace) {
  if (trace.records.empty()) return false;
  for (const auto& a : task.success_predicate) {
    auto [pass, _] =
        check_assertion(a, trace.initial_snapshot, trace.final_snapshot);
    if (!pass) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Encoding and export
// ---------------------------------------------------------------------------

nlohmann::json to_json(const Resolution& r) {
  switch (r.status) {
    case ResolutionStatus::Unique:
      return nlohmann::json{{"status", "unique"}, {"stable_id", r.stable_id}};
    case ResolutionStatus::Ambiguous:
      return nlohmann::json{{"status", "ambiguous"},
                            {"stable_id", r.stable_id},
                            {"match_count", r.match_count}};
    case ResolutionStatus::NotFound:
      return nlohmann::json{{"status", "not_found"}};
  }
  std::abort();
}

nlohmann::json to_json(const SimAction& a) {
  nlohmann::json j{{"kind", to_string(a.kind)}};
  if (!a.target_id.empty()) j["target_id"] = a.target_id;
  if (a.kind == SimActionKind::Type) j["text"] = a.text;
  if (a.kind == SimActionKind::Select) j["option"] = a.option;
  if (a.kind == SimActionKind::Scroll) {
    j["direction"] = a.direction;
    j["amount"] = a.amount;
  }
  if (a.kind == SimActionKind::Wait) j["amount"] = a.amount;
  return j;
}

nlohmann::json to_json(const AssertionResult& r) {
  return nlohmann::json{{"assertion", to_json(r.assertion)},
                        {"pass", r.pass},
                        {"observed", r.observed}};
}

nlohmann::json to_json(const StepRecord& r) {
  nlohmann::json asserts = nlohmann::json::array();
  for (const auto& ar : r.assertion_results) asserts.push_back(to_json(ar));
  nlohmann::json firings = nlohmann::json::array();
  for (const auto& f : r.recovery_firings) {
    nlohmann::json actions = nlohmann::json::array();
    for (const auto& a : f.actions) actions.push_back(to_json(a));
    firings.push_back({{"rule_index", f.rule_index}, {"actions", actions}});
  }
  nlohmann::json events = nlohmann::json::array();
  for (const auto& e : r.events) events.push_back(to_json(e));
  nlohmann::json j{{"step_index", r.step_index},
                   {"resolution", to_json(r.resolution)},
                   {"pre_hash", r.pre_hash},
                   {"post_hash", r.post_hash},
                   {"assertion_results", std::move(asserts)},
                   {"recovery_firings", std::move(firings)},
                   {"wait_ticks_used", r.wait_ticks_used},
                   {"events", std::move(events)}};
  if (r.action_taken) j["action_taken"] = to_json(*r.action_taken);
  return j;
}

nlohmann::json to_json(const Trace& t) {
  nlohmann::json pre = nlohmann::json::array();
  for (const auto& ar : t.precondition_results) pre.push_back(to_json(ar));
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : t.records) records.push_back(to_json(r));
  return nlohmann::json{{"precondition_results", std::move(pre)},
                        {"records", std::move(records)},
                        {"total_actions", t.total_actions},
                        {"initial_hash", snapshot_hash(t.initial_snapshot)},
                        {"final_hash", snapshot_hash(t.final_snapshot)}};
}

nlohmann::json to_json(const Verdict& v) {
  if (v.success) return nlohmann::json{{"verdict", "success"}};
  return nlohmann::json{{"verdict", "failure"},
                        {"step_index", v.step_index},
                        {"code", to_string(v.code)}};
}

std::string trace_digest(const Trace& trace) {
  return sha256_hex(to_json(trace).dump());
}

void write_trace(const Trace& trace, const Verdict& verdict,
                 const std::string& artifact_digest,
                 const std::optional<nlohmann::json>& diagnosis,
                 std::ostream& out) {
  nlohmann::json header{{"record", "header"},
                        {"digest_algorithm", kDigestAlgorithm},
                        {"artifact_digest", artifact_digest},
                        {"trace_digest", trace_digest(trace)}};
  out << header.dump() << "\n";
  nlohmann::json pre = nlohmann::json::array();
  for (const auto& ar : trace.precondition_results) pre.push_back(to_json(ar));
  out << nlohmann::json{{"record", "preconditions"}, {"results", pre}}.dump()
      << "\n";
  for (const auto& r : trace.records) {
    nlohmann::json line = to_json(r);
    line["record"] = "step";
    out << line.dump() << "\n";
  }
  nlohmann::json tail = to_json(verdict);
  tail["record"] = "verdict";
  tail["total_actions"] = trace.total_actions;
  if (diagnosis) tail["diagnosis"] = *diagnosis;
  out << tail.dump() << "\n";
}

}  // namespace skillfix
