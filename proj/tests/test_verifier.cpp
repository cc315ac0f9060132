#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>
#include <string>
#include <vector>

#include "skillfix/pagesim.hpp"
#include "skillfix/tasks.hpp"
#include "skillfix/verifier.hpp"

using namespace skillfix;

namespace {

Element make_node(std::string id, Role role, std::string text, int row,
                  std::map<std::string, std::string> attrs = {}) {
  Element e;
  e.stable_id = std::move(id);
  e.role = role;
  e.visible_text = std::move(text);
  e.row = row;
  e.attributes = std::move(attrs);
  return e;
}

Selector by_role_text(const std::string& role, const std::string& needle,
                      TextMode mode = TextMode::Equals) {
  Selector s;
  s.role = role;
  s.text = TextMatch{mode, needle};
  return s;
}

// Three "Apply" buttons, one disabled "Retry", a hidden "Ghost", one link.
PageSnapshot ambiguous_snapshot() {
  PageSnapshot snap;
  snap.url = "https://fixture.local/amb";
  snap.root = make_node("root", Role::Container, "", 0);
  snap.root.children.push_back(make_node("btn_a", Role::Button, "Apply", 0));
  snap.root.children.push_back(make_node("btn_b", Role::Button, "Apply", 0));
  Element nest = make_node("box", Role::Container, "", 1);
  nest.children.push_back(make_node("btn_c", Role::Button, "Apply", 1));
  snap.root.children.push_back(nest);
  Element retry = make_node("btn_retry", Role::Button, "Retry", 1);
  retry.enabled = false;
  snap.root.children.push_back(retry);
  Element ghost = make_node("btn_ghost", Role::Button, "Ghost", 1);
  ghost.visible = false;
  snap.root.children.push_back(ghost);
  snap.root.children.push_back(make_node("lnk_docs", Role::Link, "Docs", 2));
  return snap;
}

// Pre-order walk oracle for "first match in document order".
void walk(const Element& e, std::vector<const Element*>& out) {
  out.push_back(&e);
  for (const auto& c : e.children) walk(c, out);
}

std::vector<std::string> oracle_matches(const PageSnapshot& snap,
                                        const std::string& role,
                                        const std::string& text_equals) {
  std::vector<const Element*> all;
  walk(snap.root, all);
  for (const auto& m : snap.modal_stack) walk(m, all);
  std::vector<std::string> hits;
  for (const Element* e : all) {
    if (!e->visible) continue;
    if (to_string(e->role) != role) continue;
    if (e->visible_text != text_equals) continue;
    hits.push_back(e->stable_id);
  }
  return hits;
}

void register_fixtures() {
  static bool done = false;
  if (done) return;
  done = true;

  // One link revealed at tick 2, another at tick 5.
  register_template("fixture_delays", [](std::uint64_t, std::uint64_t) {
    EnvState env;
    env.url = "https://fixture.local/delays";
    env.root = make_node("root", Role::Container, "", 0);
    Element soon = make_node("lnk_soon", Role::Link, "Soon", 0);
    soon.visible = false;
    Element late = make_node("lnk_late", Role::Link, "Late", 0);
    late.visible = false;
    env.root.children.push_back(soon);
    env.root.children.push_back(late);
    env.dynamics.reveals.push_back({2, {"lnk_soon"}});
    env.dynamics.reveals.push_back({5, {"lnk_late"}});
    return env;
  });
}

std::pair<TaskInstance, SkillArtifact> gold_for(const std::string& tid,
                                                std::uint64_t content_seed) {
  ensure_builtin_templates();
  return generate_task(tid, content_seed);
}

int actions_in(const Trace& trace) {
  int n = 0;
  for (const auto& rec : trace.records) {
    if (rec.action_taken) ++n;
    for (const auto& f : rec.recovery_firings) {
      n += static_cast<int>(f.actions.size());
    }
  }
  return n;
}

}  // namespace

TEST_CASE("selector resolution: unique, ambiguous, missing") {
  PageSnapshot snap = ambiguous_snapshot();

  SUBCASE("unique match") {
    Resolution r = resolve_selector(by_role_text("link", "Docs"), snap);
    CHECK(r.status == ResolutionStatus::Unique);
    CHECK(r.stable_id == "lnk_docs");
    CHECK(r.match_count == 1);
  }
  SUBCASE("ambiguous match resolves to first in document order") {
    Resolution r = resolve_selector(by_role_text("button", "Apply"), snap);
    CHECK(r.status == ResolutionStatus::Ambiguous);
    CHECK(r.match_count == 3);
    auto oracle = oracle_matches(snap, "button", "Apply");
    REQUIRE(oracle.size() == 3);
    CHECK(r.stable_id == oracle.front());
  }
  SUBCASE("no match") {
    Resolution r = resolve_selector(by_role_text("button", "Launch"), snap);
    CHECK(r.status == ResolutionStatus::NotFound);
    CHECK(r.match_count == 0);
  }
  SUBCASE("invisible elements never match") {
    Resolution r = resolve_selector(by_role_text("button", "Ghost"), snap);
    CHECK(r.status == ResolutionStatus::NotFound);
  }
  SUBCASE("disabled elements still resolve") {
    Resolution r = resolve_selector(by_role_text("button", "Retry"), snap);
    CHECK(r.status == ResolutionStatus::Unique);
    CHECK(r.stable_id == "btn_retry");
  }
  SUBCASE("the reserved enabled attribute filters on state") {
    Selector sel = by_role_text("button", "Retry");
    sel.attributes["enabled"] = "true";
    CHECK(resolve_selector(sel, snap).status == ResolutionStatus::NotFound);
    sel.attributes["enabled"] = "false";
    CHECK(resolve_selector(sel, snap).status == ResolutionStatus::Unique);
  }
  SUBCASE("contains mode substring-matches") {
    Resolution r =
        resolve_selector(by_role_text("link", "Doc", TextMode::Contains), snap);
    CHECK(r.status == ResolutionStatus::Unique);
  }
}

TEST_CASE("wait-and-requery finds late elements inside the window") {
  register_fixtures();

  SUBCASE("reveal at tick 2 is found with two waits") {
    EnvState env = init_env("fixture_delays", 0, 0);
    RequeryResult rq = resolve_with_requery(by_role_text("link", "Soon"), env, 3);
    CHECK(rq.resolution.status == ResolutionStatus::Unique);
    CHECK(rq.resolution.stable_id == "lnk_soon");
    CHECK(rq.ticks_used == 2);
  }
  SUBCASE("reveal at tick 5 is outside a window of 3") {
    EnvState env = init_env("fixture_delays", 0, 0);
    RequeryResult rq = resolve_with_requery(by_role_text("link", "Late"), env, 3);
    CHECK(rq.resolution.status == ResolutionStatus::NotFound);
    CHECK(rq.ticks_used == 3);
  }
  SUBCASE("window zero degenerates to a plain resolve") {
    EnvState env = init_env("fixture_delays", 0, 0);
    RequeryResult rq = resolve_with_requery(by_role_text("link", "Soon"), env, 0);
    CHECK(rq.resolution.status == ResolutionStatus::NotFound);
    CHECK(rq.ticks_used == 0);
    CHECK(env.tick == 0);
  }
  SUBCASE("an immediate hit spends no ticks") {
    EnvState env = init_env("fixture_delays", 0, 0);
    step_env(env, SimAction{SimActionKind::Wait, "", "", "", "", 2});
    RequeryResult rq = resolve_with_requery(by_role_text("link", "Soon"), env, 3);
    CHECK(rq.resolution.status == ResolutionStatus::Unique);
    CHECK(rq.ticks_used == 0);
  }
}

TEST_CASE("default postconditions match the action kind") {
  Selector sel = by_role_text("textbox", "Name");
  ActionArgs args;
  args.text = "hello";
  auto typed = default_postconditions(ActionKind::Type, args, sel);
  REQUIRE(typed.size() == 1);
  CHECK(typed[0].kind == AssertionKind::FormValue);
  CHECK(*typed[0].pattern == "hello");
  REQUIRE(typed[0].selector.has_value());
  CHECK(canonical_key(*typed[0].selector) == canonical_key(sel));

  auto clicked = default_postconditions(ActionKind::Click, {}, sel);
  REQUIRE(clicked.size() == 1);
  CHECK(clicked[0].kind == AssertionKind::StateChanged);

  ActionArgs opt;
  opt.option = "Blue";
  auto selected = default_postconditions(ActionKind::Select, opt, sel);
  REQUIRE(selected.size() == 1);
  CHECK(selected[0].kind == AssertionKind::OptionSelected);
  CHECK(*selected[0].pattern == "Blue");
}

TEST_CASE("assertion checks read the right snapshot") {
  PageSnapshot before = ambiguous_snapshot();
  PageSnapshot after = before;

  SUBCASE("state_changed fails on identical snapshots") {
    Assertion a;
    a.kind = AssertionKind::StateChanged;
    auto [pass, observed] = check_assertion(a, before, before);
    CHECK(!pass);
    CHECK(observed == "state unchanged");
    after.url = "https://fixture.local/next";
    CHECK(check_assertion(a, before, after).first);
  }
  SUBCASE("url_matches is a substring test on the after-url") {
    Assertion a;
    a.kind = AssertionKind::UrlMatches;
    a.pattern = "/amb";
    CHECK(check_assertion(a, before, after).first);
    a.pattern = "/done";
    CHECK(!check_assertion(a, before, after).first);
  }
  SUBCASE("text_present ignores case") {
    Assertion a;
    a.kind = AssertionKind::TextPresent;
    a.pattern = "docs";
    CHECK(check_assertion(a, before, after).first);
    a.pattern = "DOCS";
    CHECK(check_assertion(a, before, after).first);
    a.pattern = "ghost";  // invisible text never counts
    CHECK(!check_assertion(a, before, after).first);
  }
  SUBCASE("form_value compares the element's current value") {
    Assertion a;
    a.kind = AssertionKind::FormValue;
    a.selector = by_role_text("button", "Docs");
    a.selector->role = "link";
    a.selector->text = TextMatch{TextMode::Equals, "Docs"};
    a.pattern = "x";
    auto [pass, observed] = check_assertion(a, before, after);
    CHECK(!pass);
    CHECK(observed.empty());
  }
  SUBCASE("element_exists and element_absent are duals") {
    Assertion a;
    a.kind = AssertionKind::ElementExists;
    a.selector = by_role_text("link", "Docs");
    CHECK(check_assertion(a, before, after).first);
    a.kind = AssertionKind::ElementAbsent;
    CHECK(!check_assertion(a, before, after).first);
    a.selector = by_role_text("dialog", "");
    a.selector->text.reset();
    CHECK(check_assertion(a, before, after).first);
  }
}

TEST_CASE("gold artifacts execute to success on every template") {
  ensure_builtin_templates();
  for (const std::string& tid : builtin_template_ids()) {
    CAPTURE(tid);
    auto [inst, gold] = gold_for(tid, 1);
    EnvState env = make_env(inst);
    auto [trace, verdict] = execute_artifact(gold, env, default_budgets(gold));
    CHECK(verdict.success);
    CHECK(final_verify(inst.spec, trace));
    CHECK(trace.total_actions == actions_in(trace));
    CHECK(trace.records.size() >= gold.steps.size());
  }
}

TEST_CASE("a failed precondition stops the run before any action") {
  auto [inst, gold] = gold_for("click_button", 1);
  inst.spec.overrides.popup_at_start = true;  // violates the no-dialog check
  EnvState env = make_env(inst);
  auto [trace, verdict] = execute_artifact(gold, env, default_budgets(gold));
  CHECK(!verdict.success);
  CHECK(verdict.step_index == 1);
  CHECK(verdict.code == ErrorCode::WrongState);
  CHECK(trace.total_actions == 0);
  bool some_precondition_failed = false;
  for (const auto& r : trace.precondition_results) {
    if (!r.pass) some_precondition_failed = true;
  }
  CHECK(some_precondition_failed);
}

TEST_CASE("a selector that matches nothing fails with NOT_FOUND") {
  auto [inst, gold] = gold_for("click_button", 1);
  SkillArtifact broken = gold;
  broken.steps[0].selector.text = TextMatch{TextMode::Equals, "Nonexistent"};
  EnvState env = make_env(inst);
  auto [trace, verdict] = execute_artifact(broken, env, default_budgets(broken));
  CHECK(!verdict.success);
  CHECK(verdict.step_index == 1);
  CHECK(verdict.code == ErrorCode::NotFound);
  REQUIRE(verdict.evidence.has_value());
  CHECK(verdict.evidence->record.resolution.status == ResolutionStatus::NotFound);
  CHECK(verdict.evidence->record.wait_ticks_used == default_budgets(broken).requery_window);
}

TEST_CASE("the action budget turns an endless run into LOOP_TIMEOUT") {
  auto [inst, gold] = gold_for("login", 1);
  EnvState env = make_env(inst);
  Budgets tight = default_budgets(gold);
  tight.max_total_actions = 1;
  auto [trace, verdict] = execute_artifact(gold, env, tight);
  CHECK(!verdict.success);
  CHECK(verdict.code == ErrorCode::LoopTimeout);
  CHECK(trace.total_actions == 2);  // the first allowed action plus the breach
}

TEST_CASE("total actions are counted on failure paths too") {
  auto [inst, gold] = gold_for("login", 1);
  SkillArtifact broken = gold;
  broken.steps[2].selector.text = TextMatch{TextMode::Equals, "Nonexistent"};
  EnvState env = make_env(inst);
  auto [trace, verdict] = execute_artifact(broken, env, default_budgets(broken));
  CHECK(!verdict.success);
  CHECK(verdict.step_index == 3);
  CHECK(verdict.code == ErrorCode::NotFound);
  CHECK(trace.total_actions == 2);  // two type actions happened first
  CHECK(trace.total_actions == actions_in(trace));
}

TEST_CASE("failure evidence is sufficient to replay the verdict") {
  auto [inst, gold] = gold_for("enter_text", 1);
  SkillArtifact broken = gold;
  // Make the first type step assert a value the page will not hold.
  for (auto& st : broken.steps) {
    if (st.action == ActionKind::Type) {
      st.post_assertions = default_postconditions(st.action, st.args, st.selector);
      st.post_assertions[0].pattern = "something else entirely";
      break;
    }
  }
  EnvState env = make_env(inst);
  auto [trace, verdict] = execute_artifact(broken, env, default_budgets(broken));
  REQUIRE(!verdict.success);
  CHECK(verdict.code == ErrorCode::AssertFail);
  REQUIRE(verdict.evidence.has_value());
  const Evidence& ev = *verdict.evidence;
  REQUIRE(ev.post_snapshot.has_value());

  // Re-check every recorded assertion against the evidence snapshots: the
  // recorded pass flags must reproduce, including at least one failure.
  bool saw_failure = false;
  for (const auto& ar : ev.record.assertion_results) {
    auto [pass, observed] = check_assertion(ar.assertion, ev.pre_snapshot,
                                            *ev.post_snapshot);
    CHECK(pass == ar.pass);
    if (!pass) saw_failure = true;
  }
  CHECK(saw_failure);
}

TEST_CASE("final verification is independent of the artifact's own checks") {
  auto [inst, gold] = gold_for("click_button", 1);

  SUBCASE("an empty trace never passes") {
    Trace empty;
    CHECK(!final_verify(inst.spec, empty));
  }
  SUBCASE("a successful run passes and a fresh page does not") {
    EnvState env = make_env(inst);
    auto [trace, verdict] = execute_artifact(gold, env, default_budgets(gold));
    REQUIRE(verdict.success);
    CHECK(final_verify(inst.spec, trace));

    Trace initial_only = trace;
    initial_only.final_snapshot = trace.initial_snapshot;
    CHECK(!final_verify(inst.spec, initial_only));
  }
}

TEST_CASE("execution is deterministic end to end") {
  ensure_builtin_templates();
  for (const std::string& tid : {std::string("login"), std::string("popup_interrupt"),
                                 std::string("delayed_render")}) {
    CAPTURE(tid);
    auto [inst, gold] = gold_for(tid, 2);
    EnvState env1 = make_env(inst);
    EnvState env2 = make_env(inst);
    auto [t1, v1] = execute_artifact(gold, env1, default_budgets(gold));
    auto [t2, v2] = execute_artifact(gold, env2, default_budgets(gold));
    CHECK(v1.success == v2.success);
    CHECK(trace_digest(t1) == trace_digest(t2));

    std::ostringstream o1, o2;
    write_trace(t1, v1, canonical_digest(gold), std::nullopt, o1);
    write_trace(t2, v2, canonical_digest(gold), std::nullopt, o2);
    CHECK(o1.str() == o2.str());
  }
}

TEST_CASE("trace export carries header, steps, and verdict") {
  auto [inst, gold] = gold_for("click_button", 1);
  EnvState env = make_env(inst);
  auto [trace, verdict] = execute_artifact(gold, env, default_budgets(gold));
  std::ostringstream out;
  write_trace(trace, verdict, canonical_digest(gold), std::nullopt, out);
  std::istringstream in(out.str());
  std::string line;
  int lines = 0;
  bool header_names_digest = false;
  bool verdict_line = false;
  while (std::getline(in, line)) {
    nlohmann::json j = nlohmann::json::parse(line);
    if (lines == 0) {
      CHECK(j["record"] == "header");
      header_names_digest = j.contains("artifact_digest");
    }
    if (j["record"] == "verdict") verdict_line = true;
    ++lines;
  }
  CHECK(header_names_digest);
  CHECK(verdict_line);
  CHECK(lines >= static_cast<int>(gold.steps.size()) + 2);
}
