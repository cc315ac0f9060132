#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <set>
#include <string>
#include <vector>

#include "skillfix/pagesim.hpp"
#include "skillfix/tasks.hpp"

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

Element fixture_dialog() {
  Element dlg = make_node("dlg_ad", Role::Dialog, "", 0);
  dlg.children.push_back(make_node("dlg_ad_text", Role::Text, "Special offer", 0));
  dlg.children.push_back(
      make_node("dlg_ad_close", Role::Button, "Dismiss", 0, {{"action", "close"}}));
  return dlg;
}

// Hand-built pages with known dynamics, so the assertions below do not depend
// on any task template's internals.
void register_fixtures() {
  static bool done = false;
  if (done) return;
  done = true;

  register_template("fixture_form", [](std::uint64_t, std::uint64_t) {
    EnvState env;
    env.url = "https://fixture.local/form";
    env.root = make_node("root", Role::Container, "", 0);
    env.root.children.push_back(make_node("btn_go", Role::Button, "Go", 0));
    env.root.children.push_back(make_node("txt_name", Role::Textbox, "Name", 0));
    env.root.children.push_back(
        make_node("txt_code", Role::Textbox, "Code", 0, {{"maxlength", "8"}}));
    env.root.children.push_back(
        make_node("txt_pin", Role::Textbox, "PIN", 0, {{"charset", "digits"}}));
    Element later = make_node("lnk_later", Role::Link, "Later", 1);
    later.visible = false;
    env.root.children.push_back(later);
    Element sel = make_node("sel_color", Role::Select, "Color", 1);
    sel.children.push_back(make_node("opt_red", Role::Option, "Red", 1));
    sel.children.push_back(make_node("opt_blue", Role::Option, "Blue", 1));
    env.root.children.push_back(sel);

    env.dynamics.reveals.push_back({2, {"lnk_later"}});
    Navigation nav;
    nav.url = "https://fixture.local/done";
    nav.page = make_node("done_root", Role::Container, "", 0);
    nav.page.children.push_back(make_node("msg_done", Role::Text, "Done", 0));
    env.dynamics.navigations["btn_go"] = nav;
    return env;
  });

  register_template("fixture_popup", [](std::uint64_t, std::uint64_t) {
    EnvState env;
    env.url = "https://fixture.local/popup";
    env.root = make_node("root", Role::Container, "", 0);
    env.root.children.push_back(make_node("btn_go", Role::Button, "Go", 0));
    env.root.children.push_back(make_node("txt_name", Role::Textbox, "Name", 0));
    env.dynamics.popups.push_back({1, fixture_dialog()});
    return env;
  });
}

const Element* find_in(const Element& e, const std::string& id) {
  if (e.stable_id == id) return &e;
  for (const auto& c : e.children) {
    if (const Element* hit = find_in(c, id)) return hit;
  }
  return nullptr;
}

const Element* find_in(const PageSnapshot& snap, const std::string& id) {
  if (const Element* hit = find_in(snap.root, id)) return hit;
  for (const auto& m : snap.modal_stack) {
    if (const Element* hit = find_in(m, id)) return hit;
  }
  return nullptr;
}

int count_role(const Element& e, Role role) {
  int n = e.role == role ? 1 : 0;
  for (const auto& c : e.children) n += count_role(c, role);
  return n;
}

void collect_ids(const Element& e, std::set<std::string>& out) {
  out.insert(e.stable_id);
  for (const auto& c : e.children) collect_ids(c, out);
}

SimAction click(const std::string& id) {
  SimAction a;
  a.kind = SimActionKind::Click;
  a.target_id = id;
  return a;
}

SimAction type_into(const std::string& id, const std::string& text) {
  SimAction a;
  a.kind = SimActionKind::Type;
  a.target_id = id;
  a.text = text;
  return a;
}

SimAction wait_ticks(int n) {
  SimAction a;
  a.kind = SimActionKind::Wait;
  a.amount = n;
  return a;
}

bool has_event(const std::vector<Event>& events, EventKind kind) {
  for (const auto& e : events) {
    if (e.kind == kind) return true;
  }
  return false;
}

// Oracle for the hash contract: equality of everything the hash claims to
// cover, checked on the raw JSON encoding with tick/scroll_row stripped.
nlohmann::json hashed_content(const PageSnapshot& snap) {
  nlohmann::json j = to_json(snap);
  j.erase("tick");
  j.erase("scroll_row");
  return j;
}

PageSnapshot random_snapshot(std::mt19937_64& rng) {
  static const char* urls[] = {"https://a.local/x", "https://a.local/y"};
  static const char* texts[] = {"Alpha", "Beta", "Gamma"};
  PageSnapshot snap;
  snap.url = urls[rng() % 2];
  snap.tick = static_cast<int>(rng() % 50);
  snap.scroll_row = static_cast<int>(rng() % 5);
  snap.root = make_node("root", Role::Container, "", 0);
  const std::size_t n = 1 + rng() % 3;
  for (std::size_t i = 0; i < n; ++i) {
    Element e = make_node("el_" + std::to_string(i), Role::Button,
                          texts[rng() % 3], static_cast<int>(i));
    e.visible = rng() % 4 != 0;
    e.value = rng() % 2 ? "v" : "";
    snap.root.children.push_back(e);
  }
  if (rng() % 3 == 0) snap.modal_stack.push_back(fixture_dialog());
  return snap;
}

}  // namespace

TEST_CASE("built-in environments initialize deterministically") {
  ensure_builtin_templates();
  for (const std::string& tid : builtin_template_ids()) {
    EnvState a = init_env(tid, 3, 4);
    EnvState b = init_env(tid, 3, 4);
    CHECK(a.url == b.url);
    CHECK(snapshot_hash(observe(a)) == snapshot_hash(observe(b)));
    CHECK(to_json(observe(a)) == to_json(observe(b)));
  }
}

TEST_CASE("content seed changes the page, variation seed keeps content") {
  ensure_builtin_templates();
  EnvState a = init_env("click_button", 1, 0);
  EnvState b = init_env("click_button", 2, 0);
  CHECK(snapshot_hash(observe(a)) != snapshot_hash(observe(b)));

  // Different variation seed may reorder rows but never invents elements.
  EnvState c = init_env("click_button", 1, 7);
  std::set<std::string> ids_a, ids_c;
  collect_ids(a.root, ids_a);
  collect_ids(c.root, ids_c);
  CHECK(ids_a == ids_c);
}

TEST_CASE("login page exposes two text fields and a submit button") {
  ensure_builtin_templates();
  EnvState env = init_env("login", 1, 0);
  PageSnapshot snap = observe(env);
  CHECK(count_role(snap.root, Role::Textbox) == 2);
  CHECK(count_role(snap.root, Role::Button) >= 1);
}

TEST_CASE("popup template schedules at least one dialog") {
  ensure_builtin_templates();
  EnvState env = init_env("popup_interrupt", 1, 0);
  CHECK(!env.dynamics.popups.empty());
  CHECK(!env.pending_popups.empty());
}

TEST_CASE("typing echoes into the field value") {
  register_fixtures();
  EnvState env = init_env("fixture_form", 0, 0);
  auto events = step_env(env, type_into("txt_name", "abc"));
  CHECK(has_event(events, EventKind::ActionOk));
  const Element* field = find_in(observe(env), "txt_name");
  REQUIRE(field != nullptr);
  CHECK(field->value == "abc");
}

TEST_CASE("typing changes the snapshot hash") {
  register_fixtures();
  EnvState env = init_env("fixture_form", 0, 0);
  const std::string before = snapshot_hash(observe(env));
  step_env(env, type_into("txt_name", "abc"));
  CHECK(snapshot_hash(observe(env)) != before);
}

TEST_CASE("overlong input is rejected and leaves the field unchanged") {
  register_fixtures();
  EnvState env = init_env("fixture_form", 0, 0);
  const std::string before = snapshot_hash(observe(env));
  auto events = step_env(env, type_into("txt_code", "abcdefghijkl"));
  REQUIRE(has_event(events, EventKind::RejectedInput));
  for (const auto& e : events) {
    if (e.kind == EventKind::RejectedInput) CHECK(e.detail == "max_length=8");
  }
  const Element* field = find_in(observe(env), "txt_code");
  REQUIRE(field != nullptr);
  CHECK(field->value.empty());
  CHECK(snapshot_hash(observe(env)) == before);
}

TEST_CASE("digits-only field rejects mixed input") {
  register_fixtures();
  EnvState env = init_env("fixture_form", 0, 0);
  auto events = step_env(env, type_into("txt_pin", "12a4"));
  REQUIRE(has_event(events, EventKind::RejectedInput));
  for (const auto& e : events) {
    if (e.kind == EventKind::RejectedInput) CHECK(e.detail == "charset=digits");
  }
}

TEST_CASE("select rejects a missing option and lists the real ones") {
  register_fixtures();
  EnvState env = init_env("fixture_form", 0, 0);
  SimAction a;
  a.kind = SimActionKind::Select;
  a.target_id = "sel_color";
  a.option = "Green";
  auto events = step_env(env, a);
  REQUIRE(has_event(events, EventKind::RejectedInput));
  for (const auto& e : events) {
    if (e.kind == EventKind::RejectedInput) {
      CHECK(e.detail == "option_not_found;options=Red|Blue");
    }
  }

  a.option = "Blue";
  events = step_env(env, a);
  CHECK(has_event(events, EventKind::ActionOk));
  const Element* sel = find_in(observe(env), "sel_color");
  REQUIRE(sel != nullptr);
  CHECK(sel->value == "Blue");
}

TEST_CASE("an open modal blocks everything outside it") {
  register_fixtures();
  // fixture_form schedules no popups, so popup_at_start injects the generic
  // intruder dialog and nothing else arrives mid-test.
  EnvState env = init_env("fixture_form", 0, 0, {.popup_at_start = true});
  REQUIRE(!observe(env).modal_stack.empty());
  const std::string before = snapshot_hash(observe(env));

  SUBCASE("click on the page behind is blocked") {
    auto events = step_env(env, click("btn_go"));
    REQUIRE(has_event(events, EventKind::BlockedAction));
    for (const auto& e : events) {
      if (e.kind == EventKind::BlockedAction) CHECK(e.cause == "occluded_by_modal");
    }
    CHECK(snapshot_hash(observe(env)) == before);
  }
  SUBCASE("scroll is blocked") {
    SimAction a;
    a.kind = SimActionKind::Scroll;
    a.direction = "down";
    a.amount = 1;
    CHECK(has_event(step_env(env, a), EventKind::BlockedAction));
  }
  SUBCASE("reload is blocked") {
    SimAction a;
    a.kind = SimActionKind::Reload;
    CHECK(has_event(step_env(env, a), EventKind::BlockedAction));
  }
  SUBCASE("close_popup clears the modal") {
    SimAction a;
    a.kind = SimActionKind::ClosePopup;
    auto events = step_env(env, a);
    CHECK(has_event(events, EventKind::ModalClosed));
    CHECK(observe(env).modal_stack.empty());
  }
  SUBCASE("clicking the dialog's own dismiss button closes it") {
    auto events = step_env(env, click("dialog_intruder_close"));
    CHECK(has_event(events, EventKind::ModalClosed));
    CHECK(observe(env).modal_stack.empty());
  }
}

TEST_CASE("scheduled popup arrives on its tick") {
  register_fixtures();
  EnvState env = init_env("fixture_popup", 0, 0);
  CHECK(observe(env).modal_stack.empty());
  auto events = step_env(env, wait_ticks(1));  // tick 1: popup due
  CHECK(has_event(events, EventKind::ModalOpened));
  CHECK(observe(env).modal_stack.size() == 1);
}

TEST_CASE("scheduled reveal fires exactly at its tick") {
  register_fixtures();
  EnvState env = init_env("fixture_form", 0, 0);
  const Element* later = find_in(observe(env), "lnk_later");
  REQUIRE(later != nullptr);
  CHECK(!later->visible);

  const std::string h0 = snapshot_hash(observe(env));
  step_env(env, wait_ticks(1));  // tick 1: nothing due
  CHECK(snapshot_hash(observe(env)) == h0);
  CHECK(!find_in(observe(env), "lnk_later")->visible);

  auto events = step_env(env, wait_ticks(1));  // tick 2: reveal fires
  CHECK(has_event(events, EventKind::Revealed));
  CHECK(find_in(observe(env), "lnk_later")->visible);
  CHECK(snapshot_hash(observe(env)) != h0);
}

TEST_CASE("navigation swaps the page and records history") {
  register_fixtures();
  EnvState env = init_env("fixture_form", 0, 0);
  auto events = step_env(env, click("btn_go"));
  CHECK(has_event(events, EventKind::Navigated));
  CHECK(env.url == "https://fixture.local/done");
  CHECK(find_in(observe(env), "msg_done") != nullptr);
  REQUIRE(env.url_history.size() == 2);
  CHECK(env.url_history.back() == "https://fixture.local/done");
}

TEST_CASE("reload restores the loaded page and is idempotent") {
  register_fixtures();
  EnvState env = init_env("fixture_form", 0, 0);
  std::set<std::string> ids_before;
  collect_ids(env.root, ids_before);

  step_env(env, type_into("txt_name", "abc"));
  step_env(env, wait_ticks(2));  // let the reveal fire so reload must undo it

  SimAction reload;
  reload.kind = SimActionKind::Reload;
  step_env(env, reload);
  const std::string once = snapshot_hash(observe(env));
  const Element* field = find_in(observe(env), "txt_name");
  REQUIRE(field != nullptr);
  CHECK(field->value.empty());
  CHECK(!find_in(observe(env), "lnk_later")->visible);

  step_env(env, reload);
  CHECK(snapshot_hash(observe(env)) == once);

  std::set<std::string> ids_after;
  collect_ids(env.root, ids_after);
  CHECK(ids_before == ids_after);
}

TEST_CASE("reload re-arms timed schedules") {
  register_fixtures();
  EnvState env = init_env("fixture_form", 0, 0);
  step_env(env, wait_ticks(2));
  CHECK(find_in(observe(env), "lnk_later")->visible);

  SimAction reload;
  reload.kind = SimActionKind::Reload;
  step_env(env, reload);
  CHECK(!find_in(observe(env), "lnk_later")->visible);
  step_env(env, wait_ticks(2));
  CHECK(find_in(observe(env), "lnk_later")->visible);
}

TEST_CASE("clicking an unknown id reports no_such_element") {
  register_fixtures();
  EnvState env = init_env("fixture_form", 0, 0);
  CHECK(has_event(step_env(env, click("btn_ghost")), EventKind::NoSuchElement));
}

TEST_CASE("hash ignores tick and scroll, tracks content: 10k fuzzed pairs") {
  register_fixtures();
  std::mt19937_64 rng(31337);
  int equal_seen = 0;
  for (int i = 0; i < 10000; ++i) {
    PageSnapshot a = random_snapshot(rng);
    PageSnapshot b;
    if (rng() % 2) {
      b = a;
      b.tick += 1 + static_cast<int>(rng() % 5);
      b.scroll_row = static_cast<int>(rng() % 7);
      if (rng() % 3 == 0 && !b.root.children.empty()) {
        b.root.children[rng() % b.root.children.size()].visible_text = "Mutated";
      }
    } else {
      b = random_snapshot(rng);
    }
    const bool same_content = hashed_content(a) == hashed_content(b);
    const bool same_hash = snapshot_hash(a) == snapshot_hash(b);
    CHECK(same_content == same_hash);
    if (same_content) ++equal_seen;
  }
  CHECK(equal_seen > 100);  // the generator must actually exercise both sides
}

TEST_CASE("identical action sequences replay identically") {
  register_fixtures();
  auto run = [](std::vector<std::string>* hashes) {
    EnvState env = init_env("fixture_form", 5, 9);
    std::vector<SimAction> script = {
        type_into("txt_name", "abc"), wait_ticks(1), type_into("txt_pin", "77"),
        wait_ticks(1), click("btn_go")};
    for (const auto& a : script) {
      step_env(env, a);
      hashes->push_back(snapshot_hash(observe(env)));
    }
    return env.event_log.size();
  };
  std::vector<std::string> h1, h2;
  const std::size_t n1 = run(&h1);
  const std::size_t n2 = run(&h2);
  CHECK(n1 == n2);
  CHECK(h1 == h2);
}

TEST_CASE("unknown template id is rejected") {
  CHECK_THROWS_AS(init_env("no_such_template", 0, 0), EnvError);
}
