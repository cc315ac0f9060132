#include "skillfix/pagesim.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <map>
#include <set>

#include "skillfix/digest.hpp"

namespace skillfix {

// ---------------------------------------------------------------------------
// String tables
// ---------------------------------------------------------------------------

std::string to_string(Role r) {
  switch (r) {
    case Role::Button: return "button";
    case Role::Link: return "link";
    case Role::Textbox: return "textbox";
    case Role::Password: return "password";
    case Role::Checkbox: return "checkbox";
    case Role::Select: return "select";
    case Role::Option: return "option";
    case Role::Menu: return "menu";
    case Role::MenuItem: return "menuitem";
    case Role::Dialog: return "dialog";
    case Role::Text: return "text";
    case Role::Container: return "container";
  }
  std::abort();
}

Role role_from_string(const std::string& s) {
  static const std::map<std::string, Role> table = {
      {"button", Role::Button},     {"link", Role::Link},
      {"textbox", Role::Textbox},   {"password", Role::Password},
      {"checkbox", Role::Checkbox},
      {"select", Role::Select},     {"option", Role::Option},
      {"menu", Role::Menu},         {"menuitem", Role::MenuItem},
      {"dialog", Role::Dialog},     {"text", Role::Text},
      {"container", Role::Container},
  };
  auto it = table.find(s);
  if (it == table.end()) throw EnvError("unknown role '" + s + "'");
  return it->second;
}

std::string to_string(SimActionKind k) {
  switch (k) {
    case SimActionKind::Click: return "click";
    case SimActionKind::Type: return "type";
    case SimActionKind::Select: return "select";
    case SimActionKind::Scroll: return "scroll";
    case SimActionKind::ClosePopup: return "close_popup";
    case SimActionKind::Reload: return "reload";
    case SimActionKind::Wait: return "wait";
  }
  std::abort();
}

std::string to_string(EventKind k) {
  switch (k) {
    case EventKind::ActionOk: return "action_ok";
    case EventKind::BlockedAction: return "blocked_action";
    case EventKind::NoSuchElement: return "no_such_element";
    case EventKind::RejectedInput: return "rejected_input";
    case EventKind::Navigated: return "navigated";
    case EventKind::ModalOpened: return "modal_opened";
    case EventKind::ModalClosed: return "modal_closed";
    case EventKind::Revealed: return "revealed";
    case EventKind::Scrolled: return "scrolled";
    case EventKind::Reloaded: return "reloaded";
    case EventKind::Waited: return "waited";
  }
  std::abort();
}

nlohmann::json to_json(const Event& e) {
  nlohmann::json j{{"kind", to_string(e.kind)}, {"tick", e.tick}};
  if (!e.target_id.empty()) j["target_id"] = e.target_id;
  if (!e.cause.empty()) j["cause"] = e.cause;
  if (!e.detail.empty()) j["detail"] = e.detail;
  return j;
}

// ---------------------------------------------------------------------------
// Tree helpers
// ---------------------------------------------------------------------------

Element* find_by_id(Element& root, const std::string& stable_id) {
  if (root.stable_id == stable_id) return &root;
  for (auto& child : root.children) {
    if (Element* hit = find_by_id(child, stable_id)) return hit;
  }
  return nullptr;
}

const Element* find_by_id(const Element& root, const std::string& stable_id) {
  return find_by_id(const_cast<Element&>(root), stable_id);
}

namespace {

int max_row(const Element& e, int parent_row) {
  int here = e.row >= 0 ? e.row : parent_row;
  int best = here;
  for (const auto& c : e.children) best = std::max(best, max_row(c, here));
  return best;
}

void collect_ids(const Element& e, std::set<std::string>& seen) {
  if (!e.stable_id.empty() && !seen.insert(e.stable_id).second) {
    throw EnvError("duplicate stable_id '" + e.stable_id + "' in page tree");
  }
  for (const auto& c : e.children) collect_ids(c, seen);
}

// Where an element lives and whether it can actually be interacted with.
struct Located {
  Element* elem = nullptr;
  bool effectively_visible = false;
  bool in_top_modal = false;
  bool in_any_modal = false;
};

bool row_in_viewport(const EnvState& env, int row) {
  return row >= env.scroll_row && row < env.scroll_row + env.viewport_rows;
}

Element* locate_rec(const EnvState& env, Element& e, bool ancestors_visible,
                    int parent_row, bool apply_viewport,
                    const std::string& stable_id, bool* out_visible) {
  const int here = e.row >= 0 ? e.row : parent_row;
  const bool vis = ancestors_visible && e.visible &&
                   (!apply_viewport || row_in_viewport(env, here));
  if (e.stable_id == stable_id) {
    *out_visible = vis;
    return &e;
  }
  for (auto& c : e.children) {
    if (Element* hit = locate_rec(env, c, vis, here, apply_viewport, stable_id,
                                  out_visible)) {
      return hit;
    }
  }
  return nullptr;
}

Located locate(EnvState& env, const std::string& stable_id) {
  Located loc;
  bool vis = false;
  if (Element* hit = locate_rec(env, env.root, true, 0, true, stable_id, &vis)) {
    loc.elem = hit;
    loc.effectively_visible = vis;
    return loc;
  }
  for (std::size_t i = 0; i < env.modal_stack.size(); ++i) {
    // Modals float above the page; the viewport does not clip them.
    if (Element* hit = locate_rec(env, env.modal_stack[i], true, 0, false,
                                  stable_id, &vis)) {
      loc.elem = hit;
      loc.effectively_visible = vis;
      loc.in_any_modal = true;
      loc.in_top_modal = (i + 1 == env.modal_stack.size());
      return loc;
    }
  }
  return loc;
}

// ---------------------------------------------------------------------------
// Schedules
// ---------------------------------------------------------------------------

void fire_due(EnvState& env, std::vector<Event>& events) {
  // Popups first so a reveal and popup on the same tick leave the popup on top.
  for (auto it = env.pending_popups.begin(); it != env.pending_popups.end();) {
    if (it->first <= env.tick) {
      env.modal_stack.push_back(it->second);
      events.push_back({EventKind::ModalOpened, it->second.stable_id, "", "",
                        env.tick});
      it = env.pending_popups.erase(it);
    } else {
      ++it;
    }
  }
  for (auto it = env.pending_reveals.begin(); it != env.pending_reveals.end();) {
    if (it->first <= env.tick) {
      for (const auto& id : it->second) {
        if (Element* e = find_by_id(env.root, id)) {
          e->visible = true;
          events.push_back({EventKind::Revealed, id, "", "", env.tick});
        }
      }
      it = env.pending_reveals.erase(it);
    } else {
      ++it;
    }
  }
}

void arm_schedules(EnvState& env, int base_tick) {
  for (const auto& p : env.dynamics.popups) {
    env.pending_popups.emplace_back(base_tick + p.tick_offset, p.dialog);
  }
  for (const auto& r : env.dynamics.reveals) {
    env.pending_reveals.emplace_back(base_tick + r.tick_offset, r.ids);
  }
}

Element generic_intruder_dialog() {
  Element close;
  close.stable_id = "dialog_intruder_close";
  close.role = Role::Button;
  close.visible_text = "Dismiss";
  close.attributes["action"] = "close";

  Element msg;
  msg.stable_id = "dialog_intruder_text";
  msg.role = Role::Text;
  msg.visible_text = "Before you continue";

  Element dlg;
  dlg.stable_id = "dialog_intruder";
  dlg.role = Role::Dialog;
  dlg.visible_text = "Notice";
  dlg.children = {std::move(msg), std::move(close)};
  return dlg;
}

std::map<std::string, TemplateBuilder>& registry() {
  static std::map<std::string, TemplateBuilder> reg;
  return reg;
}

}  // namespace

// ---------------------------------------------------------------------------
// Registry and initialization
// ---------------------------------------------------------------------------

void register_template(const std::string& id, TemplateBuilder builder) {
  registry()[id] = std::move(builder);
}

bool has_template(const std::string& id) { return registry().count(id) > 0; }

std::vector<std::string> registered_templates() {
  std::vector<std::string> out;
  for (const auto& [id, _] : registry()) out.push_back(id);
  return out;
}

EnvState init_env(const std::string& template_id, std::uint64_t content_seed,
                  std::uint64_t variation_seed, const EnvOverrides& overrides) {
  auto it = registry().find(template_id);
  if (it == registry().end()) {
    throw EnvError("unknown page template '" + template_id + "'");
  }
  EnvState env = it->second(content_seed, variation_seed);
  env.template_id = template_id;
  env.content_seed = content_seed;
  env.variation_seed = variation_seed;
  env.tick = 0;
  env.scroll_row = 0;
  env.load_tick = 0;
  env.start_url = env.url;
  env.initial_root = env.root;
  env.url_history = {env.url};

  std::set<std::string> ids;
  collect_ids(env.root, ids);

  arm_schedules(env, 0);
  if (overrides.popup_at_start) {
    // Reuse the template's own popup when it has one so the page stays
    // self-consistent; otherwise inject a generic one.
    Element dlg = env.dynamics.popups.empty() ? generic_intruder_dialog()
                                              : env.dynamics.popups.front().dialog;
    env.modal_stack.push_back(dlg);
    env.event_log.push_back({EventKind::ModalOpened, dlg.stable_id, "",
                             "popup_at_start", 0});
  }
  return env;
}

// ---------------------------------------------------------------------------
// Tick advance and actions
// ---------------------------------------------------------------------------

std::vector<Event> advance_tick(EnvState& env) {
  std::vector<Event> events;
  env.tick += 1;
  fire_due(env, events);
  for (const auto& e : events) env.event_log.push_back(e);
  return events;
}

namespace {

void do_navigate(EnvState& env, const Navigation& nav, std::vector<Event>& events) {
  env.url = nav.url;
  env.root = nav.page;
  env.modal_stack.clear();
  env.scroll_row = 0;
  env.load_tick = env.tick;
  // A fresh page: nothing from the old one is still scheduled.
  env.pending_reveals.clear();
  env.pending_popups.clear();
  env.url_history.push_back(nav.url);
  events.push_back({EventKind::Navigated, "", "", nav.url, env.tick});
}

void perform_click(EnvState& env, Located& loc, const SimAction& action,
                   std::vector<Event>& events) {
  Element& e = *loc.elem;
  if (e.attributes.count("action") && e.attributes.at("action") == "close" &&
      loc.in_top_modal) {
    const std::string dialog_id = env.modal_stack.back().stable_id;
    env.modal_stack.pop_back();
    events.push_back({EventKind::ModalClosed, dialog_id, "", "", env.tick});
    return;
  }
  if (e.role == Role::Checkbox) {
    e.selected = !e.selected;
    e.value = e.selected ? "on" : "off";
    events.push_back({EventKind::ActionOk, e.stable_id, "", "", env.tick});
    return;
  }
  if (auto rit = env.dynamics.click_reveals.find(e.stable_id);
      rit != env.dynamics.click_reveals.end()) {
    env.pending_reveals.emplace_back(env.tick + rit->second.delay,
                                     rit->second.target_ids);
    events.push_back({EventKind::ActionOk, e.stable_id, "", "", env.tick});
    return;
  }
  if (auto nit = env.dynamics.navigations.find(e.stable_id);
      nit != env.dynamics.navigations.end()) {
    const Navigation& nav = nit->second;
    for (const auto& [field_id, wanted] : nav.required_form) {
      const Element* field = find_by_id(env.root, field_id);
      if (!field || field->value != wanted) {
        // Submit gate rejected; the page stays put.
        events.push_back({EventKind::ActionOk, e.stable_id, "",
                          "nav_blocked_form", env.tick});
        return;
      }
    }
    events.push_back({EventKind::ActionOk, e.stable_id, "", "", env.tick});
    do_navigate(env, nav, events);
    return;
  }
  events.push_back({EventKind::ActionOk, e.stable_id, "", "", env.tick});
  (void)action;
}

void perform_type(EnvState& env, Located& loc, const SimAction& action,
                  std::vector<Event>& events) {
  Element& e = *loc.elem;
  if (e.role != Role::Textbox && e.role != Role::Password) {
    events.push_back({EventKind::BlockedAction, e.stable_id, "not_editable", "",
                      env.tick});
    return;
  }
  if (auto it = e.attributes.find("maxlength"); it != e.attributes.end()) {
    const std::size_t limit = std::stoul(it->second);
    if (action.text.size() > limit) {
      events.push_back({EventKind::RejectedInput, e.stable_id, "",
                        "max_length=" + it->second, env.tick});
      return;
    }
  }
  if (auto it = e.attributes.find("charset"); it != e.attributes.end()) {
    if (it->second == "digits") {
      const bool ok = std::all_of(action.text.begin(), action.text.end(),
                                  [](unsigned char c) { return std::isdigit(c); });
      if (!ok) {
        events.push_back({EventKind::RejectedInput, e.stable_id, "",
                          "charset=digits", env.tick});
        return;
      }
    }
  }
  e.value = action.text;
  events.push_back({EventKind::ActionOk, e.stable_id, "", "", env.tick});
}

void perform_select(EnvState& env, Located& loc, const SimAction& action,
                    std::vector<Event>& events) {
  Element& e = *loc.elem;
  if (e.role != Role::Select) {
    events.push_back({EventKind::BlockedAction, e.stable_id, "not_editable", "",
                      env.tick});
    return;
  }
  std::vector<std::string> labels;
  Element* match = nullptr;
  for (auto& child : e.children) {
    if (child.role != Role::Option) continue;
    labels.push_back(child.visible_text);
    if (child.visible_text == action.option) match = &child;
  }
  if (!match) {
    std::string joined;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (i) joined += "|";
      joined += labels[i];
    }
    events.push_back({EventKind::RejectedInput, e.stable_id, "",
                      "option_not_found;options=" + joined, env.tick});
    return;
  }
  for (auto& child : e.children) {
    if (child.role == Role::Option) child.selected = false;
  }
  match->selected = true;
  e.value = action.option;
  events.push_back({EventKind::ActionOk, e.stable_id, "", "", env.tick});
}

}  // namespace

std::vector<Event> step_env(EnvState& env, const SimAction& action) {
  std::vector<Event> events;
  env.tick += 1;
  if (action.kind == SimActionKind::Wait) {
    // One action, several ticks: the remaining waits run inline so due
    // schedules still fire tick by tick.
    const int ticks = std::max(action.amount, 1);
    fire_due(env, events);
    for (int i = 1; i < ticks; ++i) {
      env.tick += 1;
      fire_due(env, events);
    }
    events.push_back({EventKind::Waited, "", "",
                      "ticks=" + std::to_string(ticks), env.tick});
    for (const auto& e : events) env.event_log.push_back(e);
    return events;
  }

  switch (action.kind) {
    case SimActionKind::ClosePopup: {
      if (env.modal_stack.empty()) {
        events.push_back({EventKind::BlockedAction, "", "no_modal", "", env.tick});
      } else {
        const std::string dialog_id = env.modal_stack.back().stable_id;
        env.modal_stack.pop_back();
        events.push_back({EventKind::ModalClosed, dialog_id, "", "", env.tick});
      }
      break;
    }
    case SimActionKind::Reload: {
      if (!env.modal_stack.empty()) {
        events.push_back({EventKind::BlockedAction, "", "occluded_by_modal",
                          env.modal_stack.back().stable_id, env.tick});
        break;
      }
      env.root = env.initial_root;
      if (env.url != env.start_url) env.url_history.push_back(env.start_url);
      env.url = env.start_url;
      env.modal_stack.clear();
      env.scroll_row = 0;
      env.load_tick = env.tick;
      env.pending_reveals.clear();
      env.pending_popups.clear();
      arm_schedules(env, env.tick);
      events.push_back({EventKind::Reloaded, "", "", "", env.tick});
      break;
    }
    case SimActionKind::Scroll: {
      if (!env.modal_stack.empty()) {
        events.push_back({EventKind::BlockedAction, "", "occluded_by_modal",
                          env.modal_stack.back().stable_id, env.tick});
        break;
      }
      const int limit = max_row(env.root, 0);
      const int delta = action.direction == "up" ? -action.amount : action.amount;
      env.scroll_row = std::clamp(env.scroll_row + delta, 0, limit);
      events.push_back({EventKind::Scrolled, "", "",
                        "row=" + std::to_string(env.scroll_row), env.tick});
      break;
    }
    case SimActionKind::Click:
    case SimActionKind::Type:
    case SimActionKind::Select: {
      Located loc = locate(env, action.target_id);
      if (!loc.elem) {
        events.push_back({EventKind::NoSuchElement, action.target_id, "", "",
                          env.tick});
        break;
      }
      if (!env.modal_stack.empty() && !loc.in_top_modal) {
        events.push_back({EventKind::BlockedAction, action.target_id,
                          "occluded_by_modal", env.modal_stack.back().stable_id,
                          env.tick});
        break;
      }
      if (!loc.effectively_visible) {
        events.push_back({EventKind::BlockedAction, action.target_id,
                          "invisible", "", env.tick});
        break;
      }
      if (!loc.elem->enabled) {
        events.push_back({EventKind::BlockedAction, action.target_id,
                          "disabled", "", env.tick});
        break;
      }
      if (action.kind == SimActionKind::Click) {
        perform_click(env, loc, action, events);
      } else if (action.kind == SimActionKind::Type) {
        perform_type(env, loc, action, events);
      } else {
        perform_select(env, loc, action, events);
      }
      break;
    }
    case SimActionKind::Wait:
      break;  // handled above
  }

  fire_due(env, events);
  for (const auto& e : events) env.event_log.push_back(e);
  return events;
}

// ---------------------------------------------------------------------------
// Observation and hashing
// ---------------------------------------------------------------------------

namespace {

Element observe_rec(const EnvState& env, const Element& e, bool ancestors_visible,
                    int parent_row, bool apply_viewport) {
  Element out = e;
  out.children.clear();
  const int here = e.row >= 0 ? e.row : parent_row;
  out.row = here;
  out.visible = ancestors_visible && e.visible &&
                (!apply_viewport || row_in_viewport(env, here));
  for (const auto& c : e.children) {
    out.children.push_back(observe_rec(env, c, out.visible, here, apply_viewport));
  }
  return out;
}

}  // namespace

PageSnapshot observe(const EnvState& env) {
  PageSnapshot snap;
  snap.url = env.url;
  snap.root = observe_rec(env, env.root, true, 0, true);
  for (const auto& dlg : env.modal_stack) {
    snap.modal_stack.push_back(observe_rec(env, dlg, true, 0, false));
  }
  snap.scroll_row = env.scroll_row;
  snap.tick = env.tick;
  return snap;
}

nlohmann::json to_json(const Element& e) {
  nlohmann::json children = nlohmann::json::array();
  for (const auto& c : e.children) children.push_back(to_json(c));
  return nlohmann::json{
      {"stable_id", e.stable_id}, {"role", to_string(e.role)},
      {"visible_text", e.visible_text}, {"attributes", e.attributes},
      {"value", e.value}, {"selected", e.selected}, {"visible", e.visible},
      {"enabled", e.enabled}, {"row", e.row}, {"children", std::move(children)}};
}

nlohmann::json to_json(const PageSnapshot& snap) {
  nlohmann::json modals = nlohmann::json::array();
  for (const auto& m : snap.modal_stack) modals.push_back(to_json(m));
  return nlohmann::json{{"url", snap.url}, {"tree", to_json(snap.root)},
                        {"modal_stack", std::move(modals)},
                        {"scroll_row", snap.scroll_row}, {"tick", snap.tick}};
}

std::string snapshot_hash(const PageSnapshot& snap) {
  // Tick is deliberately left out: the passage of time alone is not a state
  // change, which is what stall detection relies on. The raw scroll offset
  // is also out; scrolling only counts when it changes effective visibility,
  // which the tree already encodes.
  nlohmann::json j = to_json(snap);
  j.erase("tick");
  j.erase("scroll_row");
  return sha256_hex(j.dump());
}

// ---------------------------------------------------------------------------
// Static template files
// ---------------------------------------------------------------------------

Element element_from_json(const nlohmann::json& j, const std::string& path) {
  if (!j.is_object()) throw EnvError(path + ": expected object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    static const std::set<std::string> known = {
        "stable_id", "role", "visible_text", "attributes", "value",
        "selected",  "visible", "enabled", "row", "children"};
    if (!known.count(it.key())) {
      throw EnvError(path + "." + it.key() + ": unknown field");
    }
  }
  Element e;
  if (!j.contains("stable_id") || !j["stable_id"].is_string()) {
    throw EnvError(path + ".stable_id: required string");
  }
  e.stable_id = j["stable_id"].get<std::string>();
  if (!j.contains("role") || !j["role"].is_string()) {
    throw EnvError(path + ".role: required string");
  }
  e.role = role_from_string(j["role"].get<std::string>());
  if (j.contains("visible_text")) e.visible_text = j["visible_text"].get<std::string>();
  if (j.contains("attributes")) {
    for (auto it = j["attributes"].begin(); it != j["attributes"].end(); ++it) {
      e.attributes[it.key()] = it.value().get<std::string>();
    }
  }
  if (j.contains("value")) e.value = j["value"].get<std::string>();
  if (j.contains("selected")) e.selected = j["selected"].get<bool>();
  if (j.contains("visible")) e.visible = j["visible"].get<bool>();
  if (j.contains("enabled")) e.enabled = j["enabled"].get<bool>();
  if (j.contains("row")) e.row = j["row"].get<int>();
  if (j.contains("children")) {
    const auto& kids = j["children"];
    if (!kids.is_array()) throw EnvError(path + ".children: expected array");
    for (std::size_t i = 0; i < kids.size(); ++i) {
      e.children.push_back(
          element_from_json(kids[i], path + ".children[" + std::to_string(i) + "]"));
    }
  }
  return e;
}

void register_template_from_json(const std::string& id, const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw EnvError(std::string("template parse error: ") + e.what());
  }
  if (!j.is_object() || !j.contains("url") || !j.contains("root")) {
    throw EnvError("template file needs at least 'url' and 'root'");
  }
  EnvState proto;
  proto.url = j["url"].get<std::string>();
  proto.root = element_from_json(j["root"], "root");
  if (j.contains("viewport_rows")) proto.viewport_rows = j["viewport_rows"].get<int>();
  if (j.contains("reveals")) {
    for (const auto& r : j["reveals"]) {
      TimedReveal tr;
      tr.tick_offset = r.at("tick_offset").get<int>();
      for (const auto& rid : r.at("ids")) tr.ids.push_back(rid.get<std::string>());
      proto.dynamics.reveals.push_back(std::move(tr));
    }
  }
  if (j.contains("popups")) {
    for (const auto& p : j["popups"]) {
      TimedPopup tp;
      tp.tick_offset = p.at("tick_offset").get<int>();
      tp.dialog = element_from_json(p.at("dialog"), "popups.dialog");
      proto.dynamics.popups.push_back(std::move(tp));
    }
  }
  if (j.contains("click_reveals")) {
    for (auto it = j["click_reveals"].begin(); it != j["click_reveals"].end(); ++it) {
      ClickReveal cr;
      for (const auto& t : it.value().at("targets")) {
        cr.target_ids.push_back(t.get<std::string>());
      }
      cr.delay = it.value().value("delay", 0);
      proto.dynamics.click_reveals[it.key()] = std::move(cr);
    }
  }
  if (j.contains("navigations")) {
    for (auto it = j["navigations"].begin(); it != j["navigations"].end(); ++it) {
      Navigation nav;
      nav.url = it.value().at("url").get<std::string>();
      nav.page = element_from_json(it.value().at("page"), "navigations.page");
      if (it.value().contains("required_form")) {
        const auto& rf = it.value()["required_form"];
        for (auto fit = rf.begin(); fit != rf.end(); ++fit) {
          nav.required_form[fit.key()] = fit.value().get<std::string>();
        }
      }
      proto.dynamics.navigations[it.key()] = std::move(nav);
    }
  }
  register_template(id, [proto](std::uint64_t, std::uint64_t) { return proto; });
}

void write_event_log(const EnvState& env, std::ostream& out) {
  for (const auto& e : env.event_log) out << to_json(e).dump() << "\n";
}

}  // namespace skillfix
