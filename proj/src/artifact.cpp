#include "skillfix/artifact.hpp"

#include <algorithm>
#include <cstdlib>
#include <set>

#include "skillfix/digest.hpp"

namespace skillfix {

namespace {

// Shared key sets for unknown-field rejection.
void reject_unknown_keys(const json& obj, const std::set<std::string>& known,
                         const std::string& path) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!known.count(it.key())) {
      throw SchemaError(path.empty() ? it.key() : path + "." + it.key(),
                        "unknown field");
    }
  }
}

const json& require_field(const json& obj, const char* key,
                          const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw SchemaError(path.empty() ? key : path + "." + key, "missing field");
  }
  return *it;
}

std::string require_string(const json& j, const std::string& path) {
  if (!j.is_string()) throw SchemaError(path, "expected string");
  return j.get<std::string>();
}

const json& require_object(const json& j, const std::string& path) {
  if (!j.is_object()) throw SchemaError(path, "expected object");
  return j;
}

const json& require_array(const json& j, const std::string& path) {
  if (!j.is_array()) throw SchemaError(path, "expected array");
  return j;
}

int require_int(const json& j, const std::string& path) {
  if (!j.is_number_integer()) throw SchemaError(path, "expected integer");
  return j.get<int>();
}

std::string item_path(const std::string& base, std::size_t i) {
  return base + "[" + std::to_string(i) + "]";
}

}  // namespace

// ---------------------------------------------------------------------------
// String tables
// ---------------------------------------------------------------------------

std::string to_string(ActionKind k) {
  switch (k) {
    case ActionKind::Click: return "click";
    case ActionKind::Type: return "type";
    case ActionKind::Select: return "select";
    case ActionKind::Scroll: return "scroll";
  }
  std::abort();
}

std::string to_string(TextMode m) {
  return m == TextMode::Equals ? "equals" : "contains";
}

std::string to_string(AssertionKind k) {
  switch (k) {
    case AssertionKind::UrlMatches: return "url_matches";
    case AssertionKind::TextPresent: return "text_present";
    case AssertionKind::ElementExists: return "element_exists";
    case AssertionKind::ElementAbsent: return "element_absent";
    case AssertionKind::FormValue: return "form_value";
    case AssertionKind::OptionSelected: return "option_selected";
    case AssertionKind::StateChanged: return "state_changed";
  }
  std::abort();
}

std::string to_string(RecoveryActionKind k) {
  switch (k) {
    case RecoveryActionKind::ClosePopup: return "close_popup";
    case RecoveryActionKind::Reload: return "reload";
    case RecoveryActionKind::Scroll: return "scroll";
    case RecoveryActionKind::Wait: return "wait";
  }
  std::abort();
}

std::string to_string(PatchOp op) {
  switch (op) {
    case PatchOp::SelReplace: return "sel_replace";
    case PatchOp::PreInsert: return "pre_insert";
    case PatchOp::PostInsert: return "post_insert";
    case PatchOp::RecoveryInsert: return "recovery_insert";
    case PatchOp::ArgCorrect: return "arg_correct";
  }
  std::abort();
}

std::string to_string(SiteKind k) {
  switch (k) {
    case SiteKind::StepSelector: return "step_selector";
    case SiteKind::StepArgs: return "step_args";
    case SiteKind::StepPost: return "step_post";
    case SiteKind::ArtifactPre: return "artifact_pre";
    case SiteKind::ArtifactPost: return "artifact_post";
    case SiteKind::ArtifactRecovery: return "artifact_recovery";
  }
  std::abort();
}

ActionKind action_kind_from_string(const std::string& s) {
  if (s == "click") return ActionKind::Click;
  if (s == "type") return ActionKind::Type;
  if (s == "select") return ActionKind::Select;
  if (s == "scroll") return ActionKind::Scroll;
  throw SchemaError("action", "unknown action kind '" + s + "'");
}

AssertionKind assertion_kind_from_string(const std::string& s) {
  if (s == "url_matches") return AssertionKind::UrlMatches;
  if (s == "text_present") return AssertionKind::TextPresent;
  if (s == "element_exists") return AssertionKind::ElementExists;
  if (s == "element_absent") return AssertionKind::ElementAbsent;
  if (s == "form_value") return AssertionKind::FormValue;
  if (s == "option_selected") return AssertionKind::OptionSelected;
  if (s == "state_changed") return AssertionKind::StateChanged;
  throw SchemaError("kind", "unknown assertion kind '" + s + "'");
}

static RecoveryActionKind recovery_action_kind_from_string(const std::string& s,
                                                           const std::string& path) {
  if (s == "close_popup") return RecoveryActionKind::ClosePopup;
  if (s == "reload") return RecoveryActionKind::Reload;
  if (s == "scroll") return RecoveryActionKind::Scroll;
  if (s == "wait") return RecoveryActionKind::Wait;
  throw SchemaError(path, "unknown recovery action kind '" + s + "'");
}

static PatchOp patch_op_from_string(const std::string& s) {
  if (s == "sel_replace") return PatchOp::SelReplace;
  if (s == "pre_insert") return PatchOp::PreInsert;
  if (s == "post_insert") return PatchOp::PostInsert;
  if (s == "recovery_insert") return PatchOp::RecoveryInsert;
  if (s == "arg_correct") return PatchOp::ArgCorrect;
  throw SchemaError("op", "unknown patch op '" + s + "'");
}

static SiteKind site_kind_from_string(const std::string& s) {
  if (s == "step_selector") return SiteKind::StepSelector;
  if (s == "step_args") return SiteKind::StepArgs;
  if (s == "step_post") return SiteKind::StepPost;
  if (s == "artifact_pre") return SiteKind::ArtifactPre;
  if (s == "artifact_post") return SiteKind::ArtifactPost;
  if (s == "artifact_recovery") return SiteKind::ArtifactRecovery;
  throw SchemaError("site.kind", "unknown site kind '" + s + "'");
}

// ---------------------------------------------------------------------------
// JSON encoding
// ---------------------------------------------------------------------------

json to_json(const Selector& sel) {
  json j = json::object();
  if (sel.role) j["role"] = *sel.role;
  if (sel.text) {
    j["text_match"] = {{"mode", to_string(sel.text->mode)},
                       {"needle", sel.text->needle}};
  }
  if (!sel.attributes.empty()) j["attributes"] = sel.attributes;
  return j;
}

json to_json(const Assertion& a) {
  json j = json::object();
  j["kind"] = to_string(a.kind);
  if (a.selector) j["selector"] = to_json(*a.selector);
  if (a.pattern) j["pattern"] = *a.pattern;
  return j;
}

json to_json(const RecoveryAction& a) {
  json j = json::object();
  j["kind"] = to_string(a.kind);
  if (a.kind == RecoveryActionKind::Scroll) j["direction"] = a.direction;
  if (a.kind == RecoveryActionKind::Wait) j["ticks"] = a.ticks;
  return j;
}

json to_json(const RecoveryRule& r) {
  json fallback = json::array();
  for (const auto& a : r.fallback) fallback.push_back(to_json(a));
  return json{{"trigger", to_json(r.trigger)},
              {"fallback", std::move(fallback)},
              {"max_firings", r.max_firings}};
}

json to_json(const ActionArgs& args, ActionKind kind) {
  json j = json::object();
  switch (kind) {
    case ActionKind::Click:
      break;
    case ActionKind::Type:
      j["text"] = args.text;
      break;
    case ActionKind::Select:
      j["option"] = args.option;
      break;
    case ActionKind::Scroll:
      j["direction"] = args.direction;
      j["amount"] = args.amount;
      break;
  }
  return j;
}

json to_json(const Step& st) {
  json post = json::array();
  for (const auto& a : st.post_assertions) post.push_back(to_json(a));
  return json{{"selector", to_json(st.selector)},
              {"action", to_string(st.action)},
              {"args", to_json(st.args, st.action)},
              {"post_assertion", std::move(post)}};
}

json to_json(const SkillArtifact& s) {
  json pre = json::array();
  for (const auto& a : s.preconditions) pre.push_back(to_json(a));
  json steps = json::array();
  for (const auto& st : s.steps) steps.push_back(to_json(st));
  json post = json::array();
  for (const auto& a : s.postconditions) post.push_back(to_json(a));
  json rec = json::array();
  for (const auto& r : s.recovery) rec.push_back(to_json(r));
  json term = json::array();
  for (const auto& a : s.terminate) term.push_back(to_json(a));
  return json{{"skill_name", s.skill_name}, {"goal", s.goal},
              {"preconditions", std::move(pre)}, {"steps", std::move(steps)},
              {"postconditions", std::move(post)}, {"recovery", std::move(rec)},
              {"terminate", std::move(term)}, {"version", s.version}};
}

json to_json(const Patch& p) {
  json site = json::object();
  site["kind"] = to_string(p.site.kind);
  if (p.site.step > 0) site["step"] = p.site.step;
  json payload;
  switch (p.op) {
    case PatchOp::SelReplace:
      payload = to_json(std::get<Selector>(p.payload));
      break;
    case PatchOp::PreInsert:
    case PatchOp::PostInsert:
      payload = to_json(std::get<Assertion>(p.payload));
      break;
    case PatchOp::RecoveryInsert:
      payload = to_json(std::get<RecoveryRule>(p.payload));
      break;
    case PatchOp::ArgCorrect: {
      // Args need the action kind for shape; encode all set fields verbatim.
      const auto& a = std::get<ActionArgs>(p.payload);
      payload = json::object();
      if (!a.text.empty()) payload["text"] = a.text;
      if (!a.option.empty()) payload["option"] = a.option;
      if (!a.direction.empty()) payload["direction"] = a.direction;
      if (a.amount != 0) payload["amount"] = a.amount;
      break;
    }
  }
  return json{{"op", to_string(p.op)}, {"site", std::move(site)},
              {"payload", std::move(payload)}};
}

// ---------------------------------------------------------------------------
// JSON decoding
// ---------------------------------------------------------------------------

Selector selector_from_json(const json& j, const std::string& path) {
  require_object(j, path);
  reject_unknown_keys(j, {"role", "text_match", "attributes"}, path);
  Selector sel;
  if (auto it = j.find("role"); it != j.end()) {
    sel.role = require_string(*it, path + ".role");
  }
  if (auto it = j.find("text_match"); it != j.end()) {
    const std::string tpath = path + ".text_match";
    require_object(*it, tpath);
    reject_unknown_keys(*it, {"mode", "needle"}, tpath);
    TextMatch tm;
    std::string mode = require_string(require_field(*it, "mode", tpath), tpath + ".mode");
    if (mode == "equals") {
      tm.mode = TextMode::Equals;
    } else if (mode == "contains") {
      tm.mode = TextMode::Contains;
    } else {
      throw SchemaError(tpath + ".mode", "expected 'equals' or 'contains'");
    }
    tm.needle = require_string(require_field(*it, "needle", tpath), tpath + ".needle");
    sel.text = std::move(tm);
  }
  if (auto it = j.find("attributes"); it != j.end()) {
    const std::string apath = path + ".attributes";
    require_object(*it, apath);
    for (auto ait = it->begin(); ait != it->end(); ++ait) {
      sel.attributes[ait.key()] =
          require_string(ait.value(), apath + "." + ait.key());
    }
  }
  return sel;
}

Assertion assertion_from_json(const json& j, const std::string& path) {
  require_object(j, path);
  reject_unknown_keys(j, {"kind", "selector", "pattern"}, path);
  Assertion a;
  a.kind = assertion_kind_from_string(
      require_string(require_field(j, "kind", path), path + ".kind"));
  if (auto it = j.find("selector"); it != j.end()) {
    a.selector = selector_from_json(*it, path + ".selector");
  }
  if (auto it = j.find("pattern"); it != j.end()) {
    a.pattern = require_string(*it, path + ".pattern");
  }
  return a;
}

static RecoveryAction recovery_action_from_json(const json& j,
                                                const std::string& path) {
  require_object(j, path);
  reject_unknown_keys(j, {"kind", "direction", "ticks"}, path);
  RecoveryAction a;
  a.kind = recovery_action_kind_from_string(
      require_string(require_field(j, "kind", path), path + ".kind"),
      path + ".kind");
  if (a.kind == RecoveryActionKind::Scroll) {
    a.direction = require_string(require_field(j, "direction", path),
                                 path + ".direction");
  } else if (j.contains("direction")) {
    throw SchemaError(path + ".direction", "only valid for scroll");
  }
  if (a.kind == RecoveryActionKind::Wait) {
    a.ticks = require_int(require_field(j, "ticks", path), path + ".ticks");
  } else if (j.contains("ticks")) {
    throw SchemaError(path + ".ticks", "only valid for wait");
  }
  return a;
}

RecoveryRule recovery_rule_from_json(const json& j, const std::string& path) {
  require_object(j, path);
  reject_unknown_keys(j, {"trigger", "fallback", "max_firings"}, path);
  RecoveryRule r;
  r.trigger = assertion_from_json(require_field(j, "trigger", path),
                                  path + ".trigger");
  const json& fb = require_array(require_field(j, "fallback", path),
                                 path + ".fallback");
  for (std::size_t i = 0; i < fb.size(); ++i) {
    r.fallback.push_back(
        recovery_action_from_json(fb[i], item_path(path + ".fallback", i)));
  }
  r.max_firings = require_int(require_field(j, "max_firings", path),
                              path + ".max_firings");
  return r;
}

static ActionArgs args_from_json(const json& j, const std::string& path) {
  require_object(j, path);
  reject_unknown_keys(j, {"text", "option", "direction", "amount"}, path);
  ActionArgs args;
  if (auto it = j.find("text"); it != j.end()) {
    args.text = require_string(*it, path + ".text");
  }
  if (auto it = j.find("option"); it != j.end()) {
    args.option = require_string(*it, path + ".option");
  }
  if (auto it = j.find("direction"); it != j.end()) {
    args.direction = require_string(*it, path + ".direction");
  }
  if (auto it = j.find("amount"); it != j.end()) {
    args.amount = require_int(*it, path + ".amount");
  }
  return args;
}

static Step step_from_json(const json& j, const std::string& path) {
  require_object(j, path);
  reject_unknown_keys(j, {"selector", "action", "args", "post_assertion"}, path);
  Step st;
  st.selector = selector_from_json(require_field(j, "selector", path),
                                   path + ".selector");
  st.action = action_kind_from_string(
      require_string(require_field(j, "action", path), path + ".action"));
  st.args = args_from_json(require_field(j, "args", path), path + ".args");
  // The key must be present even when the list is empty; a missing key is a
  // structural violation, an empty list is a legitimate weak contract.
  const json& post = require_array(require_field(j, "post_assertion", path),
                                   path + ".post_assertion");
  for (std::size_t i = 0; i < post.size(); ++i) {
    st.post_assertions.push_back(
        assertion_from_json(post[i], item_path(path + ".post_assertion", i)));
  }
  return st;
}

Patch patch_from_json(const json& j) {
  require_object(j, "patch");
  reject_unknown_keys(j, {"op", "site", "payload"}, "patch");
  Patch p;
  p.op = patch_op_from_string(
      require_string(require_field(j, "op", "patch"), "patch.op"));
  const json& site = require_object(require_field(j, "site", "patch"),
                                    "patch.site");
  reject_unknown_keys(site, {"kind", "step"}, "patch.site");
  p.site.kind = site_kind_from_string(
      require_string(require_field(site, "kind", "patch.site"), "patch.site.kind"));
  if (auto it = site.find("step"); it != site.end()) {
    p.site.step = require_int(*it, "patch.site.step");
  }
  const json& payload = require_field(j, "payload", "patch");
  switch (p.op) {
    case PatchOp::SelReplace:
      p.payload = selector_from_json(payload, "patch.payload");
      break;
    case PatchOp::PreInsert:
    case PatchOp::PostInsert:
      p.payload = assertion_from_json(payload, "patch.payload");
      break;
    case PatchOp::RecoveryInsert:
      p.payload = recovery_rule_from_json(payload, "patch.payload");
      break;
    case PatchOp::ArgCorrect:
      p.payload = args_from_json(payload, "patch.payload");
      break;
  }
  return p;
}

// ---------------------------------------------------------------------------
// Canonical keys
// ---------------------------------------------------------------------------

std::string canonical_key(const Selector& sel) { return to_json(sel).dump(); }
std::string canonical_key(const Assertion& a) { return to_json(a).dump(); }
std::string canonical_key(const RecoveryRule& r) { return to_json(r).dump(); }
std::string canonical_key(const ActionArgs& args, ActionKind kind) {
  return to_json(args, kind).dump();
}

// ---------------------------------------------------------------------------
// parse / serialize / digest
// ---------------------------------------------------------------------------

SkillArtifact parse_artifact(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(e.what(), e.byte);
  }
  require_object(j, "artifact");
  reject_unknown_keys(j,
                      {"skill_name", "goal", "preconditions", "steps",
                       "postconditions", "recovery", "terminate", "version"},
                      "");
  SkillArtifact s;
  s.skill_name = require_string(require_field(j, "skill_name", ""), "skill_name");
  s.goal = require_string(require_field(j, "goal", ""), "goal");

  const json& pre = require_array(require_field(j, "preconditions", ""),
                                  "preconditions");
  for (std::size_t i = 0; i < pre.size(); ++i) {
    s.preconditions.push_back(
        assertion_from_json(pre[i], item_path("preconditions", i)));
  }
  const json& steps = require_array(require_field(j, "steps", ""), "steps");
  for (std::size_t i = 0; i < steps.size(); ++i) {
    s.steps.push_back(step_from_json(steps[i], item_path("steps", i)));
  }
  const json& post = require_array(require_field(j, "postconditions", ""),
                                   "postconditions");
  for (std::size_t i = 0; i < post.size(); ++i) {
    s.postconditions.push_back(
        assertion_from_json(post[i], item_path("postconditions", i)));
  }
  const json& rec = require_array(require_field(j, "recovery", ""), "recovery");
  for (std::size_t i = 0; i < rec.size(); ++i) {
    s.recovery.push_back(
        recovery_rule_from_json(rec[i], item_path("recovery", i)));
  }
  const json& term = require_array(require_field(j, "terminate", ""),
                                   "terminate");
  for (std::size_t i = 0; i < term.size(); ++i) {
    s.terminate.push_back(
        assertion_from_json(term[i], item_path("terminate", i)));
  }
  if (auto it = j.find("version"); it != j.end()) {
    if (!it->is_number_unsigned()) {
      throw SchemaError("version", "expected nonnegative integer");
    }
    s.version = it->get<std::uint64_t>();
  }

  auto violations = validate_schema(s);
  if (!violations.empty()) {
    throw SchemaError(violations.front().path, violations.front().reason);
  }
  return s;
}

std::string serialize_canonical(const SkillArtifact& s) {
  // nlohmann's object is a sorted map, so dump() already emits sorted keys.
  return to_json(s).dump();
}

std::string canonical_digest(const SkillArtifact& s) {
  json j = to_json(s);
  j.erase("version");
  return sha256_hex(j.dump());
}

bool content_equal(const SkillArtifact& a, const SkillArtifact& b) {
  json ja = to_json(a);
  json jb = to_json(b);
  ja.erase("version");
  jb.erase("version");
  return ja == jb;
}

// ---------------------------------------------------------------------------
// validate_schema
// ---------------------------------------------------------------------------

namespace {

void validate_selector(const Selector& sel, const std::string& path,
                       std::vector<Violation>& out) {
  if (sel.empty()) {
    out.push_back({path, "selector has no criteria"});
  }
  if (sel.text && sel.text->needle.empty()) {
    out.push_back({path + ".text_match.needle", "empty needle"});
  }
}

void validate_assertion(const Assertion& a, const std::string& path,
                        std::vector<Violation>& out) {
  const bool needs_selector = a.kind == AssertionKind::ElementExists ||
                              a.kind == AssertionKind::ElementAbsent ||
                              a.kind == AssertionKind::FormValue ||
                              a.kind == AssertionKind::OptionSelected;
  const bool needs_pattern = a.kind == AssertionKind::UrlMatches ||
                             a.kind == AssertionKind::TextPresent ||
                             a.kind == AssertionKind::FormValue ||
                             a.kind == AssertionKind::OptionSelected;
  if (needs_selector && !a.selector) {
    out.push_back({path + ".selector", "required for " + to_string(a.kind)});
  }
  if (!needs_selector && a.selector) {
    out.push_back({path + ".selector", "not allowed for " + to_string(a.kind)});
  }
  if (needs_pattern && !a.pattern) {
    out.push_back({path + ".pattern", "required for " + to_string(a.kind)});
  }
  if (!needs_pattern && a.pattern) {
    out.push_back({path + ".pattern", "not allowed for " + to_string(a.kind)});
  }
  if (a.selector) validate_selector(*a.selector, path + ".selector", out);
}

void validate_args(const Step& st, const std::string& path,
                   std::vector<Violation>& out) {
  const auto& a = st.args;
  switch (st.action) {
    case ActionKind::Click:
      if (!a.text.empty() || !a.option.empty() || !a.direction.empty() ||
          a.amount != 0) {
        out.push_back({path, "click takes no args"});
      }
      break;
    case ActionKind::Type:
      if (a.text.empty()) out.push_back({path + ".text", "required for type"});
      if (!a.option.empty() || !a.direction.empty() || a.amount != 0) {
        out.push_back({path, "type takes only 'text'"});
      }
      break;
    case ActionKind::Select:
      if (a.option.empty()) out.push_back({path + ".option", "required for select"});
      if (!a.text.empty() || !a.direction.empty() || a.amount != 0) {
        out.push_back({path, "select takes only 'option'"});
      }
      break;
    case ActionKind::Scroll:
      if (a.direction != "up" && a.direction != "down") {
        out.push_back({path + ".direction", "expected 'up' or 'down'"});
      }
      if (a.amount <= 0) out.push_back({path + ".amount", "expected positive"});
      if (!a.text.empty() || !a.option.empty()) {
        out.push_back({path, "scroll takes only 'direction' and 'amount'"});
      }
      break;
  }
}

}  // namespace

std::vector<Violation> validate_schema(const SkillArtifact& s) {
  std::vector<Violation> out;
  if (s.skill_name.empty()) out.push_back({"skill_name", "empty"});
  if (s.goal.empty()) out.push_back({"goal", "empty"});
  if (s.steps.empty()) out.push_back({"steps", "at least one step required"});

  for (std::size_t i = 0; i < s.preconditions.size(); ++i) {
    validate_assertion(s.preconditions[i], item_path("preconditions", i), out);
  }
  for (std::size_t i = 0; i < s.steps.size(); ++i) {
    const std::string path = item_path("steps", i);
    validate_selector(s.steps[i].selector, path + ".selector", out);
    validate_args(s.steps[i], path + ".args", out);
    for (std::size_t k = 0; k < s.steps[i].post_assertions.size(); ++k) {
      validate_assertion(s.steps[i].post_assertions[k],
                         item_path(path + ".post_assertion", k), out);
    }
  }
  for (std::size_t i = 0; i < s.postconditions.size(); ++i) {
    validate_assertion(s.postconditions[i], item_path("postconditions", i), out);
  }
  for (std::size_t i = 0; i < s.recovery.size(); ++i) {
    const std::string path = item_path("recovery", i);
    const auto& r = s.recovery[i];
    validate_assertion(r.trigger, path + ".trigger", out);
    if (r.fallback.empty()) {
      out.push_back({path + ".fallback", "at least one action required"});
    }
    if (r.fallback.size() > 3) {
      out.push_back({path + ".fallback", "at most 3 actions"});
    }
    for (std::size_t k = 0; k < r.fallback.size(); ++k) {
      const auto& a = r.fallback[k];
      const std::string apath = item_path(path + ".fallback", k);
      if (a.kind == RecoveryActionKind::Scroll && a.direction != "up" &&
          a.direction != "down") {
        out.push_back({apath + ".direction", "expected 'up' or 'down'"});
      }
      if (a.kind == RecoveryActionKind::Wait && a.ticks <= 0) {
        out.push_back({apath + ".ticks", "expected positive"});
      }
    }
    if (r.max_firings < 1) {
      out.push_back({path + ".max_firings", "expected >= 1"});
    }
  }
  for (std::size_t i = 0; i < s.terminate.size(); ++i) {
    validate_assertion(s.terminate[i], item_path("terminate", i), out);
  }
  return out;
}

// ---------------------------------------------------------------------------
// edit_distance
// ---------------------------------------------------------------------------

namespace {

// Multiset difference size between two lists of canonical keys: the larger of
// (removed, added) so one in-place replacement costs a single edit.
int list_distance(std::vector<std::string> a, std::vector<std::string> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t common = 0;
  std::size_t i = 0, k = 0;
  while (i < a.size() && k < b.size()) {
    if (a[i] == b[k]) {
      ++common;
      ++i;
      ++k;
    } else if (a[i] < b[k]) {
      ++i;
    } else {
      ++k;
    }
  }
  const std::size_t removed = a.size() - common;
  const std::size_t added = b.size() - common;
  return static_cast<int>(std::max(removed, added));
}

std::vector<std::string> assertion_keys(const std::vector<Assertion>& list) {
  std::vector<std::string> keys;
  keys.reserve(list.size());
  for (const auto& a : list) keys.push_back(canonical_key(a));
  return keys;
}

std::vector<std::string> rule_keys(const std::vector<RecoveryRule>& list) {
  std::vector<std::string> keys;
  keys.reserve(list.size());
  for (const auto& r : list) keys.push_back(canonical_key(r));
  return keys;
}

}  // namespace

int edit_distance(const SkillArtifact& a, const SkillArtifact& b) {
  int d = 0;
  if (a.skill_name != b.skill_name) ++d;
  if (a.goal != b.goal) ++d;
  d += list_distance(assertion_keys(a.preconditions), assertion_keys(b.preconditions));
  d += list_distance(assertion_keys(a.postconditions), assertion_keys(b.postconditions));
  d += list_distance(assertion_keys(a.terminate), assertion_keys(b.terminate));
  d += list_distance(rule_keys(a.recovery), rule_keys(b.recovery));

  // Steps are ordered, so compare positionally and charge |Δm| for the tail.
  const std::size_t shared = std::min(a.steps.size(), b.steps.size());
  for (std::size_t i = 0; i < shared; ++i) {
    const Step& sa = a.steps[i];
    const Step& sb = b.steps[i];
    if (canonical_key(sa.selector) != canonical_key(sb.selector)) ++d;
    if (sa.action != sb.action) ++d;
    if (canonical_key(sa.args, sa.action) != canonical_key(sb.args, sb.action)) ++d;
    d += list_distance(assertion_keys(sa.post_assertions),
                       assertion_keys(sb.post_assertions));
  }
  d += static_cast<int>(std::max(a.steps.size(), b.steps.size()) - shared);

  // Pure reordering inside an unordered list is invisible to the multiset
  // metric but still a content change; make the metric honest about it.
  if (d == 0 && !content_equal(a, b)) d = 1;
  return d;
}

// ---------------------------------------------------------------------------
// apply_patch
// ---------------------------------------------------------------------------

namespace {

void require_step_in_range(const SkillArtifact& s, int step) {
  if (step < 1 || step > static_cast<int>(s.steps.size())) {
    throw PatchError("patch site step " + std::to_string(step) +
                     " out of range (artifact has " +
                     std::to_string(s.steps.size()) + " steps)");
  }
}

void insert_unique_assertion(std::vector<Assertion>& list, const Assertion& a,
                             const char* where) {
  const std::string key = canonical_key(a);
  for (const auto& existing : list) {
    if (canonical_key(existing) == key) {
      throw PatchError(std::string("duplicate assertion insert into ") + where);
    }
  }
  list.push_back(a);
}

}  // namespace

SkillArtifact apply_patch(const SkillArtifact& s, const Patch& p) {
  SkillArtifact out = s;
  switch (p.op) {
    case PatchOp::SelReplace: {
      if (p.site.kind != SiteKind::StepSelector) {
        throw PatchError("sel_replace requires a step_selector site");
      }
      require_step_in_range(s, p.site.step);
      const auto* sel = std::get_if<Selector>(&p.payload);
      if (!sel) throw PatchError("sel_replace payload must be a selector");
      Step& st = out.steps[p.site.step - 1];
      if (canonical_key(*sel) == canonical_key(st.selector)) {
        throw PatchError("sel_replace is a no-op (identical selector)");
      }
      st.selector = *sel;
      break;
    }
    case PatchOp::PreInsert: {
      if (p.site.kind != SiteKind::ArtifactPre) {
        throw PatchError("pre_insert requires the artifact_pre site");
      }
      const auto* a = std::get_if<Assertion>(&p.payload);
      if (!a) throw PatchError("pre_insert payload must be an assertion");
      insert_unique_assertion(out.preconditions, *a, "preconditions");
      break;
    }
    case PatchOp::PostInsert: {
      const auto* a = std::get_if<Assertion>(&p.payload);
      if (!a) throw PatchError("post_insert payload must be an assertion");
      if (p.site.kind == SiteKind::StepPost) {
        require_step_in_range(s, p.site.step);
        insert_unique_assertion(out.steps[p.site.step - 1].post_assertions, *a,
                                "step post_assertion");
      } else if (p.site.kind == SiteKind::ArtifactPost) {
        insert_unique_assertion(out.postconditions, *a, "postconditions");
      } else {
        throw PatchError("post_insert requires a step_post or artifact_post site");
      }
      break;
    }
    case PatchOp::RecoveryInsert: {
      if (p.site.kind != SiteKind::ArtifactRecovery) {
        throw PatchError("recovery_insert requires the artifact_recovery site");
      }
      const auto* r = std::get_if<RecoveryRule>(&p.payload);
      if (!r) throw PatchError("recovery_insert payload must be a recovery rule");
      const std::string key = canonical_key(*r);
      for (const auto& existing : out.recovery) {
        if (canonical_key(existing) == key) {
          throw PatchError("duplicate recovery rule insert");
        }
      }
      out.recovery.push_back(*r);
      break;
    }
    case PatchOp::ArgCorrect: {
      if (p.site.kind != SiteKind::StepArgs) {
        throw PatchError("arg_correct requires a step_args site");
      }
      require_step_in_range(s, p.site.step);
      const auto* args = std::get_if<ActionArgs>(&p.payload);
      if (!args) throw PatchError("arg_correct payload must be action args");
      Step& st = out.steps[p.site.step - 1];
      if (st.action == ActionKind::Click) {
        throw PatchError("arg_correct target step takes no args");
      }
      if (canonical_key(*args, st.action) == canonical_key(st.args, st.action)) {
        throw PatchError("arg_correct is a no-op (identical args)");
      }
      st.args = *args;
      break;
    }
  }
  auto violations = validate_schema(out);
  if (!violations.empty()) {
    throw PatchError("patched artifact fails validation at " +
                     violations.front().path + ": " + violations.front().reason);
  }
  out.version = s.version + 1;
  return out;
}

}  // namespace skillfix
