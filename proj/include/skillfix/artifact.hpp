#ifndef SKILLFIX_ARTIFACT_HPP
#define SKILLFIX_ARTIFACT_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

namespace skillfix {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Skill artifact schema
//
// An artifact is an explicit, serialized procedure: goal, preconditions,
// ordered steps, postconditions, recovery rules, and termination checks.
// Artifacts are immutable values; every edit produces a new value.
// ---------------------------------------------------------------------------

enum class ActionKind { Click, Type, Select, Scroll };

enum class TextMode { Equals, Contains };

struct TextMatch {
  TextMode mode = TextMode::Equals;
  std::string needle;
};

// Element query over a page snapshot. Matching uses role, visible text, and
// stable attributes; never transient node identifiers.
struct Selector {
  std::optional<std::string> role;
  std::optional<TextMatch> text;
  std::map<std::string, std::string> attributes;

  bool empty() const { return !role && !text && attributes.empty(); }
};

enum class AssertionKind {
  UrlMatches,
  TextPresent,
  ElementExists,
  ElementAbsent,
  FormValue,
  OptionSelected,
  StateChanged,
};

// A deterministic check over one snapshot (or a before/after pair for
// StateChanged). FormValue/OptionSelected/ElementExists/ElementAbsent need a
// selector; UrlMatches/TextPresent need a pattern; StateChanged needs neither.
struct Assertion {
  AssertionKind kind = AssertionKind::StateChanged;
  std::optional<Selector> selector;
  std::optional<std::string> pattern;
};

enum class RecoveryActionKind { ClosePopup, Reload, Scroll, Wait };

struct RecoveryAction {
  RecoveryActionKind kind = RecoveryActionKind::ClosePopup;
  std::string direction;  // scroll only: "up" | "down"
  int ticks = 0;          // wait only
};

// Trigger fires on the current snapshot before a step; the fallback actions
// run at most max_firings times per execution.
struct RecoveryRule {
  Assertion trigger;
  std::vector<RecoveryAction> fallback;  // length <= 3
  int max_firings = 1;
};

// Arguments for a step action. Shape must match the action kind: Type uses
// text, Select uses option, Scroll uses direction+amount, Click takes none.
struct ActionArgs {
  std::string text;
  std::string option;
  std::string direction;
  int amount = 0;
};

struct Step {
  Selector selector;
  ActionKind action = ActionKind::Click;
  ActionArgs args;
  std::vector<Assertion> post_assertions;  // may be empty; executor auto-fills
};

struct SkillArtifact {
  std::string skill_name;
  std::string goal;
  std::vector<Assertion> preconditions;
  std::vector<Step> steps;
  std::vector<Assertion> postconditions;
  std::vector<RecoveryRule> recovery;
  std::vector<Assertion> terminate;
  std::uint64_t version = 0;  // repair generation counter; engine metadata
};

// ---------------------------------------------------------------------------
// Patches: one elementary edit per patch.
// ---------------------------------------------------------------------------

enum class PatchOp { SelReplace, PreInsert, PostInsert, RecoveryInsert, ArgCorrect };

enum class SiteKind {
  StepSelector,
  StepArgs,
  StepPost,
  ArtifactPre,
  ArtifactPost,
  ArtifactRecovery,
};

struct PatchSite {
  SiteKind kind = SiteKind::ArtifactPre;
  int step = 0;  // 1-based; 0 for artifact-level sites
};

using PatchPayload = std::variant<Selector, Assertion, RecoveryRule, ActionArgs>;

struct Patch {
  PatchOp op = PatchOp::PreInsert;
  PatchSite site;
  PatchPayload payload;
};

// ---------------------------------------------------------------------------
// Errors and violations
// ---------------------------------------------------------------------------

// Malformed input text (not JSON at all).
struct ParseError : std::runtime_error {
  ParseError(const std::string& msg, std::size_t pos)
      : std::runtime_error(msg), position(pos) {}
  std::size_t position;
};

// Structurally invalid artifact: names the offending field path.
struct SchemaError : std::runtime_error {
  SchemaError(const std::string& path_, const std::string& reason_)
      : std::runtime_error(path_ + ": " + reason_), path(path_), reason(reason_) {}
  std::string path;
  std::string reason;
};

// Patch cannot be applied: bad site, shape mismatch, duplicate insert, no-op.
struct PatchError : std::runtime_error {
  explicit PatchError(const std::string& msg) : std::runtime_error(msg) {}
};

struct Violation {
  std::string path;
  std::string reason;
};

// ---------------------------------------------------------------------------
// String tables
// ---------------------------------------------------------------------------

std::string to_string(ActionKind k);
std::string to_string(TextMode m);
std::string to_string(AssertionKind k);
std::string to_string(RecoveryActionKind k);
std::string to_string(PatchOp op);
std::string to_string(SiteKind k);

ActionKind action_kind_from_string(const std::string& s);
AssertionKind assertion_kind_from_string(const std::string& s);

// ---------------------------------------------------------------------------
// JSON encoding (canonical: sorted object keys, absent fields omitted)
// ---------------------------------------------------------------------------

json to_json(const Selector& sel);
json to_json(const Assertion& a);
json to_json(const RecoveryAction& a);
json to_json(const RecoveryRule& r);
json to_json(const ActionArgs& args, ActionKind kind);
json to_json(const Step& st);
json to_json(const SkillArtifact& s);
json to_json(const Patch& p);

Selector selector_from_json(const json& j, const std::string& path);
Assertion assertion_from_json(const json& j, const std::string& path);
RecoveryRule recovery_rule_from_json(const json& j, const std::string& path);
Patch patch_from_json(const json& j);

// Canonical comparison keys for components (byte equality == content equality).
std::string canonical_key(const Selector& sel);
std::string canonical_key(const Assertion& a);
std::string canonical_key(const RecoveryRule& r);
std::string canonical_key(const ActionArgs& args, ActionKind kind);

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

// Parses the external artifact format. Unknown fields are rejected; field
// order is irrelevant. Throws ParseError on malformed text and SchemaError
// on the first structural violation.
SkillArtifact parse_artifact(const std::string& text);

// Deterministic byte serialization: sorted keys, fixed field set, no
// insignificant whitespace. Includes version (it must round-trip).
std::string serialize_canonical(const SkillArtifact& s);

// Digest of the canonical form with version masked out; used for content
// identity (dedup, history records). Version is engine metadata and never
// participates in content equality.
std::string canonical_digest(const SkillArtifact& s);

// True iff canonical serializations match ignoring version.
bool content_equal(const SkillArtifact& a, const SkillArtifact& b);

// Empty list iff the artifact satisfies every schema invariant.
std::vector<Violation> validate_schema(const SkillArtifact& s);

// Number of elementary field-level differences: each differing selector,
// action, args, assertion, or recovery rule counts 1; each inserted/removed
// list element counts 1. Symmetric; zero iff content_equal.
int edit_distance(const SkillArtifact& a, const SkillArtifact& b);

// Returns a new artifact with exactly the one edit applied and version
// incremented. Throws PatchError on an invalid site, a payload/operator
// mismatch, a duplicate insert, or a no-op replacement.
SkillArtifact apply_patch(const SkillArtifact& s, const Patch& p);

}  // namespace skillfix

#endif
