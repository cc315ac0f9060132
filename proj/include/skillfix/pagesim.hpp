#ifndef SKILLFIX_PAGESIM_HPP
#define SKILLFIX_PAGESIM_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

namespace skillfix {

// ---------------------------------------------------------------------------
// Deterministic page simulator.
//
// Pages are element trees plus a modal stack. Time is a logical tick counter:
// every applied action advances it by one, and scheduled dynamics (popups,
// delayed renders) fire as ticks pass. Same template + seeds => identical
// run, byte for byte. No wall clock anywhere.
// ---------------------------------------------------------------------------

enum class Role {
  Button,
  Link,
  Textbox,
  Password,
  Checkbox,
  Select,
  Option,
  Menu,
  MenuItem,
  Dialog,
  Text,
  Container,
};

std::string to_string(Role r);
Role role_from_string(const std::string& s);

struct Element {
  std::string stable_id;  // unique within the page, stable across ticks
  Role role = Role::Container;
  std::string visible_text;
  std::map<std::string, std::string> attributes;  // stable attrs: name, type,
                                                  // maxlength, charset, ...
  std::string value;       // textbox content / select's chosen option
  bool selected = false;   // option elements
  bool visible = true;     // own flag; occlusion and viewport applied on top
  bool enabled = true;
  int row = -1;            // viewport row; -1 inherits the parent's row
  std::vector<Element> children;
};

// Read-only view of the environment at one instant. The tree here carries
// *effective* visibility (own flag, ancestor chain, viewport) so consumers
// never re-derive it. Modal dialogs render above the page and ignore scroll.
struct PageSnapshot {
  std::string url;
  Element root;
  std::vector<Element> modal_stack;
  int scroll_row = 0;
  int tick = 0;
};

// ---------------------------------------------------------------------------
// Dynamics: everything that happens without the agent asking for it.
// Scheduled ticks are offsets from page load so reload can re-arm them.
// ---------------------------------------------------------------------------

struct TimedReveal {
  int tick_offset = 0;
  std::vector<std::string> ids;
};

struct TimedPopup {
  int tick_offset = 0;
  Element dialog;
};

// Clicking the keyed element makes the target ids visible `delay` ticks later
// (0 = same tick). Stand-in for menus, accordions, lazy content.
struct ClickReveal {
  std::vector<std::string> target_ids;
  int delay = 0;
};

// Clicking the keyed element navigates, but only when every listed field
// currently holds the required value (a submit gate).
struct Navigation {
  std::string url;
  Element page;
  std::map<std::string, std::string> required_form;  // stable_id -> value
};

struct Dynamics {
  std::vector<TimedPopup> popups;
  std::vector<TimedReveal> reveals;
  std::map<std::string, ClickReveal> click_reveals;
  std::map<std::string, Navigation> navigations;
};

// ---------------------------------------------------------------------------
// Actions and events
// ---------------------------------------------------------------------------

enum class SimActionKind { Click, Type, Select, Scroll, ClosePopup, Reload, Wait };

std::string to_string(SimActionKind k);

struct SimAction {
  SimActionKind kind = SimActionKind::Click;
  std::string target_id;  // empty for page-level actions
  std::string text;       // type
  std::string option;     // select
  std::string direction;  // scroll: "up" | "down"
  int amount = 0;         // scroll rows / wait ticks
};

enum class EventKind {
  ActionOk,
  BlockedAction,   // cause: occluded_by_modal | disabled | invisible |
                   //        not_editable | no_modal
  NoSuchElement,
  RejectedInput,   // detail: max_length=N | charset=digits |
                   //         option_not_found;options=A|B|C
  Navigated,
  ModalOpened,
  ModalClosed,
  Revealed,
  Scrolled,
  Reloaded,
  Waited,
};

std::string to_string(EventKind k);

struct Event {
  EventKind kind = EventKind::ActionOk;
  std::string target_id;
  std::string cause;   // blocked actions
  std::string detail;  // rejected inputs, diagnostics
  int tick = 0;
};

nlohmann::json to_json(const Event& e);

// ---------------------------------------------------------------------------
// Environment state
// ---------------------------------------------------------------------------

struct EnvOverrides {
  bool popup_at_start = false;  // push the template's popup at tick 0
};

struct EnvState {
  std::string template_id;
  std::uint64_t content_seed = 0;
  std::uint64_t variation_seed = 0;

  std::string url;
  Element root;
  std::vector<Element> modal_stack;
  int tick = 0;
  int scroll_row = 0;
  int viewport_rows = 10;

  Dynamics dynamics;

  // Reload support: the page as loaded.
  std::string start_url;
  Element initial_root;
  int load_tick = 0;  // tick when the current page was (re)loaded

  // Reveals waiting to fire, keyed by absolute tick (schedule offsets plus
  // click-triggered delays both land here).
  std::vector<std::pair<int, std::vector<std::string>>> pending_reveals;
  std::vector<std::pair<int, Element>> pending_popups;

  std::vector<std::string> url_history;
  std::vector<Event> event_log;
};

struct EnvError : std::runtime_error {
  explicit EnvError(const std::string& msg) : std::runtime_error(msg) {}
};

// ---------------------------------------------------------------------------
// Template registry. Builders produce a fully initialized EnvState (page,
// dynamics, url) from the two seeds; the registry owner applies overrides
// and arms the schedules.
// ---------------------------------------------------------------------------

using TemplateBuilder = std::function<EnvState(std::uint64_t content_seed,
                                               std::uint64_t variation_seed)>;

void register_template(const std::string& id, TemplateBuilder builder);
bool has_template(const std::string& id);
std::vector<std::string> registered_templates();

// Builds the environment for a registered template. Throws EnvError for an
// unknown id. popup_at_start pushes the template's first scheduled popup (or
// a generic one) before any action runs.
EnvState init_env(const std::string& template_id, std::uint64_t content_seed,
                  std::uint64_t variation_seed, const EnvOverrides& overrides = {});

// Loads a static page description (url + element tree, optional schedules)
// from JSON text and registers it under the given id.
void register_template_from_json(const std::string& id, const std::string& text);

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

// Advances one tick and fires due schedules. Used for passive waiting
// (selector requery); does not count as an action anywhere.
std::vector<Event> advance_tick(EnvState& env);

// Applies one agent action: advances one tick (plus amount-1 extra for
// Wait), performs the action, then fires any schedules that came due.
// Returns the events of this call; they are also appended to env.event_log.
// While a modal is open, only targets inside the top modal and close_popup
// can change state; everything else (scroll and reload included) is blocked.
std::vector<Event> step_env(EnvState& env, const SimAction& action);

// Snapshot with effective visibility folded in.
PageSnapshot observe(const EnvState& env);

// Content digest of a snapshot: url, tree (with effective visibility),
// modal stack. Excludes the tick and the raw scroll offset, so time alone
// never reads as a state change and scrolling registers only when it
// actually changes what is visible.
std::string snapshot_hash(const PageSnapshot& snap);

nlohmann::json to_json(const Element& e);
nlohmann::json to_json(const PageSnapshot& snap);
Element element_from_json(const nlohmann::json& j, const std::string& path);

// Event log as JSONL, one event per line.
void write_event_log(const EnvState& env, std::ostream& out);

// Depth-first search helpers over a live tree (nullptr when absent).
Element* find_by_id(Element& root, const std::string& stable_id);
const Element* find_by_id(const Element& root, const std::string& stable_id);

}  // namespace skillfix

#endif
