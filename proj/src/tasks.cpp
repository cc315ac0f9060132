#include "skillfix/tasks.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdio>
#include <map>
#include <random>
#include <set>
#include <stdexcept>
#include <tuple>

#include "skillfix/localize.hpp"
#include "skillfix/patchgen.hpp"

namespace skillfix {

namespace {

// ---------------------------------------------------------------------------
// Seeding
//
// Content and variation draws come from separate streams so that one axis
// can never bleed into the other: same content seed => same labels and
// credentials under every variation seed, and vice versa.
// ---------------------------------------------------------------------------

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t hash_id(const std::string& id) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : id) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::mt19937_64 content_rng(const std::string& tid, std::uint64_t content_seed) {
  return std::mt19937_64(mix_seed(hash_id(tid), content_seed));
}

std::mt19937_64 variation_rng(const std::string& tid, std::uint64_t variation_seed) {
  return std::mt19937_64(mix_seed(hash_id(tid) ^ 0xa5a5a5a5a5a5a5a5ULL, variation_seed));
}

std::size_t draw(std::mt19937_64& rng, std::size_t n) { return rng() % n; }

template <typename T>
void seeded_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[rng() % i]);
  }
}

// First k of a seeded permutation of 0..n-1; index 0 doubles as "the" pick.
std::vector<std::size_t> pick_distinct(std::mt19937_64& rng, std::size_t n,
                                       std::size_t k) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  seeded_shuffle(idx, rng);
  idx.resize(k);
  return idx;
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

// ---------------------------------------------------------------------------
// Page and artifact construction helpers
// ---------------------------------------------------------------------------

Element node(std::string id, Role role, std::string text, int row) {
  Element e;
  e.stable_id = std::move(id);
  e.role = role;
  e.visible_text = std::move(text);
  e.row = row;
  return e;
}

Element page_of(const std::string& msg_id, const std::string& msg) {
  Element root = node(msg_id + "_root", Role::Container, "", 0);
  root.children.push_back(node(msg_id, Role::Text, msg, 0));
  return root;
}

Selector sel_role_text(const std::string& role, const std::string& text) {
  Selector s;
  s.role = role;
  s.text = TextMatch{TextMode::Equals, text};
  return s;
}

Selector sel_role(const std::string& role) {
  Selector s;
  s.role = role;
  return s;
}

Assertion a_url(const std::string& pattern) {
  Assertion a;
  a.kind = AssertionKind::UrlMatches;
  a.pattern = pattern;
  return a;
}

Assertion a_text(const std::string& pattern) {
  Assertion a;
  a.kind = AssertionKind::TextPresent;
  a.pattern = pattern;
  return a;
}

Assertion a_exists(Selector sel) {
  Assertion a;
  a.kind = AssertionKind::ElementExists;
  a.selector = std::move(sel);
  return a;
}

Assertion a_absent(Selector sel) {
  Assertion a;
  a.kind = AssertionKind::ElementAbsent;
  a.selector = std::move(sel);
  return a;
}

Assertion a_form(Selector sel, const std::string& value) {
  Assertion a;
  a.kind = AssertionKind::FormValue;
  a.selector = std::move(sel);
  a.pattern = value;
  return a;
}

Assertion a_option(Selector sel, const std::string& value) {
  Assertion a;
  a.kind = AssertionKind::OptionSelected;
  a.selector = std::move(sel);
  a.pattern = value;
  return a;
}

std::string base_url(const std::string& tid) {
  return "https://tasks.local/" + tid + "/start";
}

std::string sub_url(const std::string& tid, const std::string& leaf) {
  return "https://tasks.local/" + tid + "/" + leaf;
}

// Every gold skill checks it is on the right template page with no dialog in
// the way before acting.
std::vector<Assertion> standard_preconditions(const std::string& tid) {
  return {a_url(tid), a_absent(sel_role("dialog"))};
}

Step click_step(Selector sel, std::vector<Assertion> post) {
  Step st;
  st.selector = std::move(sel);
  st.action = ActionKind::Click;
  st.post_assertions = std::move(post);
  return st;
}

Step type_step(Selector sel, const std::string& text, std::vector<Assertion> post) {
  Step st;
  st.selector = std::move(sel);
  st.action = ActionKind::Type;
  st.args.text = text;
  st.post_assertions = std::move(post);
  return st;
}

Step select_step(Selector sel, const std::string& option,
                 std::vector<Assertion> post) {
  Step st;
  st.selector = std::move(sel);
  st.action = ActionKind::Select;
  st.args.option = option;
  st.post_assertions = std::move(post);
  return st;
}

// ---------------------------------------------------------------------------
// Word pools. Pairwise edit distance within each pool is at least 2, so a
// one-letter corruption is always strictly closest to the word it came from.
// ---------------------------------------------------------------------------

const std::array<const char*, 8> kVerbs = {"Submit",  "Confirm", "Apply",
                                           "Publish", "Archive", "Approve",
                                           "Export",  "Import"};
const std::array<const char*, 8> kNouns = {"Order",   "Report", "Form",
                                           "Draft",   "Invoice", "Ticket",
                                           "Record",  "File"};
const std::array<const char*, 6> kTopics = {"Pricing", "Documentation",
                                            "Careers", "Support",
                                            "Gallery", "Downloads"};
const std::array<const char*, 4> kPhrases = {"Looks good to me",
                                             "Please review the draft",
                                             "Ready for the next stage",
                                             "Needs a second pass"};
const std::array<const char*, 6> kUsers = {"admin",  "alex",   "morgan",
                                           "taylor", "jordan", "casey"};
const std::array<const char*, 6> kColors = {"Red",   "Grey",  "Blue",
                                            "Green", "Amber", "Violet"};
const std::array<const char*, 4> kMenuItems = {"Catalog", "Inventory",
                                               "Suppliers", "Shipments"};
const std::array<const char*, 3> kPromos = {"Special offer today",
                                            "Subscribe and save",
                                            "Rate your experience"};
const std::array<const char*, 4> kSections = {"Quarterly report",
                                              "Annual summary",
                                              "Budget overview", "Audit notes"};

const char kPasswordChars[] = "abcdefghjkmnpqrstuvwxyz23456789";
const char kCouponChars[] = "ABCDEFGHJKMNPQRSTUVWXYZ23456789";

// ---------------------------------------------------------------------------
// click_button: one of three labelled buttons finishes the task; the decoys
// share a word with the target and lead to a dead end.
// ---------------------------------------------------------------------------

struct ClickButtonContent {
  std::string label;
  std::string decoy_noun;  // shares the target's noun
  std::string decoy_verb;  // shares the target's verb
};

ClickButtonContent click_button_content(std::uint64_t seed) {
  auto rng = content_rng("click_button", seed);
  std::size_t vi = draw(rng, kVerbs.size());
  std::size_t ni = draw(rng, kNouns.size());
  std::size_t vj = (vi + 1 + draw(rng, kVerbs.size() - 1)) % kVerbs.size();
  std::size_t nj = (ni + 1 + draw(rng, kNouns.size() - 1)) % kNouns.size();
  ClickButtonContent c;
  c.label = std::string(kVerbs[vi]) + " " + kNouns[ni];
  c.decoy_noun = std::string(kVerbs[vj]) + " " + kNouns[ni];
  c.decoy_verb = std::string(kVerbs[vi]) + " " + kNouns[nj];
  return c;
}

EnvState click_button_env(std::uint64_t content_seed, std::uint64_t variation_seed) {
  ClickButtonContent c = click_button_content(content_seed);
  auto vrng = variation_rng("click_button", variation_seed);

  EnvState env;
  env.url = base_url("click_button");
  Element root = node("root", Role::Container, "", 0);
  root.children.push_back(node("title", Role::Text, "Pending actions", 0));

  std::vector<std::pair<std::string, std::string>> buttons = {
      {"btn_target", c.label},
      {"btn_decoy_a", c.decoy_noun},
      {"btn_decoy_b", c.decoy_verb},
  };
  seeded_shuffle(buttons, vrng);
  int row = 1;
  for (const auto& [id, label] : buttons) {
    root.children.push_back(node(id, Role::Button, label, row++));
  }
  env.root = std::move(root);

  Navigation done;
  done.url = sub_url("click_button", "done");
  done.page = page_of("done_msg", c.label + " completed");
  env.dynamics.navigations["btn_target"] = done;

  Navigation oops;
  oops.url = sub_url("click_button", "oops");
  oops.page = page_of("oops_msg", "Wrong button");
  env.dynamics.navigations["btn_decoy_a"] = oops;
  env.dynamics.navigations["btn_decoy_b"] = oops;
  return env;
}

std::pair<TaskSpec, SkillArtifact> click_button_task(std::uint64_t seed) {
  ClickButtonContent c = click_button_content(seed);

  TaskSpec spec;
  spec.template_id = "click_button";
  spec.goal_text = "Click the " + c.label + " button to finish the task";
  spec.success_predicate = {a_url("/done"), a_text(c.label + " completed")};

  SkillArtifact s;
  s.skill_name = "click_button_skill";
  s.goal = spec.goal_text;
  s.preconditions = standard_preconditions("click_button");
  s.steps = {click_step(sel_role_text("button", c.label), {a_url("/done")})};
  s.postconditions = {a_text("completed")};
  s.terminate = {a_url("/done")};
  s.version = 1;
  return {spec, s};
}

// ---------------------------------------------------------------------------
// click_link: three topic links, one of which opens the requested page.
// ---------------------------------------------------------------------------

struct ClickLinkContent {
  std::string topic;
  std::string decoy_a;
  std::string decoy_b;
};

ClickLinkContent click_link_content(std::uint64_t seed) {
  auto rng = content_rng("click_link", seed);
  auto picks = pick_distinct(rng, kTopics.size(), 3);
  return {kTopics[picks[0]], kTopics[picks[1]], kTopics[picks[2]]};
}

EnvState click_link_env(std::uint64_t content_seed, std::uint64_t variation_seed) {
  ClickLinkContent c = click_link_content(content_seed);
  auto vrng = variation_rng("click_link", variation_seed);

  EnvState env;
  env.url = base_url("click_link");
  Element root = node("root", Role::Container, "", 0);
  root.children.push_back(node("title", Role::Text, "Site directory", 0));

  std::vector<std::pair<std::string, std::string>> links = {
      {"lnk_target", c.topic},
      {"lnk_decoy_a", c.decoy_a},
      {"lnk_decoy_b", c.decoy_b},
  };
  seeded_shuffle(links, vrng);
  int row = 1;
  for (const auto& [id, label] : links) {
    root.children.push_back(node(id, Role::Link, label, row++));
  }
  env.root = std::move(root);

  Navigation dest;
  dest.url = sub_url("click_link", lower(c.topic));
  dest.page = page_of("page_msg", c.topic + " page");
  env.dynamics.navigations["lnk_target"] = dest;

  Navigation other;
  other.url = sub_url("click_link", "other");
  other.page = page_of("other_msg", "Elsewhere");
  env.dynamics.navigations["lnk_decoy_a"] = other;
  env.dynamics.navigations["lnk_decoy_b"] = other;
  return env;
}

std::pair<TaskSpec, SkillArtifact> click_link_task(std::uint64_t seed) {
  ClickLinkContent c = click_link_content(seed);

  TaskSpec spec;
  spec.template_id = "click_link";
  spec.goal_text = "Open the " + c.topic + " link to read more";
  spec.success_predicate = {a_url("/" + lower(c.topic)), a_text(c.topic + " page")};

  SkillArtifact s;
  s.skill_name = "click_link_skill";
  s.goal = spec.goal_text;
  s.preconditions = standard_preconditions("click_link");
  s.steps = {click_step(sel_role_text("link", c.topic), {a_url("/" + lower(c.topic))})};
  s.postconditions = {a_text("page")};
  s.terminate = {a_url("/" + lower(c.topic))};
  s.version = 1;
  return {spec, s};
}

// ---------------------------------------------------------------------------
// enter_text: type a fixed phrase into the Comments field, not the decoy.
// ---------------------------------------------------------------------------

std::string enter_text_phrase(std::uint64_t seed) {
  auto rng = content_rng("enter_text", seed);
  return kPhrases[draw(rng, kPhrases.size())];
}

EnvState enter_text_env(std::uint64_t content_seed, std::uint64_t variation_seed) {
  (void)enter_text_phrase(content_seed);  // phrase lives in the artifact only
  auto vrng = variation_rng("enter_text", variation_seed);

  EnvState env;
  env.url = base_url("enter_text");
  Element root = node("root", Role::Container, "", 0);
  root.children.push_back(node("title", Role::Text, "Feedback", 0));

  std::vector<std::pair<std::string, std::string>> fields = {
      {"field_comments", "Comments"},
      {"field_email", "Email"},
  };
  seeded_shuffle(fields, vrng);
  int row = 1;
  for (const auto& [id, label] : fields) {
    root.children.push_back(node(id, Role::Textbox, label, row++));
  }
  env.root = std::move(root);
  return env;
}

std::pair<TaskSpec, SkillArtifact> enter_text_task(std::uint64_t seed) {
  std::string phrase = enter_text_phrase(seed);
  Selector field = sel_role_text("textbox", "Comments");

  TaskSpec spec;
  spec.template_id = "enter_text";
  spec.goal_text = "Enter the comment " + phrase + " in the Comments field";
  spec.success_predicate = {a_form(field, phrase)};

  SkillArtifact s;
  s.skill_name = "enter_text_skill";
  s.goal = spec.goal_text;
  s.preconditions = standard_preconditions("enter_text");
  s.steps = {type_step(field, phrase, {a_form(field, phrase)})};
  s.postconditions = {a_form(field, phrase)};
  s.terminate = {a_form(field, phrase)};
  s.version = 1;
  return {spec, s};
}

// ---------------------------------------------------------------------------
// login: fill both credential fields and submit; the form gate only opens on
// an exact match, and the password field enforces its maxlength.
// ---------------------------------------------------------------------------

struct LoginContent {
  std::string username;
  std::string password;
  int max_len = 0;
};

LoginContent login_content(std::uint64_t seed) {
  auto rng = content_rng("login", seed);
  LoginContent c;
  c.username = std::string(kUsers[draw(rng, kUsers.size())]) +
               std::to_string(10 + static_cast<int>(draw(rng, 90)));
  c.max_len = 6 + static_cast<int>(draw(rng, 5));
  for (int i = 0; i < c.max_len; ++i) {
    c.password += kPasswordChars[draw(rng, sizeof(kPasswordChars) - 1)];
  }
  return c;
}

EnvState login_env(std::uint64_t content_seed, std::uint64_t variation_seed) {
  LoginContent c = login_content(content_seed);
  auto vrng = variation_rng("login", variation_seed);

  EnvState env;
  env.url = base_url("login");
  Element root = node("root", Role::Container, "", 0);
  root.children.push_back(node("title", Role::Text, "Account access", 0));

  Element user = node("field_user", Role::Textbox, "Username", 0);
  user.attributes["name"] = "username";
  Element pass = node("field_pass", Role::Textbox, "Password", 0);
  pass.attributes["type"] = "password";
  pass.attributes["maxlength"] = std::to_string(c.max_len);

  std::vector<Element> fields = {std::move(user), std::move(pass)};
  seeded_shuffle(fields, vrng);
  int row = 1;
  for (auto& f : fields) {
    f.row = row++;
    root.children.push_back(std::move(f));
  }
  root.children.push_back(node("btn_signin", Role::Button, "Sign in", row));
  env.root = std::move(root);

  Navigation welcome;
  welcome.url = sub_url("login", "welcome");
  welcome.page = page_of("welcome_msg", "Welcome " + c.username);
  welcome.required_form = {{"field_user", c.username}, {"field_pass", c.password}};
  env.dynamics.navigations["btn_signin"] = welcome;
  return env;
}

std::pair<TaskSpec, SkillArtifact> login_task(std::uint64_t seed) {
  LoginContent c = login_content(seed);
  Selector user_sel = sel_role_text("textbox", "Username");
  Selector pass_sel = sel_role_text("textbox", "Password");

  TaskSpec spec;
  spec.template_id = "login";
  spec.goal_text = "Sign in as " + c.username +
                   ": fill in the username and password, then press Sign in";
  spec.success_predicate = {a_url("/welcome"), a_text(c.username)};

  SkillArtifact s;
  s.skill_name = "login_skill";
  s.goal = spec.goal_text;
  s.preconditions = standard_preconditions("login");
  s.steps = {
      type_step(user_sel, c.username, {a_form(user_sel, c.username)}),
      type_step(pass_sel, c.password, {a_form(pass_sel, c.password)}),
      click_step(sel_role_text("button", "Sign in"), {a_url("/welcome")}),
  };
  s.postconditions = {a_text("Welcome")};
  s.terminate = {a_url("/welcome")};
  s.version = 1;
  return {spec, s};
}

// ---------------------------------------------------------------------------
// select_dropdown: pick the requested option from a four-entry dropdown.
// ---------------------------------------------------------------------------

struct SelectContent {
  std::vector<std::string> options;  // page order before variation shuffle
  std::string choice;
};

SelectContent select_dropdown_content(std::uint64_t seed) {
  auto rng = content_rng("select_dropdown", seed);
  auto picks = pick_distinct(rng, kColors.size(), 4);
  SelectContent c;
  for (std::size_t i : picks) c.options.push_back(kColors[i]);
  c.choice = c.options[draw(rng, c.options.size())];
  return c;
}

EnvState select_dropdown_env(std::uint64_t content_seed,
                             std::uint64_t variation_seed) {
  SelectContent c = select_dropdown_content(content_seed);
  auto vrng = variation_rng("select_dropdown", variation_seed);
  seeded_shuffle(c.options, vrng);

  EnvState env;
  env.url = base_url("select_dropdown");
  Element root = node("root", Role::Container, "", 0);
  root.children.push_back(node("title", Role::Text, "Preferences", 0));

  Element sel = node("sel_color", Role::Select, "Color", 1);
  for (const std::string& opt : c.options) {
    sel.children.push_back(node("opt_" + lower(opt), Role::Option, opt, -1));
  }
  root.children.push_back(std::move(sel));
  env.root = std::move(root);
  return env;
}

std::pair<TaskSpec, SkillArtifact> select_dropdown_task(std::uint64_t seed) {
  SelectContent c = select_dropdown_content(seed);
  Selector dropdown = sel_role_text("select", "Color");

  TaskSpec spec;
  spec.template_id = "select_dropdown";
  spec.goal_text = "Choose the " + c.choice + " color option";
  spec.success_predicate = {a_option(dropdown, c.choice)};

  SkillArtifact s;
  s.skill_name = "select_dropdown_skill";
  s.goal = spec.goal_text;
  s.preconditions = standard_preconditions("select_dropdown");
  s.steps = {select_step(dropdown, c.choice, {a_option(dropdown, c.choice)})};
  s.postconditions = {a_option(dropdown, c.choice)};
  s.terminate = {a_option(dropdown, c.choice)};
  s.version = 1;
  return {spec, s};
}

// ---------------------------------------------------------------------------
// click_menu_nested: open a menu, then click an entry that only renders a
// tick or two after the menu click.
// ---------------------------------------------------------------------------

std::string menu_item_choice(std::uint64_t seed) {
  auto rng = content_rng("click_menu_nested", seed);
  return kMenuItems[draw(rng, kMenuItems.size())];
}

EnvState click_menu_nested_env(std::uint64_t content_seed,
                               std::uint64_t variation_seed) {
  std::string choice = menu_item_choice(content_seed);
  auto vrng = variation_rng("click_menu_nested", variation_seed);

  EnvState env;
  env.url = base_url("click_menu_nested");
  Element root = node("root", Role::Container, "", 0);
  root.children.push_back(node("title", Role::Text, "Workspace", 0));
  root.children.push_back(node("menu_products", Role::Menu, "Products", 1));

  std::vector<std::string> items(kMenuItems.begin(), kMenuItems.end());
  seeded_shuffle(items, vrng);
  Element submenu = node("submenu", Role::Container, "", 2);
  submenu.visible = false;
  for (const std::string& item : items) {
    submenu.children.push_back(node("item_" + lower(item), Role::MenuItem, item, -1));
  }
  root.children.push_back(std::move(submenu));
  env.root = std::move(root);

  env.dynamics.click_reveals["menu_products"] = {
      {"submenu"}, 1 + static_cast<int>(draw(vrng, 2))};

  Navigation dest;
  dest.url = sub_url("click_menu_nested", lower(choice));
  dest.page = page_of("dest_msg", choice + " catalog");
  Navigation other;
  other.url = sub_url("click_menu_nested", "other");
  other.page = page_of("other_msg", "Elsewhere");
  for (const char* item : kMenuItems) {
    const std::string id = "item_" + lower(item);
    env.dynamics.navigations[id] = (item == choice) ? dest : other;
  }
  return env;
}

std::pair<TaskSpec, SkillArtifact> click_menu_nested_task(std::uint64_t seed) {
  std::string choice = menu_item_choice(seed);
  Selector menu_sel = sel_role_text("menu", "Products");

  TaskSpec spec;
  spec.template_id = "click_menu_nested";
  spec.goal_text = "Open the Products menu and choose " + choice;
  spec.success_predicate = {a_url("/" + lower(choice)), a_text(choice + " catalog")};

  SkillArtifact s;
  s.skill_name = "click_menu_nested_skill";
  s.goal = spec.goal_text;
  s.preconditions = standard_preconditions("click_menu_nested");
  s.steps = {
      click_step(menu_sel, {a_exists(menu_sel)}),
      click_step(sel_role_text("menuitem", choice), {a_url("/" + lower(choice))}),
  };
  s.postconditions = {a_text("catalog")};
  s.terminate = {a_url("/" + lower(choice))};
  s.version = 1;
  return {spec, s};
}

// ---------------------------------------------------------------------------
// popup_interrupt: loading the items also triggers one or two promo dialogs
// that must be dismissed before checkout.
// ---------------------------------------------------------------------------

std::string promo_text(std::uint64_t seed) {
  auto rng = content_rng("popup_interrupt", seed);
  return kPromos[draw(rng, kPromos.size())];
}

EnvState popup_interrupt_env(std::uint64_t content_seed,
                             std::uint64_t variation_seed) {
  std::string promo = promo_text(content_seed);
  auto vrng = variation_rng("popup_interrupt", variation_seed);

  EnvState env;
  env.url = base_url("popup_interrupt");
  Element root = node("root", Role::Container, "", 0);
  root.children.push_back(node("title", Role::Text, "Store", 0));
  root.children.push_back(node("btn_load", Role::Button, "Load items", 1));

  Element box = node("box_checkout", Role::Container, "", 2);
  box.visible = false;
  box.children.push_back(node("btn_checkout", Role::Button, "Checkout", -1));
  root.children.push_back(std::move(box));
  env.root = std::move(root);

  env.dynamics.click_reveals["btn_load"] = {{"box_checkout"}, 0};

  const int popup_count = 1 + static_cast<int>(draw(vrng, 2));
  for (int k = 1; k <= popup_count; ++k) {
    const std::string id = "dlg_promo_" + std::to_string(k);
    Element dlg = node(id, Role::Dialog, "", 0);
    dlg.children.push_back(node(id + "_msg", Role::Text, promo, -1));
    Element close = node(id + "_close", Role::Button, "Dismiss", -1);
    close.attributes["action"] = "close";
    dlg.children.push_back(std::move(close));
    env.dynamics.popups.push_back({k, std::move(dlg)});
  }

  Navigation done;
  done.url = sub_url("popup_interrupt", "done");
  done.page = page_of("placed_msg", "Order placed");
  env.dynamics.navigations["btn_checkout"] = done;
  return env;
}

std::pair<TaskSpec, SkillArtifact> popup_interrupt_task(std::uint64_t seed) {
  (void)promo_text(seed);

  TaskSpec spec;
  spec.template_id = "popup_interrupt";
  spec.goal_text = "Load the items and press Checkout to place the order";
  spec.success_predicate = {a_url("/done"), a_text("Order placed")};

  RecoveryRule dismiss;
  dismiss.trigger = a_exists(sel_role("dialog"));
  dismiss.fallback = {RecoveryAction{RecoveryActionKind::ClosePopup, "", 0}};
  dismiss.max_firings = 2;

  SkillArtifact s;
  s.skill_name = "popup_interrupt_skill";
  s.goal = spec.goal_text;
  s.preconditions = standard_preconditions("popup_interrupt");
  s.steps = {
      click_step(sel_role_text("button", "Load items"),
                 {a_exists(sel_role_text("button", "Checkout"))}),
      click_step(sel_role_text("button", "Checkout"), {a_url("/done")}),
  };
  s.postconditions = {a_text("Order placed")};
  s.recovery = {dismiss};
  s.terminate = {a_url("/done")};
  s.version = 1;
  return {spec, s};
}

// ---------------------------------------------------------------------------
// delayed_render: the target link appears one to three ticks after load.
// ---------------------------------------------------------------------------

EnvState delayed_render_env(std::uint64_t content_seed,
                            std::uint64_t variation_seed) {
  (void)content_seed;
  auto vrng = variation_rng("delayed_render", variation_seed);

  EnvState env;
  env.url = base_url("delayed_render");
  Element root = node("root", Role::Container, "", 0);
  root.children.push_back(node("title", Role::Text, "Dashboard", 0));
  Element link = node("lnk_results", Role::Link, "View results", 1);
  link.visible = false;
  root.children.push_back(std::move(link));
  root.children.push_back(node("note", Role::Text, "Loading recent activity", 2));
  env.root = std::move(root);

  env.dynamics.reveals.push_back({1 + static_cast<int>(draw(vrng, 3)),
                                  {"lnk_results"}});

  Navigation dest;
  dest.url = sub_url("delayed_render", "results");
  dest.page = page_of("results_msg", "Results ready");
  env.dynamics.navigations["lnk_results"] = dest;
  return env;
}

std::pair<TaskSpec, SkillArtifact> delayed_render_task(std::uint64_t seed) {
  (void)seed;

  TaskSpec spec;
  spec.template_id = "delayed_render";
  spec.goal_text = "Open the View results link once it appears";
  spec.success_predicate = {a_url("/results"), a_text("Results ready")};

  SkillArtifact s;
  s.skill_name = "delayed_render_skill";
  s.goal = spec.goal_text;
  s.preconditions = standard_preconditions("delayed_render");
  s.steps = {click_step(sel_role_text("link", "View results"), {a_url("/results")})};
  s.postconditions = {a_text("ready")};
  s.terminate = {a_url("/results")};
  s.version = 1;
  return {spec, s};
}

// ---------------------------------------------------------------------------
// collapsible_section: expand a section header, then follow the link inside;
// the body renders with a delay like a real accordion.
// ---------------------------------------------------------------------------

std::string section_header(std::uint64_t seed) {
  auto rng = content_rng("collapsible_section", seed);
  return kSections[draw(rng, kSections.size())];
}

EnvState collapsible_section_env(std::uint64_t content_seed,
                                 std::uint64_t variation_seed) {
  std::string header = section_header(content_seed);
  auto vrng = variation_rng("collapsible_section", variation_seed);

  EnvState env;
  env.url = base_url("collapsible_section");
  Element root = node("root", Role::Container, "", 0);
  root.children.push_back(node("title", Role::Text, "Archive", 0));
  root.children.push_back(node("hdr_main", Role::Button, header, 1));

  Element body = node("body_main", Role::Container, "", 2);
  body.visible = false;
  body.children.push_back(node("lnk_open", Role::Link, "Open report", -1));
  root.children.push_back(std::move(body));
  env.root = std::move(root);

  env.dynamics.click_reveals["hdr_main"] = {
      {"body_main"}, 1 + static_cast<int>(draw(vrng, 3))};

  Navigation dest;
  dest.url = sub_url("collapsible_section", "report");
  dest.page = page_of("report_msg", "Report ready");
  env.dynamics.navigations["lnk_open"] = dest;
  return env;
}

std::pair<TaskSpec, SkillArtifact> collapsible_section_task(std::uint64_t seed) {
  std::string header = section_header(seed);
  Selector hdr_sel = sel_role_text("button", header);

  TaskSpec spec;
  spec.template_id = "collapsible_section";
  spec.goal_text = "Expand the " + header + " section and open the report";
  spec.success_predicate = {a_url("/report"), a_text("Report ready")};

  SkillArtifact s;
  s.skill_name = "collapsible_section_skill";
  s.goal = spec.goal_text;
  s.preconditions = standard_preconditions("collapsible_section");
  s.steps = {
      click_step(hdr_sel, {a_exists(hdr_sel)}),
      click_step(sel_role_text("link", "Open report"), {a_url("/report")}),
  };
  s.postconditions = {a_text("ready")};
  s.terminate = {a_url("/report")};
  s.version = 1;
  return {spec, s};
}

// ---------------------------------------------------------------------------
// constrained_input: the field enforces either a maxlength or a digits-only
// charset, so a wrong argument is rejected rather than silently accepted.
// ---------------------------------------------------------------------------

struct ConstrainedContent {
  bool digits = false;
  std::string label;
  std::string code;
  int max_len = 0;  // maxlength flavor only
};

ConstrainedContent constrained_input_content(std::uint64_t seed) {
  auto rng = content_rng("constrained_input", seed);
  ConstrainedContent c;
  c.digits = draw(rng, 2) == 1;
  if (c.digits) {
    c.label = "Verification code";
    for (int i = 0; i < 6; ++i) {
      c.code += static_cast<char>('0' + draw(rng, 10));
    }
  } else {
    c.label = "Coupon code";
    c.max_len = 4 + static_cast<int>(draw(rng, 5));
    for (int i = 0; i < c.max_len; ++i) {
      c.code += kCouponChars[draw(rng, sizeof(kCouponChars) - 1)];
    }
  }
  return c;
}

EnvState constrained_input_env(std::uint64_t content_seed,
                               std::uint64_t variation_seed) {
  ConstrainedContent c = constrained_input_content(content_seed);
  auto vrng = variation_rng("constrained_input", variation_seed);

  EnvState env;
  env.url = base_url("constrained_input");
  Element root = node("root", Role::Container, "", 0);
  root.children.push_back(node("title", Role::Text, "Redeem", 0));

  Element field = node("field_code", Role::Textbox, c.label, 0);
  if (c.digits) {
    field.attributes["charset"] = "digits";
  } else {
    field.attributes["maxlength"] = std::to_string(c.max_len);
  }
  Element note = node("note", Role::Text, "Enter your code exactly as printed", 0);

  std::vector<Element> rows = {std::move(field), std::move(note)};
  seeded_shuffle(rows, vrng);
  int row = 1;
  for (auto& e : rows) {
    e.row = row++;
    root.children.push_back(std::move(e));
  }
  env.root = std::move(root);
  return env;
}

std::pair<TaskSpec, SkillArtifact> constrained_input_task(std::uint64_t seed) {
  ConstrainedContent c = constrained_input_content(seed);
  Selector field = sel_role_text("textbox", c.label);

  TaskSpec spec;
  spec.template_id = "constrained_input";
  spec.goal_text = "Enter the code " + c.code + " in the " + c.label + " field";
  spec.success_predicate = {a_form(field, c.code)};

  SkillArtifact s;
  s.skill_name = "constrained_input_skill";
  s.goal = spec.goal_text;
  s.preconditions = standard_preconditions("constrained_input");
  s.steps = {type_step(field, c.code, {a_form(field, c.code)})};
  s.postconditions = {a_form(field, c.code)};
  s.terminate = {a_form(field, c.code)};
  s.version = 1;
  return {spec, s};
}

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

using TaskBuilder = std::pair<TaskSpec, SkillArtifact> (*)(std::uint64_t);

struct TemplateEntry {
  const char* id;
  TemplateBuilder env;
  TaskBuilder task;
};

const std::vector<TemplateEntry>& template_table() {
  static const std::vector<TemplateEntry> table = {
      {"click_button", click_button_env, click_button_task},
      {"click_link", click_link_env, click_link_task},
      {"enter_text", enter_text_env, enter_text_task},
      {"login", login_env, login_task},
      {"select_dropdown", select_dropdown_env, select_dropdown_task},
      {"click_menu_nested", click_menu_nested_env, click_menu_nested_task},
      {"popup_interrupt", popup_interrupt_env, popup_interrupt_task},
      {"delayed_render", delayed_render_env, delayed_render_task},
      {"collapsible_section", collapsible_section_env, collapsible_section_task},
      {"constrained_input", constrained_input_env, constrained_input_task},
  };
  return table;
}

}  // namespace

void ensure_builtin_templates() {
  static const bool once = [] {
    for (const auto& entry : template_table()) {
      if (!has_template(entry.id)) {
        register_template(entry.id, entry.env);
      }
    }
    return true;
  }();
  (void)once;
}

const std::vector<std::string>& builtin_template_ids() {
  static const std::vector<std::string> ids = [] {
    std::vector<std::string> out;
    for (const auto& entry : template_table()) out.emplace_back(entry.id);
    return out;
  }();
  return ids;
}

std::pair<TaskInstance, SkillArtifact> generate_task(const std::string& template_id,
                                                     std::uint64_t seed) {
  ensure_builtin_templates();
  for (const auto& entry : template_table()) {
    if (template_id != entry.id) continue;
    auto [spec, gold] = entry.task(seed);
    spec.repair_seeds = {0, 1, 2, 3, 4};
    spec.eval_seeds = {5, 6, 7, 8, 9};
    TaskInstance inst;
    inst.spec = std::move(spec);
    inst.content_seed = seed;
    inst.variation_seed = inst.spec.repair_seeds.front();
    return {std::move(inst), std::move(gold)};
  }
  throw EnvError("unknown task template '" + template_id + "'");
}

// ---------------------------------------------------------------------------
// Corruptions
// ---------------------------------------------------------------------------

std::string to_string(CorruptionKind k) {
  switch (k) {
    case CorruptionKind::CorruptSelectorText: return "corrupt_selector_text";
    case CorruptionKind::DropPrecondition: return "drop_precondition";
    case CorruptionKind::DropPostAssertion: return "drop_post_assertion";
    case CorruptionKind::WrongArg: return "wrong_arg";
    case CorruptionKind::DropRecovery: return "drop_recovery";
    case CorruptionKind::PrematureTerminate: return "premature_terminate";
  }
  return "?";
}

namespace {

// Damages one selector needle while keeping enough of it to recognize the
// original: one character dropped, one punctuation mark appended.
std::string damage_needle(const std::string& needle, std::mt19937_64& rng) {
  std::vector<std::size_t> alnum;
  for (std::size_t i = 0; i < needle.size(); ++i) {
    if (std::isalnum(static_cast<unsigned char>(needle[i]))) alnum.push_back(i);
  }
  std::string out = needle;
  if (!alnum.empty()) {
    out.erase(alnum[draw(rng, alnum.size())], 1);
  }
  static const char punct[] = "!?.";
  out += punct[draw(rng, 3)];
  return out;
}

void apply_corruption(SkillArtifact& s, CorruptionKind kind, std::mt19937_64& rng,
                      std::vector<std::string>& notices) {
  switch (kind) {
    case CorruptionKind::CorruptSelectorText: {
      std::vector<std::size_t> steps;
      for (std::size_t i = 0; i < s.steps.size(); ++i) {
        const auto& text = s.steps[i].selector.text;
        if (text && text->needle.size() >= 3) steps.push_back(i);
      }
      if (steps.empty()) {
        notices.push_back("corrupt_selector_text: no text selector; skipped");
        return;
      }
      auto& sel = s.steps[steps[draw(rng, steps.size())]].selector;
      sel.text->needle = damage_needle(sel.text->needle, rng);
      return;
    }
    case CorruptionKind::DropPrecondition: {
      for (std::size_t i = 0; i < s.preconditions.size(); ++i) {
        if (s.preconditions[i].kind == AssertionKind::ElementAbsent) {
          s.preconditions.erase(s.preconditions.begin() +
                                static_cast<std::ptrdiff_t>(i));
          return;
        }
      }
      notices.push_back("drop_precondition: no element_absent check; skipped");
      return;
    }
    case CorruptionKind::DropPostAssertion: {
      std::vector<std::size_t> steps;
      for (std::size_t i = 0; i < s.steps.size(); ++i) {
        const auto& post = s.steps[i].post_assertions;
        if (s.steps[i].action != ActionKind::Click || post.empty()) continue;
        bool all_exists = true;
        for (const auto& a : post) {
          if (a.kind != AssertionKind::ElementExists) all_exists = false;
        }
        if (all_exists) steps.push_back(i);
      }
      if (steps.empty()) {
        notices.push_back(
            "drop_post_assertion: no click step with existence-only checks; "
            "skipped");
        return;
      }
      s.steps[steps[draw(rng, steps.size())]].post_assertions.clear();
      return;
    }
    case CorruptionKind::WrongArg: {
      std::vector<std::size_t> selects;
      std::vector<std::size_t> types;
      for (std::size_t i = 0; i < s.steps.size(); ++i) {
        if (s.steps[i].action == ActionKind::Select) selects.push_back(i);
        if (s.steps[i].action == ActionKind::Type) types.push_back(i);
      }
      if (!selects.empty()) {
        // Swap one letter for a character no pool word contains, so the
        // damaged option stays strictly closest to the real one.
        auto& opt = s.steps[selects[draw(rng, selects.size())]].args.option;
        static const char rare[] = "xqz";
        const std::size_t pos = draw(rng, opt.size());
        char c = rare[draw(rng, 3)];
        if (c == opt[pos]) c = rare[(draw(rng, 2) + 1) % 3];
        opt[pos] = c;
        return;
      }
      if (!types.empty()) {
        // The last typed value is the one a constrained field would reject.
        auto& text = s.steps[types.back()].args.text;
        bool digits_only = !text.empty();
        for (char c : text) {
          if (!std::isdigit(static_cast<unsigned char>(c))) digits_only = false;
        }
        if (digits_only) {
          text.insert(draw(rng, text.size() + 1), 1, 'x');
        } else {
          text += text;
        }
        return;
      }
      notices.push_back("wrong_arg: no type or select step; skipped");
      return;
    }
    case CorruptionKind::DropRecovery: {
      if (s.recovery.empty()) {
        notices.push_back("drop_recovery: no recovery rules; skipped");
        return;
      }
      s.recovery.clear();
      return;
    }
    case CorruptionKind::PrematureTerminate: {
      if (s.steps.size() < 2) {
        notices.push_back("premature_terminate: single-step skill; skipped");
        return;
      }
      s.steps.pop_back();
      Assertion weak = a_exists(s.steps.front().selector);
      s.postconditions = {weak};
      s.terminate = {weak};
      return;
    }
  }
}

}  // namespace

CorruptionResult corrupt_draft(const SkillArtifact& gold,
                               const std::vector<CorruptionKind>& kinds,
                               std::uint64_t seed) {
  if (kinds.empty()) {
    throw std::invalid_argument("corrupt_draft: empty corruption list");
  }
  CorruptionResult out;
  out.draft = gold;
  std::mt19937_64 rng(mix_seed(seed, 0xc0bb1e5ULL));
  for (CorruptionKind kind : kinds) {
    apply_corruption(out.draft, kind, rng, out.notices);
  }
  return out;
}

std::vector<std::pair<CorruptionKind, std::string>> corruption_pairings() {
  std::vector<std::pair<CorruptionKind, std::string>> rows;
  for (const std::string& tid : builtin_template_ids()) {
    rows.emplace_back(CorruptionKind::CorruptSelectorText, tid);
  }
  for (const std::string& tid : builtin_template_ids()) {
    if (tid != "popup_interrupt") {
      rows.emplace_back(CorruptionKind::DropPrecondition, tid);
    }
  }
  rows.emplace_back(CorruptionKind::DropPostAssertion, "click_menu_nested");
  rows.emplace_back(CorruptionKind::DropPostAssertion, "collapsible_section");
  rows.emplace_back(CorruptionKind::WrongArg, "login");
  rows.emplace_back(CorruptionKind::WrongArg, "select_dropdown");
  rows.emplace_back(CorruptionKind::WrongArg, "constrained_input");
  rows.emplace_back(CorruptionKind::DropRecovery, "popup_interrupt");
  rows.emplace_back(CorruptionKind::PrematureTerminate, "login");
  rows.emplace_back(CorruptionKind::PrematureTerminate, "click_menu_nested");
  rows.emplace_back(CorruptionKind::PrematureTerminate, "popup_interrupt");
  rows.emplace_back(CorruptionKind::PrematureTerminate, "collapsible_section");
  return rows;
}

// ---------------------------------------------------------------------------
// Scripted no-skill baseline
// ---------------------------------------------------------------------------

namespace {

bool predicate_holds(const std::vector<Assertion>& predicate,
                     const PageSnapshot& initial, const PageSnapshot& now) {
  if (predicate.empty()) return false;
  for (const Assertion& a : predicate) {
    if (!check_assertion(a, initial, now).first) return false;
  }
  return true;
}

void collect_interactable(const Element& e, std::vector<const Element*>& out) {
  if (e.visible && e.enabled) {
    switch (e.role) {
      case Role::Button:
      case Role::Link:
      case Role::Checkbox:
      case Role::Menu:
      case Role::MenuItem:
      case Role::Select:
      case Role::Textbox:
      case Role::Password:
        out.push_back(&e);
        break;
      default:
        break;
    }
  }
  for (const Element& c : e.children) collect_interactable(c, out);
}

}  // namespace

std::pair<bool, int> run_no_skill(const TaskInstance& inst, std::uint64_t seed,
                                  int max_actions) {
  ensure_builtin_templates();
  EnvState env = make_env(inst);
  std::mt19937_64 rng(mix_seed(seed, 0x5eed5eedULL));

  const PageSnapshot initial = observe(env);
  if (predicate_holds(inst.spec.success_predicate, initial, initial)) {
    return {true, 0};
  }

  int used = 0;
  while (used < max_actions) {
    PageSnapshot snap = observe(env);

    // With a dialog up only its own controls do anything, so aim there.
    std::vector<const Element*> targets;
    if (!snap.modal_stack.empty()) {
      collect_interactable(snap.modal_stack.back(), targets);
    } else {
      collect_interactable(snap.root, targets);
    }

    SimAction act;
    if (targets.empty()) {
      act.kind = SimActionKind::Wait;
      act.amount = 1;
    } else {
      const Element* e = targets[draw(rng, targets.size())];
      act.target_id = e->stable_id;
      switch (e->role) {
        case Role::Textbox:
        case Role::Password:
          act.kind = SimActionKind::Type;
          act.text = "test" + std::to_string(draw(rng, 100));
          break;
        case Role::Select: {
          std::vector<const Element*> opts;
          for (const Element& c : e->children) {
            if (c.role == Role::Option) opts.push_back(&c);
          }
          if (opts.empty()) {
            act.kind = SimActionKind::Click;
          } else {
            act.kind = SimActionKind::Select;
            act.option = opts[draw(rng, opts.size())]->visible_text;
          }
          break;
        }
        default:
          act.kind = SimActionKind::Click;
          break;
      }
    }

    step_env(env, act);
    ++used;
    if (predicate_holds(inst.spec.success_predicate, initial, observe(env))) {
      return {true, used};
    }
  }
  return {false, used};
}

// ---------------------------------------------------------------------------
// Metrics formatting
// ---------------------------------------------------------------------------

namespace {

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace

std::string to_csv(const MetricsReport& report) {
  std::string out = "# metrics v1\n";
  out += "method,template,corruption,success_pct,avg_steps,avg_cost\n";
  for (const MetricsRow& r : report.rows) {
    out += r.method + "," + r.template_id + "," + r.corruption + "," +
           fmt2(r.success_pct) + "," + fmt2(r.avg_steps) + "," +
           fmt2(r.avg_cost) + "\n";
  }
  return out;
}

std::string to_text(const MetricsReport& report) {
  static const std::array<const char*, 6> header = {
      "method", "template", "corruption", "success%", "steps", "cost"};
  std::vector<std::array<std::string, 6>> cells;
  for (const MetricsRow& r : report.rows) {
    cells.push_back({r.method, r.template_id, r.corruption, fmt2(r.success_pct),
                     fmt2(r.avg_steps), fmt2(r.avg_cost)});
  }

  std::array<std::size_t, 6> width{};
  for (std::size_t i = 0; i < 6; ++i) width[i] = std::string(header[i]).size();
  for (const auto& row : cells) {
    for (std::size_t i = 0; i < 6; ++i) width[i] = std::max(width[i], row[i].size());
  }

  auto pad = [&](const std::string& s, std::size_t i) {
    return s + std::string(width[i] - s.size(), ' ');
  };

  std::string out;
  for (std::size_t i = 0; i < 6; ++i) {
    out += pad(header[i], i) + (i + 1 < 6 ? "  " : "\n");
  }
  for (const auto& row : cells) {
    for (std::size_t i = 0; i < 6; ++i) {
      out += pad(row[i], i) + (i + 1 < 6 ? "  " : "\n");
    }
  }

  // Per-method totals, weighted by episode count.
  struct Total {
    int episodes = 0;
    int successes = 0;
    double steps = 0.0;
    double cost = 0.0;
  };
  std::map<std::string, Total> totals;
  for (const MetricsRow& r : report.rows) {
    Total& t = totals[r.method];
    t.episodes += r.episodes;
    t.successes += r.successes;
    t.steps += r.avg_steps * r.episodes;
    t.cost += r.avg_cost * r.episodes;
  }
  out += "\ntotals by method\n";
  for (const auto& [method, t] : totals) {
    const double n = t.episodes > 0 ? static_cast<double>(t.episodes) : 1.0;
    out += "  " + method + ": success% " + fmt2(100.0 * t.successes / n) +
           "  steps " + fmt2(t.steps / n) + "  cost " + fmt2(t.cost / n) +
           "  episodes " + std::to_string(t.episodes) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation suite
// ---------------------------------------------------------------------------

namespace {

const std::vector<std::string>& all_method_names() {
  static const std::vector<std::string> names = {
      "no_skill",      "draft_no_repair",   "full",
      "no_localization", "unconstrained",   "text_only_rewrite"};
  return names;
}

struct EpisodeStats {
  bool success = false;
  int steps = 0;
  int cost = 0;
};

EpisodeStats run_episode(const SkillArtifact& s, const TaskInstance& inst) {
  EnvState env = make_env(inst);
  auto [trace, verdict] = execute_artifact(s, env, default_budgets(s));
  EpisodeStats st;
  st.success = verdict.success && final_verify(inst.spec, trace);
  for (const StepRecord& r : trace.records) {
    if (r.action_taken.has_value()) ++st.steps;
  }
  st.cost = trace.total_actions;
  return st;
}

struct RowAccumulator {
  int episodes = 0;
  int successes = 0;
  double steps = 0.0;
  double cost = 0.0;
};

}  // namespace

MetricsReport eval_suite(const SuiteConfig& cfg) {
  ensure_builtin_templates();
  std::vector<std::string> methods =
      cfg.methods.empty() ? all_method_names() : cfg.methods;
  for (const std::string& m : methods) {
    const auto& known = all_method_names();
    if (std::find(known.begin(), known.end(), m) == known.end()) {
      throw std::invalid_argument("eval_suite: unknown method '" + m + "'");
    }
  }
  for (const std::string& t : cfg.templates) {
    const auto& known = builtin_template_ids();
    if (std::find(known.begin(), known.end(), t) == known.end()) {
      throw std::invalid_argument("eval_suite: unknown template '" + t + "'");
    }
  }
  if (cfg.content_seeds.empty()) {
    throw std::invalid_argument("eval_suite: no content seeds");
  }

  std::map<std::tuple<std::string, std::string, std::string>, RowAccumulator> acc;

  for (const auto& [kind, tid] : corruption_pairings()) {
    if (!cfg.templates.empty() &&
        std::find(cfg.templates.begin(), cfg.templates.end(), tid) ==
            cfg.templates.end()) {
      continue;
    }
    const std::string corruption = to_string(kind);
    for (std::uint64_t cs : cfg.content_seeds) {
      auto [inst, gold] = generate_task(tid, cs);
      if (kind == CorruptionKind::DropPrecondition) {
        // Give the dropped check something to miss.
        inst.spec.overrides.popup_at_start = true;
      }
      CorruptionResult corrupted =
          corrupt_draft(gold, {kind}, mix_seed(hash_id(tid + corruption), cs));
      if (!corrupted.notices.empty()) continue;

      const std::vector<TaskInstance> repair_set = repair_instances(inst);
      const std::vector<TaskInstance> eval_set = eval_instances(inst);

      for (const std::string& method : methods) {
        RowAccumulator& row = acc[{method, tid, corruption}];

        if (method == "no_skill") {
          for (const TaskInstance& ev : eval_set) {
            auto [ok, actions] =
                run_no_skill(ev, mix_seed(cs, ev.variation_seed));
            ++row.episodes;
            row.successes += ok ? 1 : 0;
            row.steps += actions;
            row.cost += actions;
          }
          continue;
        }

        SkillArtifact runner = corrupted.draft;
        if (method != "draft_no_repair") {
          RepairConfig rc = cfg.repair;
          rc.rng_seed = mix_seed(rc.rng_seed ^ hash_id(method + tid + corruption), cs);
          if (method == "full") {
            rc.mode = RepairMode::Full;
            runner = repair_loop(corrupted.draft, repair_set, rc).first;
          } else if (method == "no_localization") {
            rc.mode = RepairMode::NoLocalization;
            runner = repair_loop(corrupted.draft, repair_set, rc).first;
          } else if (method == "unconstrained") {
            rc.mode = RepairMode::Unconstrained;
            runner = repair_loop(corrupted.draft, repair_set, rc).first;
          } else {
            rc.mode = RepairMode::TextOnlyRewrite;
            runner = run_text_only_rewrite(corrupted.draft, repair_set, rc,
                                           builtin_seeded_rewriter)
                         .first;
          }
        }

        for (const TaskInstance& ev : eval_set) {
          EpisodeStats st = run_episode(runner, ev);
          ++row.episodes;
          row.successes += st.success ? 1 : 0;
          row.steps += st.steps;
          row.cost += st.cost;
        }
      }
    }
  }

  MetricsReport report;
  for (const auto& [key, row] : acc) {
    MetricsRow r;
    r.method = std::get<0>(key);
    r.template_id = std::get<1>(key);
    r.corruption = std::get<2>(key);
    r.episodes = row.episodes;
    r.successes = row.successes;
    const double n = row.episodes > 0 ? static_cast<double>(row.episodes) : 1.0;
    r.success_pct = 100.0 * row.successes / n;
    r.avg_steps = row.steps / n;
    r.avg_cost = row.cost / n;
    report.rows.push_back(std::move(r));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Brute-force repair oracle
// ---------------------------------------------------------------------------

namespace {

// Same demotion the repair loop applies: a run whose own checks pass but
// whose task predicate fails is treated as a final-check assertion failure.
Verdict oracle_verdict(const Trace& trace, const Verdict& verdict,
                       const SkillArtifact& s) {
  if (!verdict.success) return verdict;
  Verdict demoted;
  demoted.success = false;
  demoted.step_index = static_cast<int>(s.steps.size()) + 1;
  demoted.code = ErrorCode::AssertFail;
  Evidence ev;
  ev.record = trace.records.back();
  ev.pre_snapshot = trace.final_snapshot;
  ev.post_snapshot = trace.final_snapshot;
  ev.initial_url = trace.initial_snapshot.url;
  demoted.evidence = std::move(ev);
  return demoted;
}

}  // namespace

OracleResult bruteforce_repair_oracle(const SkillArtifact& draft,
                                      const TaskInstance& inst,
                                      const RepairConfig& cfg) {
  if (cfg.K > 2) {
    throw std::invalid_argument(
        "bruteforce_repair_oracle: exhaustive search is only tractable for "
        "K <= 2");
  }
  ensure_builtin_templates();
  const std::vector<TaskInstance> repair_set = repair_instances(inst);

  // Wider than the greedy loop: candidates for every diagnosis group, not
  // just the top one, so the neighborhood contains everything greedy can see.
  auto provider = [&](const SkillArtifact& s) {
    std::vector<Patch> out;
    std::vector<Diagnosis> diags;
    for (const TaskInstance& inst : repair_set) {
      EnvState env = make_env(inst);
      auto [trace, verdict] = execute_artifact(s, env, default_budgets(s));
      if (verdict.success && final_verify(inst.spec, trace)) continue;
      diags.push_back(localize(s, trace, oracle_verdict(trace, verdict, s)));
    }
    if (diags.empty()) return out;
    for (const DiagnosisGroup& grp : aggregate_diagnoses(diags)) {
      try {
        CandidateSet cs =
            candidates_for_site(grp.representative, s, cfg.per_operator_cap);
        out.insert(out.end(), cs.candidates.begin(), cs.candidates.end());
      } catch (const PatchError&) {
      }
    }
    return out;
  };

  std::vector<SkillArtifact> members = neighborhood(draft, cfg.K, provider, 10000);

  OracleResult res;
  bool have_best = false;
  Score best{};
  for (const SkillArtifact& m : members) {
    Score sc = score(m, repair_set, draft, cfg);
    if (sc.succ >= 1.0) res.fix_exists = true;
    const std::string digest = canonical_digest(m);
    const bool better =
        !have_best || sc.j_value > best.j_value ||
        (sc.j_value == best.j_value &&
         (sc.edit < best.edit ||
          (sc.edit == best.edit && digest < res.best_digest)));
    if (better) {
      have_best = true;
      best = sc;
      res.best_j = sc.j_value;
      res.best_digest = digest;
    }
  }
  return res;
}

}  // namespace skillfix
