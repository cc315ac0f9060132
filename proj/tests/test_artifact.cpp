#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "skillfix/artifact.hpp"
#include "skillfix/tasks.hpp"

using namespace skillfix;

namespace {

const char* kMinimalArtifact = R"({
  "skill_name": "minimal_click",
  "goal": "click the only button",
  "preconditions": [],
  "steps": [
    {
      "selector": {"role": "button", "text_match": {"mode": "equals", "needle": "Go"}},
      "action": "click",
      "args": {},
      "post_assertion": []
    }
  ],
  "postconditions": [],
  "recovery": [],
  "terminate": []
})";

Selector make_selector(const std::string& role, const std::string& needle,
                       TextMode mode = TextMode::Equals) {
  Selector s;
  s.role = role;
  if (!needle.empty()) s.text = TextMatch{mode, needle};
  return s;
}

Assertion make_url(const std::string& pattern) {
  Assertion a;
  a.kind = AssertionKind::UrlMatches;
  a.pattern = pattern;
  return a;
}

Assertion make_exists(Selector sel) {
  Assertion a;
  a.kind = AssertionKind::ElementExists;
  a.selector = std::move(sel);
  return a;
}

// Seeded generator covering every field shape; used by the round-trip and
// diff-oracle properties.
SkillArtifact random_artifact(std::mt19937_64& rng) {
  static const char* roles[] = {"button", "link", "textbox", "select", "menu"};
  static const char* words[] = {"Send",  "Open", "Close", "Next",
                                "Prev",  "Save", "Load",  "Edit"};
  auto word = [&] { return std::string(words[rng() % 8]); };

  SkillArtifact s;
  s.skill_name = "skill_" + std::to_string(rng() % 1000);
  s.goal = word() + " the " + word() + " panel";
  s.version = rng() % 4;

  if (rng() % 2) s.preconditions.push_back(make_url(word()));
  if (rng() % 2) {
    Assertion absent;
    absent.kind = AssertionKind::ElementAbsent;
    absent.selector = make_selector("dialog", "");
    s.preconditions.push_back(absent);
  }

  const std::size_t m = 1 + rng() % 4;
  for (std::size_t i = 0; i < m; ++i) {
    Step st;
    st.selector = make_selector(roles[rng() % 5], word(),
                                rng() % 2 ? TextMode::Equals : TextMode::Contains);
    if (rng() % 3 == 0) st.selector.attributes["name"] = word();
    switch (rng() % 3) {
      case 0:
        st.action = ActionKind::Click;
        break;
      case 1:
        st.action = ActionKind::Type;
        st.args.text = word() + " " + word();
        break;
      default:
        st.action = ActionKind::Select;
        st.args.option = word();
        break;
    }
    if (rng() % 2) st.post_assertions.push_back(make_url(word()));
    s.steps.push_back(std::move(st));
  }

  s.postconditions.push_back(make_url(word()));
  if (rng() % 2) {
    RecoveryRule r;
    r.trigger = make_exists(make_selector("dialog", ""));
    r.fallback = {RecoveryAction{RecoveryActionKind::ClosePopup, "", 0}};
    r.max_firings = 1 + static_cast<int>(rng() % 2);
    s.recovery.push_back(std::move(r));
  }
  s.terminate.push_back(make_url(word()));
  return s;
}

Patch sel_replace(int step, Selector sel) {
  Patch p;
  p.op = PatchOp::SelReplace;
  p.site = {SiteKind::StepSelector, step};
  p.payload = std::move(sel);
  return p;
}

Patch pre_insert(Assertion a) {
  Patch p;
  p.op = PatchOp::PreInsert;
  p.site = {SiteKind::ArtifactPre, 0};
  p.payload = std::move(a);
  return p;
}

Patch post_insert_final(Assertion a) {
  Patch p;
  p.op = PatchOp::PostInsert;
  p.site = {SiteKind::ArtifactPost, 0};
  p.payload = std::move(a);
  return p;
}

Patch recovery_insert(RecoveryRule r) {
  Patch p;
  p.op = PatchOp::RecoveryInsert;
  p.site = {SiteKind::ArtifactRecovery, 0};
  p.payload = std::move(r);
  return p;
}

std::filesystem::path golden_path() {
  return std::filesystem::path(__FILE__).parent_path() / "golden" /
         "gold_digests.txt";
}

}  // namespace

TEST_CASE("parse accepts a minimal one-step click artifact") {
  SkillArtifact s = parse_artifact(kMinimalArtifact);
  CHECK(s.steps.size() == 1);
  CHECK(s.steps[0].action == ActionKind::Click);
  CHECK(s.steps[0].selector.role == "button");
  CHECK(s.steps[0].post_assertions.empty());
  CHECK(validate_schema(s).empty());
}

TEST_CASE("parse rejects a step missing its post_assertion key") {
  nlohmann::json j = nlohmann::json::parse(kMinimalArtifact);
  nlohmann::json second = j["steps"][0];
  second.erase("post_assertion");
  j["steps"].push_back(second);
  try {
    parse_artifact(j.dump());
    FAIL("expected SchemaError");
  } catch (const SchemaError& e) {
    CHECK(e.path == "steps[1].post_assertion");
  }
}

TEST_CASE("parse rejects malformed text with a position") {
  try {
    parse_artifact("{\"skill_name\": ");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.position > 0);
  }
}

TEST_CASE("parse rejects unknown top-level fields") {
  nlohmann::json j = nlohmann::json::parse(kMinimalArtifact);
  j["extra"] = 1;
  CHECK_THROWS_AS(parse_artifact(j.dump()), SchemaError);
}

TEST_CASE("field order in the input does not matter") {
  nlohmann::json j = nlohmann::json::parse(kMinimalArtifact);
  // nlohmann parses into sorted storage already, so reorder via text.
  std::string reordered = "{\"terminate\": [], \"steps\": " + j["steps"].dump() +
                          ", \"skill_name\": \"minimal_click\"" +
                          ", \"recovery\": [], \"preconditions\": []" +
                          ", \"postconditions\": []" +
                          ", \"goal\": \"click the only button\"}";
  CHECK(serialize_canonical(parse_artifact(reordered)) ==
        serialize_canonical(parse_artifact(kMinimalArtifact)));
}

TEST_CASE("canonical serialization is a fixed point over 100 random artifacts") {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 100; ++i) {
    SkillArtifact s = random_artifact(rng);
    const std::string once = serialize_canonical(parse_artifact(serialize_canonical(s)));
    const std::string twice = serialize_canonical(parse_artifact(once));
    CHECK(once == twice);
  }
}

TEST_CASE("serialization distinguishes content and ignores map insert order") {
  SkillArtifact a = parse_artifact(kMinimalArtifact);
  SkillArtifact b = a;
  // Same attribute set inserted in opposite orders.
  a.steps[0].selector.attributes["name"] = "go";
  a.steps[0].selector.attributes["kind"] = "primary";
  b.steps[0].selector.attributes["kind"] = "primary";
  b.steps[0].selector.attributes["name"] = "go";
  CHECK(serialize_canonical(a) == serialize_canonical(b));

  b.steps[0].selector.text->needle = "Stop";
  CHECK(serialize_canonical(a) != serialize_canonical(b));
}

TEST_CASE("version round-trips but is excluded from content identity") {
  SkillArtifact a = parse_artifact(kMinimalArtifact);
  SkillArtifact b = a;
  b.version = 7;
  CHECK(serialize_canonical(a) != serialize_canonical(b));
  CHECK(parse_artifact(serialize_canonical(b)).version == 7);
  CHECK(canonical_digest(a) == canonical_digest(b));
  CHECK(content_equal(a, b));
  CHECK(edit_distance(a, b) == 0);
}

TEST_CASE("gold artifact digests match the recorded golden file") {
  std::vector<std::pair<std::string, std::string>> rows;
  for (const std::string& tid : builtin_template_ids()) {
    auto [inst, gold] = generate_task(tid, 1);
    rows.emplace_back(tid, canonical_digest(gold));
  }

  const std::filesystem::path path = golden_path();
  if (!std::filesystem::exists(path)) {
    // First build: record the digests so later builds detect drift.
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    REQUIRE(out.good());
    for (const auto& [tid, digest] : rows) out << tid << " " << digest << "\n";
    MESSAGE("golden file created at ", path.string());
    return;
  }

  std::ifstream in(path);
  REQUIRE(in.good());
  std::map<std::string, std::string> recorded;
  std::string tid, digest;
  while (in >> tid >> digest) recorded[tid] = digest;
  for (const auto& [id, d] : rows) {
    REQUIRE(recorded.count(id) == 1);
    CHECK(recorded[id] == d);
  }
}

TEST_CASE("schema validation catches the canonical shape errors") {
  SUBCASE("gold artifacts validate") {
    for (const std::string& tid : builtin_template_ids()) {
      auto [inst, gold] = generate_task(tid, 1);
      CHECK(validate_schema(gold).empty());
    }
  }
  SUBCASE("empty steps") {
    SkillArtifact s = parse_artifact(kMinimalArtifact);
    s.steps.clear();
    auto v = validate_schema(s);
    REQUIRE(v.size() >= 1);
    CHECK(v[0].path == "steps");
  }
  SUBCASE("type step with empty text") {
    SkillArtifact s = parse_artifact(kMinimalArtifact);
    s.steps[0].action = ActionKind::Type;
    s.steps[0].args = {};
    auto v = validate_schema(s);
    REQUIRE(v.size() == 1);
    CHECK(v[0].path == "steps[0].args.text");
  }
  SUBCASE("empty selector") {
    SkillArtifact s = parse_artifact(kMinimalArtifact);
    s.steps[0].selector = Selector{};
    CHECK(!validate_schema(s).empty());
  }
}

TEST_CASE("edit distance: identity, single patch, and additivity oracle") {
  std::mt19937_64 rng(77);

  SUBCASE("identity is zero") {
    for (int i = 0; i < 10; ++i) {
      SkillArtifact s = random_artifact(rng);
      CHECK(edit_distance(s, s) == 0);
    }
  }

  SUBCASE("one selector replacement is distance one") {
    SkillArtifact s = parse_artifact(kMinimalArtifact);
    SkillArtifact t = apply_patch(s, sel_replace(1, make_selector("button", "Run")));
    CHECK(edit_distance(s, t) == 1);
    CHECK(edit_distance(t, s) == 1);
  }

  SUBCASE("k distinct-site patches give distance k, 50 random cases") {
    for (int trial = 0; trial < 50; ++trial) {
      SkillArtifact s = random_artifact(rng);
      const int m = static_cast<int>(s.steps.size());
      // Build a pool of patches at pairwise distinct sites.
      std::vector<Patch> pool;
      for (int j = 1; j <= m; ++j) {
        pool.push_back(sel_replace(
            j, make_selector("link", "Fresh" + std::to_string(j))));
      }
      pool.push_back(pre_insert(make_url("distinct_pre_marker")));
      pool.push_back(post_insert_final(make_url("distinct_post_marker")));
      {
        RecoveryRule r;
        r.trigger = make_exists(make_selector("dialog", "Marker"));
        r.fallback = {RecoveryAction{RecoveryActionKind::Reload, "", 0}};
        r.max_firings = 1;
        pool.push_back(recovery_insert(r));
      }

      const std::size_t k = 1 + rng() % std::min<std::size_t>(3, pool.size());
      // Sample k distinct pool entries.
      std::vector<std::size_t> idx(pool.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      for (std::size_t i = idx.size(); i > 1; --i) {
        std::swap(idx[i - 1], idx[rng() % i]);
      }

      SkillArtifact t = s;
      for (std::size_t i = 0; i < k; ++i) t = apply_patch(t, pool[idx[i]]);
      CHECK(edit_distance(s, t) == static_cast<int>(k));
      CHECK(edit_distance(t, s) == static_cast<int>(k));
    }
  }
}

TEST_CASE("apply_patch locality: only the targeted field changes") {
  SkillArtifact s = parse_artifact(kMinimalArtifact);
  s.preconditions.push_back(make_url("start"));
  SkillArtifact t = apply_patch(s, sel_replace(1, make_selector("button", "Run")));

  CHECK(t.version == s.version + 1);
  CHECK(t.steps[0].selector.text->needle == "Run");
  CHECK(to_json(t.steps[0].args, t.steps[0].action) ==
        to_json(s.steps[0].args, s.steps[0].action));
  nlohmann::json js = to_json(s);
  nlohmann::json jt = to_json(t);
  for (const char* key : {"preconditions", "postconditions", "recovery",
                          "terminate", "goal", "skill_name"}) {
    CHECK(js[key] == jt[key]);
  }
}

TEST_CASE("apply_patch rejects bad sites and duplicate inserts") {
  SkillArtifact s = parse_artifact(kMinimalArtifact);

  SUBCASE("step index out of range") {
    CHECK_THROWS_AS(apply_patch(s, sel_replace(2, make_selector("button", "X"))),
                    PatchError);
    CHECK_THROWS_AS(apply_patch(s, sel_replace(0, make_selector("button", "X"))),
                    PatchError);
  }
  SUBCASE("no-op selector replacement") {
    CHECK_THROWS_AS(apply_patch(s, sel_replace(1, s.steps[0].selector)),
                    PatchError);
  }
  SUBCASE("duplicate precondition insert") {
    SkillArtifact t = apply_patch(s, pre_insert(make_url("home")));
    CHECK_THROWS_AS(apply_patch(t, pre_insert(make_url("home"))), PatchError);
  }
  SUBCASE("payload kind must match the operator") {
    Patch p;
    p.op = PatchOp::SelReplace;
    p.site = {SiteKind::StepSelector, 1};
    p.payload = make_url("oops");
    CHECK_THROWS_AS(apply_patch(s, p), PatchError);
  }
}

TEST_CASE("disjoint-site patches commute, 100 random pairs") {
  std::mt19937_64 rng(4242);
  int checked = 0;
  while (checked < 100) {
    SkillArtifact s = random_artifact(rng);
    const int m = static_cast<int>(s.steps.size());

    std::vector<Patch> pool;
    for (int j = 1; j <= m; ++j) {
      pool.push_back(
          sel_replace(j, make_selector("menu", "Swap" + std::to_string(j))));
    }
    pool.push_back(pre_insert(make_url("commute_pre")));
    pool.push_back(post_insert_final(make_url("commute_post")));
    if (pool.size() < 2) continue;

    const std::size_t a = rng() % pool.size();
    std::size_t b = rng() % pool.size();
    if (a == b) continue;

    SkillArtifact ab = apply_patch(apply_patch(s, pool[a]), pool[b]);
    SkillArtifact ba = apply_patch(apply_patch(s, pool[b]), pool[a]);
    CHECK(content_equal(ab, ba));
    CHECK(canonical_digest(ab) == canonical_digest(ba));
    ++checked;
  }
}

TEST_CASE("neighborhood membership bound for composed patches") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    SkillArtifact s = random_artifact(rng);
    SkillArtifact t = s;
    const int k = 1 + static_cast<int>(rng() % 3);
    int applied = 0;
    for (int i = 0; i < k; ++i) {
      const int j = 1 + static_cast<int>(rng() % t.steps.size());
      try {
        t = apply_patch(
            t, sel_replace(j, make_selector("link", "Hop" + std::to_string(i))));
        ++applied;
      } catch (const PatchError&) {
        // replacing with an identical selector; skip
      }
    }
    CHECK(edit_distance(t, s) <= applied);
  }
}
