#include "skillfix/patchgen.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <stdexcept>

namespace skillfix {

namespace {

void require_site(const Diagnosis& d, SiteType expected, const char* op) {
  if (d.site.type != expected) {
    throw PatchError(std::string(op) + ": diagnosis targets site '" +
                     to_string(d.site.type) + "'");
  }
}

int require_step(const Diagnosis& d, const SkillArtifact& s, const char* op) {
  const int m = static_cast<int>(s.steps.size());
  if (d.site.step < 1 || d.site.step > m) {
    throw PatchError(std::string(op) + ": site step " +
                     std::to_string(d.site.step) + " out of range 1.." +
                     std::to_string(m));
  }
  return d.site.step;
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : text) {
    if (std::isalnum(static_cast<unsigned char>(ch))) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

std::string to_lower(const std::string& s) {
  std::string out = s;
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Visible elements in document order: page tree pre-order, then each modal
// bottom to top. The same order selector resolution uses.
void collect_visible(const Element& e, std::vector<const Element*>& out) {
  if (e.visible) out.push_back(&e);
  for (const auto& c : e.children) collect_visible(c, out);
}

std::vector<const Element*> visible_elements(const PageSnapshot& snap) {
  std::vector<const Element*> out;
  collect_visible(snap.root, out);
  for (const auto& dlg : snap.modal_stack) collect_visible(dlg, out);
  return out;
}

const Element* find_in_snapshot(const PageSnapshot& snap, const std::string& id) {
  if (const Element* hit = find_by_id(snap.root, id)) return hit;
  for (const auto& dlg : snap.modal_stack) {
    if (const Element* hit = find_by_id(dlg, id)) return hit;
  }
  return nullptr;
}

int selector_specificity(const Selector& sel) {
  int n = static_cast<int>(sel.attributes.size());
  if (sel.role.has_value()) ++n;
  if (sel.text.has_value()) ++n;
  return n;
}

// A selector the target element would satisfy: its role plus exact visible
// text when it has any.
Selector selector_for_element(const Element& e) {
  Selector sel;
  sel.role = to_string(e.role);
  if (!e.visible_text.empty()) {
    sel.text = TextMatch{TextMode::Equals, e.visible_text};
  }
  return sel;
}

Patch make_patch(PatchOp op, SiteKind kind, int step, PatchPayload payload) {
  Patch p;
  p.op = op;
  p.site = PatchSite{kind, step};
  p.payload = std::move(payload);
  return p;
}

}  // namespace

std::size_t edit_distance_chars(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t subst = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, subst});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::vector<Patch> gen_sel_replace(const Diagnosis& d, const PageSnapshot& snap,
                                   const SkillArtifact& s, int cap) {
  require_site(d, SiteType::Selector, "gen_sel_replace");
  const int j = require_step(d, s, "gen_sel_replace");
  const Selector& original = s.steps[j - 1].selector;

  // Overlap is measured against the broken needle and the goal text: either
  // can carry the word that identifies the right element.
  std::set<std::string> wanted;
  if (original.text.has_value()) {
    for (auto& t : tokenize(original.text->needle)) wanted.insert(t);
  }
  for (auto& t : tokenize(s.goal)) wanted.insert(t);

  const std::vector<const Element*> elems = visible_elements(snap);
  auto overlap_of = [&wanted](const Element& e) {
    int n = 0;
    for (const auto& t : tokenize(e.visible_text)) n += wanted.count(t) ? 1 : 0;
    return n;
  };

  struct Scored {
    Selector sel;
    int overlap = -1;
    int specificity = 0;
    std::size_t doc_order = 0;
  };
  std::vector<Scored> scored;
  std::set<std::string> seen_keys{canonical_key(original)};

  auto doc_index = [&elems](const Element* e) -> std::size_t {
    for (std::size_t i = 0; i < elems.size(); ++i) {
      if (elems[i] == e) return i;
    }
    return elems.size();
  };

  auto consider = [&](Selector sel, const Element* source) {
    std::string key = canonical_key(sel);
    if (!seen_keys.insert(key).second) return;
    Resolution r = resolve_selector(sel, snap);
    if (r.status == ResolutionStatus::NotFound) return;
    const Element* e = source ? source : find_in_snapshot(snap, r.stable_id);
    if (!e) return;
    const int spec = selector_specificity(sel);
    scored.push_back({std::move(sel), overlap_of(*e), spec, doc_index(e)});
  };

  // Same selector, equals relaxed to contains: rescues needles that carry
  // extra punctuation around the real label.
  if (original.text.has_value() && original.text->mode == TextMode::Equals) {
    Selector relaxed = original;
    relaxed.text->mode = TextMode::Contains;
    consider(std::move(relaxed), nullptr);
  }

  // One contains-text candidate per visible labeled element.
  for (const Element* e : elems) {
    if (e->visible_text.empty()) continue;
    Selector sel;
    sel.role = to_string(e->role);
    sel.text = TextMatch{TextMode::Contains, e->visible_text};
    consider(std::move(sel), e);
  }

  // Attribute-based selectors for the best-matching elements, for labels too
  // unstable to match on.
  std::vector<const Element*> ranked = elems;
  std::stable_sort(ranked.begin(), ranked.end(),
                   [&overlap_of](const Element* a, const Element* b) {
                     return overlap_of(*a) > overlap_of(*b);
                   });
  const std::size_t top = std::min<std::size_t>(2, ranked.size());
  for (std::size_t i = 0; i < top; ++i) {
    for (const auto& [k, v] : ranked[i]->attributes) {
      Selector sel;
      sel.role = to_string(ranked[i]->role);
      sel.attributes[k] = v;
      consider(std::move(sel), ranked[i]);
    }
  }

  std::stable_sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
    if (a.overlap != b.overlap) return a.overlap > b.overlap;
    if (a.specificity != b.specificity) return a.specificity > b.specificity;
    return a.doc_order < b.doc_order;
  });

  std::vector<Patch> out;
  for (const auto& c : scored) {
    if (static_cast<int>(out.size()) >= cap) break;
    out.push_back(make_patch(PatchOp::SelReplace, SiteKind::StepSelector, j, c.sel));
  }
  return out;
}

std::vector<Patch> gen_pre_insert(const Diagnosis& d, const PageSnapshot& snap,
                                  int cap) {
  require_site(d, SiteType::Precondition, "gen_pre_insert");
  const Evidence& ev = d.evidence;

  bool saw_modal = !snap.modal_stack.empty();
  bool saw_disabled = false;
  bool saw_invisible = false;
  for (const auto& e : ev.record.events) {
    if (e.cause == "occluded_by_modal") saw_modal = true;
    if (e.cause == "disabled") saw_disabled = true;
    if (e.cause == "invisible") saw_invisible = true;
  }

  std::vector<Patch> out;
  auto add = [&out, cap](Assertion a) {
    if (static_cast<int>(out.size()) < cap) {
      out.push_back(make_patch(PatchOp::PreInsert, SiteKind::ArtifactPre, 0,
                               std::move(a)));
    }
  };

  if (saw_modal) {
    Assertion a;
    a.kind = AssertionKind::ElementAbsent;
    Selector dialog;
    dialog.role = "dialog";
    a.selector = dialog;
    add(std::move(a));
  }

  const Element* target =
      ev.record.resolution.stable_id.empty()
          ? nullptr
          : find_in_snapshot(snap, ev.record.resolution.stable_id);
  if (saw_disabled && target) {
    Assertion a;
    a.kind = AssertionKind::ElementExists;
    Selector sel = selector_for_element(*target);
    sel.attributes["enabled"] = "true";
    a.selector = std::move(sel);
    add(std::move(a));
  }
  if (saw_invisible && target) {
    Assertion a;
    a.kind = AssertionKind::ElementExists;
    a.selector = selector_for_element(*target);
    add(std::move(a));
  }
  if (snap.url != ev.initial_url && !ev.initial_url.empty()) {
    Assertion a;
    a.kind = AssertionKind::UrlMatches;
    a.pattern = ev.initial_url;
    add(std::move(a));
  }
  return out;
}

std::vector<Patch> gen_post_insert(const Diagnosis& d, const SkillArtifact& s,
                                   int cap) {
  require_site(d, SiteType::PostAssertion, "gen_post_insert");
  std::vector<Patch> out;

  if (!d.site.final) {
    const int j = require_step(d, s, "gen_post_insert");
    const Step& step = s.steps[j - 1];
    std::set<std::string> existing;
    for (const auto& a : step.post_assertions) existing.insert(canonical_key(a));
    for (const auto& a :
         default_postconditions(step.action, step.args, step.selector)) {
      if (existing.count(canonical_key(a))) continue;
      if (static_cast<int>(out.size()) >= cap) break;
      out.push_back(make_patch(PatchOp::PostInsert, SiteKind::StepPost, j, a));
    }
    return out;
  }

  // Final site: claim goal words that are actually observable at the end.
  const PageSnapshot& last =
      d.evidence.post_snapshot.has_value() ? *d.evidence.post_snapshot
                                           : d.evidence.pre_snapshot;
  std::set<std::string> existing;
  for (const auto& a : s.postconditions) existing.insert(canonical_key(a));

  const std::string url_lower = to_lower(last.url);
  std::vector<const Element*> elems = visible_elements(last);
  auto visible_somewhere = [&elems](const std::string& token) {
    for (const Element* e : elems) {
      if (to_lower(e->visible_text).find(token) != std::string::npos) return true;
    }
    return false;
  };

  std::set<std::string> used_tokens;
  for (const auto& token : tokenize(s.goal)) {
    if (token.size() < 3 || !used_tokens.insert(token).second) continue;
    Assertion a;
    if (url_lower.find(token) != std::string::npos) {
      a.kind = AssertionKind::UrlMatches;
      a.pattern = token;
    } else if (visible_somewhere(token)) {
      a.kind = AssertionKind::TextPresent;
      a.pattern = token;
    } else {
      continue;
    }
    if (existing.count(canonical_key(a))) continue;
    if (static_cast<int>(out.size()) >= cap) break;
    out.push_back(
        make_patch(PatchOp::PostInsert, SiteKind::ArtifactPost, 0, std::move(a)));
  }
  return out;
}

std::vector<Patch> gen_recovery_insert(const Diagnosis& d,
                                       const SkillArtifact& s, int cap) {
  require_site(d, SiteType::Recovery, "gen_recovery_insert");
  const int m = static_cast<int>(s.steps.size());
  // Final-check diagnoses fall back to the last step's selector.
  const int j = std::clamp(d.step_index, 1, m);
  const Selector& step_sel = s.steps[j - 1].selector;

  std::set<std::string> existing;
  for (const auto& r : s.recovery) existing.insert(canonical_key(r));

  std::vector<RecoveryRule> rules;
  {
    RecoveryRule r;
    r.trigger.kind = AssertionKind::ElementExists;
    Selector dialog;
    dialog.role = "dialog";
    r.trigger.selector = dialog;
    r.fallback.push_back({RecoveryActionKind::ClosePopup, "", 0});
    r.max_firings = 2;
    rules.push_back(std::move(r));
  }
  {
    RecoveryRule r;
    r.trigger.kind = AssertionKind::StateChanged;  // holds when progress stalls
    r.fallback.push_back({RecoveryActionKind::Reload, "", 0});
    r.max_firings = 2;
    rules.push_back(std::move(r));
  }
  {
    RecoveryRule r;
    r.trigger.kind = AssertionKind::ElementAbsent;
    r.trigger.selector = step_sel;
    r.fallback.push_back({RecoveryActionKind::Scroll, "down", 0});
    r.max_firings = 2;
    rules.push_back(std::move(r));
  }
  {
    RecoveryRule r;
    r.trigger.kind = AssertionKind::ElementAbsent;
    r.trigger.selector = step_sel;
    r.fallback.push_back({RecoveryActionKind::Wait, "", 2});
    r.max_firings = 2;
    rules.push_back(std::move(r));
  }

  std::vector<Patch> out;
  for (auto& r : rules) {
    if (existing.count(canonical_key(r))) continue;
    if (static_cast<int>(out.size()) >= cap) break;
    out.push_back(make_patch(PatchOp::RecoveryInsert, SiteKind::ArtifactRecovery,
                             0, std::move(r)));
  }
  return out;
}

std::vector<Patch> gen_arg_correct(const Diagnosis& d, const PageSnapshot& snap,
                                   const SkillArtifact& s, int cap) {
  require_site(d, SiteType::Args, "gen_arg_correct");
  const int j = require_step(d, s, "gen_arg_correct");
  const Step& step = s.steps[j - 1];
  std::vector<Patch> out;

  if (step.action == ActionKind::Select) {
    const std::string& id = d.evidence.record.resolution.stable_id;
    const Element* elem = id.empty() ? nullptr : find_in_snapshot(snap, id);
    if (!elem) {
      Resolution r = resolve_selector(step.selector, snap);
      if (r.status != ResolutionStatus::NotFound) {
        elem = find_in_snapshot(snap, r.stable_id);
      }
    }
    if (!elem) throw PatchError("gen_arg_correct: element unresolvable in snapshot");

    struct Ranked {
      std::string option;
      std::size_t distance;
      std::size_t order;
    };
    std::vector<Ranked> ranked;
    std::size_t order = 0;
    for (const auto& c : elem->children) {
      if (c.role != Role::Option) continue;
      ranked.push_back({c.visible_text,
                        edit_distance_chars(c.visible_text, step.args.option),
                        order++});
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
      if (a.distance != b.distance) return a.distance < b.distance;
      return a.order < b.order;
    });
    for (const auto& c : ranked) {
      if (c.option == step.args.option) continue;
      if (static_cast<int>(out.size()) >= cap) break;
      ActionArgs args;
      args.option = c.option;
      out.push_back(make_patch(PatchOp::ArgCorrect, SiteKind::StepArgs, j,
                               std::move(args)));
    }
    return out;
  }

  if (step.action == ActionKind::Type) {
    // The page said exactly what it wants; obey it.
    for (const auto& e : d.evidence.record.events) {
      if (e.kind != EventKind::RejectedInput) continue;
      std::string fixed;
      if (e.detail.rfind("max_length=", 0) == 0) {
        const std::size_t limit = std::stoul(e.detail.substr(11));
        fixed = step.args.text.substr(0, limit);
      } else if (e.detail.rfind("charset=digits", 0) == 0) {
        for (char ch : step.args.text) {
          if (std::isdigit(static_cast<unsigned char>(ch))) fixed.push_back(ch);
        }
      }
      if (fixed.empty() || fixed == step.args.text) continue;
      if (static_cast<int>(out.size()) >= cap) break;
      ActionArgs args;
      args.text = fixed;
      out.push_back(make_patch(PatchOp::ArgCorrect, SiteKind::StepArgs, j,
                               std::move(args)));
    }
    return out;
  }

  return out;
}

CandidateSet candidates_for_site(const Diagnosis& d, const SkillArtifact& s,
                                 int per_operator_cap) {
  std::vector<Patch> raw;
  switch (d.site.type) {
    case SiteType::Selector:
      raw = gen_sel_replace(d, d.evidence.pre_snapshot, s, per_operator_cap);
      break;
    case SiteType::Precondition:
      raw = gen_pre_insert(d, d.evidence.pre_snapshot, per_operator_cap);
      break;
    case SiteType::PostAssertion:
      raw = gen_post_insert(d, s, per_operator_cap);
      break;
    case SiteType::Recovery:
      raw = gen_recovery_insert(d, s, per_operator_cap);
      break;
    case SiteType::Args:
      raw = gen_arg_correct(d, d.evidence.pre_snapshot, s, per_operator_cap);
      break;
  }

  CandidateSet set;
  set.diagnosis = d;
  set.per_operator_cap = per_operator_cap;
  for (auto& p : raw) {
    try {
      apply_patch(s, p);
    } catch (const PatchError&) {
      continue;  // duplicate of existing content or otherwise inapplicable
    }
    set.candidates.push_back(std::move(p));
  }
  return set;
}

std::vector<SkillArtifact> neighborhood(const SkillArtifact& s0, int K,
                                        const PatchProvider& provider,
                                        std::size_t max_size) {
  std::vector<SkillArtifact> out{s0};
  std::set<std::string> seen{canonical_digest(s0)};
  std::vector<SkillArtifact> frontier{s0};

  for (int depth = 0; depth < K && !frontier.empty(); ++depth) {
    std::vector<SkillArtifact> next;
    for (const auto& base : frontier) {
      for (const auto& p : provider(base)) {
        SkillArtifact patched;
        try {
          patched = apply_patch(base, p);
        } catch (const PatchError&) {
          continue;
        }
        if (!seen.insert(canonical_digest(patched)).second) continue;
        if (out.size() >= max_size) {
          throw std::length_error("neighborhood exceeds " +
                                  std::to_string(max_size) + " artifacts");
        }
        out.push_back(patched);
        next.push_back(std::move(patched));
      }
    }
    frontier = std::move(next);
  }
  return out;
}

}  // namespace skillfix
