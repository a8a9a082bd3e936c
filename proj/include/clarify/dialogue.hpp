#pragma once

// Question/answer layer: the nine-template question grammar, the truthful
// answering oracle, hypothesis-set tracking, and the usefulness judgment that
// stands in for a learned reward model.
//
// A hypothesis is one complete way the hidden task state could be: a target
// object (identification families), a clutter assignment plus placement
// preferences (CleanClutter), or placement preferences alone
// (PreferenceBased). Answers filter the set of live hypotheses; a question is
// useful exactly when it is grounded and its truthful answer strictly shrinks
// that set.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "clarify/task.hpp"

namespace clarify {

// ---------------------------------------------------------------------------
// Question grammar.

enum class QuestionTemplate {
  on_receptacle = 1,       // "Is target object on the <receptacle>?"
  is_instance_target = 2,  // "Is <object_instance> the target object?"
  has_size = 3,            // "Is target object the <object_size> one?"
  where_category = 4,      // "Where is the <object_category> located?"
  what_color = 5,          // "What color is <object_category>?"
  describe_category = 6,   // "Can you describe the <object_category>?"
  instance_clutter = 7,    // "Is <object_instance> clutter?"
  category_clutter = 8,    // "Are <object_category> clutter?"
  where_place = 9,         // "Which <receptacle> to place the <object_instance> on/in?"
};

struct ObjectDescriptor {
  std::optional<Size> size;
  Color color = Color::white;
  Category category = Category::cup;
  bool operator==(const ObjectDescriptor&) const = default;

  std::string text() const {
    std::string s;
    if (size) s += std::string(to_string(*size)) + " ";
    s += std::string(to_string(color)) + " " + std::string(to_string(category));
    return s;
  }
};

struct CategoryRef {
  std::optional<Color> color;
  Category category = Category::cup;
  bool operator==(const CategoryRef&) const = default;

  std::string text() const {
    std::string s;
    if (color) s += std::string(to_string(*color)) + " ";
    s += std::string(to_string(category));
    return s;
  }
  std::string plural_text() const {
    std::string s;
    if (color) s += std::string(to_string(*color)) + " ";
    s += plural(category);
    return s;
  }
};

struct Question {
  QuestionTemplate tmpl = QuestionTemplate::on_receptacle;
  std::string receptacle_ref;   // templates 1 and 9
  ObjectDescriptor descriptor;  // templates 2, 7, 9
  Size size_word = Size::small; // template 3
  CategoryRef category_ref;     // templates 4, 5, 6, 8

  bool operator==(const Question&) const = default;

  std::string to_text() const {
    switch (tmpl) {
      case QuestionTemplate::on_receptacle:
        return "Is target object on the " + receptacle_ref + "?";
      case QuestionTemplate::is_instance_target:
        return "Is " + descriptor.text() + " the target object?";
      case QuestionTemplate::has_size:
        return "Is target object the " + std::string(to_string(size_word)) +
               " one?";
      case QuestionTemplate::where_category:
        return "Where is the " + category_ref.text() + " located?";
      case QuestionTemplate::what_color:
        return "What color is " + category_ref.text() + "?";
      case QuestionTemplate::describe_category:
        return "Can you describe the " + category_ref.text() + "?";
      case QuestionTemplate::instance_clutter:
        return "Is " + descriptor.text() + " clutter?";
      case QuestionTemplate::category_clutter:
        return "Are " + category_ref.plural_text() + " clutter?";
      case QuestionTemplate::where_place:
        return "Which " + receptacle_ref + " to place the " +
               descriptor.text() + " on/in?";
    }
    throw std::invalid_argument("bad question template");
  }
};

namespace detail {

inline std::vector<std::string_view> words(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos < s.size()) {
    const std::size_t nxt = s.find(' ', pos);
    if (nxt == std::string_view::npos) {
      out.push_back(s.substr(pos));
      break;
    }
    if (nxt > pos) out.push_back(s.substr(pos, nxt - pos));
    pos = nxt + 1;
  }
  return out;
}

inline std::optional<ObjectDescriptor> parse_descriptor(std::string_view s) {
  const auto w = words(s);
  ObjectDescriptor d;
  std::size_t i = 0;
  if (w.size() == 3) {
    const auto sz = size_from_string(w[i]);
    if (!sz) return std::nullopt;
    d.size = *sz;
    ++i;
  } else if (w.size() != 2) {
    return std::nullopt;
  }
  const auto col = color_from_string(w[i]);
  const auto cat = category_from_string(w[i + 1]);
  if (!col || !cat) return std::nullopt;
  d.color = *col;
  d.category = *cat;
  return d;
}

inline std::optional<CategoryRef> parse_category_ref(std::string_view s) {
  const auto w = words(s);
  CategoryRef c;
  if (w.size() == 2) {
    const auto col = color_from_string(w[0]);
    const auto cat = category_from_string(w[1]);
    if (!col || !cat) return std::nullopt;
    c.color = *col;
    c.category = *cat;
    return c;
  }
  if (w.size() == 1) {
    const auto cat = category_from_string(w[0]);
    if (!cat) return std::nullopt;
    c.category = *cat;
    return c;
  }
  return std::nullopt;
}

inline bool strip(std::string_view& s, std::string_view prefix,
                  std::string_view suffix) {
  if (!s.starts_with(prefix) || !s.ends_with(suffix) ||
      s.size() < prefix.size() + suffix.size()) {
    return false;
  }
  s.remove_prefix(prefix.size());
  s.remove_suffix(suffix.size());
  return !s.empty();
}

}  // namespace detail

// Off-grammar text yields nullopt; callers treat that as a wasted action.
inline std::optional<Question> parse_question(std::string_view text) {
  using detail::strip;
  Question q;
  std::string_view s = text;
  if (s = text; strip(s, "Is target object on the ", "?")) {
    q.tmpl = QuestionTemplate::on_receptacle;
    q.receptacle_ref = std::string(s);
    return q;
  }
  if (s = text; strip(s, "Is target object the ", " one?")) {
    const auto sz = size_from_string(s);
    if (!sz) return std::nullopt;
    q.tmpl = QuestionTemplate::has_size;
    q.size_word = *sz;
    return q;
  }
  if (s = text; strip(s, "Is ", " the target object?")) {
    const auto d = detail::parse_descriptor(s);
    if (!d) return std::nullopt;
    q.tmpl = QuestionTemplate::is_instance_target;
    q.descriptor = *d;
    return q;
  }
  if (s = text; strip(s, "Where is the ", " located?")) {
    const auto c = detail::parse_category_ref(s);
    if (!c) return std::nullopt;
    q.tmpl = QuestionTemplate::where_category;
    q.category_ref = *c;
    return q;
  }
  if (s = text; strip(s, "What color is ", "?")) {
    const auto c = detail::parse_category_ref(s);
    if (!c) return std::nullopt;
    q.tmpl = QuestionTemplate::what_color;
    q.category_ref = *c;
    return q;
  }
  if (s = text; strip(s, "Can you describe the ", "?")) {
    const auto c = detail::parse_category_ref(s);
    if (!c) return std::nullopt;
    q.tmpl = QuestionTemplate::describe_category;
    q.category_ref = *c;
    return q;
  }
  if (s = text; strip(s, "Is ", " clutter?")) {
    const auto d = detail::parse_descriptor(s);
    if (!d) return std::nullopt;
    q.tmpl = QuestionTemplate::instance_clutter;
    q.descriptor = *d;
    return q;
  }
  if (s = text; strip(s, "Are ", " clutter?")) {
    const auto c = detail::parse_category_ref(s);
    if (!c) return std::nullopt;
    q.tmpl = QuestionTemplate::category_clutter;
    q.category_ref = *c;
    return q;
  }
  if (s = text; strip(s, "Which ", " on/in?")) {
    const std::size_t mid = s.find(" to place the ");
    if (mid == std::string_view::npos) return std::nullopt;
    const auto d = detail::parse_descriptor(s.substr(mid + 14));
    if (!d || mid == 0) return std::nullopt;
    q.tmpl = QuestionTemplate::where_place;
    q.receptacle_ref = std::string(s.substr(0, mid));
    q.descriptor = *d;
    return q;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Answers.

enum class AnswerKind { yes, no, receptacle_name, color_name, description };

struct Answer {
  AnswerKind kind = AnswerKind::no;
  std::string text;
  bool operator==(const Answer&) const = default;
};

inline Answer yes_no(bool b) {
  return b ? Answer{AnswerKind::yes, "yes"} : Answer{AnswerKind::no, "no"};
}

inline Answer no_such_object() {
  return Answer{AnswerKind::description, "no such object"};
}

inline std::string_view to_string(AnswerKind k) {
  switch (k) {
    case AnswerKind::yes: return "yes";
    case AnswerKind::no: return "no";
    case AnswerKind::receptacle_name: return "receptacle_name";
    case AnswerKind::color_name: return "color_name";
    case AnswerKind::description: return "description";
  }
  throw std::invalid_argument("bad answer kind");
}

// Human-readable label for a location: a receptacle name, a compartment
// qualified by its receptacle, or the agent's gripper.
inline std::string location_label(const Scene& scene, const Location& loc) {
  if (loc.held()) return "gripper";
  const Receptacle& r = scene.receptacle(loc.receptacle);
  if (loc.in_compartment()) return compartment_label(r, loc.compartment);
  return r.name;
}

// Resolves a receptacle reference: bare receptacle name, "<compartment> of
// <receptacle>", or a bare compartment name when unique in the scene.
inline std::optional<Location> resolve_receptacle_ref(const Scene& scene,
                                                      std::string_view ref) {
  if (const auto rid = scene.receptacle_by_name(ref)) return Location{*rid, ""};
  const std::size_t of = ref.find(" of ");
  if (of != std::string_view::npos) {
    const auto rid = scene.receptacle_by_name(ref.substr(of + 4));
    const std::string part(ref.substr(0, of));
    if (rid && scene.has_compartment(*rid, part)) return Location{*rid, part};
    return std::nullopt;
  }
  std::optional<Location> found;
  for (const auto& r : scene.receptacles) {
    for (const auto& part : r.sub_parts) {
      if (part == ref) {
        if (found) return std::nullopt;  // ambiguous bare compartment
        found = Location{r.id, part};
      }
    }
  }
  return found;
}

// Whether an object at `loc` counts as being at the referenced place. A bare
// receptacle reference covers its surface and all of its compartments.
inline bool location_matches_ref(const Location& loc, const Location& ref) {
  if (loc.held()) return false;
  if (!ref.in_compartment()) return loc.receptacle == ref.receptacle;
  return loc == ref;
}

// ---------------------------------------------------------------------------
// Descriptor resolution.

// Recency hints for resolving ambiguous instance descriptors: the receptacle
// most recently named in a question, and receptacles in visit order.
struct ResolutionHints {
  std::optional<int> last_asked_receptacle;
  std::vector<int> visit_order;  // most recent last
};

inline std::optional<int> resolve_descriptor(
    const Scene& scene, const std::vector<Location>& locations,
    const ObjectDescriptor& d, const std::set<int>* seen,
    const ResolutionHints& hints) {
  std::vector<int> matches;
  for (const auto& o : scene.objects) {
    if (seen && !seen->count(o.id)) continue;
    if (o.category != d.category || o.color != d.color) continue;
    if (d.size && o.size != *d.size) continue;
    matches.push_back(o.id);
  }
  if (matches.empty()) return std::nullopt;
  if (matches.size() == 1) return matches.front();
  const auto at = [&](int oid) {
    return locations[static_cast<std::size_t>(oid)].receptacle;
  };
  if (hints.last_asked_receptacle) {
    std::vector<int> sub;
    for (int m : matches) {
      if (at(m) == *hints.last_asked_receptacle) sub.push_back(m);
    }
    if (!sub.empty()) matches = std::move(sub);
  }
  if (matches.size() > 1 && !hints.visit_order.empty()) {
    // Prefer matches on the most recently visited receptacle.
    int best = -1;
    for (int m : matches) {
      for (int i = 0; i < static_cast<int>(hints.visit_order.size()); ++i) {
        if (hints.visit_order[static_cast<std::size_t>(i)] == at(m)) {
          best = std::max(best, i);
        }
      }
    }
    if (best >= 0) {
      const int recent = hints.visit_order[static_cast<std::size_t>(best)];
      std::vector<int> sub;
      for (int m : matches) {
        if (at(m) == recent) sub.push_back(m);
      }
      matches = std::move(sub);
    }
  }
  return *std::min_element(matches.begin(), matches.end());
}

// ---------------------------------------------------------------------------
// Hypotheses.

struct Hypothesis {
  std::vector<int> targets;  // identification: 1 id; clutter: the clutter set
  std::vector<int> prefs;    // option index per context category
  bool operator==(const Hypothesis&) const = default;
};

struct HypothesisContext {
  TaskFamily family = TaskFamily::no_ambiguity;
  const Scene* scene = nullptr;
  const EpisodeSpec* spec = nullptr;
  std::vector<int> universe;             // candidate / source / group objects
  std::vector<Category> pref_categories; // categories carrying a preference
  std::vector<Location> pref_options;    // allowed preference locations

  std::optional<Location> pref_of(const Hypothesis& h, Category c) const {
    for (std::size_t i = 0; i < pref_categories.size(); ++i) {
      if (pref_categories[i] == c) {
        return pref_options[static_cast<std::size_t>(h.prefs[i])];
      }
    }
    return std::nullopt;
  }
};

namespace detail {

inline bool instruction_matches(const EpisodeSpec& spec,
                                const ObjectInstance& o) {
  if (spec.instr_category && o.category != *spec.instr_category) return false;
  if (spec.instr_color && o.color != *spec.instr_color) return false;
  return true;
}

inline std::vector<Location> all_compartments(const Scene& scene) {
  std::vector<Location> out;
  for (const auto& r : scene.receptacles) {
    for (const auto& part : r.sub_parts) out.push_back({r.id, part});
  }
  return out;
}

}  // namespace detail

// Builds the judge-side context over the full scene, or — given a seen set —
// the agent-side belief context restricted to discovered objects.
inline HypothesisContext make_hypothesis_context(const Scene& scene,
                                                 const EpisodeSpec& spec,
                                                 const std::set<int>* seen = nullptr) {
  HypothesisContext ctx;
  ctx.family = spec.family;
  ctx.scene = &scene;
  ctx.spec = &spec;
  const auto include = [&](const ObjectInstance& o) {
    return !seen || seen->count(o.id) > 0;
  };
  switch (spec.family) {
    case TaskFamily::clean_clutter: {
      for (const auto& o : scene.objects) {
        if (o.location.receptacle == spec.source_receptacle && include(o)) {
          ctx.universe.push_back(o.id);
        }
      }
      for (int oid : ctx.universe) {
        const Category c = scene.object(oid).category;
        if (std::find(ctx.pref_categories.begin(), ctx.pref_categories.end(),
                      c) == ctx.pref_categories.end()) {
          ctx.pref_categories.push_back(c);
        }
      }
      ctx.pref_options = detail::all_compartments(scene);
      break;
    }
    case TaskFamily::preference_based: {
      for (const auto& o : scene.objects) {
        if (is_utensil(o.category) && include(o)) ctx.universe.push_back(o.id);
      }
      for (int oid : ctx.universe) {
        const Category c = scene.object(oid).category;
        if (std::find(ctx.pref_categories.begin(), ctx.pref_categories.end(),
                      c) == ctx.pref_categories.end()) {
          ctx.pref_categories.push_back(c);
        }
      }
      for (const auto& part :
           scene.receptacle(spec.destination.receptacle).sub_parts) {
        ctx.pref_options.push_back({spec.destination.receptacle, part});
      }
      break;
    }
    default: {
      for (const auto& o : scene.objects) {
        if (detail::instruction_matches(spec, o) && include(o)) {
          ctx.universe.push_back(o.id);
        }
      }
      break;
    }
  }
  return ctx;
}

// Every way the hidden state could be, before any dialogue. Clutter
// assignments are proper nonempty subsets of the source objects: the user
// flagged some but not all of them.
inline std::vector<Hypothesis> enumerate_hypotheses(const HypothesisContext& ctx) {
  std::vector<Hypothesis> out;
  const auto pref_tuples = [&](auto&& emit) {
    std::vector<int> prefs(ctx.pref_categories.size(), 0);
    const int n_options = static_cast<int>(ctx.pref_options.size());
    while (true) {
      emit(prefs);
      int i = static_cast<int>(prefs.size()) - 1;
      while (i >= 0) {
        if (++prefs[static_cast<std::size_t>(i)] < n_options) break;
        prefs[static_cast<std::size_t>(i)] = 0;
        --i;
      }
      if (i < 0) break;
    }
  };
  switch (ctx.family) {
    case TaskFamily::clean_clutter: {
      const int n = static_cast<int>(ctx.universe.size());
      for (std::uint32_t mask = 1; mask + 1 < (1u << n); ++mask) {
        Hypothesis base;
        for (int i = 0; i < n; ++i) {
          if (mask & (1u << i)) {
            base.targets.push_back(ctx.universe[static_cast<std::size_t>(i)]);
          }
        }
        pref_tuples([&](const std::vector<int>& prefs) {
          Hypothesis h = base;
          h.prefs = prefs;
          out.push_back(std::move(h));
        });
      }
      break;
    }
    case TaskFamily::preference_based: {
      pref_tuples([&](const std::vector<int>& prefs) {
        Hypothesis h;
        h.targets = ctx.universe;
        h.prefs = prefs;
        out.push_back(std::move(h));
      });
      break;
    }
    default: {
      for (int oid : ctx.universe) out.push_back(Hypothesis{{oid}, {}});
      break;
    }
  }
  return out;
}

inline Hypothesis truth_hypothesis(const HypothesisContext& ctx) {
  const EpisodeSpec& spec = *ctx.spec;
  Hypothesis h;
  if (ctx.family == TaskFamily::clean_clutter) {
    h.targets = spec.clutter;
    std::sort(h.targets.begin(), h.targets.end());
  } else if (ctx.family == TaskFamily::preference_based) {
    h.targets = ctx.universe;
  } else {
    h.targets = {spec.targets.at(0).object};
  }
  for (Category c : ctx.pref_categories) {
    const auto loc = spec.preference_for(c);
    if (!loc) throw std::logic_error("ground truth lacks a preference");
    const auto it =
        std::find(ctx.pref_options.begin(), ctx.pref_options.end(), *loc);
    if (it == ctx.pref_options.end()) {
      throw std::logic_error("ground-truth preference outside option set");
    }
    h.prefs.push_back(static_cast<int>(it - ctx.pref_options.begin()));
  }
  return h;
}

// ---------------------------------------------------------------------------
// The answering oracle.
//
// answer_under_hypothesis() treats `h` as if it were the ground truth; the
// real oracle is the same function applied to the true hypothesis. Template
// semantics:
//   1 yes iff >=1 target currently at the referenced place
//   2 yes iff the named instance is a target
//   3 yes iff >=1 target has the named size
//   4 current location of the lowest-id target matching the category
//   5 color of the lowest-id target matching the category
//   6 "the <size> <color> <category> on the <location>" for that target
//   7 yes iff the named instance is clutter
//   8 yes iff every instance of the category now on the source is clutter
//   9 the preferred location for the named instance's category
// Unresolvable references answer "no such object".

struct QA {
  Question question;
  Answer answer;
  bool operator==(const QA&) const = default;
};

// Lowest-id target of a hypothesis matching a (possibly color-qualified)
// category reference, or -1.
inline int lowest_target_matching(const Scene& scene,
                                  const std::vector<int>& targets,
                                  const CategoryRef& c) {
  int best = -1;
  for (int oid : targets) {
    const ObjectInstance& o = scene.object(oid);
    if (o.category == c.category && (!c.color || o.color == *c.color)) {
      if (best < 0 || oid < best) best = oid;
    }
  }
  return best;
}

inline Answer answer_under_hypothesis(const Question& q, const Hypothesis& h,
                                      const HypothesisContext& ctx,
                                      const std::vector<Location>& locations,
                                      const std::set<int>* seen,
                                      const ResolutionHints& hints) {
  const Scene& scene = *ctx.scene;
  const EpisodeSpec& spec = *ctx.spec;
  const auto& targets = h.targets;
  const auto is_target = [&](int oid) {
    return std::find(targets.begin(), targets.end(), oid) != targets.end();
  };
  const auto is_clutter = [&](int oid) {
    return ctx.family == TaskFamily::clean_clutter && is_target(oid);
  };
  const auto loc_of = [&](int oid) -> const Location& {
    return locations[static_cast<std::size_t>(oid)];
  };

  switch (q.tmpl) {
    case QuestionTemplate::on_receptacle: {
      const auto ref = resolve_receptacle_ref(scene, q.receptacle_ref);
      if (!ref) return no_such_object();
      bool on = false;
      for (int t : targets) on |= location_matches_ref(loc_of(t), *ref);
      return yes_no(on);
    }
    case QuestionTemplate::is_instance_target: {
      const auto oid =
          resolve_descriptor(scene, locations, q.descriptor, seen, hints);
      if (!oid) return no_such_object();
      return yes_no(is_target(*oid));
    }
    case QuestionTemplate::has_size: {
      bool any = false;
      for (int t : targets) any |= scene.object(t).size == q.size_word;
      return yes_no(any);
    }
    case QuestionTemplate::where_category: {
      const int oid = lowest_target_matching(scene, targets, q.category_ref);
      if (oid < 0) return no_such_object();
      return {AnswerKind::receptacle_name, location_label(scene, loc_of(oid))};
    }
    case QuestionTemplate::what_color: {
      const int oid = lowest_target_matching(scene, targets, q.category_ref);
      if (oid < 0) return no_such_object();
      return {AnswerKind::color_name,
              std::string(to_string(scene.object(oid).color))};
    }
    case QuestionTemplate::describe_category: {
      const int oid = lowest_target_matching(scene, targets, q.category_ref);
      if (oid < 0) return no_such_object();
      const ObjectInstance& o = scene.object(oid);
      return {AnswerKind::description,
              "the " + qualified_name(o) + " on the " +
                  location_label(scene, loc_of(oid))};
    }
    case QuestionTemplate::instance_clutter: {
      const auto oid =
          resolve_descriptor(scene, locations, q.descriptor, seen, hints);
      if (!oid) return no_such_object();
      return yes_no(is_clutter(*oid));
    }
    case QuestionTemplate::category_clutter: {
      if (ctx.family != TaskFamily::clean_clutter) return yes_no(false);
      bool any = false;
      bool all = true;
      for (const auto& o : scene.objects) {
        if (o.category != q.category_ref.category) continue;
        if (q.category_ref.color && o.color != *q.category_ref.color) continue;
        if (loc_of(o.id).receptacle != spec.source_receptacle) continue;
        any = true;
        all &= is_clutter(o.id);
      }
      if (!any) return no_such_object();
      return yes_no(all);
    }
    case QuestionTemplate::where_place: {
      if (!resolve_receptacle_ref(scene, q.receptacle_ref)) {
        return no_such_object();
      }
      const auto oid =
          resolve_descriptor(scene, locations, q.descriptor, seen, hints);
      if (!oid) return no_such_object();
      if (is_identification(ctx.family)) {
        // No hidden preferences: everything goes to the instructed place.
        return {AnswerKind::receptacle_name,
                location_label(scene, spec.destination)};
      }
      const auto pref = ctx.pref_of(h, scene.object(*oid).category);
      if (!pref) return no_such_object();
      return {AnswerKind::receptacle_name, location_label(scene, *pref)};
    }
  }
  throw std::invalid_argument("bad question template");
}

// ---------------------------------------------------------------------------
// Hypothesis-set state and refinement.

struct HypothesisState {
  std::vector<Hypothesis> alive;

  bool operator==(const HypothesisState&) const = default;
  std::size_t count() const { return alive.size(); }

  // All hypotheses agree on the full hidden state.
  bool fully_resolved() const {
    for (const auto& h : alive) {
      if (!(h == alive.front())) return false;
    }
    return !alive.empty();
  }
};

inline HypothesisState initial_state(const HypothesisContext& ctx) {
  return {enumerate_hypotheses(ctx)};
}

// Object ids that are a target under at least one live hypothesis.
inline std::set<int> possible_targets(const HypothesisState& st) {
  std::set<int> out;
  for (const auto& h : st.alive) out.insert(h.targets.begin(), h.targets.end());
  return out;
}

// Objects whose clutter/target membership is still undetermined.
inline std::set<int> unresolved_members(const HypothesisState& st) {
  std::set<int> maybe = possible_targets(st);
  std::set<int> out;
  for (int oid : maybe) {
    for (const auto& h : st.alive) {
      if (std::find(h.targets.begin(), h.targets.end(), oid) ==
          h.targets.end()) {
        out.insert(oid);
        break;
      }
    }
  }
  return out;
}

// Categories whose preferred placement is still undetermined.
inline std::set<Category> unknown_preferences(const HypothesisState& st,
                                              const HypothesisContext& ctx) {
  std::set<Category> out;
  for (std::size_t i = 0; i < ctx.pref_categories.size(); ++i) {
    for (const auto& h : st.alive) {
      if (h.prefs[i] != st.alive.front().prefs[i]) {
        out.insert(ctx.pref_categories[i]);
        break;
      }
    }
  }
  return out;
}

// Drops every hypothesis inconsistent with one observed answer. Monotone:
// the surviving set is always a subset, and a truthful answer never empties
// it. Reference resolution does not depend on the hypothesis, so it is done
// once up front; per-hypothesis checks are direct predicates on the
// hypothesis rather than full answer re-simulation.
inline HypothesisState refine(const HypothesisState& st, const Question& q,
                              const Answer& a, const HypothesisContext& ctx,
                              const std::vector<Location>& locations,
                              const std::set<int>* seen,
                              const ResolutionHints& hints) {
  const Scene& scene = *ctx.scene;
  const bool said_yes = a.kind == AnswerKind::yes;
  const auto loc_of = [&](int oid) -> const Location& {
    return locations[static_cast<std::size_t>(oid)];
  };
  const auto filtered = [&](auto&& keep) {
    HypothesisState out;
    for (const auto& h : st.alive) {
      if (keep(h)) out.alive.push_back(h);
    }
    // An answer from the truthful oracle cannot eliminate everything; if a
    // divergent external judge does, keep the state unchanged rather than
    // corrupting downstream consumers.
    return out.alive.empty() ? st : out;
  };
  const auto contains = [](const std::vector<int>& v, int x) {
    return std::find(v.begin(), v.end(), x) != v.end();
  };
  // Wh-answers compare against the location/color/description the hypothesis
  // would have produced; "no such object" replies carry no hypothesis
  // information for resolvable slots only when the slot itself failed.
  const auto wh_value_matches = [&](int oid, const std::string& value) {
    return oid >= 0 && a.text == value;
  };

  switch (q.tmpl) {
    case QuestionTemplate::on_receptacle: {
      const auto ref = resolve_receptacle_ref(scene, q.receptacle_ref);
      if (!ref) return st;
      return filtered([&](const Hypothesis& h) {
        bool on = false;
        for (int t : h.targets) on |= location_matches_ref(loc_of(t), *ref);
        return on == said_yes;
      });
    }
    case QuestionTemplate::is_instance_target: {
      const auto oid =
          resolve_descriptor(scene, locations, q.descriptor, seen, hints);
      if (!oid) return st;
      return filtered(
          [&](const Hypothesis& h) { return contains(h.targets, *oid) == said_yes; });
    }
    case QuestionTemplate::has_size: {
      return filtered([&](const Hypothesis& h) {
        bool any = false;
        for (int t : h.targets) any |= scene.object(t).size == q.size_word;
        return any == said_yes;
      });
    }
    case QuestionTemplate::where_category: {
      return filtered([&](const Hypothesis& h) {
        const int oid = lowest_target_matching(scene, h.targets, q.category_ref);
        if (a == no_such_object()) return oid < 0;
        return wh_value_matches(oid, oid < 0 ? std::string()
                                             : location_label(scene, loc_of(oid)));
      });
    }
    case QuestionTemplate::what_color: {
      return filtered([&](const Hypothesis& h) {
        const int oid = lowest_target_matching(scene, h.targets, q.category_ref);
        if (a == no_such_object()) return oid < 0;
        return wh_value_matches(
            oid, oid < 0 ? std::string()
                         : std::string(to_string(scene.object(oid).color)));
      });
    }
    case QuestionTemplate::describe_category: {
      return filtered([&](const Hypothesis& h) {
        const int oid = lowest_target_matching(scene, h.targets, q.category_ref);
        if (a == no_such_object()) return oid < 0;
        if (oid < 0) return false;
        const ObjectInstance& o = scene.object(oid);
        return a.text == "the " + qualified_name(o) + " on the " +
                             location_label(scene, loc_of(oid));
      });
    }
    case QuestionTemplate::instance_clutter: {
      if (ctx.family != TaskFamily::clean_clutter) return st;
      const auto oid =
          resolve_descriptor(scene, locations, q.descriptor, seen, hints);
      if (!oid) return st;
      return filtered(
          [&](const Hypothesis& h) { return contains(h.targets, *oid) == said_yes; });
    }
    case QuestionTemplate::category_clutter: {
      if (ctx.family != TaskFamily::clean_clutter) return st;
      std::vector<int> insts;
      for (const auto& o : scene.objects) {
        if (o.category != q.category_ref.category) continue;
        if (q.category_ref.color && o.color != *q.category_ref.color) continue;
        if (loc_of(o.id).receptacle != ctx.spec->source_receptacle) continue;
        insts.push_back(o.id);
      }
      if (insts.empty()) return st;
      return filtered([&](const Hypothesis& h) {
        bool all = true;
        for (int oid : insts) all &= contains(h.targets, oid);
        return all == said_yes;
      });
    }
    case QuestionTemplate::where_place: {
      if (is_identification(ctx.family)) return st;
      if (!resolve_receptacle_ref(scene, q.receptacle_ref)) return st;
      const auto oid =
          resolve_descriptor(scene, locations, q.descriptor, seen, hints);
      if (!oid) return st;
      const Category cat = scene.object(*oid).category;
      return filtered([&](const Hypothesis& h) {
        const auto pref = ctx.pref_of(h, cat);
        if (!pref) return true;  // category carries no preference: no info
        return a.text == location_label(scene, *pref);
      });
    }
  }
  return st;
}

// ---------------------------------------------------------------------------
// Usefulness judgment.

// A question must be grounded before it can be useful: instance slots must
// name an object the asker has already seen; category slots must stay within
// the categories the episode is actually about.
inline bool is_grounded(const Question& q, const HypothesisContext& ctx,
                        const std::vector<Location>& locations,
                        const std::set<int>& seen,
                        const ResolutionHints& hints) {
  const Scene& scene = *ctx.scene;
  const auto category_relevant = [&](const CategoryRef& c) {
    if (is_identification(ctx.family)) {
      if (!ctx.spec->instr_category || c.category != *ctx.spec->instr_category) {
        return false;
      }
      if (c.color) {
        for (int oid : ctx.universe) {
          if (scene.object(oid).color == *c.color) return true;
        }
        return false;
      }
      return true;
    }
    for (std::size_t i = 0; i < ctx.pref_categories.size(); ++i) {
      if (ctx.pref_categories[i] == c.category) return true;
    }
    return false;
  };
  switch (q.tmpl) {
    case QuestionTemplate::on_receptacle:
      return resolve_receptacle_ref(scene, q.receptacle_ref).has_value();
    case QuestionTemplate::is_instance_target:
    case QuestionTemplate::instance_clutter:
      return resolve_descriptor(scene, locations, q.descriptor, &seen, hints)
          .has_value();
    case QuestionTemplate::has_size:
      return true;
    case QuestionTemplate::where_category:
    case QuestionTemplate::what_color:
    case QuestionTemplate::describe_category:
      return category_relevant(q.category_ref);
    case QuestionTemplate::category_clutter: {
      if (ctx.family != TaskFamily::clean_clutter) return false;
      for (int oid : ctx.universe) {
        const ObjectInstance& o = scene.object(oid);
        if (!seen.count(oid) || o.category != q.category_ref.category) continue;
        if (q.category_ref.color && o.color != *q.category_ref.color) continue;
        return true;
      }
      return false;
    }
    case QuestionTemplate::where_place:
      return resolve_receptacle_ref(scene, q.receptacle_ref).has_value() &&
             resolve_descriptor(scene, locations, q.descriptor, &seen, hints)
                 .has_value();
  }
  return false;
}

// Useful = grounded and the truthful answer strictly shrinks the live
// hypothesis set. Repeats and zero-information questions fail the shrink
// test automatically.
inline bool is_useful(const Question& q, const Answer& truthful,
                      const HypothesisState& before,
                      const HypothesisContext& ctx,
                      const std::vector<Location>& locations,
                      const std::set<int>& seen, const ResolutionHints& hints) {
  if (!is_grounded(q, ctx, locations, seen, hints)) return false;
  const HypothesisState after =
      refine(before, q, truthful, ctx, locations, &seen, hints);
  return after.count() < before.count();
}

// ---------------------------------------------------------------------------
// Grammar enumeration.

// Shortest descriptor that names this object unambiguously within the scene
// (size is added only when a same-colored sibling exists).
inline ObjectDescriptor descriptor_for(const Scene& scene,
                                       const ObjectInstance& o) {
  ObjectDescriptor d{std::nullopt, o.color, o.category};
  for (const auto& other : scene.objects) {
    if (other.id != o.id && other.color == o.color &&
        other.category == o.category) {
      d.size = o.size;
      break;
    }
  }
  return d;
}

inline std::vector<Category> categories_present(const Scene& scene) {
  std::vector<Category> cats;
  for (const auto& o : scene.objects) {
    if (std::find(cats.begin(), cats.end(), o.category) == cats.end()) {
      cats.push_back(o.category);
    }
  }
  return cats;
}

// Every question the grammar can instantiate over this scene, in a fixed
// canonical order (the policy's ask-action inventory and the K-search both
// index into it).
inline std::vector<Question> enumerate_questions(const Scene& scene) {
  std::vector<Question> out;
  Question q;
  q.tmpl = QuestionTemplate::on_receptacle;
  for (const auto& r : scene.receptacles) {
    q.receptacle_ref = r.name;
    out.push_back(q);
    for (const auto& part : r.sub_parts) {
      q.receptacle_ref = compartment_label(r, part);
      out.push_back(q);
    }
  }
  q = {};
  q.tmpl = QuestionTemplate::is_instance_target;
  for (const auto& o : scene.objects) {
    q.descriptor = descriptor_for(scene, o);
    out.push_back(q);
  }
  q = {};
  q.tmpl = QuestionTemplate::has_size;
  for (Size s : {Size::small, Size::large}) {
    q.size_word = s;
    out.push_back(q);
  }
  const std::vector<Category> cats = categories_present(scene);
  for (QuestionTemplate t :
       {QuestionTemplate::where_category, QuestionTemplate::what_color,
        QuestionTemplate::describe_category}) {
    q = {};
    q.tmpl = t;
    for (Category c : cats) {
      q.category_ref = CategoryRef{std::nullopt, c};
      out.push_back(q);
    }
  }
  q = {};
  q.tmpl = QuestionTemplate::instance_clutter;
  for (const auto& o : scene.objects) {
    q.descriptor = descriptor_for(scene, o);
    out.push_back(q);
  }
  q = {};
  q.tmpl = QuestionTemplate::category_clutter;
  for (Category c : cats) {
    q.category_ref = CategoryRef{std::nullopt, c};
    out.push_back(q);
  }
  q = {};
  q.tmpl = QuestionTemplate::where_place;
  for (const auto& r : scene.receptacles) {
    if (r.kind != ReceptacleKind::articulated) continue;
    q.receptacle_ref = r.name;
    for (const auto& o : scene.objects) {
      q.descriptor = descriptor_for(scene, o);
      out.push_back(q);
    }
  }
  return out;
}

// Tie-break order for equally short question strategies: informative
// wh-questions about the instruction's category first, then yes/no probes,
// then clutter/preference templates.
inline int question_priority(QuestionTemplate t) {
  switch (t) {
    case QuestionTemplate::what_color: return 0;
    case QuestionTemplate::has_size: return 1;
    case QuestionTemplate::where_category: return 2;
    case QuestionTemplate::on_receptacle: return 3;
    case QuestionTemplate::is_instance_target: return 4;
    case QuestionTemplate::describe_category: return 5;
    case QuestionTemplate::instance_clutter: return 6;
    case QuestionTemplate::category_clutter: return 7;
    case QuestionTemplate::where_place: return 8;
  }
  return 9;
}

}  // namespace clarify
