#pragma once

// Procedural scene and episode generation, the minimum-question planner that
// fixes each episode's K, and dataset serialization (manifest + scenes +
// per-split episode JSONL).

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "clarify/dialogue.hpp"
#include "clarify/rng.hpp"
#include "clarify/scene.hpp"
#include "clarify/task.hpp"
#include "clarify/vocab.hpp"

namespace clarify {

// ---------------------------------------------------------------------------
// Scene generation.
//
// Two scene archetypes: "identification" scenes carry the object bundles the
// single-target families disambiguate over (color-distinct candidates,
// identical twins on different receptacles, a size pair, a mixed bundle, one
// fully unique object); "household" scenes carry a multi-object cluster on a
// source receptacle plus scattered kitchen goods for the clutter/preference
// families. Every category in a household scene has exactly one instance so
// object descriptors always resolve uniquely.

enum class SceneBundle { identification, household };

inline std::string_view to_string(SceneBundle b) {
  return b == SceneBundle::identification ? "identification" : "household";
}

struct SceneConfig {
  int id = 0;
  SceneBundle bundle = SceneBundle::identification;
  int difficulty = 0;  // 0 = training scale, 1 = escalated candidate counts
  std::uint64_t seed = 0;
};

namespace detail {

struct ArticulatedKind {
  std::string name;
  std::vector<std::string> parts;
};

inline const std::vector<std::string>& surface_pool() {
  static const std::vector<std::string> pool = {
      "light table", "dark table", "chair", "sofa",     "tv stand",
      "sink",        "desk",       "shelf", "armchair", "bench"};
  return pool;
}

inline const std::vector<ArticulatedKind>& articulated_pool() {
  static const std::vector<ArticulatedKind> pool = {
      {"kitchen counter", {"left drawer", "right drawer", "top drawer"}},
      {"cabinet", {"top cabinet", "bottom cabinet"}},
      {"dresser", {"upper drawer", "lower drawer"}},
  };
  return pool;
}

}  // namespace detail

inline Scene generate_scene(const SceneConfig& cfg) {
  Rng rng(hash_combine64(cfg.seed, static_cast<std::uint64_t>(cfg.id) + 101));
  const bool household = cfg.bundle == SceneBundle::household;

  Scene s;
  s.id = cfg.id;
  s.rooms = {{0, "kitchen"}, {1, "living room"}};

  auto surface_names = detail::surface_pool();
  rng.shuffle(surface_names);
  const int n_surfaces =
      household ? 4 : (cfg.difficulty > 0 ? 7 : 5 + rng.uniform_int(0, 1));

  int rid = 0;
  for (int i = 0; i < n_surfaces; ++i) {
    s.receptacles.push_back({rid++, surface_names[static_cast<std::size_t>(i)],
                             ReceptacleKind::surface, {},
                             rng.uniform_int(0, 1)});
  }
  const auto& arts = detail::articulated_pool();
  if (household) {
    auto counter_parts = arts[0].parts;
    counter_parts.resize(static_cast<std::size_t>(2 + cfg.difficulty));
    s.receptacles.push_back({rid++, arts[0].name, ReceptacleKind::articulated,
                             counter_parts, 0});
    s.receptacles.push_back({rid++, arts[1].name, ReceptacleKind::articulated,
                             arts[1].parts, rng.uniform_int(0, 1)});
  } else {
    const auto& kind =
        arts[static_cast<std::size_t>(rng.uniform_int(0, 2))];
    auto parts = kind.parts;
    parts.resize(2);
    s.receptacles.push_back(
        {rid++, kind.name, ReceptacleKind::articulated, parts, 0});
  }

  std::vector<int> order(static_cast<std::size_t>(rid));
  for (int i = 0; i < rid; ++i) order[static_cast<std::size_t>(i)] = i;
  rng.shuffle(order);
  for (int i = 0; i + 1 < rid; ++i) {
    s.nav_edges.emplace_back(order[static_cast<std::size_t>(i)],
                             order[static_cast<std::size_t>(i + 1)]);
  }
  if (rid >= 6) s.nav_edges.emplace_back(order[0], order[static_cast<std::size_t>(rid - 1)]);

  // Surface capacity of two keeps identification scenes free of accidental
  // three-object clusters (which would read as a clutter source).
  std::vector<int> cap(static_cast<std::size_t>(rid), 0);
  for (const auto& r : s.receptacles) {
    if (r.kind == ReceptacleKind::surface) cap[static_cast<std::size_t>(r.id)] = 2;
  }
  const auto free_surface = [&]() {
    std::vector<int> pool;
    for (const auto& r : s.receptacles) {
      if (cap[static_cast<std::size_t>(r.id)] > 0) pool.push_back(r.id);
    }
    const int r = rng.pick(pool);
    --cap[static_cast<std::size_t>(r)];
    return Location{r, ""};
  };
  int oid = 0;
  const auto add = [&](Category c, Color col, Size sz, const Location& loc) {
    s.objects.push_back({oid++, c, col, sz, loc});
  };

  if (household) {
    const int source = rng.uniform_int(0, n_surfaces - 1);
    cap[static_cast<std::size_t>(source)] = 0;

    std::vector<Category> others;
    std::vector<Category> utensils;
    for (int c = 0; c < kCategoryCount; ++c) {
      const auto cat = static_cast<Category>(c);
      (is_utensil(cat) ? utensils : others).push_back(cat);
    }
    rng.shuffle(others);
    rng.shuffle(utensils);

    const int n_cluster = 3 + cfg.difficulty;
    for (int i = 0; i < n_cluster; ++i) {
      const Category c = others[static_cast<std::size_t>(i)];
      const Color col = rng.pick(colors_of(c));
      add(c, col, rng.uniform_int(0, 1) ? Size::large : Size::small,
          {source, ""});
    }
    const int n_utensils =
        cfg.difficulty > 0 ? 5 : 2 + rng.uniform_int(0, 1);
    for (int i = 0; i < n_utensils; ++i) {
      const Category c = utensils[static_cast<std::size_t>(i)];
      const Color col = rng.pick(colors_of(c));
      add(c, col, rng.uniform_int(0, 1) ? Size::large : Size::small,
          free_surface());
    }
  } else {
    std::vector<Category> cats;
    for (int c = 0; c < kCategoryCount; ++c) {
      cats.push_back(static_cast<Category>(c));
    }
    rng.shuffle(cats);
    const auto take = [&](int min_colors) {
      for (auto it = cats.begin(); it != cats.end(); ++it) {
        if (static_cast<int>(colors_of(*it).size()) >= min_colors) {
          const Category c = *it;
          cats.erase(it);
          return c;
        }
      }
      throw std::logic_error("vocabulary cannot fill the scene bundles");
    };
    const int n_cands = 2 + cfg.difficulty;
    const Category attr_cat = take(n_cands);
    const Category spatial_cat = take(1);
    const Category size_cat = take(1);
    const Category comp_cat = take(2);
    const Category unique_cat = take(1);

    // Color-distinct candidates of one size.
    auto attr_cols = colors_of(attr_cat);
    rng.shuffle(attr_cols);
    for (int i = 0; i < n_cands; ++i) {
      add(attr_cat, attr_cols[static_cast<std::size_t>(i)], Size::small,
          free_surface());
    }
    // Identical twins, necessarily on distinct receptacles.
    {
      const Color col = rng.pick(colors_of(spatial_cat));
      std::vector<int> pool;
      for (const auto& r : s.receptacles) {
        if (cap[static_cast<std::size_t>(r.id)] > 0) pool.push_back(r.id);
      }
      rng.shuffle(pool);
      for (int i = 0; i < n_cands; ++i) {
        const int r = pool[static_cast<std::size_t>(i)];
        --cap[static_cast<std::size_t>(r)];
        add(spatial_cat, col, Size::small, {r, ""});
      }
    }
    // A size pair sharing one receptacle.
    {
      const Color col = rng.pick(colors_of(size_cat));
      std::vector<int> pool;
      for (const auto& r : s.receptacles) {
        if (cap[static_cast<std::size_t>(r.id)] >= 2) pool.push_back(r.id);
      }
      const int r = rng.pick(pool);
      cap[static_cast<std::size_t>(r)] -= 2;
      add(size_cat, col, Size::small, {r, ""});
      add(size_cat, col, Size::large, {r, ""});
    }
    // Mixed bundle: two colors crossed with two sizes.
    {
      auto cols = colors_of(comp_cat);
      rng.shuffle(cols);
      add(comp_cat, cols[0], Size::small, free_surface());
      add(comp_cat, cols[0], Size::large, free_surface());
      add(comp_cat, cols[1], Size::small, free_surface());
      if (cfg.difficulty > 0) add(comp_cat, cols[1], Size::large, free_surface());
    }
    // One fully unique object, sometimes tucked inside a compartment.
    {
      const Color col = rng.pick(colors_of(unique_cat));
      const Size sz = rng.uniform_int(0, 1) ? Size::large : Size::small;
      if (rng.uniform_int(0, 3) == 0) {
        const auto& art = s.receptacles.back();
        const auto& part = art.sub_parts[static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<int>(art.sub_parts.size()) - 1))];
        add(unique_cat, col, sz, {art.id, part});
      } else {
        add(unique_cat, col, sz, free_surface());
      }
    }
  }

  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// Structural analysis: which families a scene can host, inferred from the
// object layout alone.

struct SceneSupport {
  std::optional<Category> attribute_category;      // >=2, same size, colors distinct
  std::optional<Category> spatial_category;        // >=2 identical, receptacles distinct
  std::optional<Category> size_category;           // exactly 2, same color, sizes differ
  std::optional<Category> compositional_category;  // >=3 mixing colors and sizes
  std::vector<Category> unique_categories;         // single-instance categories
  std::vector<Category> utensil_categories;        // kitchen goods present
  int utensil_instances = 0;
  int source_receptacle = -1;  // surface holding >=3 distinct-category objects
};

inline SceneSupport analyze_scene(const Scene& s) {
  SceneSupport sup;
  for (Category c : categories_present(s)) {
    std::vector<const ObjectInstance*> group;
    for (const auto& o : s.objects) {
      if (o.category == c) group.push_back(&o);
    }
    if (is_utensil(c)) {
      sup.utensil_categories.push_back(c);
      sup.utensil_instances += static_cast<int>(group.size());
    }
    if (group.size() == 1) {
      sup.unique_categories.push_back(c);
      continue;
    }
    std::set<Color> colors;
    std::set<Size> sizes;
    std::set<int> recs;
    for (const auto* o : group) {
      colors.insert(o->color);
      sizes.insert(o->size);
      recs.insert(o->location.receptacle);
    }
    if (!sup.attribute_category && colors.size() == group.size() &&
        sizes.size() == 1) {
      sup.attribute_category = c;
    } else if (!sup.spatial_category && colors.size() == 1 &&
               sizes.size() == 1 && recs.size() == group.size()) {
      sup.spatial_category = c;
    } else if (!sup.size_category && group.size() == 2 && colors.size() == 1 &&
               sizes.size() == 2 && recs.size() == 1) {
      sup.size_category = c;
    } else if (!sup.compositional_category && group.size() >= 3 &&
               colors.size() >= 2 && sizes.size() >= 2) {
      sup.compositional_category = c;
    }
  }
  for (const auto& r : s.receptacles) {
    if (r.kind != ReceptacleKind::surface) continue;
    std::set<Category> cats;
    int count = 0;
    for (const auto& o : s.objects) {
      if (o.location.receptacle == r.id) {
        cats.insert(o.category);
        ++count;
      }
    }
    if (count >= 3 && static_cast<int>(cats.size()) == count) {
      sup.source_receptacle = r.id;
      break;
    }
  }
  return sup;
}

inline bool has_articulated(const Scene& s) {
  for (const auto& r : s.receptacles) {
    if (r.kind == ReceptacleKind::articulated) return true;
  }
  return false;
}

inline bool supports(const Scene& s, const SceneSupport& sup, TaskFamily f) {
  switch (f) {
    case TaskFamily::no_ambiguity: return !sup.unique_categories.empty();
    case TaskFamily::attribute_recognition: return sup.attribute_category.has_value();
    case TaskFamily::spatial_reasoning: return sup.spatial_category.has_value();
    case TaskFamily::object_size: return sup.size_category.has_value();
    case TaskFamily::compositional: return sup.compositional_category.has_value();
    case TaskFamily::clean_clutter:
      return sup.source_receptacle >= 0 && has_articulated(s);
    case TaskFamily::preference_based:
      // Needs a real preference structure, and few enough goods to move that
      // the step limit stays comfortable.
      return sup.utensil_categories.size() >= 2 && sup.utensil_instances <= 6 &&
             has_articulated(s);
  }
  return false;
}

inline std::string_view support_requirement(TaskFamily f) {
  switch (f) {
    case TaskFamily::no_ambiguity:
      return "a category with exactly one instance";
    case TaskFamily::attribute_recognition:
      return "a same-size category with color-distinct instances";
    case TaskFamily::spatial_reasoning:
      return "identical instances spread over distinct receptacles";
    case TaskFamily::object_size:
      return "a same-color size pair on one receptacle";
    case TaskFamily::compositional:
      return "a category mixing colors and sizes across >=3 instances";
    case TaskFamily::clean_clutter:
      return "a surface holding >=3 distinct-category objects plus a "
             "compartmented receptacle";
    case TaskFamily::preference_based:
      return ">=2 kitchen-good categories (<=6 instances) plus a "
             "compartmented receptacle";
  }
  return "";
}

// ---------------------------------------------------------------------------
// Minimum-question planning.
//
// Answers are fixed by the ground truth, so refining with a question is a
// deterministic filter over the hypothesis set: the minimum number of
// questions is a shortest path from the initial set to a resolved one.
// Breadth-first search over the reachable sets with a visited memo gives the
// exact optimum; candidates are visited in question_priority() order so the
// returned plan is deterministic.

struct QuestionPlan {
  int k = 0;
  std::vector<Question> questions;
};

// Enough certainty to finish the episode: the clutter family does not need
// preferences of objects everyone agrees are staying put.
inline bool resolved_for_task(const HypothesisState& st,
                              const HypothesisContext& ctx) {
  if (st.alive.empty()) return false;
  if (ctx.family != TaskFamily::clean_clutter) return st.fully_resolved();
  if (!unresolved_members(st).empty()) return false;
  const auto unknown = unknown_preferences(st, ctx);
  for (int oid : st.alive.front().targets) {
    if (unknown.count(ctx.scene->object(oid).category)) return false;
  }
  return true;
}

inline QuestionPlan compute_question_plan(const Scene& scene,
                                          const EpisodeSpec& spec) {
  constexpr int kMaxPlanDepth = 8;
  const HypothesisContext ctx = make_hypothesis_context(scene, spec);
  const Hypothesis truth = truth_hypothesis(ctx);
  const std::vector<Location> locations = scene.initial_locations();
  std::set<int> seen;
  for (const auto& o : scene.objects) seen.insert(o.id);
  const ResolutionHints hints;

  const std::vector<Hypothesis> all = enumerate_hypotheses(ctx);
  HypothesisState root{all};
  if (resolved_for_task(root, ctx)) return {};

  std::vector<Question> inventory = enumerate_questions(scene);
  std::stable_sort(inventory.begin(), inventory.end(),
                   [](const Question& a, const Question& b) {
                     return question_priority(a.tmpl) < question_priority(b.tmpl);
                   });

  struct Cand {
    Question q;
    Answer a;
  };
  std::vector<Cand> cands;
  for (const auto& q : inventory) {
    if (!is_grounded(q, ctx, locations, seen, hints)) continue;
    cands.push_back({q, answer_under_hypothesis(q, truth, ctx, locations,
                                                &seen, hints)});
  }

  // Refinement is a per-hypothesis filter and the truthful answer is fixed,
  // so each question's whole effect is one constant keep-set. Sets become
  // bitmasks and applying a question becomes a bitwise AND; the truth bit
  // survives every mask, so intersections never go empty.
  const std::size_t n = all.size();
  const std::size_t words = (n + 63) / 64;
  using Bits = std::vector<std::uint64_t>;
  std::vector<Bits> keep;
  std::vector<const Question*> keep_q;
  for (const auto& c : cands) {
    const HypothesisState after =
        refine(root, c.q, c.a, ctx, locations, &seen, hints);
    if (after.count() == n) continue;  // cannot shrink this set or any subset
    Bits mask(words, 0);
    std::size_t j = 0;
    for (const auto& h : after.alive) {
      while (!(all[j] == h)) ++j;  // survivors are a subsequence
      mask[j >> 6] |= 1ULL << (j & 63);
      ++j;
    }
    keep.push_back(std::move(mask));
    keep_q.push_back(&c.q);
  }

  std::map<Category, std::size_t> pref_dim;
  for (std::size_t i = 0; i < ctx.pref_categories.size(); ++i) {
    pref_dim[ctx.pref_categories[i]] = i;
  }
  const auto resolved_bits = [&](const Bits& b) {
    int first = -1;
    for (std::size_t w = 0; w < words; ++w) {
      std::uint64_t bits = b[w];
      while (bits) {
        const int i = static_cast<int>(w * 64) + std::countr_zero(bits);
        bits &= bits - 1;
        if (first < 0) {
          first = i;
          if (ctx.family != TaskFamily::clean_clutter) continue;
        }
        const auto& h = all[static_cast<std::size_t>(i)];
        const auto& ref = all[static_cast<std::size_t>(first)];
        if (ctx.family != TaskFamily::clean_clutter) {
          if (!(h == ref)) return false;
          continue;
        }
        if (h.targets != ref.targets) return false;
        for (const int oid : ref.targets) {
          const std::size_t d = pref_dim.at(ctx.scene->object(oid).category);
          if (h.prefs[d] != ref.prefs[d]) return false;
        }
      }
    }
    return first >= 0;
  };

  Bits root_bits(words, 0);
  for (std::size_t i = 0; i < n; ++i) root_bits[i >> 6] |= 1ULL << (i & 63);

  struct Node {
    Bits b;
    std::vector<int> plan;
  };
  std::deque<Node> queue;
  std::set<Bits> visited{root_bits};
  queue.push_back({std::move(root_bits), {}});
  while (!queue.empty()) {
    Node node = std::move(queue.front());
    queue.pop_front();
    if (static_cast<int>(node.plan.size()) >= kMaxPlanDepth) continue;
    for (int qi = 0; qi < static_cast<int>(keep.size()); ++qi) {
      const Bits& mask = keep[static_cast<std::size_t>(qi)];
      Bits next(words);
      bool shrunk = false;
      for (std::size_t w = 0; w < words; ++w) {
        next[w] = node.b[w] & mask[w];
        shrunk |= next[w] != node.b[w];
      }
      if (!shrunk) continue;
      std::vector<int> plan = node.plan;
      plan.push_back(qi);
      if (resolved_bits(next)) {
        QuestionPlan result;
        result.k = static_cast<int>(plan.size());
        for (const int p : plan) {
          result.questions.push_back(*keep_q[static_cast<std::size_t>(p)]);
        }
        return result;
      }
      if (visited.insert(next).second) {
        queue.push_back({std::move(next), std::move(plan)});
      }
    }
  }
  throw std::runtime_error("no question plan resolves the episode within " +
                           std::to_string(kMaxPlanDepth) + " questions");
}

// ---------------------------------------------------------------------------
// Episode generation.

inline EpisodeSpec generate_episode(const Scene& scene, TaskFamily family,
                                    std::uint64_t seed, int id) {
  const SceneSupport sup = analyze_scene(scene);
  if (!supports(scene, sup, family)) {
    throw std::runtime_error(
        "scene " + std::to_string(scene.id) + " cannot host " +
        std::string(to_string(family)) + ": it lacks " +
        std::string(support_requirement(family)));
  }
  Rng rng(seed);
  EpisodeSpec e;
  e.id = id;
  e.scene_id = scene.id;
  e.family = family;
  e.seed = seed;

  const auto surfaces = [&]() {
    std::vector<int> out;
    for (const auto& r : scene.receptacles) {
      if (r.kind == ReceptacleKind::surface) out.push_back(r.id);
    }
    return out;
  }();

  switch (family) {
    case TaskFamily::clean_clutter: {
      e.source_receptacle = sup.source_receptacle;
      std::vector<int> cluster;
      for (const auto& o : scene.objects) {
        if (o.location.receptacle == e.source_receptacle) {
          cluster.push_back(o.id);
        }
      }
      const int n = static_cast<int>(cluster.size());
      const std::uint32_t mask = static_cast<std::uint32_t>(
          rng.uniform_int(1, (1 << n) - 2));
      for (int i = 0; i < n; ++i) {
        if (mask & (1u << i)) e.clutter.push_back(cluster[static_cast<std::size_t>(i)]);
      }
      const auto options = detail::all_compartments(scene);
      for (int oid : cluster) {
        const Category c = scene.object(oid).category;
        if (!e.preference_for(c)) e.preferences.push_back({c, rng.pick(options)});
      }
      for (int oid : e.clutter) {
        e.targets.push_back(
            {oid, *e.preference_for(scene.object(oid).category)});
      }
      e.instruction = "Clear the clutter from the " +
                      scene.receptacle(e.source_receptacle).name + ".";
      break;
    }
    case TaskFamily::preference_based: {
      std::vector<int> arts;
      for (const auto& r : scene.receptacles) {
        if (r.kind == ReceptacleKind::articulated) arts.push_back(r.id);
      }
      const Receptacle& dest = scene.receptacle(rng.pick(arts));
      e.destination = {dest.id, ""};
      for (Category c : sup.utensil_categories) {
        e.preferences.push_back({c, {dest.id, rng.pick(dest.sub_parts)}});
      }
      for (const auto& o : scene.objects) {
        if (is_utensil(o.category)) {
          e.targets.push_back({o.id, *e.preference_for(o.category)});
        }
      }
      e.instruction = "Move all the utensils to the " + dest.name + ".";
      break;
    }
    default: {
      Category cat;
      switch (family) {
        case TaskFamily::no_ambiguity: cat = rng.pick(sup.unique_categories); break;
        case TaskFamily::attribute_recognition: cat = *sup.attribute_category; break;
        case TaskFamily::spatial_reasoning: cat = *sup.spatial_category; break;
        case TaskFamily::object_size: cat = *sup.size_category; break;
        default: cat = *sup.compositional_category; break;
      }
      e.instr_category = cat;
      std::vector<const ObjectInstance*> cands;
      for (const auto& o : scene.objects) {
        if (o.category == cat) cands.push_back(&o);
      }
      if (family == TaskFamily::no_ambiguity ||
          family == TaskFamily::spatial_reasoning ||
          family == TaskFamily::object_size) {
        e.instr_color = cands.front()->color;
      }
      const ObjectInstance* target =
          cands[static_cast<std::size_t>(rng.uniform_int(
              0, static_cast<int>(cands.size()) - 1))];
      std::vector<int> pool;
      for (int r : surfaces) {
        bool occupied = false;
        for (const auto* c : cands) occupied |= c->location.receptacle == r;
        if (!occupied) pool.push_back(r);
      }
      if (pool.empty()) {
        for (int r : surfaces) {
          if (target->location.receptacle != r) pool.push_back(r);
        }
      }
      e.destination = {rng.pick(pool), ""};
      e.targets = {{target->id, e.destination}};
      std::string color_word =
          e.instr_color ? std::string(to_string(*e.instr_color)) + " " : "";
      e.instruction = "Bring the " + color_word +
                      std::string(to_string(cat)) + " and place it on the " +
                      scene.receptacle(e.destination.receptacle).name + ".";
      break;
    }
  }

  const QuestionPlan plan = compute_question_plan(scene, e);
  e.min_questions = plan.k;
  e.budget = plan.k;
  return e;
}

// ---------------------------------------------------------------------------
// Datasets.

struct DatasetConfig {
  std::string name = "household-clarify";
  std::uint64_t seed = 7;
  int train_scenes = 16;  // split evenly between the two archetypes
  int eval_scenes = 4;    // one pair per archetype: held-out, then escalated
  int episodes_per_family = 300;
  int max_steps = 60;
};

inline Json dataset_config_to_json(const DatasetConfig& c) {
  return Json{{"name", c.name},
              {"seed", c.seed},
              {"train_scenes", c.train_scenes},
              {"eval_scenes", c.eval_scenes},
              {"episodes_per_family", c.episodes_per_family},
              {"max_steps", c.max_steps}};
}

inline DatasetConfig dataset_config_from_json(const Json& j) {
  DatasetConfig c;
  c.name = j.at("name").get<std::string>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.train_scenes = j.at("train_scenes").get<int>();
  c.eval_scenes = j.at("eval_scenes").get<int>();
  c.episodes_per_family = j.at("episodes_per_family").get<int>();
  c.max_steps = j.at("max_steps").get<int>();
  return c;
}

struct Dataset {
  DatasetConfig config;
  std::vector<Scene> scenes;
  std::map<std::string, std::vector<EpisodeSpec>> splits;
};

inline const std::vector<std::string>& dataset_split_names() {
  static const std::vector<std::string> names = {"train", "eval_unseen_scenes",
                                                 "eval_unseen_tasks"};
  return names;
}

inline std::uint64_t dataset_digest(const Dataset& d) {
  std::uint64_t h = fnv1a(dataset_config_to_json(d.config).dump());
  for (const auto& s : d.scenes) h = fnv1a(scene_to_json(s).dump(), h);
  for (const auto& name : dataset_split_names()) {
    const auto it = d.splits.find(name);
    if (it == d.splits.end()) continue;
    h = fnv1a(name, h);
    for (const auto& e : it->second) h = fnv1a(episode_to_json(e).dump(), h);
  }
  return h;
}

inline Dataset build_dataset(const DatasetConfig& cfg) {
  if (cfg.train_scenes < 2 || cfg.train_scenes % 2 != 0) {
    throw std::invalid_argument("train_scenes must be even and >= 2");
  }
  if (cfg.eval_scenes != 4) {
    throw std::invalid_argument(
        "eval_scenes must be 4: {held-out, escalated} x {identification, "
        "household}");
  }
  Dataset d;
  d.config = cfg;
  const int n_train = cfg.train_scenes;
  for (int i = 0; i < n_train; ++i) {
    d.scenes.push_back(generate_scene(
        {i,
         i < n_train / 2 ? SceneBundle::identification : SceneBundle::household,
         0, cfg.seed}));
  }
  const std::array<std::pair<SceneBundle, int>, 4> eval_plan = {{
      {SceneBundle::identification, 0},
      {SceneBundle::household, 0},
      {SceneBundle::identification, 1},
      {SceneBundle::household, 1},
  }};
  for (int j = 0; j < 4; ++j) {
    const auto& [bundle, difficulty] = eval_plan[static_cast<std::size_t>(j)];
    d.scenes.push_back(generate_scene({n_train + j, bundle, difficulty, cfg.seed}));
  }
  std::vector<SceneSupport> support;
  support.reserve(d.scenes.size());
  for (const auto& s : d.scenes) support.push_back(analyze_scene(s));

  struct SplitPool {
    std::string name;
    std::vector<int> scene_ids;
  };
  std::vector<SplitPool> pools;
  pools.push_back({"train", {}});
  for (int i = 0; i < n_train; ++i) pools.back().scene_ids.push_back(i);
  pools.push_back({"eval_unseen_scenes", {n_train, n_train + 1}});
  pools.push_back({"eval_unseen_tasks", {n_train + 2, n_train + 3}});

  for (std::size_t pi = 0; pi < pools.size(); ++pi) {
    std::vector<EpisodeSpec> episodes;
    for (int fi = 0; fi < kTaskFamilyCount; ++fi) {
      const auto family = static_cast<TaskFamily>(fi);
      std::vector<int> hosts;
      for (int sid : pools[pi].scene_ids) {
        if (supports(d.scenes[static_cast<std::size_t>(sid)],
                     support[static_cast<std::size_t>(sid)], family)) {
          hosts.push_back(sid);
        }
      }
      if (hosts.empty()) {
        throw std::runtime_error("split " + pools[pi].name +
                                 " has no scene hosting " +
                                 std::string(to_string(family)));
      }
      for (int i = 0; i < cfg.episodes_per_family; ++i) {
        const Scene& scene = d.scenes[static_cast<std::size_t>(
            hosts[static_cast<std::size_t>(i) % hosts.size()])];
        const std::uint64_t es = hash_combine64(
            hash_combine64(hash_combine64(cfg.seed, pi + 1),
                           static_cast<std::uint64_t>(fi) + 1),
            static_cast<std::uint64_t>(i) + 1);
        EpisodeSpec e = generate_episode(scene, family, es,
                                         static_cast<int>(episodes.size()));
        e.max_steps = cfg.max_steps;
        episodes.push_back(std::move(e));
      }
    }
    d.splits[pools[pi].name] = std::move(episodes);
  }
  return d;
}

inline void write_dataset(const std::filesystem::path& dir, const Dataset& d) {
  std::filesystem::create_directories(dir);
  {
    Json arr = Json::array();
    for (const auto& s : d.scenes) arr.push_back(scene_to_json(s));
    std::ofstream out(dir / "scenes.json");
    out << arr.dump(2) << "\n";
  }
  Json manifest;
  manifest["schema_version"] = 1;
  manifest["name"] = d.config.name;
  manifest["config"] = dataset_config_to_json(d.config);
  manifest["scenes_file"] = "scenes.json";
  manifest["digest"] = dataset_digest(d);
  manifest["splits"] = Json::object();
  for (const auto& name : dataset_split_names()) {
    const auto it = d.splits.find(name);
    if (it == d.splits.end()) continue;
    const std::string file = name + ".jsonl";
    manifest["splits"][name] =
        Json{{"file", file}, {"episodes", it->second.size()}};
    std::ofstream out(dir / file);
    for (const auto& e : it->second) out << episode_to_json(e).dump() << "\n";
  }
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << "\n";
}

inline Dataset read_dataset(const std::filesystem::path& dir) {
  const auto load = [&](const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw std::runtime_error("cannot open " + p.string());
    return Json::parse(in);
  };
  const Json manifest = load(dir / "manifest.json");
  if (manifest.at("schema_version").get<int>() != 1) {
    throw std::runtime_error("unsupported dataset schema version");
  }
  Dataset d;
  d.config = dataset_config_from_json(manifest.at("config"));
  d.config.name = manifest.at("name").get<std::string>();
  for (const auto& j :
       load(dir / manifest.at("scenes_file").get<std::string>())) {
    d.scenes.push_back(scene_from_json(j));
    d.scenes.back().validate();
  }
  for (const auto& [name, info] : manifest.at("splits").items()) {
    std::ifstream in(dir / info.at("file").get<std::string>());
    if (!in) throw std::runtime_error("cannot open split file for " + name);
    std::vector<EpisodeSpec> episodes;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      episodes.push_back(episode_from_json(Json::parse(line)));
    }
    if (episodes.size() != info.at("episodes").get<std::size_t>()) {
      throw std::runtime_error("episode count mismatch in split " + name);
    }
    d.splits[name] = std::move(episodes);
  }
  if (dataset_digest(d) != manifest.at("digest").get<std::uint64_t>()) {
    throw std::runtime_error("dataset digest mismatch: files were modified");
  }
  return d;
}

}  // namespace clarify
