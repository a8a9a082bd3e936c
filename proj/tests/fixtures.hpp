#pragma once

// Hand-built scene and episode fixtures shared across test binaries.

#include <set>

#include "clarify/scene.hpp"
#include "clarify/task.hpp"

namespace clarify::testing {

inline Scene small_scene() {
  Scene s;
  s.id = 0;
  s.rooms = {{0, "kitchen"}, {1, "living room"}};
  s.receptacles = {
      {0, "light table", ReceptacleKind::surface, {}, 1},
      {1, "dark table", ReceptacleKind::surface, {}, 1},
      {2, "sofa", ReceptacleKind::surface, {}, 1},
      {3, "kitchen counter",
       ReceptacleKind::articulated,
       {"left drawer", "right drawer"},
       0},
  };
  s.objects = {
      {0, Category::cup, Color::red, Size::small, {0, ""}},
      {1, Category::cup, Color::green, Size::small, {1, ""}},
      {2, Category::cup, Color::white, Size::small, {2, ""}},
      {3, Category::bowl, Color::red, Size::large, {2, ""}},
      {4, Category::toy, Color::black, Size::small, {2, ""}},
  };
  s.nav_edges = {{0, 1}, {1, 2}, {2, 3}};
  s.validate();
  return s;
}

// "Bring the cup": three seen cups of distinct colors, true target green.
inline EpisodeSpec cup_episode(const Scene& s) {
  EpisodeSpec e;
  e.id = 0;
  e.scene_id = s.id;
  e.family = TaskFamily::attribute_recognition;
  e.instruction = "Bring the cup and place it on the dark table.";
  e.instr_category = Category::cup;
  e.destination = {1, ""};
  e.targets = {{1, {1, ""}}};
  e.min_questions = 1;
  e.budget = 1;
  return e;
}

// "Clear the clutter from the sofa": white cup + red bowl + black toy on the
// sofa, bowl and toy are clutter, hidden preferences point at the drawers.
inline EpisodeSpec clutter_episode(const Scene&) {
  EpisodeSpec e;
  e.id = 1;
  e.scene_id = 0;
  e.family = TaskFamily::clean_clutter;
  e.instruction = "Clear the clutter from the sofa.";
  e.source_receptacle = 2;
  e.targets = {{3, {3, "left drawer"}}, {4, {3, "right drawer"}}};
  e.clutter = {3, 4};
  e.preferences = {
      {Category::cup, {3, "right drawer"}},
      {Category::bowl, {3, "left drawer"}},
      {Category::toy, {3, "right drawer"}},
  };
  return e;
}

// "Move all the utensils": the cups and the bowl, drawer per category.
inline EpisodeSpec pref_episode(const Scene&) {
  EpisodeSpec e;
  e.id = 2;
  e.scene_id = 0;
  e.family = TaskFamily::preference_based;
  e.instruction = "Move all the utensils to the kitchen counter.";
  e.destination = {3, ""};
  e.preferences = {
      {Category::cup, {3, "left drawer"}},
      {Category::bowl, {3, "right drawer"}},
  };
  e.targets = {
      {0, {3, "left drawer"}},
      {1, {3, "left drawer"}},
      {2, {3, "left drawer"}},
      {3, {3, "right drawer"}},
  };
  return e;
}

// Fully specified fetch: the lone red bowl, no question needed.
inline EpisodeSpec lone_bowl_episode(const Scene&) {
  EpisodeSpec e;
  e.id = 3;
  e.scene_id = 0;
  e.family = TaskFamily::no_ambiguity;
  e.instruction = "Bring the red bowl and place it on the light table.";
  e.instr_category = Category::bowl;
  e.instr_color = Color::red;
  e.destination = {0, ""};
  e.targets = {{3, {0, ""}}};
  return e;
}

inline std::set<int> all_seen(const Scene& s) {
  std::set<int> seen;
  for (const auto& o : s.objects) seen.insert(o.id);
  return seen;
}

}  // namespace clarify::testing
