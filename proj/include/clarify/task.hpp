#pragma once

// Episode definitions: the task families, the ground-truth targets and hidden
// preferences, and the JSON record format datasets are made of.

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "clarify/scene.hpp"

namespace clarify {

enum class TaskFamily {
  no_ambiguity,
  attribute_recognition,
  spatial_reasoning,
  object_size,
  compositional,
  clean_clutter,
  preference_based,
};
inline constexpr int kTaskFamilyCount = 7;

inline std::string_view to_string(TaskFamily f) {
  switch (f) {
    case TaskFamily::no_ambiguity: return "NoAmbiguity";
    case TaskFamily::attribute_recognition: return "AttributeRecognition";
    case TaskFamily::spatial_reasoning: return "SpatialReasoning";
    case TaskFamily::object_size: return "ObjectSize";
    case TaskFamily::compositional: return "Compositional";
    case TaskFamily::clean_clutter: return "CleanClutter";
    case TaskFamily::preference_based: return "PreferenceBased";
  }
  throw std::invalid_argument("bad task family");
}

inline std::optional<TaskFamily> task_family_from_string(std::string_view s) {
  for (int i = 0; i < kTaskFamilyCount; ++i) {
    const auto f = static_cast<TaskFamily>(i);
    if (to_string(f) == s) return f;
  }
  return std::nullopt;
}

// Identification families resolve a single hidden target; the multi-object
// families resolve clutter membership or per-category placement preferences.
inline bool is_identification(TaskFamily f) {
  return f != TaskFamily::clean_clutter && f != TaskFamily::preference_based;
}

struct TargetSpec {
  int object = -1;
  Location required;
  bool operator==(const TargetSpec&) const = default;
};

struct CategoryPreference {
  Category category = Category::cup;
  Location location;
  bool operator==(const CategoryPreference&) const = default;
};

struct EpisodeSpec {
  int id = 0;
  int scene_id = 0;
  TaskFamily family = TaskFamily::no_ambiguity;
  std::string instruction;

  // Structured instruction slots (what the user actually said).
  std::optional<Category> instr_category;  // identification families
  std::optional<Color> instr_color;        // fully/spatially specified ones
  Location destination;                    // identification drop-off / pref receptacle
  int source_receptacle = -1;              // CleanClutter

  // Ground truth.
  std::vector<TargetSpec> targets;                 // success condition
  std::vector<int> clutter;                        // CleanClutter membership
  std::vector<CategoryPreference> preferences;     // hidden placements

  int min_questions = 0;  // K
  int budget = 0;         // question budget B for this episode
  int max_steps = 60;
  std::uint64_t seed = 0;  // drives start receptacle etc.

  bool operator==(const EpisodeSpec&) const = default;

  bool is_clutter(int oid) const {
    for (int c : clutter) {
      if (c == oid) return true;
    }
    return false;
  }

  std::optional<Location> preference_for(Category c) const {
    for (const auto& p : preferences) {
      if (p.category == c) return p.location;
    }
    return std::nullopt;
  }
};

inline Json episode_to_json(const EpisodeSpec& e) {
  Json j;
  j["id"] = e.id;
  j["scene_id"] = e.scene_id;
  j["family"] = std::string(to_string(e.family));
  j["instruction"] = e.instruction;
  j["instr_category"] =
      e.instr_category ? Json(std::string(to_string(*e.instr_category))) : Json();
  j["instr_color"] =
      e.instr_color ? Json(std::string(to_string(*e.instr_color))) : Json();
  j["destination"] = location_to_string(e.destination);
  j["source_receptacle"] = e.source_receptacle;
  j["targets"] = Json::array();
  for (const auto& t : e.targets) {
    j["targets"].push_back(Json{{"object", t.object},
                                {"required", location_to_string(t.required)}});
  }
  j["clutter"] = e.clutter;
  j["preferences"] = Json::array();
  for (const auto& p : e.preferences) {
    j["preferences"].push_back(
        Json{{"category", std::string(to_string(p.category))},
             {"location", location_to_string(p.location)}});
  }
  j["min_questions"] = e.min_questions;
  j["budget"] = e.budget;
  j["max_steps"] = e.max_steps;
  j["seed"] = e.seed;
  return j;
}

inline EpisodeSpec episode_from_json(const Json& j) {
  EpisodeSpec e;
  e.id = j.at("id").get<int>();
  e.scene_id = j.at("scene_id").get<int>();
  const auto fam = task_family_from_string(j.at("family").get<std::string>());
  if (!fam) throw std::invalid_argument("unknown task family in episode JSON");
  e.family = *fam;
  e.instruction = j.at("instruction").get<std::string>();
  if (!j.at("instr_category").is_null()) {
    e.instr_category =
        category_from_string(j.at("instr_category").get<std::string>());
  }
  if (!j.at("instr_color").is_null()) {
    e.instr_color = color_from_string(j.at("instr_color").get<std::string>());
  }
  e.destination = location_from_string(j.at("destination").get<std::string>());
  e.source_receptacle = j.at("source_receptacle").get<int>();
  for (const auto& t : j.at("targets")) {
    e.targets.push_back(
        {t.at("object").get<int>(),
         location_from_string(t.at("required").get<std::string>())});
  }
  e.clutter = j.at("clutter").get<std::vector<int>>();
  for (const auto& p : j.at("preferences")) {
    const auto cat = category_from_string(p.at("category").get<std::string>());
    if (!cat) throw std::invalid_argument("unknown category in preferences");
    e.preferences.push_back(
        {*cat, location_from_string(p.at("location").get<std::string>())});
  }
  e.min_questions = j.at("min_questions").get<int>();
  e.budget = j.at("budget").get<int>();
  e.max_steps = j.at("max_steps").get<int>();
  e.seed = j.at("seed").get<std::uint64_t>();
  return e;
}

}  // namespace clarify
