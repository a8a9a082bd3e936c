#pragma once

// World model: rooms, receptacles (flat surfaces and articulated furniture
// with openable compartments), object instances, partial-observability state,
// and the text world-graph rendering agents consume.

#include <algorithm>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "clarify/vocab.hpp"

namespace clarify {

using Json = nlohmann::ordered_json;

struct Room {
  int id = 0;
  std::string name;
  bool operator==(const Room&) const = default;
};

enum class ReceptacleKind { surface, articulated };

inline std::string_view to_string(ReceptacleKind k) {
  return k == ReceptacleKind::surface ? "surface" : "articulated";
}

struct Receptacle {
  int id = 0;
  std::string name;
  ReceptacleKind kind = ReceptacleKind::surface;
  std::vector<std::string> sub_parts;  // compartment names, articulated only
  int room = 0;
  bool operator==(const Receptacle&) const = default;
};

// Where an object sits: a receptacle and, if that receptacle is articulated
// and the object is inside rather than on top, the compartment name.
struct Location {
  int receptacle = -1;  // -1 = held by the agent
  std::string compartment;

  bool operator==(const Location&) const = default;
  auto operator<=>(const Location&) const = default;
  bool in_compartment() const { return !compartment.empty(); }
  bool held() const { return receptacle < 0; }
};

struct ObjectInstance {
  int id = 0;
  Category category = Category::basket;
  Color color = Color::white;
  Size size = Size::small;
  Location location;
  bool operator==(const ObjectInstance&) const = default;
};

inline std::string display_name(const ObjectInstance& o) {
  return std::string(to_string(o.color)) + " " + std::string(to_string(o.category));
}

inline std::string qualified_name(const ObjectInstance& o) {
  return std::string(to_string(o.size)) + " " + display_name(o);
}

struct Scene {
  int id = 0;
  std::vector<Room> rooms;
  std::vector<Receptacle> receptacles;
  std::vector<ObjectInstance> objects;
  std::vector<std::pair<int, int>> nav_edges;

  bool operator==(const Scene&) const = default;

  const Receptacle& receptacle(int rid) const {
    for (const auto& r : receptacles) {
      if (r.id == rid) return r;
    }
    throw std::out_of_range("unknown receptacle id " + std::to_string(rid));
  }

  const ObjectInstance& object(int oid) const {
    for (const auto& o : objects) {
      if (o.id == oid) return o;
    }
    throw std::out_of_range("unknown object id " + std::to_string(oid));
  }

  std::optional<int> receptacle_by_name(std::string_view name) const {
    for (const auto& r : receptacles) {
      if (r.name == name) return r.id;
    }
    return std::nullopt;
  }

  bool has_compartment(int rid, std::string_view compartment) const {
    const auto& r = receptacle(rid);
    return std::find(r.sub_parts.begin(), r.sub_parts.end(), compartment) !=
           r.sub_parts.end();
  }

  // Initial locations, copied into the mutable episode state by the env.
  std::vector<Location> initial_locations() const {
    std::vector<Location> locs;
    locs.reserve(objects.size());
    for (const auto& o : objects) locs.push_back(o.location);
    return locs;
  }

  // Hop count between receptacles over the navigation graph.
  int hop_distance(int from, int to) const {
    if (from == to) return 0;
    std::map<int, int> dist;
    std::deque<int> frontier{from};
    dist[from] = 0;
    while (!frontier.empty()) {
      const int cur = frontier.front();
      frontier.pop_front();
      for (const auto& [a, b] : nav_edges) {
        const int nxt = (a == cur) ? b : (b == cur) ? a : -1;
        if (nxt < 0 || dist.count(nxt)) continue;
        dist[nxt] = dist[cur] + 1;
        if (nxt == to) return dist[nxt];
        frontier.push_back(nxt);
      }
    }
    throw std::runtime_error("navigation graph is not connected");
  }

  void validate() const;
};

// ---------------------------------------------------------------------------
// Partial observability.

struct VisibilityState {
  std::set<int> visited;                          // receptacle ids
  std::set<int> seen;                             // object ids
  std::set<std::pair<int, std::string>> opened;   // (receptacle, compartment)

  bool operator==(const VisibilityState&) const = default;
  bool has_seen(int oid) const { return seen.count(oid) > 0; }
  bool has_opened(int rid, const std::string& c) const {
    return opened.count({rid, c}) > 0;
  }
};

// Visiting a receptacle reveals its surface objects and the contents of any
// compartment already opened this episode. Contents of never-opened
// compartments stay hidden.
inline void mark_observed(const Scene& scene,
                          const std::vector<Location>& locations,
                          VisibilityState& vis, int rid) {
  scene.receptacle(rid);  // validates the id
  vis.visited.insert(rid);
  for (const auto& o : scene.objects) {
    const Location& loc = locations[static_cast<std::size_t>(o.id)];
    if (loc.receptacle != rid) continue;
    if (!loc.in_compartment() || vis.has_opened(rid, loc.compartment)) {
      vis.seen.insert(o.id);
    }
  }
}

// Opening a compartment reveals whatever is inside; once seen, always seen.
inline void mark_opened(const Scene& scene,
                        const std::vector<Location>& locations,
                        VisibilityState& vis, int rid,
                        const std::string& compartment) {
  if (!scene.has_compartment(rid, compartment)) {
    throw std::out_of_range("receptacle " + std::to_string(rid) +
                            " has no compartment '" + compartment + "'");
  }
  vis.opened.insert({rid, compartment});
  for (const auto& o : scene.objects) {
    const Location& loc = locations[static_cast<std::size_t>(o.id)];
    if (loc.receptacle == rid && loc.compartment == compartment) {
      vis.seen.insert(o.id);
    }
  }
}

// ---------------------------------------------------------------------------
// Text world graph.

struct TextWorldGraph {
  struct Entry {
    std::string label;                      // "dark table" or "left drawer of cabinet"
    std::vector<std::string> object_names;  // display names, insertion order
    bool operator==(const Entry&) const = default;
  };
  std::vector<std::string> receptacle_names;  // scene-definition order
  std::vector<Entry> entries;                 // only non-empty locations
  bool operator==(const TextWorldGraph&) const = default;
};

inline std::string compartment_label(const Receptacle& r,
                                     const std::string& compartment) {
  return compartment + " of " + r.name;
}

namespace detail {

inline TextWorldGraph build_graph(const Scene& scene,
                                  const std::vector<Location>& locations,
                                  const VisibilityState* vis) {
  TextWorldGraph g;
  for (const auto& r : scene.receptacles) g.receptacle_names.push_back(r.name);
  for (const auto& r : scene.receptacles) {
    TextWorldGraph::Entry surface{r.name, {}};
    for (const auto& o : scene.objects) {
      const Location& loc = locations[static_cast<std::size_t>(o.id)];
      if (loc.receptacle != r.id || loc.in_compartment()) continue;
      if (vis && !vis->has_seen(o.id)) continue;
      surface.object_names.push_back(display_name(o));
    }
    if (!surface.object_names.empty()) g.entries.push_back(std::move(surface));
    for (const auto& part : r.sub_parts) {
      TextWorldGraph::Entry inside{compartment_label(r, part), {}};
      for (const auto& o : scene.objects) {
        const Location& loc = locations[static_cast<std::size_t>(o.id)];
        if (loc.receptacle != r.id || loc.compartment != part) continue;
        if (vis && !vis->has_seen(o.id)) continue;
        inside.object_names.push_back(display_name(o));
      }
      if (!inside.object_names.empty()) g.entries.push_back(std::move(inside));
    }
  }
  return g;
}

}  // namespace detail

// Everything the agent has discovered so far.
inline TextWorldGraph visible_world_graph(const Scene& scene,
                                          const std::vector<Location>& locations,
                                          const VisibilityState& vis) {
  return detail::build_graph(scene, locations, &vis);
}

inline TextWorldGraph visible_world_graph(const Scene& scene,
                                          const VisibilityState& vis) {
  return detail::build_graph(scene, scene.initial_locations(), &vis);
}

// Ground-truth graph, ignoring visibility.
inline TextWorldGraph full_world_graph(const Scene& scene,
                                       const std::vector<Location>& locations) {
  return detail::build_graph(scene, locations, nullptr);
}

inline TextWorldGraph full_world_graph(const Scene& scene) {
  return detail::build_graph(scene, scene.initial_locations(), nullptr);
}

inline std::string format_world_graph(const TextWorldGraph& g) {
  std::ostringstream out;
  out << "Receptacles: [";
  for (std::size_t i = 0; i < g.receptacle_names.size(); ++i) {
    if (i) out << ", ";
    out << g.receptacle_names[i];
  }
  out << "]\n";
  out << "Receptacles with objects:\n";
  for (const auto& e : g.entries) {
    out << e.label << ": ";
    for (std::size_t i = 0; i < e.object_names.size(); ++i) {
      if (i) out << ", ";
      out << e.object_names[i];
    }
    out << "\n";
  }
  return out.str();
}

inline std::vector<std::string> split_list(std::string_view s,
                                           std::string_view sep = ", ") {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const std::size_t nxt = s.find(sep, pos);
    if (nxt == std::string_view::npos) {
      if (pos < s.size()) out.emplace_back(s.substr(pos));
      break;
    }
    out.emplace_back(s.substr(pos, nxt - pos));
    pos = nxt + sep.size();
  }
  return out;
}

inline TextWorldGraph parse_world_graph(const std::string& text) {
  TextWorldGraph g;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("Receptacles: [", 0) != 0 ||
      line.back() != ']') {
    throw std::invalid_argument("world graph missing receptacle header");
  }
  g.receptacle_names =
      split_list(std::string_view(line).substr(14, line.size() - 15));
  if (!std::getline(in, line) || line != "Receptacles with objects:") {
    throw std::invalid_argument("world graph missing object header");
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::size_t colon = line.find(": ");
    if (colon == std::string::npos) {
      throw std::invalid_argument("malformed world graph line: " + line);
    }
    TextWorldGraph::Entry e;
    e.label = line.substr(0, colon);
    e.object_names = split_list(std::string_view(line).substr(colon + 2));
    g.entries.push_back(std::move(e));
  }
  return g;
}

// ---------------------------------------------------------------------------
// Validation and JSON.

inline void Scene::validate() const {
  std::set<int> room_ids;
  for (const auto& r : rooms) {
    if (!room_ids.insert(r.id).second) {
      throw std::invalid_argument("duplicate room id");
    }
  }
  std::set<int> rec_ids;
  std::set<std::string> rec_names;
  for (std::size_t i = 0; i < receptacles.size(); ++i) {
    const auto& r = receptacles[i];
    if (r.id != static_cast<int>(i)) {
      throw std::invalid_argument("receptacle ids must be dense and in order");
    }
    if (!rec_ids.insert(r.id).second) {
      throw std::invalid_argument("duplicate receptacle id");
    }
    if (!rec_names.insert(r.name).second) {
      throw std::invalid_argument("duplicate receptacle name: " + r.name);
    }
    if (!room_ids.count(r.room)) {
      throw std::invalid_argument("receptacle in unknown room");
    }
    if (r.kind == ReceptacleKind::surface && !r.sub_parts.empty()) {
      throw std::invalid_argument("surface receptacle with compartments");
    }
    if (r.kind == ReceptacleKind::articulated && r.sub_parts.empty()) {
      throw std::invalid_argument("articulated receptacle without compartments");
    }
    std::set<std::string> parts(r.sub_parts.begin(), r.sub_parts.end());
    if (parts.size() != r.sub_parts.size()) {
      throw std::invalid_argument("duplicate compartment name");
    }
  }
  std::set<int> obj_ids;
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const auto& o = objects[i];
    if (o.id != static_cast<int>(i)) {
      throw std::invalid_argument("object ids must be dense and in order");
    }
    if (!obj_ids.insert(o.id).second) {
      throw std::invalid_argument("duplicate object id");
    }
    if (!in_vocabulary(o.color, o.category)) {
      throw std::invalid_argument("object outside vocabulary: " +
                                  display_name(o));
    }
    if (!rec_ids.count(o.location.receptacle)) {
      throw std::invalid_argument("object on unknown receptacle");
    }
    if (o.location.in_compartment() &&
        !has_compartment(o.location.receptacle, o.location.compartment)) {
      throw std::invalid_argument("object in unknown compartment");
    }
  }
  for (const auto& [a, b] : nav_edges) {
    if (!rec_ids.count(a) || !rec_ids.count(b)) {
      throw std::invalid_argument("nav edge references unknown receptacle");
    }
  }
  if (!receptacles.empty()) {
    for (const auto& r : receptacles) {
      hop_distance(receptacles.front().id, r.id);  // throws if disconnected
    }
  }
}

inline std::string location_to_string(const Location& loc) {
  if (loc.held()) return "gripper";
  std::string s = std::to_string(loc.receptacle);
  if (loc.in_compartment()) s += "/" + loc.compartment;
  return s;
}

inline Location location_from_string(const std::string& s) {
  if (s == "gripper") return Location{-1, ""};
  Location loc;
  const std::size_t slash = s.find('/');
  loc.receptacle = std::stoi(s.substr(0, slash));
  if (slash != std::string::npos) loc.compartment = s.substr(slash + 1);
  return loc;
}

inline Json scene_to_json(const Scene& scene) {
  Json j;
  j["schema_version"] = 1;
  j["id"] = scene.id;
  j["rooms"] = Json::array();
  for (const auto& r : scene.rooms) {
    j["rooms"].push_back(Json{{"id", r.id}, {"name", r.name}});
  }
  j["receptacles"] = Json::array();
  for (const auto& r : scene.receptacles) {
    j["receptacles"].push_back(Json{{"id", r.id},
                                    {"name", r.name},
                                    {"kind", std::string(to_string(r.kind))},
                                    {"sub_parts", r.sub_parts},
                                    {"room", r.room}});
  }
  j["objects"] = Json::array();
  for (const auto& o : scene.objects) {
    j["objects"].push_back(
        Json{{"id", o.id},
             {"category", std::string(to_string(o.category))},
             {"color", std::string(to_string(o.color))},
             {"size", std::string(to_string(o.size))},
             {"location", location_to_string(o.location)}});
  }
  j["nav_edges"] = Json::array();
  for (const auto& [a, b] : scene.nav_edges) {
    j["nav_edges"].push_back(Json::array({a, b}));
  }
  return j;
}

inline Scene scene_from_json(const Json& j) {
  if (!j.contains("schema_version") || j["schema_version"].get<int>() != 1) {
    throw std::invalid_argument("unsupported scene schema version");
  }
  Scene scene;
  scene.id = j.value("id", 0);
  for (const auto& r : j.at("rooms")) {
    scene.rooms.push_back({r.at("id").get<int>(), r.at("name").get<std::string>()});
  }
  for (const auto& r : j.at("receptacles")) {
    Receptacle rec;
    rec.id = r.at("id").get<int>();
    rec.name = r.at("name").get<std::string>();
    rec.kind = r.at("kind").get<std::string>() == "articulated"
                   ? ReceptacleKind::articulated
                   : ReceptacleKind::surface;
    rec.sub_parts = r.at("sub_parts").get<std::vector<std::string>>();
    rec.room = r.at("room").get<int>();
    scene.receptacles.push_back(std::move(rec));
  }
  for (const auto& o : j.at("objects")) {
    ObjectInstance obj;
    obj.id = o.at("id").get<int>();
    const auto cat = category_from_string(o.at("category").get<std::string>());
    const auto col = color_from_string(o.at("color").get<std::string>());
    const auto sz = size_from_string(o.at("size").get<std::string>());
    if (!cat || !col || !sz) {
      throw std::invalid_argument("unknown object attribute in scene JSON");
    }
    obj.category = *cat;
    obj.color = *col;
    obj.size = *sz;
    obj.location = location_from_string(o.at("location").get<std::string>());
    scene.objects.push_back(obj);
  }
  for (const auto& e : j.at("nav_edges")) {
    scene.nav_edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
  }
  return scene;
}

}  // namespace clarify
