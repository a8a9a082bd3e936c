#pragma once

// The step engine: executes navigation/manipulation skills and questions
// against a scene, tracks per-target subgoals, detects success, and logs
// trajectories that can be replayed and verified digest-by-digest.

#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "clarify/dialogue.hpp"
#include "clarify/reward.hpp"
#include "clarify/rng.hpp"
#include "clarify/scene.hpp"
#include "clarify/task.hpp"

namespace clarify {

// ---------------------------------------------------------------------------
// Actions.

enum class ActionKind { nav, pick, place, open_comp, close_comp, ask, done };

// Fully instantiated discrete skill. Place/open/close references accept a
// plain receptacle name or "compartment of receptacle"; resolution happens at
// step time, so a reference that no longer resolves is just an invalid action.
struct AgentAction {
  ActionKind kind = ActionKind::done;
  std::string receptacle_ref;   // nav / place / open / close
  ObjectDescriptor descriptor;  // pick
  Question question;            // ask

  bool operator==(const AgentAction&) const = default;

  std::string to_text() const {
    switch (kind) {
      case ActionKind::nav: return "Navigate(" + receptacle_ref + ")";
      case ActionKind::pick: return "Pick(" + descriptor.text() + ")";
      case ActionKind::place: return "Place(" + receptacle_ref + ")";
      case ActionKind::open_comp: return "Open(" + receptacle_ref + ")";
      case ActionKind::close_comp: return "Close(" + receptacle_ref + ")";
      case ActionKind::ask: return "Ask(" + question.to_text() + ")";
      case ActionKind::done: return "Done()";
    }
    throw std::invalid_argument("bad action kind");
  }
};

inline AgentAction nav_action(std::string receptacle) {
  return {ActionKind::nav, std::move(receptacle), {}, {}};
}
inline AgentAction pick_action(ObjectDescriptor d) {
  return {ActionKind::pick, {}, std::move(d), {}};
}
inline AgentAction place_action(std::string ref) {
  return {ActionKind::place, std::move(ref), {}, {}};
}
inline AgentAction open_action(std::string ref) {
  return {ActionKind::open_comp, std::move(ref), {}, {}};
}
inline AgentAction close_action(std::string ref) {
  return {ActionKind::close_comp, std::move(ref), {}, {}};
}
inline AgentAction ask_action(Question q) {
  return {ActionKind::ask, {}, {}, std::move(q)};
}
inline AgentAction done_action() { return {ActionKind::done, {}, {}, {}}; }

inline std::optional<AgentAction> parse_action(std::string_view text) {
  if (text == "Done()") return done_action();
  std::string_view s;
  if (s = text; detail::strip(s, "Navigate(", ")")) {
    return nav_action(std::string(s));
  }
  if (s = text; detail::strip(s, "Pick(", ")")) {
    if (const auto d = detail::parse_descriptor(s)) return pick_action(*d);
    return std::nullopt;
  }
  if (s = text; detail::strip(s, "Place(", ")")) {
    return place_action(std::string(s));
  }
  if (s = text; detail::strip(s, "Open(", ")")) {
    return open_action(std::string(s));
  }
  if (s = text; detail::strip(s, "Close(", ")")) {
    return close_action(std::string(s));
  }
  if (s = text; detail::strip(s, "Ask(", ")")) {
    if (const auto q = parse_question(s)) return ask_action(*q);
    return std::nullopt;
  }
  return std::nullopt;
}

// The scene's whole discrete action inventory, in a deterministic order:
// navigate to each receptacle, pick each object (by its unambiguous
// descriptor), place onto each surface / into each compartment, open and
// close each compartment, ask each grammatical question, and stop.
inline std::vector<AgentAction> canonical_actions(const Scene& scene) {
  std::vector<AgentAction> out;
  for (const auto& r : scene.receptacles) out.push_back(nav_action(r.name));
  for (const auto& o : scene.objects) {
    out.push_back(pick_action(descriptor_for(scene, o)));
  }
  for (const auto& r : scene.receptacles) {
    if (r.kind == ReceptacleKind::surface) out.push_back(place_action(r.name));
    for (const auto& part : r.sub_parts) {
      out.push_back(place_action(compartment_label(r, part)));
    }
  }
  for (const auto& r : scene.receptacles) {
    for (const auto& part : r.sub_parts) {
      out.push_back(open_action(compartment_label(r, part)));
      out.push_back(close_action(compartment_label(r, part)));
    }
  }
  for (const auto& q : enumerate_questions(scene)) {
    out.push_back(ask_action(q));
  }
  out.push_back(done_action());
  return out;
}

// ---------------------------------------------------------------------------
// Observations.

struct Observation {
  int agent_at = 0;
  std::optional<int> holding;        // object id
  std::vector<int> local_view;       // visible object ids here, ascending
  std::optional<Answer> last_answer; // set only on the step that asked
  int steps_remaining = 0;
  std::string instruction;

  bool operator==(const Observation&) const = default;
};

inline Json answer_to_json(const Answer& a) {
  return Json{{"kind", std::string(to_string(a.kind))}, {"text", a.text}};
}

inline Answer answer_from_json(const Json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  for (const auto k : {AnswerKind::yes, AnswerKind::no,
                       AnswerKind::receptacle_name, AnswerKind::color_name,
                       AnswerKind::description}) {
    if (to_string(k) == kind) return {k, j.at("text").get<std::string>()};
  }
  throw std::invalid_argument("unknown answer kind '" + kind + "'");
}

inline Json observation_to_json(const Observation& o) {
  Json j;
  j["agent_at"] = o.agent_at;
  j["holding"] = o.holding ? Json(*o.holding) : Json();
  j["local_view"] = o.local_view;
  j["last_answer"] = o.last_answer ? answer_to_json(*o.last_answer) : Json();
  j["steps_remaining"] = o.steps_remaining;
  j["instruction"] = o.instruction;
  return j;
}

inline std::uint64_t observation_digest(const Observation& o) {
  return fnv1a(observation_to_json(o).dump());
}

// ---------------------------------------------------------------------------
// Episode bookkeeping.

enum class EpisodeOutcome { ongoing, success, failure_timeout };

inline std::string_view to_string(EpisodeOutcome o) {
  switch (o) {
    case EpisodeOutcome::ongoing: return "ongoing";
    case EpisodeOutcome::success: return "success";
    case EpisodeOutcome::failure_timeout: return "failure_timeout";
  }
  throw std::invalid_argument("bad outcome");
}

inline EpisodeOutcome episode_outcome_from_string(std::string_view s) {
  for (const auto o : {EpisodeOutcome::ongoing, EpisodeOutcome::success,
                       EpisodeOutcome::failure_timeout}) {
    if (to_string(o) == s) return o;
  }
  throw std::invalid_argument("unknown outcome '" + std::string(s) + "'");
}

enum class SubgoalStage { find, pick, nav, open, place, close };

inline std::string_view to_string(SubgoalStage s) {
  switch (s) {
    case SubgoalStage::find: return "find";
    case SubgoalStage::pick: return "pick";
    case SubgoalStage::nav: return "nav";
    case SubgoalStage::open: return "open";
    case SubgoalStage::place: return "place";
    case SubgoalStage::close: return "close";
  }
  throw std::invalid_argument("bad subgoal stage");
}

// One checklist entry for one target object. Entries for a target form an
// ordered pipeline; each latches at most once per episode.
struct Subgoal {
  SubgoalStage stage = SubgoalStage::find;
  int target_index = 0;  // index into EpisodeSpec::targets
  std::string label;
  bool satisfied = false;

  bool operator==(const Subgoal&) const = default;
};

struct SubgoalLedger {
  std::vector<Subgoal> goals;

  int satisfied_count() const {
    int n = 0;
    for (const auto& g : goals) n += g.satisfied ? 1 : 0;
    return n;
  }
  int size() const { return static_cast<int>(goals.size()); }
};

inline SubgoalLedger build_subgoal_ledger(const Scene& scene,
                                          const EpisodeSpec& spec) {
  SubgoalLedger ledger;
  for (std::size_t i = 0; i < spec.targets.size(); ++i) {
    const TargetSpec& t = spec.targets[i];
    const std::string obj = descriptor_for(scene, scene.object(t.object)).text();
    const std::string dest = location_label(scene, t.required);
    const auto add = [&](SubgoalStage stage, const std::string& arg) {
      ledger.goals.push_back(Subgoal{
          stage, static_cast<int>(i),
          std::string(to_string(stage)) + "(" + arg + ")", false});
    };
    add(SubgoalStage::find, obj);
    add(SubgoalStage::pick, obj);
    add(SubgoalStage::nav, scene.receptacle(t.required.receptacle).name +
                               ", " + obj);
    if (t.required.in_compartment()) add(SubgoalStage::open, dest);
    add(SubgoalStage::place, obj + ", " + dest);
    if (t.required.in_compartment()) add(SubgoalStage::close, dest);
  }
  return ledger;
}

// Success = every target object sits at its required location. CleanClutter
// additionally requires that no non-clutter object that started on the source
// receptacle has been moved off it (false positives block success).
inline bool check_success(const Scene& scene, const EpisodeSpec& spec,
                          const std::vector<Location>& locations,
                          const std::vector<Location>& initial_locations) {
  for (const auto& t : spec.targets) {
    if (!(locations[static_cast<std::size_t>(t.object)] == t.required)) {
      return false;
    }
  }
  if (spec.family == TaskFamily::clean_clutter) {
    for (const auto& o : scene.objects) {
      if (spec.is_clutter(o.id)) continue;
      const std::size_t i = static_cast<std::size_t>(o.id);
      if (initial_locations[i].receptacle == spec.source_receptacle &&
          locations[i].receptacle != spec.source_receptacle) {
        return false;
      }
    }
  }
  return true;
}

struct StepInfo {
  bool valid = true;   // the action executed (false = no-op)
  bool asked = false;
  bool useful = false;
  std::vector<std::string> new_subgoals;  // labels latched this step

  bool operator==(const StepInfo&) const = default;
};

struct StepResult {
  Observation obs;
  RewardBreakdown reward;
  bool done = false;
  EpisodeOutcome outcome = EpisodeOutcome::ongoing;
  StepInfo info;
};

// One JSONL line of a logged trajectory.
struct TrajectoryStep {
  int t = 0;
  std::uint64_t obs_digest = 0;
  std::string action;
  std::optional<Answer> answer;
  RewardBreakdown reward;
  StepInfo info;
  EpisodeOutcome outcome = EpisodeOutcome::ongoing;

  bool operator==(const TrajectoryStep&) const = default;
};

inline Json trajectory_step_to_json(const TrajectoryStep& s) {
  Json j;
  j["t"] = s.t;
  j["obs_digest"] = s.obs_digest;
  j["action"] = s.action;
  j["answer"] = s.answer ? answer_to_json(*s.answer) : Json();
  j["reward"] = reward_breakdown_to_json(s.reward);
  j["info"] = Json{{"valid", s.info.valid},
                   {"asked", s.info.asked},
                   {"useful", s.info.useful},
                   {"new_subgoals", s.info.new_subgoals}};
  j["outcome"] = std::string(to_string(s.outcome));
  return j;
}

inline TrajectoryStep trajectory_step_from_json(const Json& j) {
  TrajectoryStep s;
  s.t = j.at("t").get<int>();
  s.obs_digest = j.at("obs_digest").get<std::uint64_t>();
  s.action = j.at("action").get<std::string>();
  if (!j.at("answer").is_null()) s.answer = answer_from_json(j.at("answer"));
  s.reward = reward_breakdown_from_json(j.at("reward"));
  const Json& info = j.at("info");
  s.info.valid = info.at("valid").get<bool>();
  s.info.asked = info.at("asked").get<bool>();
  s.info.useful = info.at("useful").get<bool>();
  s.info.new_subgoals =
      info.at("new_subgoals").get<std::vector<std::string>>();
  s.outcome = episode_outcome_from_string(j.at("outcome").get<std::string>());
  return s;
}

// ---------------------------------------------------------------------------
// The environment.

class Env {
 public:
  explicit Env(RewardConfig reward_config = {}) : rcfg_(reward_config) {}

  // The hypothesis context points into scene_/spec_, so the instance must
  // stay put.
  Env(const Env&) = delete;
  Env& operator=(const Env&) = delete;

  Observation reset(const Scene& scene, const EpisodeSpec& spec) {
    if (scene.id != spec.scene_id) {
      throw std::invalid_argument("episode " + std::to_string(spec.id) +
                                  " belongs to scene " +
                                  std::to_string(spec.scene_id) + ", not " +
                                  std::to_string(scene.id));
    }
    scene_ = scene;
    spec_ = spec;
    locations_ = scene_.initial_locations();
    initial_locations_ = locations_;
    vis_ = {};
    holding_.reset();
    Rng rng(hash_combine64(spec_.seed, 0x57A27ULL));
    agent_at_ =
        rng.uniform_int(0, static_cast<int>(scene_.receptacles.size()) - 1);
    mark_observed(scene_, locations_, vis_, agent_at_);
    hints_ = {};
    hints_.visit_order.push_back(agent_at_);
    ctx_ = make_hypothesis_context(scene_, spec_);
    belief_ = initial_state(ctx_);
    ledger_ = build_subgoal_ledger(scene_, spec_);
    t_ = 0;
    questions_ = 0;
    last_answer_.reset();
    outcome_ = EpisodeOutcome::ongoing;
    live_ = true;
    log_.clear();
    return observation();
  }

  StepResult step(const AgentAction& action) {
    if (!live_) throw std::logic_error("episode is over; reset first");
    ++t_;
    last_answer_.reset();
    StepInfo info;
    info.valid = apply(action, info);
    mark_observed(scene_, locations_, vis_, agent_at_);
    info.new_subgoals = update_subgoals();

    const bool success =
        check_success(scene_, spec_, locations_, initial_locations_);
    if (success) {
      outcome_ = EpisodeOutcome::success;
      live_ = false;
    } else if (action.kind == ActionKind::done || t_ >= spec_.max_steps) {
      outcome_ = EpisodeOutcome::failure_timeout;
      live_ = false;
    }

    const StepEvent event{success,
                          static_cast<int>(info.new_subgoals.size()),
                          info.asked, info.useful};
    const RewardBreakdown reward = step_reward(
        event, rcfg_, questions_, spec_.budget, spec_.min_questions);

    StepResult result{observation(), reward, !live_, outcome_, info};
    log_.push_back(TrajectoryStep{t_, observation_digest(result.obs),
                                  action.to_text(), last_answer_, reward, info,
                                  outcome_});
    return result;
  }

  Observation observation() const {
    Observation o;
    o.agent_at = agent_at_;
    o.holding = holding_;
    for (const auto& obj : scene_.objects) {
      const Location& loc = locations_[static_cast<std::size_t>(obj.id)];
      if (loc.receptacle != agent_at_) continue;
      if (loc.in_compartment() &&
          !vis_.has_opened(loc.receptacle, loc.compartment)) {
        continue;
      }
      o.local_view.push_back(obj.id);
    }
    o.last_answer = last_answer_;
    o.steps_remaining = spec_.max_steps - t_;
    o.instruction = spec_.instruction;
    return o;
  }

  // Whether the action would execute rather than no-op in the current state.
  // Questions and done() always "execute" (a question may still be
  // ungrounded; it is answered with a shrug).
  bool action_valid(const AgentAction& a) const {
    switch (a.kind) {
      case ActionKind::nav: {
        const auto rid = scene_.receptacle_by_name(a.receptacle_ref);
        return rid.has_value() && *rid != agent_at_;
      }
      case ActionKind::pick: {
        if (holding_) return false;
        const auto oid = resolve_descriptor(scene_, locations_, a.descriptor,
                                            &vis_.seen, hints_);
        if (!oid) return false;
        const Location& loc = locations_[static_cast<std::size_t>(*oid)];
        if (loc.receptacle != agent_at_) return false;
        return !loc.in_compartment() ||
               vis_.has_opened(loc.receptacle, loc.compartment);
      }
      case ActionKind::place: {
        if (!holding_) return false;
        const auto loc = resolve_receptacle_ref(scene_, a.receptacle_ref);
        if (!loc || loc->receptacle != agent_at_) return false;
        if (loc->in_compartment()) {
          return vis_.has_opened(loc->receptacle, loc->compartment);
        }
        return scene_.receptacle(loc->receptacle).kind ==
               ReceptacleKind::surface;
      }
      case ActionKind::open_comp:
      case ActionKind::close_comp: {
        const auto loc = resolve_receptacle_ref(scene_, a.receptacle_ref);
        if (!loc || !loc->in_compartment() || loc->receptacle != agent_at_) {
          return false;
        }
        const bool open_now =
            vis_.has_opened(loc->receptacle, loc->compartment);
        return a.kind == ActionKind::open_comp ? !open_now : open_now;
      }
      case ActionKind::ask:
      case ActionKind::done:
        return true;
    }
    return false;
  }

  bool live() const { return live_; }
  EpisodeOutcome outcome() const { return outcome_; }
  int t() const { return t_; }
  int questions_asked() const { return questions_; }
  int agent_at() const { return agent_at_; }
  std::optional<int> holding() const { return holding_; }
  const Scene& scene() const { return scene_; }
  const EpisodeSpec& spec() const { return spec_; }
  const RewardConfig& reward_config() const { return rcfg_; }
  const std::vector<Location>& locations() const { return locations_; }
  const VisibilityState& visibility() const { return vis_; }
  const ResolutionHints& hints() const { return hints_; }
  const HypothesisContext& context() const { return ctx_; }
  const HypothesisState& belief() const { return belief_; }
  const SubgoalLedger& subgoals() const { return ledger_; }
  const std::vector<TrajectoryStep>& trajectory() const { return log_; }

 private:
  bool apply(const AgentAction& a, StepInfo& info) {
    if (!action_valid(a)) return false;
    switch (a.kind) {
      case ActionKind::nav: {
        agent_at_ = *scene_.receptacle_by_name(a.receptacle_ref);
        mark_observed(scene_, locations_, vis_, agent_at_);
        hints_.visit_order.push_back(agent_at_);
        return true;
      }
      case ActionKind::pick: {
        const int oid = *resolve_descriptor(scene_, locations_, a.descriptor,
                                            &vis_.seen, hints_);
        holding_ = oid;
        locations_[static_cast<std::size_t>(oid)] = Location{-1, ""};
        return true;
      }
      case ActionKind::place: {
        const Location loc = *resolve_receptacle_ref(scene_, a.receptacle_ref);
        locations_[static_cast<std::size_t>(*holding_)] = loc;
        holding_.reset();
        return true;
      }
      case ActionKind::open_comp:
      case ActionKind::close_comp: {
        const Location loc = *resolve_receptacle_ref(scene_, a.receptacle_ref);
        if (a.kind == ActionKind::open_comp) {
          mark_opened(scene_, locations_, vis_, loc.receptacle,
                      loc.compartment);
        } else {
          vis_.opened.erase({loc.receptacle, loc.compartment});
        }
        return true;
      }
      case ActionKind::ask: {
        ++questions_;
        info.asked = true;
        const Question& q = a.question;
        // Hints are read as they stood before this question; the questioned
        // receptacle becomes the recency topic for later references.
        Answer ans = no_such_object();
        if (is_grounded(q, ctx_, locations_, vis_.seen, hints_)) {
          ans = answer_under_hypothesis(q, truth_hypothesis(ctx_), ctx_,
                                        locations_, &vis_.seen, hints_);
          info.useful = is_useful(q, ans, belief_, ctx_, locations_,
                                  vis_.seen, hints_);
          belief_ = refine(belief_, q, ans, ctx_, locations_, &vis_.seen,
                           hints_);
        }
        if (q.tmpl == QuestionTemplate::on_receptacle ||
            q.tmpl == QuestionTemplate::where_place) {
          if (const auto topic =
                  resolve_receptacle_ref(scene_, q.receptacle_ref)) {
            hints_.last_asked_receptacle = topic->receptacle;
          }
        }
        last_answer_ = ans;
        return true;
      }
      case ActionKind::done:
        return true;
    }
    return false;
  }

  // Walks each target's pipeline in order, latching every stage whose
  // condition now holds, stopping at the first that does not. Returns the
  // labels latched on this step.
  std::vector<std::string> update_subgoals() {
    std::vector<std::string> newly;
    for (auto& g : ledger_.goals) {
      if (g.satisfied) continue;
      if (!stage_reached(g)) continue;
      if (!stage_condition(g)) continue;
      g.satisfied = true;
      newly.push_back(g.label);
    }
    return newly;
  }

  // All earlier stages of the same target are already satisfied (or were
  // just latched this pass, since goals are stored in pipeline order).
  bool stage_reached(const Subgoal& g) const {
    for (const auto& other : ledger_.goals) {
      if (&other == &g) break;
      if (other.target_index == g.target_index && !other.satisfied) {
        return false;
      }
    }
    return true;
  }

  bool stage_condition(const Subgoal& g) const {
    const TargetSpec& t = spec_.targets[static_cast<std::size_t>(g.target_index)];
    const Location& now = locations_[static_cast<std::size_t>(t.object)];
    switch (g.stage) {
      case SubgoalStage::find:
        return vis_.has_seen(t.object);
      case SubgoalStage::pick:
        return holding_ == t.object;
      case SubgoalStage::nav:
        return holding_ == t.object && agent_at_ == t.required.receptacle;
      case SubgoalStage::open:
        return vis_.has_opened(t.required.receptacle, t.required.compartment);
      case SubgoalStage::place:
        return now == t.required;
      case SubgoalStage::close:
        return !vis_.has_opened(t.required.receptacle, t.required.compartment);
    }
    return false;
  }

  RewardConfig rcfg_;
  Scene scene_;
  EpisodeSpec spec_;
  HypothesisContext ctx_;
  std::vector<Location> locations_;
  std::vector<Location> initial_locations_;
  VisibilityState vis_;
  ResolutionHints hints_;
  HypothesisState belief_;
  SubgoalLedger ledger_;
  std::vector<TrajectoryStep> log_;
  std::optional<Answer> last_answer_;
  std::optional<int> holding_;
  int agent_at_ = 0;
  int t_ = 0;
  int questions_ = 0;
  EpisodeOutcome outcome_ = EpisodeOutcome::ongoing;
  bool live_ = false;
};

// ---------------------------------------------------------------------------
// Trajectory files.

inline void write_trajectory(std::ostream& out,
                             const std::vector<TrajectoryStep>& steps) {
  for (const auto& s : steps) out << trajectory_step_to_json(s).dump() << '\n';
}

inline std::vector<TrajectoryStep> read_trajectory(std::istream& in) {
  std::vector<TrajectoryStep> steps;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    steps.push_back(trajectory_step_from_json(Json::parse(line)));
  }
  return steps;
}

// Re-executes a logged trajectory and checks every line: the action must
// parse, observation digests and reward breakdowns must match, and each
// breakdown must satisfy its own arithmetic identity.
inline void replay_trajectory(const Scene& scene, const EpisodeSpec& spec,
                              const std::vector<TrajectoryStep>& steps,
                              const RewardConfig& reward_config = {}) {
  const auto fail = [](int t, const std::string& what) {
    throw std::runtime_error("replay mismatch at t=" + std::to_string(t) +
                             ": " + what);
  };
  Env env(reward_config);
  env.reset(scene, spec);
  for (const auto& s : steps) {
    const auto action = parse_action(s.action);
    if (!action) fail(s.t, "unparseable action '" + s.action + "'");
    const double identity = s.reward.success_term + s.reward.subgoal_term +
                            s.reward.question_term - s.reward.budget_penalty -
                            s.reward.step_penalty;
    if (identity != s.reward.total) fail(s.t, "reward terms do not add up");
    const StepResult r = env.step(*action);
    if (observation_digest(r.obs) != s.obs_digest) {
      fail(s.t, "observation digest");
    }
    if (!(r.reward == s.reward)) fail(s.t, "reward breakdown");
    if (r.info.asked != s.info.asked || r.info.useful != s.info.useful ||
        r.info.valid != s.info.valid ||
        r.info.new_subgoals != s.info.new_subgoals) {
      fail(s.t, "step info");
    }
    if (r.outcome != s.outcome) fail(s.t, "outcome");
  }
}

}  // namespace clarify
