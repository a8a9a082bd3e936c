#pragma once

// Scripted policies: the frontier-exploration + deductive-questioning expert
// that generates demonstration trajectories, the same policy with its
// question phase removed (commit to the first consistent reading), and a
// uniform-random control.

#include <algorithm>
#include <deque>
#include <optional>
#include <set>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "clarify/env.hpp"
#include "clarify/taskgen.hpp"

namespace clarify {

enum class ExpertPhase { explore, inquire, execute };

struct ExpertConfig {
  bool ask_questions = true;          // off = commit without clarifying
  bool early_stop_exploration = false;  // stop once every candidate is seen
};

// The expert explores every receptacle nearest-first (opening compartments as
// it goes), asks the minimum question sequence from the dataset planner, and
// executes the placements the surviving hypothesis dictates. It never reads
// the hidden truth directly: answers arrive through the environment oracle
// and placements come from its own refined belief.
class ExpertAgent {
 public:
  explicit ExpertAgent(ExpertConfig cfg = {}) : cfg_(cfg) {}

  void begin_episode(const Env& env) {
    ctx_ = make_hypothesis_context(env.scene(), env.spec());
    belief_ = initial_state(ctx_);
    questions_.clear();
    if (cfg_.ask_questions && env.spec().min_questions > 0) {
      questions_ = compute_question_plan(env.scene(), env.spec()).questions;
    }
    next_question_ = 0;
    pending_.reset();
    plan_.clear();
    phase_ = ExpertPhase::explore;
  }

  AgentAction act(const Env& env) {
    consume_answer(env);
    if (phase_ == ExpertPhase::explore) {
      if (const auto a = explore_step(env)) return *a;
      phase_ = ExpertPhase::inquire;
    }
    if (phase_ == ExpertPhase::inquire) {
      if (const auto a = inquire_step(env)) return *a;
      phase_ = ExpertPhase::execute;
      build_plan(env);
    }
    if (!plan_.empty()) {
      const AgentAction a = plan_.front();
      plan_.pop_front();
      return a;
    }
    return done_action();
  }

  ExpertPhase phase() const { return phase_; }
  const HypothesisState& belief() const { return belief_; }

 private:
  struct PendingQuestion {
    Question question;
    std::set<int> seen;      // grounding state when the question was asked
    ResolutionHints hints;
  };

  // Fold the answer to the previous question into the belief, resolving
  // references exactly as the oracle did when it answered.
  void consume_answer(const Env& env) {
    if (!pending_) return;
    const Observation obs = env.observation();
    if (obs.last_answer &&
        is_grounded(pending_->question, ctx_, env.locations(), pending_->seen,
                    pending_->hints)) {
      belief_ = refine(belief_, pending_->question, *obs.last_answer, ctx_,
                       env.locations(), &pending_->seen, pending_->hints);
    }
    pending_.reset();
  }

  std::optional<AgentAction> explore_step(const Env& env) const {
    const Scene& s = env.scene();
    const VisibilityState& vis = env.visibility();
    const Receptacle& here = s.receptacle(env.agent_at());
    for (const auto& part : here.sub_parts) {
      if (!vis.has_opened(here.id, part)) {
        return open_action(compartment_label(here, part));
      }
    }
    if (cfg_.early_stop_exploration) {
      bool all = true;
      for (int oid : ctx_.universe) all = all && vis.has_seen(oid);
      if (all) return std::nullopt;
    }
    int best = -1;
    int best_hops = 0;
    for (const auto& r : s.receptacles) {
      if (vis.visited.count(r.id)) continue;
      const int hops = s.hop_distance(env.agent_at(), r.id);
      if (best < 0 || hops < best_hops) {
        best = r.id;
        best_hops = hops;
      }
    }
    if (best < 0) return std::nullopt;
    return nav_action(s.receptacle(best).name);
  }

  std::optional<AgentAction> inquire_step(const Env& env) {
    if (next_question_ >= questions_.size()) return std::nullopt;
    const Question& q = questions_[next_question_++];
    pending_ = PendingQuestion{q, env.visibility().seen, env.hints()};
    return ask_action(q);
  }

  // Commit to one live hypothesis. After the question plan this is the only
  // reading on all task-relevant dimensions; with questions disabled it is a
  // deterministic guess: the lexicographically first surviving assignment.
  Hypothesis committed_hypothesis() const {
    if (belief_.alive.empty()) {
      throw std::logic_error("no live hypothesis to execute");
    }
    return *std::min_element(
        belief_.alive.begin(), belief_.alive.end(),
        [](const Hypothesis& a, const Hypothesis& b) {
          return std::tie(a.targets, a.prefs) < std::tie(b.targets, b.prefs);
        });
  }

  // Queue nav/open/pick/nav/open/place/close for every object the committed
  // hypothesis wants moved, simulating the world as actions are queued so
  // preconditions hold when they run.
  void build_plan(const Env& env) {
    const Scene& s = env.scene();
    const Hypothesis h = committed_hypothesis();
    std::vector<std::pair<int, Location>> moves;
    for (int oid : h.targets) {
      Location dest;
      if (is_identification(ctx_.family)) {
        dest = env.spec().destination;
      } else {
        const auto p = ctx_.pref_of(h, s.object(oid).category);
        if (!p) throw std::logic_error("no placement for a committed target");
        dest = *p;
      }
      moves.emplace_back(oid, dest);
    }
    std::sort(moves.begin(), moves.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    std::vector<Location> locs = env.locations();
    auto opened = env.visibility().opened;
    const std::set<int> seen = env.visibility().seen;
    ResolutionHints hints = env.hints();
    int at = env.agent_at();

    const auto go = [&](int rid) {
      if (at == rid) return;
      plan_.push_back(nav_action(s.receptacle(rid).name));
      at = rid;
      hints.visit_order.push_back(rid);
    };
    const auto open_if_needed = [&](const Location& l) {
      if (opened.count({l.receptacle, l.compartment})) return;
      plan_.push_back(
          open_action(compartment_label(s.receptacle(l.receptacle), l.compartment)));
      opened.insert({l.receptacle, l.compartment});
    };

    for (const auto& [oid, dest] : moves) {
      if (locs[static_cast<std::size_t>(oid)] == dest) continue;
      const Location cur = locs[static_cast<std::size_t>(oid)];
      go(cur.receptacle);
      if (cur.in_compartment()) open_if_needed(cur);
      const ObjectDescriptor d = descriptor_for(s, s.object(oid));
      const auto resolved = resolve_descriptor(s, locs, d, &seen, hints);
      if (resolved != oid) {
        throw std::logic_error("descriptor '" + d.text() +
                               "' does not name the intended object here");
      }
      plan_.push_back(pick_action(d));
      locs[static_cast<std::size_t>(oid)] = Location{-1, ""};
      go(dest.receptacle);
      if (dest.in_compartment()) {
        open_if_needed(dest);
        const std::string label =
            compartment_label(s.receptacle(dest.receptacle), dest.compartment);
        plan_.push_back(place_action(label));
        locs[static_cast<std::size_t>(oid)] = dest;
        plan_.push_back(close_action(label));
        opened.erase({dest.receptacle, dest.compartment});
      } else {
        plan_.push_back(place_action(s.receptacle(dest.receptacle).name));
        locs[static_cast<std::size_t>(oid)] = dest;
      }
    }
  }

  ExpertConfig cfg_;
  HypothesisContext ctx_;
  HypothesisState belief_;
  std::vector<Question> questions_;
  std::size_t next_question_ = 0;
  std::optional<PendingQuestion> pending_;
  std::deque<AgentAction> plan_;
  ExpertPhase phase_ = ExpertPhase::explore;
};

inline ExpertAgent greedy_noask_agent() {
  ExpertConfig cfg;
  cfg.ask_questions = false;
  return ExpertAgent(cfg);
}

// Uniform over the actions that would execute in the current state (questions
// and done() always qualify, so the choice set is never empty).
class RandomAgent {
 public:
  explicit RandomAgent(std::uint64_t seed) : rng_(seed) {}

  void begin_episode(const Env& env) {
    inventory_ = canonical_actions(env.scene());
  }

  AgentAction act(const Env& env) {
    std::vector<const AgentAction*> valid;
    for (const auto& a : inventory_) {
      if (env.action_valid(a)) valid.push_back(&a);
    }
    return *valid[static_cast<std::size_t>(
        rng_.uniform_int(0, static_cast<int>(valid.size()) - 1))];
  }

 private:
  Rng rng_;
  std::vector<AgentAction> inventory_;
};

// Drives one episode to termination and tallies what evaluation needs.
struct EpisodeStats {
  EpisodeOutcome outcome = EpisodeOutcome::ongoing;
  int steps = 0;
  int questions_asked = 0;
  int useful_questions = 0;
  int subgoals = 0;
  double total_reward = 0.0;
};

template <typename Agent>
EpisodeStats run_episode(Env& env, Agent& agent, const Scene& scene,
                         const EpisodeSpec& spec) {
  env.reset(scene, spec);
  agent.begin_episode(env);
  EpisodeStats stats;
  while (env.live()) {
    const StepResult r = env.step(agent.act(env));
    stats.questions_asked += r.info.asked ? 1 : 0;
    stats.useful_questions += r.info.useful ? 1 : 0;
    stats.subgoals += static_cast<int>(r.info.new_subgoals.size());
    stats.total_reward += r.reward.total;
  }
  stats.outcome = env.outcome();
  stats.steps = env.t();
  return stats;
}

}  // namespace clarify
