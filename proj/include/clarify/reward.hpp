#pragma once

// Reward shaping: a big terminal success bonus, per-subgoal shaping, a small
// bonus for useful questions inside the question budget, a penalty for every
// question beyond it, and a constant per-step cost. Ablation modes keep only
// subsets of the terms.

#include <algorithm>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace clarify {

using Json = nlohmann::ordered_json;

enum class RewardMode { full, subgoal_only, success_only };

inline std::string_view to_string(RewardMode m) {
  switch (m) {
    case RewardMode::full: return "full";
    case RewardMode::subgoal_only: return "subgoal_only";
    case RewardMode::success_only: return "success_only";
  }
  throw std::invalid_argument("bad reward mode");
}

inline RewardMode reward_mode_from_string(std::string_view s) {
  for (const auto m :
       {RewardMode::full, RewardMode::subgoal_only, RewardMode::success_only}) {
    if (to_string(m) == s) return m;
  }
  throw std::invalid_argument("unknown reward mode '" + std::string(s) + "'");
}

struct RewardConfig {
  double success_bonus = 10.0;
  double subgoal_bonus = 2.5;
  double question_bonus = 0.5;
  double over_budget_penalty = 0.05;
  double step_cost = 0.01;
  RewardMode mode = RewardMode::full;
  // Alternative reading of the question bonus: split a fixed 1.5 across the
  // K questions the episode minimally needs instead of 0.5 each.
  bool scale_question_bonus_by_k = false;

  bool operator==(const RewardConfig&) const = default;
};

inline Json reward_config_to_json(const RewardConfig& c) {
  return Json{{"success_bonus", c.success_bonus},
              {"subgoal_bonus", c.subgoal_bonus},
              {"question_bonus", c.question_bonus},
              {"over_budget_penalty", c.over_budget_penalty},
              {"step_cost", c.step_cost},
              {"mode", std::string(to_string(c.mode))},
              {"scale_question_bonus_by_k", c.scale_question_bonus_by_k}};
}

inline RewardConfig reward_config_from_json(const Json& j) {
  RewardConfig c;
  c.success_bonus = j.at("success_bonus").get<double>();
  c.subgoal_bonus = j.at("subgoal_bonus").get<double>();
  c.question_bonus = j.at("question_bonus").get<double>();
  c.over_budget_penalty = j.at("over_budget_penalty").get<double>();
  c.step_cost = j.at("step_cost").get<double>();
  c.mode = reward_mode_from_string(j.at("mode").get<std::string>());
  c.scale_question_bonus_by_k = j.value("scale_question_bonus_by_k", false);
  return c;
}

// What happened on one step, as far as reward is concerned.
struct StepEvent {
  bool success = false;   // task completed on this step
  int subgoals = 0;       // subgoals newly satisfied on this step
  bool asked = false;     // the action was a question
  bool useful = false;    // grounded and it shrank the hypothesis set
};

struct RewardBreakdown {
  double success_term = 0.0;
  double subgoal_term = 0.0;
  double question_term = 0.0;
  double budget_penalty = 0.0;
  double step_penalty = 0.0;
  double total = 0.0;

  bool operator==(const RewardBreakdown&) const = default;
};

inline Json reward_breakdown_to_json(const RewardBreakdown& b) {
  return Json{{"success_term", b.success_term},
              {"subgoal_term", b.subgoal_term},
              {"question_term", b.question_term},
              {"budget_penalty", b.budget_penalty},
              {"step_penalty", b.step_penalty},
              {"total", b.total}};
}

inline RewardBreakdown reward_breakdown_from_json(const Json& j) {
  RewardBreakdown b;
  b.success_term = j.at("success_term").get<double>();
  b.subgoal_term = j.at("subgoal_term").get<double>();
  b.question_term = j.at("question_term").get<double>();
  b.budget_penalty = j.at("budget_penalty").get<double>();
  b.step_penalty = j.at("step_penalty").get<double>();
  b.total = j.at("total").get<double>();
  return b;
}

// `questions_so_far` counts questions asked up to AND including this step, so
// when the event is a question it is that question's 1-based index; the
// question is in budget iff questions_so_far <= budget. `min_questions` only
// matters under scale_question_bonus_by_k.
inline RewardBreakdown step_reward(const StepEvent& ev, const RewardConfig& cfg,
                                   int questions_so_far, int budget,
                                   int min_questions = 0) {
  RewardBreakdown b;
  const bool in_budget = !ev.asked || questions_so_far <= budget;
  if (ev.success) b.success_term = cfg.success_bonus;
  if (cfg.mode != RewardMode::success_only) {
    b.subgoal_term = cfg.subgoal_bonus * ev.subgoals;
  }
  if (cfg.mode == RewardMode::full) {
    double bonus = cfg.question_bonus;
    if (cfg.scale_question_bonus_by_k) {
      bonus = 1.5 / std::max(min_questions, 1);
    }
    if (ev.asked && ev.useful && in_budget) b.question_term = bonus;
    if (ev.asked && !in_budget) b.budget_penalty = cfg.over_budget_penalty;
  }
  b.step_penalty = cfg.step_cost;
  b.total = b.success_term + b.subgoal_term + b.question_term -
            b.budget_penalty - b.step_penalty;
  return b;
}

inline double episode_return(const std::vector<double>& rewards, double gamma) {
  double acc = 0.0;
  double g = 1.0;
  for (const double r : rewards) {
    acc += g * r;
    g *= gamma;
  }
  return acc;
}

inline double episode_return(const std::vector<RewardBreakdown>& steps,
                             double gamma) {
  std::vector<double> rs;
  rs.reserve(steps.size());
  for (const auto& b : steps) rs.push_back(b.total);
  return episode_return(rs, gamma);
}

}  // namespace clarify
