#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "clarify/agents.hpp"
#include "fixtures.hpp"

namespace clarify {
namespace {

using testing::clutter_episode;
using testing::cup_episode;
using testing::lone_bowl_episode;
using testing::pref_episode;
using testing::small_scene;

EpisodeSpec with_planned_budget(const Scene& s, EpisodeSpec e) {
  const QuestionPlan plan = compute_question_plan(s, e);
  e.min_questions = plan.k;
  e.budget = plan.k;
  return e;
}

EpisodeSpec cup_to_light_table(const Scene& s) {
  EpisodeSpec e = cup_episode(s);
  e.instruction = "Bring the cup and place it on the light table.";
  e.destination = {0, ""};
  e.targets = {{1, {0, ""}}};
  return e;
}

void expect_expert_solves(const Scene& s, const EpisodeSpec& e,
                          ExpertConfig cfg = {}) {
  Env env;
  ExpertAgent expert(cfg);
  const EpisodeStats stats = run_episode(env, expert, s, e);
  EXPECT_EQ(stats.outcome, EpisodeOutcome::success) << e.instruction;
  EXPECT_EQ(stats.questions_asked, e.min_questions) << e.instruction;
  EXPECT_EQ(stats.useful_questions, e.min_questions) << e.instruction;
  EXPECT_LE(stats.steps, e.max_steps);
  // The expert's belief tracked the oracle's judgement exactly.
  EXPECT_EQ(expert.belief().alive, env.belief().alive);
  EXPECT_NO_THROW(replay_trajectory(s, e, env.trajectory()));
}

TEST(Expert, SolvesHandBuiltEpisodes) {
  const Scene s = small_scene();
  expect_expert_solves(s, with_planned_budget(s, lone_bowl_episode(s)));
  expect_expert_solves(s, with_planned_budget(s, cup_to_light_table(s)));
  expect_expert_solves(s, with_planned_budget(s, clutter_episode(s)));
  expect_expert_solves(s, with_planned_budget(s, pref_episode(s)));
}

TEST(Expert, NoQuestionsWhenUnambiguous) {
  const Scene s = small_scene();
  const EpisodeSpec e = with_planned_budget(s, lone_bowl_episode(s));
  ASSERT_EQ(e.min_questions, 0);
  Env env;
  ExpertAgent expert;
  const EpisodeStats stats = run_episode(env, expert, s, e);
  EXPECT_EQ(stats.outcome, EpisodeOutcome::success);
  EXPECT_EQ(stats.questions_asked, 0);
}

TEST(Expert, SolvesGeneratedEpisodesAcrossFamilies) {
  const Scene ident = generate_scene({0, SceneBundle::identification, 0, 31});
  for (const auto family :
       {TaskFamily::no_ambiguity, TaskFamily::attribute_recognition,
        TaskFamily::spatial_reasoning, TaskFamily::object_size,
        TaskFamily::compositional}) {
    for (std::uint64_t seed : {5, 6}) {
      expect_expert_solves(ident, generate_episode(ident, family, seed, 0));
    }
  }
  const Scene house = generate_scene({1, SceneBundle::household, 0, 32});
  for (const auto family :
       {TaskFamily::no_ambiguity, TaskFamily::clean_clutter,
        TaskFamily::preference_based}) {
    for (std::uint64_t seed : {5, 6}) {
      expect_expert_solves(house, generate_episode(house, family, seed, 0));
    }
  }
  // Escalated scenes carry the deepest question plans.
  const Scene hard = generate_scene({2, SceneBundle::household, 1, 33});
  expect_expert_solves(hard, generate_episode(hard, TaskFamily::clean_clutter, 5, 0));
  expect_expert_solves(
      hard, generate_episode(hard, TaskFamily::preference_based, 5, 0));
}

TEST(Expert, DeterministicTrajectories) {
  const Scene s = small_scene();
  const EpisodeSpec e = with_planned_budget(s, clutter_episode(s));
  std::string dumps[2];
  for (auto& dump : dumps) {
    Env env;
    ExpertAgent expert;
    run_episode(env, expert, s, e);
    std::stringstream buf;
    write_trajectory(buf, env.trajectory());
    dump = buf.str();
  }
  EXPECT_EQ(dumps[0], dumps[1]);
  EXPECT_FALSE(dumps[0].empty());
}

TEST(Expert, EarlyStopVariantStillSolves) {
  const Scene s = small_scene();
  ExpertConfig cfg;
  cfg.early_stop_exploration = true;
  expect_expert_solves(s, with_planned_budget(s, cup_to_light_table(s)), cfg);
  expect_expert_solves(s, with_planned_budget(s, clutter_episode(s)), cfg);
}

TEST(GreedyNoAsk, CommitsAndLandsAtChanceOnTwoCandidates) {
  const Scene s = generate_scene({3, SceneBundle::identification, 0, 41});
  int successes = 0;
  const int n = 1000;
  for (int i = 0; i < n; ++i) {
    const EpisodeSpec e = generate_episode(
        s, TaskFamily::attribute_recognition, static_cast<std::uint64_t>(i), i);
    Env env;
    ExpertAgent agent = greedy_noask_agent();
    const EpisodeStats stats = run_episode(env, agent, s, e);
    EXPECT_EQ(stats.questions_asked, 0);
    successes += stats.outcome == EpisodeOutcome::success ? 1 : 0;
  }
  const double sr = static_cast<double>(successes) / n;
  EXPECT_GE(sr, 0.45);
  EXPECT_LE(sr, 0.55);
}

TEST(RandomAgent, EmitsOnlyValidActions) {
  const Scene s = small_scene();
  EpisodeSpec e = clutter_episode(s);
  e.budget = 4;
  for (std::uint64_t seed : {1, 2, 3}) {
    Env env;
    RandomAgent agent(seed);
    run_episode(env, agent, s, e);
    ASSERT_FALSE(env.trajectory().empty());
    for (const auto& step : env.trajectory()) {
      EXPECT_TRUE(step.info.valid) << step.action;
    }
    EXPECT_LE(env.t(), e.max_steps);
  }
}

}  // namespace
}  // namespace clarify
