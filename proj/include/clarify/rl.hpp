#pragma once

// Actor-critic PPO trained from scratch on the task environment: a two-layer
// tanh perceptron over symbolic features, clipped-surrogate updates with GAE,
// and a fixed-size structural action grid so policy outputs keep the same
// meaning across scenes. Parameters are float32; GAE, losses and optimizer
// state accumulate in float64 so logged numbers reproduce bit-for-bit.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <limits>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "clarify/agents.hpp"
#include "clarify/env.hpp"

namespace clarify {

// ---------------------------------------------------------------------------
// Training configuration.

// Which pending-skill advice the featurizer exposes.
//   none:    no advice features at all.
//   explore: only the belief-free sweep (open closed compartments here, then
//            walk to the nearest unvisited receptacle). Acting on an answer
//            still has to be read out of the refined goal features, so the
//            question reward terms keep their teaching role.
//   ladder:  the full committed-guess ladder including pick/carry/place. The
//            ladder recomputes from the refined belief, so merely following
//            it converts any useful answer into progress; subgoal shaping
//            alone then discovers asking and the reward contrast washes out.
enum class AdviceStyle { none, explore, ladder };

inline std::string_view to_string(AdviceStyle s) {
  switch (s) {
    case AdviceStyle::none: return "none";
    case AdviceStyle::explore: return "explore";
    case AdviceStyle::ladder: return "ladder";
  }
  throw std::invalid_argument("bad advice style");
}

inline AdviceStyle advice_style_from_string(std::string_view s) {
  if (s == "none") return AdviceStyle::none;
  if (s == "explore") return AdviceStyle::explore;
  if (s == "ladder") return AdviceStyle::ladder;
  throw std::invalid_argument("unknown advice style '" + std::string(s) + "'");
}

struct TrainConfig {
  double gamma = 0.99;
  double gae_tau = 0.95;
  double lr = 2.5e-4;
  double ppo_clip = 0.2;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  double max_grad_norm = 0.2;
  double adam_eps = 1e-5;
  int ppo_epochs = 2;
  int minibatches = 2;
  int rollout_length = 24;
  int num_envs = 8;
  int hidden_width = 128;
  long total_steps = 200000;
  int probe_every_updates = 25;
  bool normalize_advantages = false;  // plain advantages by default
  bool mask_invalid_actions = false;  // invalid picks stay selectable no-ops
  AdviceStyle advice = AdviceStyle::explore;
  bool aligned_ask_bits = false;
  std::uint64_t seed = 0;

  Json to_json() const {
    return Json{{"gamma", gamma},
                {"gae_tau", gae_tau},
                {"lr", lr},
                {"ppo_clip", ppo_clip},
                {"value_coef", value_coef},
                {"entropy_coef", entropy_coef},
                {"max_grad_norm", max_grad_norm},
                {"adam_eps", adam_eps},
                {"ppo_epochs", ppo_epochs},
                {"minibatches", minibatches},
                {"rollout_length", rollout_length},
                {"num_envs", num_envs},
                {"hidden_width", hidden_width},
                {"total_steps", total_steps},
                {"probe_every_updates", probe_every_updates},
                {"normalize_advantages", normalize_advantages},
                {"mask_invalid_actions", mask_invalid_actions},
                {"advice", std::string(to_string(advice))},
                {"aligned_ask_bits", aligned_ask_bits},
                {"seed", seed}};
  }

  static TrainConfig from_json(const Json& j) {
    TrainConfig c;
    c.gamma = j.at("gamma").get<double>();
    c.gae_tau = j.at("gae_tau").get<double>();
    c.lr = j.at("lr").get<double>();
    c.ppo_clip = j.at("ppo_clip").get<double>();
    c.value_coef = j.at("value_coef").get<double>();
    c.entropy_coef = j.at("entropy_coef").get<double>();
    c.max_grad_norm = j.at("max_grad_norm").get<double>();
    c.adam_eps = j.at("adam_eps").get<double>();
    c.ppo_epochs = j.at("ppo_epochs").get<int>();
    c.minibatches = j.at("minibatches").get<int>();
    c.rollout_length = j.at("rollout_length").get<int>();
    c.num_envs = j.at("num_envs").get<int>();
    c.hidden_width = j.at("hidden_width").get<int>();
    c.total_steps = j.at("total_steps").get<long>();
    c.probe_every_updates = j.at("probe_every_updates").get<int>();
    c.normalize_advantages = j.at("normalize_advantages").get<bool>();
    c.mask_invalid_actions = j.at("mask_invalid_actions").get<bool>();
    c.advice =
        advice_style_from_string(j.at("advice").get<std::string>());
    c.aligned_ask_bits = j.at("aligned_ask_bits").get<bool>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
  }
};

// ---------------------------------------------------------------------------
// Distribution helpers. Masked slots get a sentinel log-prob whose exp
// underflows to exactly zero, which keeps entropy sums NaN-free.

template <typename S>
inline constexpr S kMaskedLogProb = static_cast<S>(-1e30);

template <typename S>
std::vector<S> log_softmax(const std::vector<S>& logits,
                           const std::uint8_t* mask) {
  std::vector<S> out(logits.size(), kMaskedLogProb<S>);
  S max = std::numeric_limits<S>::lowest();
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (mask && !mask[i]) continue;
    max = std::max(max, logits[i]);
  }
  double denom = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (mask && !mask[i]) continue;
    denom += std::exp(static_cast<double>(logits[i] - max));
  }
  const double log_denom = std::log(denom);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (mask && !mask[i]) continue;
    out[i] = static_cast<S>(static_cast<double>(logits[i] - max) - log_denom);
  }
  return out;
}

template <typename S>
int greedy_action(const std::vector<S>& logp, const std::uint8_t* mask) {
  int best = -1;
  for (std::size_t i = 0; i < logp.size(); ++i) {
    if (mask && !mask[i]) continue;
    if (best < 0 || logp[i] > logp[static_cast<std::size_t>(best)]) {
      best = static_cast<int>(i);
    }
  }
  if (best < 0) throw std::logic_error("empty action mask");
  return best;
}

template <typename S>
int sample_action(const std::vector<S>& logp, Rng& rng) {
  const double r = rng.uniform01();
  double acc = 0.0;
  int last_live = -1;
  for (std::size_t i = 0; i < logp.size(); ++i) {
    const double p = std::exp(static_cast<double>(logp[i]));
    if (p <= 0.0) continue;
    last_live = static_cast<int>(i);
    acc += p;
    if (r < acc) return static_cast<int>(i);
  }
  if (last_live < 0) throw std::logic_error("empty action distribution");
  return last_live;  // numerical remainder lands on the final live slot
}

// Mean per-token log-probability, so long question strings are not penalized
// against one-token skills in token-factored policy variants.
inline double length_normalized_logprob(const std::vector<double>& token_logprobs) {
  if (token_logprobs.empty()) {
    throw std::invalid_argument("length_normalized_logprob: empty sequence");
  }
  double sum = 0.0;
  for (const double lp : token_logprobs) sum += lp;
  return sum / static_cast<double>(token_logprobs.size());
}

// ---------------------------------------------------------------------------
// Two-layer tanh MLP with actor and critic heads. Parameters live in one flat
// buffer so the optimizer, checkpoints, and finite-difference tests can walk
// them uniformly. Templated on the scalar type: float for training, double
// for gradient verification.

template <typename S>
struct MlpForward {
  std::vector<S> h1, h2, logits;
  S value = 0;
};

template <typename S>
class Mlp {
 public:
  Mlp() = default;

  // With aligned groups the final `actions` input entries are advice bits
  // wired straight to their own logits, scaled by one learnable scalar per
  // GROUP (weights tied across all actions in a group, initialized to zero).
  // Tying is what makes "trust the advice bit" a single parameter instead of
  // a lesson relearned per action slot.
  static Mlp init(int input, int hidden, int actions, Rng& rng,
                  std::vector<int> aligned_groups = {}) {
    Mlp net(input, hidden, actions, std::move(aligned_groups));
    // Xavier-uniform trunk; the actor head starts near zero so the initial
    // policy is close to uniform.
    net.fill_uniform(rng, net.o_w1_, hidden * input, xavier(input, hidden));
    net.fill_uniform(rng, net.o_w2_, hidden * hidden, xavier(hidden, hidden));
    net.fill_uniform(rng, net.o_wa_, actions * hidden,
                     xavier(hidden, actions) * 0.01);
    net.fill_uniform(rng, net.o_wc_, hidden, xavier(hidden, 1));
    return net;
  }

  static Mlp zeros_like(const Mlp& other) {
    return Mlp(other.in_, other.hidden_, other.actions_, other.skip_group_);
  }

  int input_dim() const { return in_; }
  int hidden_dim() const { return hidden_; }
  int action_dim() const { return actions_; }
  std::size_t param_count() const { return p_.size(); }
  S param_at(std::size_t flat) const { return p_[flat]; }

  template <typename F>
  void for_each_param(F&& f) {
    for (std::size_t i = 0; i < p_.size(); ++i) f(p_[i], i);
  }

  // name, rows, cols, flat offset — fixed enumeration order defines both the
  // flat parameter layout and the checkpoint tensor order.
  template <typename F>
  void for_each_tensor(F&& f) const {
    f("w1", hidden_, in_, o_w1_);
    f("b1", hidden_, 1, o_b1_);
    f("w2", hidden_, hidden_, o_w2_);
    f("b2", hidden_, 1, o_b2_);
    f("wa", actions_, hidden_, o_wa_);
    f("ba", actions_, 1, o_ba_);
    f("wc", 1, hidden_, o_wc_);
    f("bc", 1, 1, o_bc_);
    if (skip_groups_ > 0) f("skip", skip_groups_, 1, o_skip_);
  }

  const std::vector<int>& aligned_groups() const { return skip_group_; }

  const std::vector<S>& raw() const { return p_; }
  void set_raw(std::vector<S> values) {
    if (values.size() != p_.size()) {
      throw std::invalid_argument("parameter blob size mismatch");
    }
    p_ = std::move(values);
  }

  MlpForward<S> forward(const S* x) const {
    MlpForward<S> f;
    f.h1.resize(static_cast<std::size_t>(hidden_));
    f.h2.resize(static_cast<std::size_t>(hidden_));
    f.logits.resize(static_cast<std::size_t>(actions_));
    for (int i = 0; i < hidden_; ++i) {
      double acc = p_[o_b1_ + static_cast<std::size_t>(i)];
      const S* row = &p_[o_w1_ + static_cast<std::size_t>(i * in_)];
      for (int j = 0; j < in_; ++j) acc += static_cast<double>(row[j]) * x[j];
      f.h1[static_cast<std::size_t>(i)] = static_cast<S>(std::tanh(acc));
    }
    for (int i = 0; i < hidden_; ++i) {
      double acc = p_[o_b2_ + static_cast<std::size_t>(i)];
      const S* row = &p_[o_w2_ + static_cast<std::size_t>(i * hidden_)];
      for (int j = 0; j < hidden_; ++j) {
        acc += static_cast<double>(row[j]) * f.h1[static_cast<std::size_t>(j)];
      }
      f.h2[static_cast<std::size_t>(i)] = static_cast<S>(std::tanh(acc));
    }
    for (int i = 0; i < actions_; ++i) {
      double acc = p_[o_ba_ + static_cast<std::size_t>(i)];
      const S* row = &p_[o_wa_ + static_cast<std::size_t>(i * hidden_)];
      for (int j = 0; j < hidden_; ++j) {
        acc += static_cast<double>(row[j]) * f.h2[static_cast<std::size_t>(j)];
      }
      if (skip_groups_ > 0) {
        acc += static_cast<double>(
                   p_[o_skip_ + static_cast<std::size_t>(
                                    skip_group_[static_cast<std::size_t>(i)])]) *
               x[in_ - actions_ + i];
      }
      f.logits[static_cast<std::size_t>(i)] = static_cast<S>(acc);
    }
    double acc = p_[o_bc_];
    for (int j = 0; j < hidden_; ++j) {
      acc += static_cast<double>(p_[o_wc_ + static_cast<std::size_t>(j)]) *
             f.h2[static_cast<std::size_t>(j)];
    }
    f.value = static_cast<S>(acc);
    return f;
  }

  // Accumulates parameter gradients for one sample given the upstream
  // derivatives with respect to logits and value.
  void backward(const S* x, const MlpForward<S>& f,
                const std::vector<S>& dlogits, S dvalue, Mlp& grad) const {
    std::vector<double> dh2(static_cast<std::size_t>(hidden_), 0.0);
    for (int i = 0; i < actions_; ++i) {
      const double d = dlogits[static_cast<std::size_t>(i)];
      if (d == 0.0) continue;
      grad.p_[grad.o_ba_ + static_cast<std::size_t>(i)] += static_cast<S>(d);
      if (skip_groups_ > 0) {
        grad.p_[grad.o_skip_ + static_cast<std::size_t>(
                                   skip_group_[static_cast<std::size_t>(i)])] +=
            static_cast<S>(d * static_cast<double>(x[in_ - actions_ + i]));
      }
      const S* row = &p_[o_wa_ + static_cast<std::size_t>(i * hidden_)];
      S* grow = &grad.p_[grad.o_wa_ + static_cast<std::size_t>(i * hidden_)];
      for (int j = 0; j < hidden_; ++j) {
        grow[j] += static_cast<S>(d * f.h2[static_cast<std::size_t>(j)]);
        dh2[static_cast<std::size_t>(j)] += d * static_cast<double>(row[j]);
      }
    }
    if (dvalue != 0) {
      const double d = dvalue;
      grad.p_[grad.o_bc_] += static_cast<S>(d);
      for (int j = 0; j < hidden_; ++j) {
        grad.p_[grad.o_wc_ + static_cast<std::size_t>(j)] +=
            static_cast<S>(d * f.h2[static_cast<std::size_t>(j)]);
        dh2[static_cast<std::size_t>(j)] +=
            d * static_cast<double>(p_[o_wc_ + static_cast<std::size_t>(j)]);
      }
    }

    std::vector<double> dh1(static_cast<std::size_t>(hidden_), 0.0);
    for (int i = 0; i < hidden_; ++i) {
      const double h = f.h2[static_cast<std::size_t>(i)];
      const double d = dh2[static_cast<std::size_t>(i)] * (1.0 - h * h);
      if (d == 0.0) continue;
      grad.p_[grad.o_b2_ + static_cast<std::size_t>(i)] += static_cast<S>(d);
      const S* row = &p_[o_w2_ + static_cast<std::size_t>(i * hidden_)];
      S* grow = &grad.p_[grad.o_w2_ + static_cast<std::size_t>(i * hidden_)];
      for (int j = 0; j < hidden_; ++j) {
        grow[j] += static_cast<S>(d * f.h1[static_cast<std::size_t>(j)]);
        dh1[static_cast<std::size_t>(j)] += d * static_cast<double>(row[j]);
      }
    }
    for (int i = 0; i < hidden_; ++i) {
      const double h = f.h1[static_cast<std::size_t>(i)];
      const double d = dh1[static_cast<std::size_t>(i)] * (1.0 - h * h);
      if (d == 0.0) continue;
      grad.p_[grad.o_b1_ + static_cast<std::size_t>(i)] += static_cast<S>(d);
      S* grow = &grad.p_[grad.o_w1_ + static_cast<std::size_t>(i * in_)];
      for (int j = 0; j < in_; ++j) {
        grow[j] += static_cast<S>(d * static_cast<double>(x[j]));
      }
    }
  }

 private:
  Mlp(int input, int hidden, int actions, std::vector<int> aligned_groups = {})
      : in_(input),
        hidden_(hidden),
        actions_(actions),
        skip_group_(std::move(aligned_groups)) {
    if (!skip_group_.empty()) {
      if (static_cast<int>(skip_group_.size()) != actions || in_ < actions_) {
        throw std::invalid_argument(
            "aligned groups need one entry and one trailing input per action");
      }
      for (const int g : skip_group_) {
        if (g < 0) throw std::invalid_argument("negative aligned group");
        skip_groups_ = std::max(skip_groups_, g + 1);
      }
    }
    o_w1_ = 0;
    o_b1_ = o_w1_ + static_cast<std::size_t>(hidden * input);
    o_w2_ = o_b1_ + static_cast<std::size_t>(hidden);
    o_b2_ = o_w2_ + static_cast<std::size_t>(hidden * hidden);
    o_wa_ = o_b2_ + static_cast<std::size_t>(hidden);
    o_ba_ = o_wa_ + static_cast<std::size_t>(actions * hidden);
    o_wc_ = o_ba_ + static_cast<std::size_t>(actions);
    o_bc_ = o_wc_ + static_cast<std::size_t>(hidden);
    o_skip_ = o_bc_ + 1;
    p_.assign(o_skip_ + static_cast<std::size_t>(skip_groups_), S{0});
  }

  static double xavier(int fan_in, int fan_out) {
    return std::sqrt(6.0 / (fan_in + fan_out));
  }

  void fill_uniform(Rng& rng, std::size_t offset, int n, double scale) {
    for (int i = 0; i < n; ++i) {
      p_[offset + static_cast<std::size_t>(i)] =
          static_cast<S>((rng.uniform01() * 2.0 - 1.0) * scale);
    }
  }

  int in_ = 0, hidden_ = 0, actions_ = 0;
  std::vector<int> skip_group_;
  int skip_groups_ = 0;
  std::size_t o_w1_ = 0, o_b1_ = 0, o_w2_ = 0, o_b2_ = 0;
  std::size_t o_wa_ = 0, o_ba_ = 0, o_wc_ = 0, o_bc_ = 0, o_skip_ = 0;
  std::vector<S> p_;
};

// ---------------------------------------------------------------------------
// Rollout storage: time-major [t * num_envs + e].

struct AdapterStep {
  double reward = 0.0;
  bool done = false;
};

struct RolloutBatch {
  int rollout_length = 0;
  int num_envs = 0;
  int feature_dim = 0;
  int action_count = 0;
  std::vector<float> features;  // [T*N, F]
  std::vector<int> actions;     // [T*N]
  std::vector<float> logp;
  std::vector<float> values;
  std::vector<float> rewards;
  std::vector<std::uint8_t> dones;
  std::vector<std::uint8_t> mask;  // [T*N, A] when masking is enabled
  std::vector<float> bootstrap_values;  // [N], value after the last step
};

template <typename EnvT>
RolloutBatch collect_rollouts(std::vector<EnvT>& envs, const Mlp<float>& net,
                              const TrainConfig& cfg, Rng& rng) {
  if (envs.empty()) throw std::invalid_argument("no rollout environments");
  RolloutBatch b;
  b.rollout_length = cfg.rollout_length;
  b.num_envs = static_cast<int>(envs.size());
  b.feature_dim = envs.front().feature_dim();
  b.action_count = envs.front().action_count();
  const std::size_t total =
      static_cast<std::size_t>(b.rollout_length * b.num_envs);
  b.features.resize(total * static_cast<std::size_t>(b.feature_dim));
  b.actions.resize(total);
  b.logp.resize(total);
  b.values.resize(total);
  b.rewards.resize(total);
  b.dones.resize(total);
  if (cfg.mask_invalid_actions) {
    b.mask.resize(total * static_cast<std::size_t>(b.action_count));
  }

  for (int t = 0; t < b.rollout_length; ++t) {
    for (int e = 0; e < b.num_envs; ++e) {
      const std::size_t i = static_cast<std::size_t>(t * b.num_envs + e);
      const std::vector<float>& x = envs[static_cast<std::size_t>(e)].features();
      std::copy(x.begin(), x.end(),
                b.features.begin() + static_cast<std::ptrdiff_t>(
                                         i * static_cast<std::size_t>(b.feature_dim)));
      const std::uint8_t* m = nullptr;
      if (cfg.mask_invalid_actions) {
        std::uint8_t* mp =
            b.mask.data() + i * static_cast<std::size_t>(b.action_count);
        envs[static_cast<std::size_t>(e)].fill_mask(mp);
        m = mp;
      }
      const MlpForward<float> f = net.forward(x.data());
      const std::vector<float> logp = log_softmax(f.logits, m);
      const int a = sample_action(logp, rng);
      const AdapterStep r = envs[static_cast<std::size_t>(e)].step(a);
      b.actions[i] = a;
      b.logp[i] = logp[static_cast<std::size_t>(a)];
      b.values[i] = f.value;
      b.rewards[i] = static_cast<float>(r.reward);
      b.dones[i] = r.done ? 1 : 0;
    }
  }
  b.bootstrap_values.resize(static_cast<std::size_t>(b.num_envs));
  for (int e = 0; e < b.num_envs; ++e) {
    b.bootstrap_values[static_cast<std::size_t>(e)] =
        net.forward(envs[static_cast<std::size_t>(e)].features().data()).value;
  }
  return b;
}

// ---------------------------------------------------------------------------
// Generalized advantage estimation, float64 accumulation.

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;  // advantages + values
};

inline GaeResult compute_gae(const RolloutBatch& b, double gamma, double tau) {
  const int T = b.rollout_length;
  const int N = b.num_envs;
  GaeResult g;
  g.advantages.assign(static_cast<std::size_t>(T * N), 0.0);
  g.returns.assign(static_cast<std::size_t>(T * N), 0.0);
  for (int e = 0; e < N; ++e) {
    double next_adv = 0.0;
    for (int t = T - 1; t >= 0; --t) {
      const std::size_t i = static_cast<std::size_t>(t * N + e);
      const bool done = b.dones[i] != 0;
      double next_value = 0.0;
      if (!done) {
        next_value = t + 1 < T
                         ? static_cast<double>(
                               b.values[static_cast<std::size_t>((t + 1) * N + e)])
                         : static_cast<double>(
                               b.bootstrap_values[static_cast<std::size_t>(e)]);
      }
      const double delta = static_cast<double>(b.rewards[i]) +
                           gamma * next_value -
                           static_cast<double>(b.values[i]);
      next_adv = delta + gamma * tau * (done ? 0.0 : next_adv);
      g.advantages[i] = next_adv;
      g.returns[i] = next_adv + static_cast<double>(b.values[i]);
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// PPO loss and gradients.

struct LossStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double total = 0.0;
  double grad_norm = 0.0;
};

template <typename S>
struct BatchView {
  const S* features = nullptr;
  const int* actions = nullptr;
  const S* old_logp = nullptr;
  const double* advantages = nullptr;
  const double* returns = nullptr;
  const std::uint8_t* mask = nullptr;  // [row, action_dim] or null
  const int* indices = nullptr;        // rows of this minibatch
  int count = 0;
  int feature_dim = 0;
  int action_dim = 0;
};

// Clipped surrogate + value MSE - entropy bonus, averaged over the minibatch.
// When grad is non-null, parameter gradients are accumulated into it.
template <typename S>
LossStats ppo_loss_and_grad(const Mlp<S>& net, const BatchView<S>& mb,
                            const TrainConfig& cfg, Mlp<S>* grad) {
  LossStats stats;
  const double n = static_cast<double>(mb.count);
  std::vector<S> dlogits(static_cast<std::size_t>(mb.action_dim));
  for (int row = 0; row < mb.count; ++row) {
    const int idx = mb.indices[row];
    const S* x = mb.features + static_cast<std::size_t>(idx) *
                                   static_cast<std::size_t>(mb.feature_dim);
    const std::uint8_t* m =
        mb.mask ? mb.mask + static_cast<std::size_t>(idx) *
                                static_cast<std::size_t>(mb.action_dim)
                : nullptr;
    const MlpForward<S> f = net.forward(x);
    const std::vector<S> logp = log_softmax(f.logits, m);

    const int a = mb.actions[idx];
    const double lp = static_cast<double>(logp[static_cast<std::size_t>(a)]);
    const double ratio =
        std::exp(lp - static_cast<double>(mb.old_logp[idx]));
    const double adv = mb.advantages[idx];
    const double unclipped = ratio * adv;
    const double clipped =
        std::clamp(ratio, 1.0 - cfg.ppo_clip, 1.0 + cfg.ppo_clip) * adv;
    stats.policy_loss += -std::min(unclipped, clipped) / n;

    const double verr = static_cast<double>(f.value) - mb.returns[idx];
    stats.value_loss += verr * verr / n;

    double entropy = 0.0;
    for (int j = 0; j < mb.action_dim; ++j) {
      const double pj = std::exp(static_cast<double>(logp[static_cast<std::size_t>(j)]));
      if (pj > 0.0) {
        entropy -= pj * static_cast<double>(logp[static_cast<std::size_t>(j)]);
      }
    }
    stats.entropy += entropy / n;

    if (grad) {
      // Policy gradient flows only when the unclipped branch is active.
      const double dlp = unclipped <= clipped ? -adv * ratio / n : 0.0;
      for (int j = 0; j < mb.action_dim; ++j) {
        const double pj =
            std::exp(static_cast<double>(logp[static_cast<std::size_t>(j)]));
        double d = 0.0;
        if (pj > 0.0) {
          const double onehot = j == a ? 1.0 : 0.0;
          d += dlp * (onehot - pj);
          // d(-c_e * H)/dlogit_j = c_e * p_j * (logp_j + H)
          d += cfg.entropy_coef * pj *
               (static_cast<double>(logp[static_cast<std::size_t>(j)]) + entropy) / n;
        } else if (j == a) {
          d += dlp;  // chosen action is always live
        }
        dlogits[static_cast<std::size_t>(j)] = static_cast<S>(d);
      }
      const double dvalue = 2.0 * cfg.value_coef * verr / n;
      net.backward(x, f, dlogits, static_cast<S>(dvalue), *grad);
    }
  }
  stats.total = stats.policy_loss + cfg.value_coef * stats.value_loss -
                cfg.entropy_coef * stats.entropy;
  return stats;
}

// Global L2 gradient clipping; returns the pre-clip norm.
template <typename S>
double clip_gradients(Mlp<S>& grad, double max_norm) {
  double sq = 0.0;
  grad.for_each_param([&](S& g, std::size_t) {
    sq += static_cast<double>(g) * static_cast<double>(g);
  });
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    grad.for_each_param([&](S& g, std::size_t) {
      g = static_cast<S>(static_cast<double>(g) * scale);
    });
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Adam with float64 moment buffers.

template <typename S>
class Adam {
 public:
  Adam(const Mlp<S>& net, const TrainConfig& cfg)
      : lr_(cfg.lr),
        eps_(cfg.adam_eps),
        m_(net.param_count(), 0.0),
        v_(net.param_count(), 0.0) {}

  void step(Mlp<S>& net, const Mlp<S>& grad) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    net.for_each_param([&](S& w, std::size_t i) {
      const double g = static_cast<double>(grad.param_at(i));
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g * g;
      const double mhat = m_[i] / bc1;
      const double vhat = v_[i] / bc2;
      w = static_cast<S>(static_cast<double>(w) -
                         lr_ * mhat / (std::sqrt(vhat) + eps_));
    });
  }

 private:
  double lr_;
  double eps_;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  long t_ = 0;
  std::vector<double> m_, v_;
};

// ---------------------------------------------------------------------------
// One PPO update: epochs x shuffled contiguous minibatches.

inline LossStats ppo_update(Mlp<float>& net, const RolloutBatch& batch,
                            const GaeResult& gae, const TrainConfig& cfg,
                            Adam<float>& opt, Rng& rng) {
  const int n = batch.rollout_length * batch.num_envs;
  std::vector<double> advantages = gae.advantages;
  if (cfg.normalize_advantages) {
    double mean = 0.0;
    for (const double a : advantages) mean += a;
    mean /= n;
    double var = 0.0;
    for (const double a : advantages) var += (a - mean) * (a - mean);
    const double stddev = std::sqrt(var / n) + 1e-8;
    for (double& a : advantages) a = (a - mean) / stddev;
  }

  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

  LossStats mean_stats;
  int chunks = 0;
  for (int epoch = 0; epoch < cfg.ppo_epochs; ++epoch) {
    rng.shuffle(order);
    for (int mbi = 0; mbi < cfg.minibatches; ++mbi) {
      const int lo = mbi * n / cfg.minibatches;
      const int hi = (mbi + 1) * n / cfg.minibatches;
      BatchView<float> view;
      view.features = batch.features.data();
      view.actions = batch.actions.data();
      view.old_logp = batch.logp.data();
      view.advantages = advantages.data();
      view.returns = gae.returns.data();
      view.mask = batch.mask.empty() ? nullptr : batch.mask.data();
      view.indices = order.data() + lo;
      view.count = hi - lo;
      view.feature_dim = batch.feature_dim;
      view.action_dim = batch.action_count;

      Mlp<float> grad = Mlp<float>::zeros_like(net);
      LossStats stats = ppo_loss_and_grad(net, view, cfg, &grad);
      if (!std::isfinite(stats.total)) {
        std::ostringstream msg;
        msg << "non-finite PPO loss: policy=" << stats.policy_loss
            << " value=" << stats.value_loss << " entropy=" << stats.entropy;
        throw std::runtime_error(msg.str());
      }
      stats.grad_norm = clip_gradients(grad, cfg.max_grad_norm);
      opt.step(net, grad);

      mean_stats.policy_loss += stats.policy_loss;
      mean_stats.value_loss += stats.value_loss;
      mean_stats.entropy += stats.entropy;
      mean_stats.total += stats.total;
      mean_stats.grad_norm = stats.grad_norm;
      ++chunks;
    }
  }
  mean_stats.policy_loss /= chunks;
  mean_stats.value_loss /= chunks;
  mean_stats.entropy /= chunks;
  mean_stats.total /= chunks;
  return mean_stats;
}

// ---------------------------------------------------------------------------
// Training loop skeleton shared by the task trainer and the numeric tests.
// On a non-finite loss the last good parameters are restored and the loop
// reports an abort instead of propagating garbage.

struct TrainLoopStats {
  long env_steps = 0;
  int updates = 0;
  bool aborted = false;
};

template <typename EnvT, typename After>
TrainLoopStats train_loop(std::vector<EnvT>& envs, Mlp<float>& net,
                          const TrainConfig& cfg, Rng& rng, After&& after_update) {
  TrainLoopStats stats;
  Adam<float> opt(net, cfg);
  while (stats.env_steps < cfg.total_steps) {
    const std::vector<float> snapshot = net.raw();
    RolloutBatch batch = collect_rollouts(envs, net, cfg, rng);
    stats.env_steps +=
        static_cast<long>(batch.rollout_length) * batch.num_envs;
    const GaeResult gae = compute_gae(batch, cfg.gamma, cfg.gae_tau);
    LossStats ls;
    try {
      ls = ppo_update(net, batch, gae, cfg, opt, rng);
    } catch (const std::runtime_error&) {
      net.set_raw(snapshot);
      stats.aborted = true;
      break;
    }
    bool finite = true;
    net.for_each_param([&](float& w, std::size_t) {
      if (!std::isfinite(w)) finite = false;
    });
    if (!finite) {
      net.set_raw(snapshot);
      stats.aborted = true;
      break;
    }
    ++stats.updates;
    after_update(stats.updates, ls);
  }
  return stats;
}

template <typename EnvT>
TrainLoopStats train_loop(std::vector<EnvT>& envs, Mlp<float>& net,
                          const TrainConfig& cfg, Rng& rng) {
  return train_loop(envs, net, cfg, rng, [](int, const LossStats&) {});
}

// ---------------------------------------------------------------------------
// Structural action grid: every slot keeps the same meaning in every scene
// (slot = block base + entity index), so one policy head transfers across
// scenes. Slots whose entity does not exist in a scene stay unmapped and act
// as invalid no-ops when selected.

struct ActionCaps {
  int receptacles = 8;
  int objects = 14;
  int compartments = 3;  // per receptacle
};

struct ActionLayout {
  ActionCaps caps;
  int done = 0;
  int nav = 0;
  int pick = 0;
  int place_surface = 0;
  int place_comp = 0;
  int open_comp = 0;
  int close_comp = 0;
  int ask_on_receptacle = 0;   // template 1, whole receptacle
  int ask_on_compartment = 0;  // template 1, compartment
  int ask_is_target = 0;       // template 2
  int ask_size = 0;            // template 3
  int ask_where_category = 0;  // template 4
  int ask_what_color = 0;      // template 5
  int ask_describe = 0;        // template 6
  int ask_instance_clutter = 0;  // template 7
  int ask_category_clutter = 0;  // template 8
  int ask_where_place = 0;       // template 9, articulated x object
  int count = 0;

  bool is_ask_slot(int slot) const { return slot >= ask_on_receptacle; }

  // Aligned-skip weight tying: skills and done share one scalar, asks the
  // other, so advice trust generalizes across slots of the same kind.
  std::vector<int> aligned_groups() const {
    std::vector<int> g(static_cast<std::size_t>(count), 0);
    for (int s = 0; s < count; ++s) g[static_cast<std::size_t>(s)] = is_ask_slot(s);
    return g;
  }

  static ActionLayout make(ActionCaps caps = {}) {
    ActionLayout l;
    l.caps = caps;
    const int R = caps.receptacles;
    const int O = caps.objects;
    const int RC = caps.receptacles * caps.compartments;
    int at = 0;
    l.done = at; at += 1;
    l.nav = at; at += R;
    l.pick = at; at += O;
    l.place_surface = at; at += R;
    l.place_comp = at; at += RC;
    l.open_comp = at; at += RC;
    l.close_comp = at; at += RC;
    l.ask_on_receptacle = at; at += R;
    l.ask_on_compartment = at; at += RC;
    l.ask_is_target = at; at += O;
    l.ask_size = at; at += 2;
    l.ask_where_category = at; at += kCategoryCount;
    l.ask_what_color = at; at += kCategoryCount;
    l.ask_describe = at; at += kCategoryCount;
    l.ask_instance_clutter = at; at += O;
    l.ask_category_clutter = at; at += kCategoryCount;
    l.ask_where_place = at; at += R * O;
    l.count = at;
    return l;
  }
};

class ActionTable {
 public:
  static ActionTable build(const Scene& scene, const ActionLayout& layout) {
    const ActionCaps& caps = layout.caps;
    const int R = static_cast<int>(scene.receptacles.size());
    const int O = static_cast<int>(scene.objects.size());
    if (R > caps.receptacles || O > caps.objects) {
      throw std::invalid_argument("scene exceeds action grid caps");
    }
    for (const auto& r : scene.receptacles) {
      if (static_cast<int>(r.sub_parts.size()) > caps.compartments) {
        throw std::invalid_argument("scene exceeds compartment cap");
      }
    }

    ActionTable t;
    t.layout_ = layout;
    t.actions_.assign(static_cast<std::size_t>(layout.count), std::nullopt);
    const auto put = [&](int slot, AgentAction a) {
      t.actions_[static_cast<std::size_t>(slot)] = std::move(a);
    };

    put(layout.done, done_action());
    const std::vector<Category> cats = categories_present(scene);
    const auto category_here = [&](int c) {
      return std::find(cats.begin(), cats.end(), static_cast<Category>(c)) !=
             cats.end();
    };

    for (int r = 0; r < R; ++r) {
      const Receptacle& rec = scene.receptacles[static_cast<std::size_t>(r)];
      put(layout.nav + r, nav_action(rec.name));
      if (rec.kind == ReceptacleKind::surface) {
        put(layout.place_surface + r, place_action(rec.name));
      }
      Question q1;
      q1.tmpl = QuestionTemplate::on_receptacle;
      q1.receptacle_ref = rec.name;
      put(layout.ask_on_receptacle + r, ask_action(q1));
      for (int c = 0; c < static_cast<int>(rec.sub_parts.size()); ++c) {
        const std::string label =
            compartment_label(rec, rec.sub_parts[static_cast<std::size_t>(c)]);
        const int rc = r * caps.compartments + c;
        put(layout.place_comp + rc, place_action(label));
        put(layout.open_comp + rc, open_action(label));
        put(layout.close_comp + rc, close_action(label));
        Question qc;
        qc.tmpl = QuestionTemplate::on_receptacle;
        qc.receptacle_ref = label;
        put(layout.ask_on_compartment + rc, ask_action(qc));
      }
      if (rec.kind == ReceptacleKind::articulated) {
        for (int o = 0; o < O; ++o) {
          Question q9;
          q9.tmpl = QuestionTemplate::where_place;
          q9.receptacle_ref = rec.name;
          q9.descriptor =
              descriptor_for(scene, scene.objects[static_cast<std::size_t>(o)]);
          put(layout.ask_where_place + r * caps.objects + o, ask_action(q9));
        }
      }
    }

    for (int o = 0; o < O; ++o) {
      const ObjectDescriptor d =
          descriptor_for(scene, scene.objects[static_cast<std::size_t>(o)]);
      put(layout.pick + o, pick_action(d));
      Question q2;
      q2.tmpl = QuestionTemplate::is_instance_target;
      q2.descriptor = d;
      put(layout.ask_is_target + o, ask_action(q2));
      Question q7;
      q7.tmpl = QuestionTemplate::instance_clutter;
      q7.descriptor = d;
      put(layout.ask_instance_clutter + o, ask_action(q7));
    }

    for (int s = 0; s < 2; ++s) {
      Question q3;
      q3.tmpl = QuestionTemplate::has_size;
      q3.size_word = s == 0 ? Size::small : Size::large;
      put(layout.ask_size + s, ask_action(q3));
    }

    for (int c = 0; c < kCategoryCount; ++c) {
      if (!category_here(c)) continue;
      const CategoryRef ref{std::nullopt, static_cast<Category>(c)};
      Question q;
      q.category_ref = ref;
      q.tmpl = QuestionTemplate::where_category;
      put(layout.ask_where_category + c, ask_action(q));
      q.tmpl = QuestionTemplate::what_color;
      put(layout.ask_what_color + c, ask_action(q));
      q.tmpl = QuestionTemplate::describe_category;
      put(layout.ask_describe + c, ask_action(q));
      q.tmpl = QuestionTemplate::category_clutter;
      put(layout.ask_category_clutter + c, ask_action(q));
    }
    return t;
  }

  const ActionLayout& layout() const { return layout_; }
  const std::optional<AgentAction>& action(int slot) const {
    return actions_[static_cast<std::size_t>(slot)];
  }

 private:
  ActionLayout layout_;
  std::vector<std::optional<AgentAction>> actions_;
};

// Valid = executable skill, or an ask the oracle would actually answer.
inline void fill_action_mask(const ActionTable& table, const Env& env,
                             std::uint8_t* out) {
  const int count = table.layout().count;
  for (int slot = 0; slot < count; ++slot) {
    const std::optional<AgentAction>& a = table.action(slot);
    bool ok = false;
    if (a) {
      if (a->kind == ActionKind::ask) {
        ok = is_grounded(a->question, env.context(), env.locations(),
                         env.visibility().seen, env.hints());
      } else {
        ok = env.action_valid(*a);
      }
    }
    out[slot] = ok ? 1 : 0;
  }
}

// ---------------------------------------------------------------------------
// Next pending skill: the same nearest-first explore / open / pick / carry /
// place ladder the scripted agents execute, recomputed from the public belief
// every step. The ladder is evaluated under every live hypothesis and advice
// is emitted only where they all agree on the move; at the point where they
// diverge the advice goes blank and `conflict` is raised instead. Resolving
// the conflict — by asking, or by gambling on a pick — is left to the policy,
// so the advice can never substitute for using answers. At most one move
// field is active; `done` means every live hypothesis is fully satisfied.

struct AdviceMove {
  int nav = -1;        // receptacle id to walk to
  int open_rc = -1;    // receptacle * compartment_cap + compartment to open
  int pick = -1;       // object id to pick up
  int place_loc = -1;  // surface r, or receptacle_cap + r * compartment_cap + c
  bool done = false;
  bool conflict = false;  // live hypotheses disagree on the next move

  bool operator==(const AdviceMove&) const = default;
};

// Belief-free sweep: open unopened compartments at the current receptacle,
// else walk to the nearest unvisited one. Suppressed while holding (sweeping
// with a full hand is never useful). Because it ignores the dialogue state
// entirely, exposing it cannot stand in for learning to use answers.
inline AdviceMove compute_explore_advice(const Env& env, int compartment_cap) {
  AdviceMove out;
  if (env.holding()) return out;
  const Scene& s = env.scene();
  const VisibilityState& vis = env.visibility();
  const Receptacle& here = s.receptacle(env.agent_at());
  for (std::size_t c = 0; c < here.sub_parts.size(); ++c) {
    if (!vis.has_opened(here.id, here.sub_parts[c])) {
      out.open_rc = here.id * compartment_cap + static_cast<int>(c);
      return out;
    }
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
  if (best >= 0) out.nav = best;
  return out;
}

inline AdviceMove compute_advice_for(const Env& env, const Hypothesis& h,
                                     int receptacle_cap, int compartment_cap) {
  const Scene& s = env.scene();
  const VisibilityState& vis = env.visibility();
  AdviceMove out;

  const auto comp_index = [&](const Location& l) {
    const Receptacle& rec = s.receptacle(l.receptacle);
    const auto it =
        std::find(rec.sub_parts.begin(), rec.sub_parts.end(), l.compartment);
    return l.receptacle * compartment_cap +
           static_cast<int>(it - rec.sub_parts.begin());
  };
  const auto nearest_unvisited = [&]() {
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
    return best;
  };

  std::vector<int> targets = h.targets;
  std::sort(targets.begin(), targets.end());

  const HypothesisContext& ctx = env.context();
  for (const int oid : targets) {
    std::optional<Location> dest;
    if (is_identification(ctx.family)) {
      dest = env.spec().destination;
    } else {
      dest = ctx.pref_of(h, s.object(oid).category);
    }
    if (!dest) continue;
    const Location cur = env.locations()[static_cast<std::size_t>(oid)];
    const bool held = env.holding() && *env.holding() == oid;
    if (!held && vis.has_seen(oid) && cur == *dest) continue;

    if (env.holding() && !held) {
      out.place_loc = env.agent_at();  // free the hand on the local surface
      return out;
    }
    if (held) {
      if (dest->receptacle != env.agent_at()) {
        out.nav = dest->receptacle;
      } else if (dest->in_compartment() &&
                 !vis.has_opened(dest->receptacle, dest->compartment)) {
        out.open_rc = comp_index(*dest);
      } else {
        out.place_loc = dest->in_compartment()
                            ? receptacle_cap + comp_index(*dest)
                            : dest->receptacle;
      }
      return out;
    }
    if (!vis.has_seen(oid)) {
      const Receptacle& here = s.receptacle(env.agent_at());
      for (const auto& part : here.sub_parts) {
        if (!vis.has_opened(here.id, part)) {
          out.open_rc = comp_index({here.id, part});
          return out;
        }
      }
      int rid = nearest_unvisited();
      if (rid < 0) {
        // everything visited: reopen the nearest closed compartment
        for (const auto& rec : s.receptacles) {
          for (const auto& part : rec.sub_parts) {
            if (!vis.has_opened(rec.id, part)) {
              rid = rec.id;
              break;
            }
          }
          if (rid >= 0) break;
        }
      }
      if (rid < 0) continue;  // should be unreachable: unseen implies hidden
      out.nav = rid;
      return out;
    }
    if (cur.receptacle != env.agent_at()) {
      out.nav = cur.receptacle;
    } else if (cur.in_compartment() &&
               !vis.has_opened(cur.receptacle, cur.compartment)) {
      out.open_rc = comp_index(cur);
    } else {
      out.pick = oid;
    }
    return out;
  }
  out.done = true;
  return out;
}

inline AdviceMove compute_advice(const Env& env, int receptacle_cap,
                                 int compartment_cap) {
  const HypothesisState& belief = env.belief();
  AdviceMove out;
  if (belief.alive.empty()) {
    out.done = true;
    return out;
  }
  out = compute_advice_for(env, belief.alive.front(), receptacle_cap,
                           compartment_cap);
  for (std::size_t i = 1; i < belief.alive.size(); ++i) {
    if (compute_advice_for(env, belief.alive[i], receptacle_cap,
                           compartment_cap) != out) {
      AdviceMove blank;
      blank.conflict = true;
      return blank;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Symbolic featurizer. Fixed-size encoding independent of the concrete scene;
// every entry lies in [0, 1]. Only agent-observable state is encoded: seen
// objects, the agent's own position/holding, dialogue-derived hypothesis
// summaries, question/step budgets, and the pending-skill advice.

struct FeatureCaps {
  int receptacles = 8;
  int objects = 14;
  int compartments = 3;
  int pref_slots = 6;
  AdviceStyle advice = AdviceStyle::explore;
  // When set, ask slots whose answer is guaranteed to eliminate a hypothesis
  // light up in the action-aligned tail.
  bool aligned_ask_bits = false;
};

class Featurizer {
 public:
  explicit Featurizer(FeatureCaps caps = {}) : caps_(caps) {
    loc_dims_ = caps_.receptacles + caps_.receptacles * caps_.compartments + 1;
    per_slot_ = 1 + kCategoryCount + kColorCount + 2 + loc_dims_ + 2;
    off_agent_ = 0;
    off_visited_ = off_agent_ + caps_.receptacles;
    off_objects_ = off_visited_ + caps_.receptacles;
    off_holding_ = off_objects_ + caps_.objects * per_slot_;
    off_bucket_ = off_holding_ + caps_.objects + 1;
    off_prefs_ = off_bucket_ + 6;
    off_counts_ = off_prefs_ + caps_.pref_slots;
    off_goal_ = off_counts_ + 3;
    off_advice_ = off_goal_ + loc_dims_ + caps_.objects + 1;
    advice_dims_ = caps_.receptacles + caps_.receptacles * caps_.compartments +
                   caps_.objects + caps_.receptacles +
                   caps_.receptacles * caps_.compartments + 1;
    off_aligned_ =
        off_advice_ + advice_dims_;
    aligned_dims_ = ActionLayout::make(ActionCaps{caps_.receptacles,
                                                  caps_.objects,
                                                  caps_.compartments})
                        .count;
    dim_ = off_aligned_ + aligned_dims_;
  }

  int dim() const { return dim_; }

  int possible_target_index(int oid) const {
    return off_objects_ + oid * per_slot_ + 1 + kCategoryCount + kColorCount +
           2 + loc_dims_;
  }

  void encode(const Env& env, const ActionTable& table,
              std::vector<float>& out) const {
    const Scene& scene = env.scene();
    if (static_cast<int>(scene.receptacles.size()) > caps_.receptacles ||
        static_cast<int>(scene.objects.size()) > caps_.objects) {
      throw std::invalid_argument("scene exceeds featurizer caps");
    }
    if (table.layout().count != aligned_dims_) {
      throw std::invalid_argument("action table does not match featurizer caps");
    }
    out.assign(static_cast<std::size_t>(dim_), 0.0f);
    const auto set = [&](int i) { out[static_cast<std::size_t>(i)] = 1.0f; };

    set(off_agent_ + env.agent_at());
    for (const int rid : env.visibility().visited) set(off_visited_ + rid);

    const HypothesisState& belief = env.belief();
    const std::set<int> possible = possible_targets(belief);
    const std::set<int> unresolved = unresolved_members(belief);

    for (int oid = 0; oid < static_cast<int>(scene.objects.size()); ++oid) {
      const int base = off_objects_ + oid * per_slot_;
      const ObjectInstance& obj = scene.objects[static_cast<std::size_t>(oid)];
      if (env.visibility().has_seen(oid)) {
        set(base);  // seen flag
        set(base + 1 + static_cast<int>(obj.category));
        set(base + 1 + kCategoryCount + static_cast<int>(obj.color));
        set(base + 1 + kCategoryCount + kColorCount +
            (obj.size == Size::large ? 1 : 0));
        const int loc_base = base + 1 + kCategoryCount + kColorCount + 2;
        encode_location(env, env.locations()[static_cast<std::size_t>(oid)],
                        loc_base, out);
      }
      if (possible.count(oid)) {
        set(possible_target_index(oid));
        if (!unresolved.count(oid)) set(possible_target_index(oid) + 1);
      }
    }

    set(off_holding_ + (env.holding() ? 1 + *env.holding() : 0));

    const int alive = static_cast<int>(belief.count());
    int bucket = 5;
    if (alive <= 1) bucket = 0;
    else if (alive == 2) bucket = 1;
    else if (alive == 3) bucket = 2;
    else if (alive == 4) bucket = 3;
    else if (alive <= 8) bucket = 4;
    set(off_bucket_ + bucket);

    const HypothesisContext& ctx = env.context();
    const int prefs = std::min(static_cast<int>(ctx.pref_categories.size()),
                               caps_.pref_slots);
    for (int i = 0; i < prefs; ++i) {
      bool resolved = !belief.alive.empty();
      for (const Hypothesis& h : belief.alive) {
        if (h.prefs[static_cast<std::size_t>(i)] !=
            belief.alive.front().prefs[static_cast<std::size_t>(i)]) {
          resolved = false;
          break;
        }
      }
      if (resolved) set(off_prefs_ + i);
    }

    const EpisodeSpec& spec = env.spec();
    out[static_cast<std::size_t>(off_counts_)] =
        static_cast<float>(std::min(env.questions_asked(), 16)) / 16.0f;
    out[static_cast<std::size_t>(off_counts_ + 1)] =
        static_cast<float>(std::clamp(spec.budget - env.questions_asked(), 0, 16)) /
        16.0f;
    out[static_cast<std::size_t>(off_counts_ + 2)] = static_cast<float>(
        std::clamp(1.0 - static_cast<double>(env.t()) / spec.max_steps, 0.0, 1.0));

    encode_goal(env, out);

    AdviceMove adv;
    if (caps_.advice == AdviceStyle::ladder) {
      adv = compute_advice(env, caps_.receptacles, caps_.compartments);
    } else if (caps_.advice == AdviceStyle::explore) {
      adv = compute_explore_advice(env, caps_.compartments);
    }
    const int open_base = off_advice_ + caps_.receptacles;
    const int pick_base =
        open_base + caps_.receptacles * caps_.compartments;
    const int place_base = pick_base + caps_.objects;
    const int done_flag =
        place_base + caps_.receptacles + caps_.receptacles * caps_.compartments;
    if (adv.nav >= 0) set(off_advice_ + adv.nav);
    else if (adv.open_rc >= 0) set(open_base + adv.open_rc);
    else if (adv.pick >= 0) set(pick_base + adv.pick);
    else if (adv.place_loc >= 0) set(place_base + adv.place_loc);
    else if (adv.done) set(done_flag);

    // Action-aligned tail: bit per slot, consumed by the net's aligned skip.
    // The advised skill lights its own slot; ask slots light up when grounded
    // and the live hypotheses would answer them differently (so the answer is
    // guaranteed to eliminate something, whichever hypothesis is true).
    const ActionLayout& lay = table.layout();
    const auto set_aligned = [&](int slot) { set(off_aligned_ + slot); };
    if (adv.nav >= 0) set_aligned(lay.nav + adv.nav);
    else if (adv.open_rc >= 0) set_aligned(lay.open_comp + adv.open_rc);
    else if (adv.pick >= 0) set_aligned(lay.pick + adv.pick);
    else if (adv.place_loc >= 0) {
      set_aligned(adv.place_loc < caps_.receptacles
                      ? lay.place_surface + adv.place_loc
                      : lay.place_comp + (adv.place_loc - caps_.receptacles));
    } else if (adv.done) {
      set_aligned(lay.done);
    }
    if (caps_.aligned_ask_bits && !belief.alive.empty()) {
      const std::vector<Location>& locs = env.locations();
      const std::set<int>& seen = env.visibility().seen;
      const ResolutionHints& hints = env.hints();
      for (int slot = 0; slot < lay.count; ++slot) {
        const std::optional<AgentAction>& a = table.action(slot);
        if (!a || a->kind != ActionKind::ask) continue;
        if (!is_grounded(a->question, ctx, locs, seen, hints)) continue;
        const Answer a0 = answer_under_hypothesis(
            a->question, belief.alive.front(), ctx, locs, &seen, hints);
        for (std::size_t h = 1; h < belief.alive.size(); ++h) {
          if (answer_under_hypothesis(a->question, belief.alive[h], ctx, locs,
                                      &seen, hints) != a0) {
            set_aligned(slot);
            break;
          }
        }
      }
    }
  }

 private:
  // Location one-hot: surface receptacle | compartment cell | held-by-agent.
  void encode_location(const Env& env, const Location& loc, int base,
                       std::vector<float>& out) const {
    if (loc.receptacle < 0) {
      out[static_cast<std::size_t>(
          base + caps_.receptacles + caps_.receptacles * caps_.compartments)] =
          1.0f;
      return;
    }
    if (loc.compartment.empty()) {
      out[static_cast<std::size_t>(base + loc.receptacle)] = 1.0f;
      return;
    }
    const Receptacle& rec =
        env.scene().receptacle(loc.receptacle);
    const auto it =
        std::find(rec.sub_parts.begin(), rec.sub_parts.end(), loc.compartment);
    if (it == rec.sub_parts.end()) return;
    const int c = static_cast<int>(it - rec.sub_parts.begin());
    out[static_cast<std::size_t>(base + caps_.receptacles +
                                 loc.receptacle * caps_.compartments + c)] =
        1.0f;
  }

  // First unsatisfied move of the lexicographically-first live hypothesis:
  // destination one-hot plus goal-object slot (index 0 = nothing pending).
  // This mirrors the committed-guess rule the scripted expert executes.
  void encode_goal(const Env& env, std::vector<float>& out) const {
    const int goal_obj_base = off_goal_ + loc_dims_;
    const HypothesisState& belief = env.belief();
    if (belief.alive.empty()) {
      out[static_cast<std::size_t>(goal_obj_base)] = 1.0f;
      return;
    }
    const Hypothesis committed = *std::min_element(
        belief.alive.begin(), belief.alive.end(),
        [](const Hypothesis& a, const Hypothesis& b) {
          return std::tie(a.targets, a.prefs) < std::tie(b.targets, b.prefs);
        });
    std::vector<int> targets = committed.targets;
    std::sort(targets.begin(), targets.end());

    const HypothesisContext& ctx = env.context();
    for (const int oid : targets) {
      std::optional<Location> dest;
      if (is_identification(ctx.family)) {
        dest = env.spec().destination;
      } else {
        dest = ctx.pref_of(
            committed,
            env.scene().object(oid).category);
      }
      if (!dest) continue;
      const bool satisfied =
          env.visibility().has_seen(oid) &&
          env.locations()[static_cast<std::size_t>(oid)] == *dest;
      if (satisfied) continue;
      encode_location(env, *dest, off_goal_, out);
      out[static_cast<std::size_t>(goal_obj_base + 1 + oid)] = 1.0f;
      return;
    }
    out[static_cast<std::size_t>(goal_obj_base)] = 1.0f;  // nothing pending
  }

  FeatureCaps caps_;
  int loc_dims_ = 0;
  int per_slot_ = 0;
  int advice_dims_ = 0;
  int aligned_dims_ = 0;
  int off_agent_ = 0;
  int off_visited_ = 0;
  int off_objects_ = 0;
  int off_advice_ = 0;
  int off_aligned_ = 0;
  int off_holding_ = 0;
  int off_bucket_ = 0;
  int off_prefs_ = 0;
  int off_counts_ = 0;
  int off_goal_ = 0;
  int dim_ = 0;
};

// ---------------------------------------------------------------------------
// Rollout adapter binding the task env to the trainer: fixed feature/action
// dims, auto-reset over a round-robin episode list, per-episode score log.

struct EpisodeRef {
  const Scene* scene = nullptr;
  const EpisodeSpec* spec = nullptr;
};

struct EpisodeScore {
  bool success = false;
  int steps = 0;
  int questions = 0;
  int useful = 0;
  int k = 0;
  double total_reward = 0.0;
};

class TaskEnvAdapter {
 public:
  TaskEnvAdapter(std::vector<EpisodeRef> episodes, int start, int stride,
                 Featurizer featurizer, ActionLayout layout,
                 RewardConfig reward)
      : episodes_(std::move(episodes)),
        cursor_(start),
        stride_(stride),
        featurizer_(std::move(featurizer)),
        layout_(layout),
        env_(std::make_unique<Env>(reward)) {
    if (episodes_.empty()) throw std::invalid_argument("empty episode list");
    reset_current();
  }

  int feature_dim() const { return featurizer_.dim(); }
  int action_count() const { return layout_.count; }
  const std::vector<float>& features() const { return features_; }
  const Env& env() const { return *env_; }
  const ActionTable& table() const { return table_; }
  const std::vector<EpisodeScore>& finished() const { return finished_; }
  void drain_finished() { finished_.clear(); }

  void fill_mask(std::uint8_t* out) const {
    fill_action_mask(table_, *env_, out);
  }

  AdapterStep step(int slot) {
    const std::optional<AgentAction>& mapped = table_.action(slot);
    // Unmapped slots deliberately execute as invalid no-ops.
    const AgentAction action = mapped ? *mapped : nav_action("");
    const StepResult r = env_->step(action);
    useful_ += r.info.useful ? 1 : 0;
    AdapterStep out;
    out.reward = r.reward.total;
    out.done = !env_->live();
    if (out.done) {
      EpisodeScore score;
      score.success = env_->outcome() == EpisodeOutcome::success;
      score.steps = env_->t();
      score.questions = env_->questions_asked();
      score.useful = useful_;
      score.k = env_->spec().min_questions;
      for (const TrajectoryStep& s : env_->trajectory()) {
        score.total_reward += s.reward.total;
      }
      finished_.push_back(score);
      cursor_ += stride_;
      reset_current();
    } else {
      featurizer_.encode(*env_, table_, features_);
    }
    return out;
  }

 private:
  void reset_current() {
    const EpisodeRef& ref =
        episodes_[static_cast<std::size_t>(cursor_) % episodes_.size()];
    env_->reset(*ref.scene, *ref.spec);
    if (ref.scene != table_scene_) {
      table_ = ActionTable::build(*ref.scene, layout_);
      table_scene_ = ref.scene;
    }
    useful_ = 0;
    featurizer_.encode(*env_, table_, features_);
  }

  std::vector<EpisodeRef> episodes_;
  int cursor_ = 0;
  int stride_ = 1;
  Featurizer featurizer_;
  ActionLayout layout_;
  std::unique_ptr<Env> env_;
  ActionTable table_;
  const Scene* table_scene_ = nullptr;
  std::vector<float> features_;
  std::vector<EpisodeScore> finished_;
  int useful_ = 0;
};

// ---------------------------------------------------------------------------
// Greedy/sampling policy wrapper usable with run_episode().

class PolicyAgent {
 public:
  PolicyAgent(const Mlp<float>* net, const Featurizer* featurizer,
              ActionLayout layout, bool mask, bool greedy = true,
              std::uint64_t seed = 0)
      : net_(net),
        featurizer_(featurizer),
        layout_(layout),
        mask_(mask),
        greedy_(greedy),
        rng_(seed) {}

  void begin_episode(const Env& env) {
    table_ = ActionTable::build(env.scene(), layout_);
  }

  AgentAction act(const Env& env) {
    featurizer_->encode(env, table_, features_);
    const std::uint8_t* m = nullptr;
    if (mask_) {
      mask_buf_.resize(static_cast<std::size_t>(layout_.count));
      fill_action_mask(table_, env, mask_buf_.data());
      m = mask_buf_.data();
    }
    const MlpForward<float> f = net_->forward(features_.data());
    const std::vector<float> logp = log_softmax(f.logits, m);
    const int slot = greedy_ ? greedy_action(logp, m) : sample_action(logp, rng_);
    const std::optional<AgentAction>& mapped = table_.action(slot);
    return mapped ? *mapped : nav_action("");
  }

 private:
  const Mlp<float>* net_;
  const Featurizer* featurizer_;
  ActionLayout layout_;
  bool mask_;
  bool greedy_;
  Rng rng_;
  ActionTable table_;
  std::vector<float> features_;
  std::vector<std::uint8_t> mask_buf_;
};

// ---------------------------------------------------------------------------
// Checkpoints: versioned JSON tensor dump. Floats are stored as JSON numbers;
// float -> double -> shortest-round-trip text -> float is bit-exact.

struct LoadedCheckpoint {
  Mlp<float> net;
  TrainConfig config;
};

inline Json save_checkpoint(const Mlp<float>& net, const TrainConfig& cfg) {
  Json tensors = Json::object();
  net.for_each_tensor([&](const char* name, int rows, int cols,
                          std::size_t offset) {
    Json data = Json::array();
    for (int i = 0; i < rows * cols; ++i) {
      data.push_back(
          static_cast<double>(net.param_at(offset + static_cast<std::size_t>(i))));
    }
    tensors[name] = Json{{"rows", rows}, {"cols", cols}, {"data", std::move(data)}};
  });
  return Json{{"version", 1},
              {"kind", "policy_checkpoint"},
              {"input_dim", net.input_dim()},
              {"hidden_dim", net.hidden_dim()},
              {"action_dim", net.action_dim()},
              {"aligned_groups", net.aligned_groups()},
              {"config", cfg.to_json()},
              {"tensors", std::move(tensors)}};
}

inline LoadedCheckpoint load_checkpoint(const Json& j) {
  if (j.at("kind").get<std::string>() != "policy_checkpoint" ||
      j.at("version").get<int>() != 1) {
    throw std::invalid_argument("not a version-1 policy checkpoint");
  }
  LoadedCheckpoint out;
  out.config = TrainConfig::from_json(j.at("config"));
  Rng dummy(0);
  out.net = Mlp<float>::init(j.at("input_dim").get<int>(),
                             j.at("hidden_dim").get<int>(),
                             j.at("action_dim").get<int>(), dummy,
                             j.value("aligned_groups", std::vector<int>{}));
  std::vector<float> params(out.net.param_count(), 0.0f);
  const Json& tensors = j.at("tensors");
  out.net.for_each_tensor([&](const char* name, int rows, int cols,
                              std::size_t offset) {
    const Json& t = tensors.at(name);
    if (t.at("rows").get<int>() != rows || t.at("cols").get<int>() != cols) {
      throw std::invalid_argument(std::string("tensor shape mismatch: ") + name);
    }
    const Json& data = t.at("data");
    for (int i = 0; i < rows * cols; ++i) {
      params[offset + static_cast<std::size_t>(i)] =
          static_cast<float>(data.at(static_cast<std::size_t>(i)).get<double>());
    }
  });
  out.net.set_raw(std::move(params));
  return out;
}

// ---------------------------------------------------------------------------
// Task training with periodic greedy probes.

struct MetricPoint {
  int update = 0;
  long env_steps = 0;
  double sr = 0.0;
  double ars = 0.0;
  double qr = 0.0;
  double mean_return = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
};

inline std::string curve_to_csv(const std::vector<MetricPoint>& curve) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "update,env_steps,sr,ars,qr,mean_return,policy_loss,value_loss,entropy\n";
  for (const MetricPoint& p : curve) {
    os << p.update << ',' << p.env_steps << ',' << p.sr << ',' << p.ars << ','
       << p.qr << ',' << p.mean_return << ',' << p.policy_loss << ','
       << p.value_loss << ',' << p.entropy << '\n';
  }
  return os.str();
}

struct TrainResult {
  Mlp<float> net;
  TrainConfig config;
  int feature_dim = 0;
  int action_count = 0;
  std::vector<MetricPoint> curve;
  TrainLoopStats loop;
};

// Greedy evaluation of the current policy on a fixed probe set; ARS and QR
// follow the metric definitions and cover the K >= 1 episodes.
inline MetricPoint probe_policy(const Mlp<float>& net, const Featurizer& fz,
                                const ActionLayout& layout, bool mask,
                                const std::vector<EpisodeRef>& probe_set) {
  MetricPoint p;
  int with_k = 0;
  for (const EpisodeRef& ref : probe_set) {
    Env env;
    PolicyAgent agent(&net, &fz, layout, mask);
    const EpisodeStats st = run_episode(env, agent, *ref.scene, *ref.spec);
    const bool success = st.outcome == EpisodeOutcome::success;
    const int k = ref.spec->min_questions;
    p.sr += success ? 1.0 : 0.0;
    if (k >= 1) {
      ++with_k;
      const int q_rel = st.useful_questions;
      const int q_irr = st.questions_asked - st.useful_questions;
      p.ars += success ? 1.0 / (1 + std::abs(q_rel - k) + q_irr) : 0.0;
      p.qr += static_cast<double>(st.questions_asked) / k;
    }
  }
  if (!probe_set.empty()) p.sr /= static_cast<double>(probe_set.size());
  if (with_k > 0) {
    p.ars /= with_k;
    p.qr /= with_k;
  }
  return p;
}

inline TrainResult train_policy(const TrainConfig& cfg,
                                const std::vector<EpisodeRef>& train_set,
                                const std::vector<EpisodeRef>& probe_set,
                                const RewardConfig& reward = {}) {
  const ActionLayout layout = ActionLayout::make();
  FeatureCaps fcaps;
  fcaps.advice = cfg.advice;
  fcaps.aligned_ask_bits = cfg.aligned_ask_bits;
  const Featurizer featurizer(fcaps);

  Rng master(cfg.seed);
  Rng init_rng = master.child(1);
  Rng roll_rng = master.child(2);

  TrainResult result;
  result.config = cfg;
  result.feature_dim = featurizer.dim();
  result.action_count = layout.count;
  result.net = Mlp<float>::init(featurizer.dim(), cfg.hidden_width,
                                layout.count, init_rng,
                                layout.aligned_groups());

  std::vector<TaskEnvAdapter> envs;
  envs.reserve(static_cast<std::size_t>(cfg.num_envs));
  for (int e = 0; e < cfg.num_envs; ++e) {
    envs.emplace_back(train_set, e, cfg.num_envs, featurizer, layout, reward);
  }

  const long steps_per_update =
      static_cast<long>(cfg.rollout_length) * cfg.num_envs;
  std::vector<EpisodeScore> window;
  const auto record = [&](int update, const LossStats& ls) {
    MetricPoint p = probe_policy(result.net, featurizer, layout,
                                 cfg.mask_invalid_actions, probe_set);
    p.update = update;
    p.env_steps = update * steps_per_update;
    for (const EpisodeScore& s : window) p.mean_return += s.total_reward;
    if (!window.empty()) p.mean_return /= static_cast<double>(window.size());
    window.clear();
    p.policy_loss = ls.policy_loss;
    p.value_loss = ls.value_loss;
    p.entropy = ls.entropy;
    result.curve.push_back(p);
  };

  record(0, LossStats{});
  result.loop = train_loop(
      envs, result.net, cfg, roll_rng, [&](int update, const LossStats& ls) {
        for (TaskEnvAdapter& env : envs) {
          const std::vector<EpisodeScore>& f = env.finished();
          window.insert(window.end(), f.begin(), f.end());
          env.drain_finished();
        }
        if (update % cfg.probe_every_updates == 0) record(update, ls);
      });
  if (result.curve.empty() ||
      result.curve.back().update != result.loop.updates) {
    record(result.loop.updates, LossStats{});
  }
  return result;
}

}  // namespace clarify
