// Copyright 2026 The simulseq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "simulseq/core.hpp"
#include "simulseq/decoding.hpp"
#include "simulseq/metrics.hpp"
#include "simulseq/model.hpp"
#include "simulseq/parallel.hpp"
#include "simulseq/rng.hpp"
#include "simulseq/stopping.hpp"

namespace simulseq {

enum class BleuScale { kUnit, kPercent };

struct RewardConfig {
  double alpha = 0.04;
  double target_delay = 2.0;
  BleuScale bleu_scale = BleuScale::kUnit;
  bool floor_delay = false;  // -max(0, floor(AL - d*)) instead of -max(0, AL - d*)

  double scale() const noexcept { return bleu_scale == BleuScale::kPercent ? 100.0 : 1.0; }
  void validate() const {
    if (!(alpha >= 0.0)) throw ConfigError("alpha must be non-negative");
    if (!(target_delay >= 0.0)) throw ConfigError("target delay must be non-negative");
  }
};

/// BLEU(y*, y_t) - BLEU(y*, y_{t-1}) with smoothed sentence BLEU; t is 1-based.
inline double delta_bleu(std::span<const TokenId> reference, std::span<const TokenId> hypothesis, std::size_t t) {
  if (t == 0 || t > hypothesis.size()) throw std::out_of_range("delta_bleu: t out of range");
  return sentence_bleu(reference, hypothesis.first(t)) - sentence_bleu(reference, hypothesis.first(t - 1));
}

/// Final-step latency reward -max(0, AL - d*). Every other position gets 0.
inline double delay_reward(const StreamTrace& trace, double target_delay, bool floor_delay = false) {
  double excess = average_lagging(trace) - target_delay;
  if (floor_delay) excess = std::floor(excess);
  return -std::max(0.0, excess);
}

namespace detail {

// Rewards live on a dyadic grid so every suffix sum is exact in double
// precision (for |R| < 2^12) and R_t - R_{t+1} == r_t holds bit for bit.
inline constexpr double kRewardQuantum = 0x1.0p-40;

inline double quantize_reward(double r) { return std::nearbyint(r / kRewardQuantum) * kRewardQuantum; }

}  // namespace detail

struct RewardSequence {
  std::vector<double> rewards;  // r_t, t = 1..T (one virtual entry when the output is empty)
  std::vector<double> returns;  // R_t = sum_{i >= t} r_i
};

inline std::vector<double> suffix_sums(std::span<const double> r) {
  std::vector<double> out(r.size());
  double acc = 0.0;
  for (std::size_t i = r.size(); i-- > 0;) {
    acc += r[i];
    out[i] = acc;
  }
  return out;
}

/// r_t = scale * dBLEU(t) for t < T; r_T = scale * BLEU(y*, y) + alpha * delay_reward.
/// An empty output gets a single virtual reward holding the delay term with AL = T_eta.
inline RewardSequence assemble_rewards(const StreamTrace& trace, std::span<const TokenId> reference,
                                       const RewardConfig& cfg) {
  if (reference.empty()) throw ConfigError("assemble_rewards: empty reference");
  cfg.validate();
  RewardSequence seq;
  const auto& y = trace.output;
  const double delay = cfg.alpha * delay_reward(trace, cfg.target_delay, cfg.floor_delay);
  if (y.empty()) {
    seq.rewards.push_back(detail::quantize_reward(delay));
  } else {
    seq.rewards.reserve(y.size());
    double previous = 0.0;
    for (std::size_t t = 1; t <= y.size(); ++t) {
      const double bleu = sentence_bleu(reference, std::span(y).first(t));
      const double r = t < y.size() ? cfg.scale() * (bleu - previous) : cfg.scale() * bleu + delay;
      seq.rewards.push_back(detail::quantize_reward(r));
      previous = bleu;
    }
  }
  seq.returns = suffix_sums(seq.rewards);
  return seq;
}

struct Trajectory {
  StreamTrace trace;
  std::vector<double> rewards;
  std::vector<double> returns;
  std::vector<TnDecision> decisions;  // one per non-terminal controller consultation
  double bleu = 0.0;                  // sentence BLEU in [0, 1]
  double al = 0.0;

  double total_reward() const { return returns.empty() ? 0.0 : returns.front(); }

  /// R_t for a decision about position t; positions past the output get 0.
  double return_at(std::size_t t) const { return t >= 1 && t <= returns.size() ? returns[t - 1] : 0.0; }

  std::vector<double> logp_actions() const {
    std::vector<double> out;
    out.reserve(decisions.size());
    for (const auto& d : decisions) out.push_back(d.logp);
    return out;
  }
};

/// One decoding run with the TN controller sampling actions under one-token arrivals.
template <TranslationModel Model>
Trajectory sample_trajectory(const Model& model, const SentencePair& pair,
                             std::shared_ptr<const PolicyParams> policy, const RewardConfig& cfg,
                             std::uint64_t seed, std::size_t cap = kDefaultLengthCap) {
  if (!policy || !policy->all_finite()) throw ConfigError("sample_trajectory: policy must be finite");
  RunConfig run;
  run.controller = TnConfig{std::move(policy), PolicyMode::kSample, "tn"};
  run.schedule = ArrivalSchedule::constant(1);
  run.strategy = StateStrategy::kRebuildAll;
  run.cap = cap;
  run.seed = seed;
  Trajectory traj;
  traj.trace = simulate(model, pair.source, run, &traj.decisions);
  auto seq = assemble_rewards(traj.trace, pair.reference, cfg);
  traj.rewards = std::move(seq.rewards);
  traj.returns = std::move(seq.returns);
  traj.bleu = sentence_bleu(pair.reference, traj.trace.output);
  traj.al = average_lagging(traj.trace);
  return traj;
}

/// Returns at consulted steps, standardized over the whole batch (sentence
/// order, then trajectory order, then decision order). A batch whose returns
/// are all equal normalizes to zeros; a near-degenerate one is only centered.
inline std::vector<double> normalized_returns(std::span<const Trajectory> batch) {
  std::vector<double> values;
  for (const auto& traj : batch)
    for (const auto& d : traj.decisions) values.push_back(traj.return_at(d.t));
  if (values.empty()) return values;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  if (*lo == *hi) return std::vector<double>(values.size(), 0.0);
  double mean = 0.0;
  for (auto v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (auto v : values) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(values.size()));
  const bool degenerate = sd <= 1e-12 * (1.0 + std::abs(mean));
  for (auto& v : values) v = degenerate ? v - mean : (v - mean) / (sd + 1e-8);
  return values;
}

/// sum over consulted steps of normalized R_t * grad log pi(a_t | z_t).
inline std::vector<double> batch_gradient(const PolicyParams& params, std::span<const Trajectory> batch) {
  const auto weights = normalized_returns(batch);
  std::vector<double> grad(params.size(), 0.0);
  std::size_t k = 0;
  for (const auto& traj : batch)
    for (const auto& d : traj.decisions) {
      const double wgt = weights[k++];
      if (wgt != 0.0) accumulate_grad_logp(params, d.z, d.action, wgt, grad);
    }
  return grad;
}

/// The objective whose gradient batch_gradient() returns, with the
/// normalized returns held fixed.
inline double surrogate_objective(const PolicyParams& params, std::span<const Trajectory> batch,
                                  std::span<const double> weights) {
  double obj = 0.0;
  std::size_t k = 0;
  for (const auto& traj : batch)
    for (const auto& d : traj.decisions) {
      const auto p = policy_forward(params, d.z);
      obj += weights[k++] * std::log(d.action == Action::kStop ? p[1] : p[0]);
    }
  return obj;
}

/// Policy-gradient ascent step with Adam. Returns the gradient that was applied.
inline std::vector<double> policy_gradient_step(PolicyParams& params, AdamState& adam,
                                                std::span<const Trajectory> batch, const AdamConfig& cfg) {
  if (batch.empty()) throw ConfigError("policy_gradient_step: empty batch");
  auto grad = batch_gradient(params, batch);
  adam_ascent(params.flat(), grad, adam, cfg);
  return grad;
}

struct TrainConfig {
  std::size_t batch_size = 8;
  std::size_t trajectories_per_sentence = 5;
  std::size_t updates = 30000;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  std::size_t hidden1 = 64;
  std::size_t hidden2 = 64;
  std::size_t log_every = 100;
  std::size_t cap = kDefaultLengthCap;
  std::size_t jobs = 1;

  void validate() const {
    if (batch_size == 0 || trajectories_per_sentence == 0 || hidden1 == 0 || hidden2 == 0 || log_every == 0)
      throw ConfigError("training sizes must be positive");
    if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  }
};

struct UpdateStats {
  std::size_t update = 0;  // 1-based
  double mean_return = 0.0;
  double mean_bleu = 0.0;  // percent
  double mean_al = 0.0;
  double p_stop_mean = 0.0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<UpdateStats> per_update;
  std::vector<UpdateStats> log;  // averaged over each logging interval
};

inline json to_json(const TrainConfig& t, const RewardConfig& r) {
  json j;
  j["batch_size"] = t.batch_size;
  j["trajectories_per_sentence"] = t.trajectories_per_sentence;
  j["updates"] = t.updates;
  j["lr"] = t.lr;
  j["seed"] = t.seed;
  j["hidden1"] = t.hidden1;
  j["hidden2"] = t.hidden2;
  j["cap"] = t.cap;
  j["alpha"] = r.alpha;
  j["target_delay"] = r.target_delay;
  j["bleu_scale"] = r.bleu_scale == BleuScale::kPercent ? "percent" : "unit";
  j["floor_delay"] = r.floor_delay;
  return j;
}

/// Trains the TN controller against a frozen model and keeps the last parameters.
template <TranslationModel Model>
TrainResult train_tn(const Model& model, std::span<const SentencePair> corpus, const TrainConfig& train,
                     const RewardConfig& reward) {
  train.validate();
  reward.validate();
  if (corpus.empty()) throw ConfigError("train_tn: empty corpus");
  TrainResult result;
  auto& ck = result.checkpoint;
  ck.params = PolicyParams::initialize(model.hidden_dim(), train.hidden1, train.hidden2, train.seed);
  ck.adam = AdamState{0, std::vector<double>(ck.params.size(), 0.0), std::vector<double>(ck.params.size(), 0.0)};
  ck.training_config = to_json(train, reward);
  const AdamConfig adam_cfg{train.lr};

  const std::size_t per_update = train.batch_size * train.trajectories_per_sentence;
  std::vector<Trajectory> batch(per_update);
  UpdateStats window;
  std::size_t in_window = 0;
  for (std::size_t u = 0; u < train.updates; ++u) {
    Rng pick(derive_seed({train.seed, u, 0x5E7ULL}));
    std::vector<std::size_t> sentences(train.batch_size);
    for (auto& s : sentences) s = uniform_int(pick, 0, corpus.size() - 1);
    auto policy = std::make_shared<const PolicyParams>(ck.params);
    parallel_for(per_update, train.jobs, [&](std::size_t k) {
      const std::size_t slot = k / train.trajectories_per_sentence;
      const std::size_t traj = k % train.trajectories_per_sentence;
      batch[k] = sample_trajectory(model, corpus[sentences[slot]], policy, reward,
                                   derive_seed({train.seed, u, slot, traj}), train.cap);
    });

    UpdateStats st;
    st.update = u + 1;
    std::size_t decisions = 0;
    for (const auto& t : batch) {
      st.mean_return += t.total_reward();
      st.mean_bleu += 100.0 * t.bleu;
      st.mean_al += t.al;
      for (const auto& d : t.decisions) st.p_stop_mean += d.p_stop;
      decisions += t.decisions.size();
    }
    const double n = static_cast<double>(batch.size());
    st.mean_return /= n;
    st.mean_bleu /= n;
    st.mean_al /= n;
    st.p_stop_mean = decisions ? st.p_stop_mean / static_cast<double>(decisions) : 0.0;
    result.per_update.push_back(st);

    policy_gradient_step(ck.params, *ck.adam, batch, adam_cfg);

    window.mean_return += st.mean_return;
    window.mean_bleu += st.mean_bleu;
    window.mean_al += st.mean_al;
    window.p_stop_mean += st.p_stop_mean;
    if (++in_window == train.log_every || u + 1 == train.updates) {
      const double m = static_cast<double>(in_window);
      window.update = u + 1;
      window.mean_return /= m;
      window.mean_bleu /= m;
      window.mean_al /= m;
      window.p_stop_mean /= m;
      result.log.push_back(window);
      window = {};
      in_window = 0;
    }
  }
  return result;
}

inline void save_training_log(const std::string& path, std::span<const UpdateStats> log) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write training log " + path);
  out << "update,mean_return,mean_bleu,mean_al,p_stop_mean\n";
  char buf[256];
  for (const auto& s : log) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g\n", s.update, s.mean_return, s.mean_bleu,
                  s.mean_al, s.p_stop_mean);
    out << buf;
  }
}

}  // namespace simulseq
