// Copyright 2026 The simulseq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "simulseq/core.hpp"
#include "simulseq/model.hpp"
#include "simulseq/parallel.hpp"
#include "simulseq/rng.hpp"
#include "simulseq/stopping.hpp"

namespace simulseq {

struct WaitkConfig {
  std::size_t k = 1;
};

struct TnConfig {
  std::shared_ptr<const PolicyParams> policy;
  PolicyMode mode = PolicyMode::kGreedy;
  std::string label = "tn";
};

using ControllerConfig = std::variant<LEConfig, WaitkConfig, TnConfig>;

inline std::string controller_name(const ControllerConfig& c) {
  if (std::holds_alternative<LEConfig>(c)) return "le";
  if (std::holds_alternative<WaitkConfig>(c)) return "waitk";
  return "tn";
}

inline std::string controller_param(const ControllerConfig& c) {
  if (const auto* le = std::get_if<LEConfig>(&c)) return std::to_string(le->d);
  if (const auto* wk = std::get_if<WaitkConfig>(&c)) return std::to_string(wk->k);
  return std::get<TnConfig>(c).label;
}

struct RunConfig {
  ControllerConfig controller = LEConfig{};
  ArrivalSchedule schedule = ArrivalSchedule::constant(1);
  StateStrategy strategy = StateStrategy::kRebuildAll;
  std::size_t cap = kDefaultLengthCap;
  std::uint64_t seed = 0;  // only consumed by a sampling TN controller
};

/// One consultation of the TN controller, kept for policy-gradient training.
struct TnDecision {
  std::size_t t;  // 1-based candidate position
  std::vector<double> z;
  Action action;
  double p_stop;
  double logp;
};

namespace detail {

/// Runtime view of a controller for one run.
class StopRule {
 public:
  StopRule(const ControllerConfig& cfg, std::uint64_t seed, std::vector<TnDecision>* decisions)
      : cfg_(cfg), rng_(seed), decisions_(decisions) {
    if (const auto* wk = std::get_if<WaitkConfig>(&cfg_); wk && wk->k == 0)
      throw ConfigError("wait-k needs k >= 1");
    if (const auto* tn = std::get_if<TnConfig>(&cfg_); tn && !tn->policy)
      throw ConfigError("TN controller without a policy");
  }

  std::size_t quota(std::size_t eta_s, std::size_t tau_prev, bool terminal, std::size_t cap) const {
    if (const auto* le = std::get_if<LEConfig>(&cfg_)) return le_quota(eta_s, tau_prev, le->d, terminal, cap);
    if (const auto* wk = std::get_if<WaitkConfig>(&cfg_)) return waitk_quota(wk->k, eta_s, tau_prev, terminal, cap);
    return cap > tau_prev ? cap - tau_prev : 0;
  }

  bool consults() const noexcept { return std::holds_alternative<TnConfig>(cfg_); }

  Action consult(std::size_t t, const DecodeStepResult& step) {
    const auto& tn = std::get<TnConfig>(cfg_);
    const auto d = tn_should_stop(*tn.policy, step.hidden_state, tn.mode, &rng_);
    if (decisions_) {
      const double p = d.action == Action::kStop ? d.p_stop : 1.0 - d.p_stop;
      decisions_->push_back({t, step.hidden_state, d.action, d.p_stop, std::log(p)});
    }
    return d.action;
  }

 private:
  const ControllerConfig& cfg_;
  Rng rng_;
  std::vector<TnDecision>* decisions_;
};

}  // namespace detail

struct PrefixResult {
  Sentence tokens;
  StopReason reason;
};

/// Inner loop: greedy prefix translation against the prepared source prefix.
///
/// Stops on a predicted EOS (never committed), on controller stop (quota
/// exhausted or TN stop action), or when the output reaches `cap`. A TN stop
/// is decided after the candidate state is computed and before the candidate
/// token is committed. Committed tokens are appended to `trace.output` with
/// l(t) = |source_prefix|.
template <TranslationModel Model>
PrefixResult prefix_translate(const Model& model, ModelState& state, std::span<const TokenId> source_prefix,
                              detail::StopRule& rule, bool terminal, std::size_t cap, StreamTrace& trace) {
  const std::size_t eta_s = source_prefix.size();
  const std::size_t tau_prev = trace.output.size();
  const std::size_t quota = rule.quota(eta_s, tau_prev, terminal, cap);
  PrefixResult result{{}, StopReason::kQuota};
  for (;;) {
    if (trace.output.size() >= cap) {
      result.reason = StopReason::kLengthCap;
      break;
    }
    if (result.tokens.size() >= quota) {
      result.reason = StopReason::kQuota;
      break;
    }
    auto step = model.decode_step(state, trace.output);
    if (step.is_eos) {
      result.reason = StopReason::kEos;
      break;
    }
    if (rule.consults() && !terminal) {
      const std::size_t t = trace.output.size() + 1;
      const Action a = rule.consult(t, step);
      trace.actions.push_back({t, a});
      if (a == Action::kStop) {
        result.reason = StopReason::kPolicyStop;
        break;
      }
    }
    trace.output.push_back(step.next_token);
    trace.l.push_back(eta_s);
    result.tokens.push_back(step.next_token);
    model.append_committed(state, step);
  }
  return result;
}

/// Outer loop: reveal c_s tokens, prepare states, run prefix translation.
/// The controller is bypassed at the terminal step, which runs to EOS or cap.
template <TranslationModel Model>
StreamTrace simulate(const Model& model, std::span<const TokenId> source, const RunConfig& config,
                     std::vector<TnDecision>* decisions = nullptr) {
  if (config.cap == 0) throw ConfigError("length cap must be at least 1");
  const auto counts = config.schedule.counts(source.size());
  detail::StopRule rule(config.controller, config.seed, decisions);
  ModelState state;
  state.strategy = config.strategy;
  StreamTrace trace;
  std::size_t observed = 0;
  for (std::size_t s = 0; s < counts.size(); ++s) {
    observed += counts[s];
    const bool terminal = s + 1 == counts.size();
    const auto prefix = source.first(observed);
    model.prepare_states(state, prefix, trace.output);
    auto r = prefix_translate(model, state, prefix, rule, terminal, config.cap, trace);
    trace.c.push_back(counts[s]);
    trace.w.push_back(r.tokens.size());
    trace.stop_reasons.push_back(r.reason);
  }
  return trace;
}

/// Simulates every sentence; sentence i uses seed derive_seed({config.seed, i}).
template <TranslationModel Model>
std::vector<StreamTrace> simulate_corpus(const Model& model, std::span<const SentencePair> corpus,
                                         const RunConfig& config, std::size_t jobs = 1) {
  std::vector<StreamTrace> traces(corpus.size());
  parallel_for(corpus.size(), jobs, [&](std::size_t i) {
    RunConfig cfg = config;
    cfg.seed = derive_seed({config.seed, i});
    traces[i] = simulate(model, corpus[i].source, cfg);
  });
  return traces;
}

}  // namespace simulseq
