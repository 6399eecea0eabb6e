// Copyright 2026 The simulseq Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "simulseq/decoding.hpp"
#include "simulseq/metrics.hpp"
#include "simulseq/toy_model.hpp"

namespace simulseq {
namespace {

ToyModel make(TaskKind kind, std::uint64_t seed = 1) {
  SyntheticTaskSpec spec;
  spec.kind = kind;
  spec.seed = seed;
  return ToyModel(spec);
}

RunConfig le_run(std::size_t d, std::size_t c = 1) {
  RunConfig r;
  r.controller = LEConfig{d};
  r.schedule = ArrivalSchedule::constant(c);
  return r;
}

std::shared_ptr<const PolicyParams> constant_policy(std::size_t in, double stop_logit) {
  PolicyParams p(in, 4, 4);
  p.b3()[1] = stop_logit;
  return std::make_shared<const PolicyParams>(std::move(p));
}

TEST(Simulate, LeOnCopyMatchesHandTrace) {
  const auto m = make(TaskKind::kCopy);
  Sentence src;
  for (std::size_t i = 0; i < 6; ++i) src.push_back(m.source_id(20 + i));
  const auto t = simulate(m, src, le_run(1));
  EXPECT_EQ(t.c, (std::vector<std::size_t>(6, 1)));
  EXPECT_EQ(t.w, (std::vector<std::size_t>{0, 1, 1, 1, 1, 2}));
  EXPECT_EQ(t.l, (std::vector<std::size_t>{2, 3, 4, 5, 6, 6}));
  EXPECT_EQ(t.stop_reasons.back(), StopReason::kEos);
  EXPECT_EQ(t.stop_reasons.front(), StopReason::kQuota);
  EXPECT_EQ(t.output, consecutive_greedy(m, src));
  EXPECT_DOUBLE_EQ(average_lagging(t), 2.0);
}

TEST(Simulate, LeLagsMatchStreamingOracle) {
  const auto m = make(TaskKind::kCopy, 4);
  for (const auto& p : generate_corpus(m, 100))
    for (std::size_t d : {0u, 1u, 3u, 7u}) {
      const auto t = simulate(m, p.source, le_run(d));
      EXPECT_EQ(t.l, oracle::le_copy_lags(p.source.size(), d));
      EXPECT_NO_THROW(check_invariants(t));
    }
}

TEST(Simulate, TracesSatisfyInvariantsAcrossControllersAndSchedules) {
  const auto policy = constant_policy(16, 0.0);
  Rng rng(3);
  for (auto kind : {TaskKind::kCopy, TaskKind::kReorder, TaskKind::kExpand}) {
    const auto m = make(kind, 6);
    for (const auto& p : generate_corpus(m, 40)) {
      for (const ControllerConfig& ctrl :
           std::vector<ControllerConfig>{LEConfig{2}, WaitkConfig{3}, TnConfig{policy, PolicyMode::kSample, "tn"}}) {
        RunConfig cfg;
        cfg.controller = ctrl;
        cfg.schedule = ArrivalSchedule::constant(uniform_int(rng, 1, 5));
        cfg.seed = rng();
        const auto t = simulate(m, p.source, cfg);
        EXPECT_NO_THROW(check_invariants(t));
        EXPECT_EQ(t.source_length(), p.source.size());
        // The terminal step sees the whole source, so the final output is complete.
        EXPECT_EQ(t.l.empty() ? p.source.size() : t.l.back(), p.source.size());
      }
    }
  }
}

TEST(Simulate, TnStopsBeforeCommitting) {
  const auto m = make(TaskKind::kCopy);
  Sentence src;
  for (std::size_t i = 0; i < 5; ++i) src.push_back(m.source_id(30 + i));
  RunConfig cfg;
  cfg.controller = TnConfig{constant_policy(16, 50.0), PolicyMode::kGreedy, "stop"};
  std::vector<TnDecision> decisions;
  const auto t = simulate(m, src, cfg, &decisions);
  // Always-stop defers everything to the terminal step.
  EXPECT_EQ(t.w, (std::vector<std::size_t>{0, 0, 0, 0, 5}));
  EXPECT_EQ(decisions.size(), 4u);
  for (const auto& d : decisions) {
    EXPECT_EQ(d.t, 1u);
    EXPECT_EQ(d.action, Action::kStop);
  }
  EXPECT_EQ(t.stop_reasons, (std::vector<StopReason>{StopReason::kPolicyStop, StopReason::kPolicyStop,
                                                     StopReason::kPolicyStop, StopReason::kPolicyStop,
                                                     StopReason::kEos}));
  EXPECT_EQ(t.actions.size(), decisions.size());
}

TEST(Simulate, AlwaysContinueWritesEverythingAvailable) {
  const auto m = make(TaskKind::kCopy);
  Sentence src;
  for (std::size_t i = 0; i < 5; ++i) src.push_back(m.source_id(30 + i));
  RunConfig cfg;
  cfg.controller = TnConfig{constant_policy(16, -50.0), PolicyMode::kGreedy, "go"};
  const auto t = simulate(m, src, cfg);
  EXPECT_EQ(t.w, (std::vector<std::size_t>(5, 1)));
  for (auto r : t.stop_reasons) EXPECT_EQ(r, StopReason::kEos);
}

TEST(Simulate, LengthCapEndsTerminalStep) {
  SyntheticTaskSpec spec;
  spec.kind = TaskKind::kExpand;
  spec.ratio = 4;
  const ToyModel m(spec, 10);
  Sentence src;
  for (std::size_t i = 0; i < 5; ++i) src.push_back(m.source_id(i + 10));
  RunConfig cfg;
  cfg.schedule = ArrivalSchedule::full_sentence();
  cfg.cap = 10;
  const auto t = simulate(m, src, cfg);
  EXPECT_EQ(t.output.size(), 10u);
  EXPECT_EQ(t.stop_reasons.back(), StopReason::kLengthCap);
  EXPECT_THROW(simulate(m, src, [] {
                 RunConfig r;
                 r.cap = 0;
                 return r;
               }()),
               ConfigError);
}

TEST(Simulate, SampleModeIsSeedDeterministic) {
  const auto m = make(TaskKind::kReorder);
  const auto corpus = generate_corpus(m, 30);
  RunConfig cfg;
  cfg.controller = TnConfig{constant_policy(16, 0.0), PolicyMode::kSample, "tn"};
  cfg.seed = 99;
  const auto a = simulate_corpus(m, corpus, cfg, 1);
  const auto b = simulate_corpus(m, corpus, cfg, 3);
  EXPECT_EQ(a, b);
  cfg.seed = 100;
  EXPECT_NE(simulate_corpus(m, corpus, cfg, 1), a);
}

TEST(Simulate, StrategiesOnlyDifferForReuseEncoder) {
  const auto m = make(TaskKind::kReorder, 2);
  const auto corpus = generate_corpus(m, 100);
  RunConfig cfg = le_run(1);
  const auto rebuild = simulate_corpus(m, corpus, cfg);
  cfg.strategy = StateStrategy::kReuseDecoder;
  const auto reuse_dec = simulate_corpus(m, corpus, cfg);
  cfg.strategy = StateStrategy::kReuseEncoder;
  const auto reuse_enc = simulate_corpus(m, corpus, cfg);
  std::size_t enc_diff = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    EXPECT_EQ(reuse_dec[i].output, rebuild[i].output);
    enc_diff += reuse_enc[i].output != rebuild[i].output;
    EXPECT_NO_THROW(check_invariants(reuse_enc[i]));
  }
  EXPECT_GE(enc_diff, 1u);
}

TEST(Simulate, EmptySourceIsRejected) {
  const auto m = make(TaskKind::kCopy);
  EXPECT_THROW(simulate(m, Sentence{}, le_run(0)), ConfigError);
}

}  // namespace
}  // namespace simulseq
