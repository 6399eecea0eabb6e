// Copyright 2026 The simulseq Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>

#include "simulseq/core.hpp"
#include "simulseq/rng.hpp"

namespace simulseq {
namespace {

TEST(Vocab, EosIsIdZeroAndRoundTrips) {
  Vocab v({"a", "b", "</s>", "c"});
  EXPECT_EQ(v.eos_id(), 0);
  EXPECT_EQ(v.token_of(0), "</s>");
  EXPECT_EQ(v.size(), 4u);
  const std::vector<std::string> words{"c", "a", "b"};
  EXPECT_EQ(v.decode(v.encode(words)), words);
  EXPECT_THROW(v.id_of("zzz"), VocabError);
  EXPECT_THROW(v.token_of(17), VocabError);
}

TEST(Vocab, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "simulseq_vocab_test.txt";
  Vocab v({"x", "y"});
  v.save(path.string());
  EXPECT_EQ(Vocab::load(path.string()).tokens(), v.tokens());
  std::filesystem::remove(path);
}

TEST(Schedule, ConstantPutsRemainderLast) {
  EXPECT_EQ(ArrivalSchedule::constant(3).counts(10), (std::vector<std::size_t>{3, 3, 3, 1}));
  EXPECT_EQ(ArrivalSchedule::constant(1).counts(3), (std::vector<std::size_t>{1, 1, 1}));
  EXPECT_EQ(ArrivalSchedule::constant(50).counts(7), (std::vector<std::size_t>{7}));
  EXPECT_EQ(ArrivalSchedule::full_sentence().counts(7), (std::vector<std::size_t>{7}));
  EXPECT_EQ(ArrivalSchedule::constant(4).label(), "c=4");
  EXPECT_EQ(ArrivalSchedule::full_sentence().label(), "full");
}

TEST(Schedule, ExplicitMustCoverSource) {
  auto s = ArrivalSchedule::explicit_counts({2, 1, 3});
  EXPECT_EQ(s.counts(6), (std::vector<std::size_t>{2, 1, 3}));
  EXPECT_THROW(s.counts(5), ConfigError);
  EXPECT_THROW(ArrivalSchedule::explicit_counts({1, 0}), ConfigError);
  EXPECT_THROW(ArrivalSchedule::constant(0), ConfigError);
  EXPECT_EQ(s.label(), "explicit:2+1+3");
}

TEST(Schedule, CountsAlwaysSumToSourceLength) {
  Rng rng(5);
  for (int i = 0; i < 500; ++i) {
    const auto n = uniform_int(rng, 1, 60);
    const auto c = uniform_int(rng, 1, 12);
    std::size_t sum = 0;
    const auto counts = ArrivalSchedule::constant(c).counts(n);
    for (auto x : counts) {
      EXPECT_GE(x, 1u);
      EXPECT_LE(x, c);
      sum += x;
    }
    EXPECT_EQ(sum, n);
  }
}

StreamTrace sample_trace() {
  StreamTrace t;
  t.c = {1, 1, 1, 1, 2};
  t.w = {0, 1, 1, 1, 3};
  t.stop_reasons = {StopReason::kQuota, StopReason::kQuota, StopReason::kPolicyStop, StopReason::kQuota,
                    StopReason::kEos};
  t.l = {2, 3, 4, 6, 6, 6};
  t.output = {5, 6, 7, 8, 9, 10};
  t.actions = {{2, Action::kContinue}, {3, Action::kStop}};
  return t;
}

TEST(Trace, EtaTau) {
  const auto t = sample_trace();
  EXPECT_EQ(eta(t, 0), 0u);
  EXPECT_EQ(eta(t, 3), 3u);
  EXPECT_EQ(eta(t, 5), 6u);
  EXPECT_EQ(tau(t, 2), 1u);
  EXPECT_EQ(tau(t, 5), 6u);
  EXPECT_THROW(eta(t, 6), std::out_of_range);
  EXPECT_NO_THROW(check_invariants(t));
}

TEST(Trace, InvariantViolationsAreReported) {
  auto t = sample_trace();
  t.l[1] = 1;
  EXPECT_THROW(check_invariants(t), ConfigError);
  t = sample_trace();
  t.w[4] = 2;
  EXPECT_THROW(check_invariants(t), ConfigError);
}

TEST(Trace, JsonRoundTripUsesIntegerCodes) {
  const auto t = sample_trace();
  const auto j = to_json(t);
  EXPECT_EQ(j.at("stop_reasons")[2].get<int>(), 2);
  EXPECT_EQ(j.at("actions")[1][1].get<int>(), 1);
  EXPECT_EQ(trace_from_json(json::parse(j.dump())), t);
  auto bad = j;
  bad["stop_reasons"][0] = 9;
  EXPECT_THROW(trace_from_json(bad), ConfigError);
}

TEST(Rng, DerivedSeedsAreStableAndDistinct) {
  EXPECT_EQ(derive_seed({1, 2, 3}), derive_seed({1, 2, 3}));
  EXPECT_NE(derive_seed({1, 2, 3}), derive_seed({1, 3, 2}));
  Rng rng(11);
  for (int i = 0; i < 1000; ++i) {
    const auto x = uniform_int(rng, 3, 7);
    EXPECT_GE(x, 3u);
    EXPECT_LE(x, 7u);
    const double u = uniform01(rng);
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
}

}  // namespace
}  // namespace simulseq
