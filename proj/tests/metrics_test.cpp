// Copyright 2026 The simulseq Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "simulseq/metrics.hpp"
#include "simulseq/rng.hpp"

namespace simulseq {
namespace {

Sentence random_sentence(Rng& rng, std::size_t max_len, std::uint64_t alphabet) {
  Sentence s(uniform_int(rng, 0, max_len));
  for (auto& x : s) x = static_cast<TokenId>(uniform_int(rng, 1, alphabet));
  return s;
}

TEST(SentenceBleu, BaseCases) {
  const Sentence ref{1, 2, 3, 4, 5};
  EXPECT_DOUBLE_EQ(sentence_bleu(ref, ref), 1.0);
  EXPECT_EQ(sentence_bleu(ref, Sentence{}), 0.0);
  EXPECT_EQ(sentence_bleu(ref, Sentence{9, 9}), 0.0);
}

TEST(SentenceBleu, FourTokenExample) {
  const Sentence ref{1, 2, 3, 5}, hyp{1, 2, 3, 4};
  // Smoothed precisions 3/4, 3/4, 2/3, 1/2 with no brevity penalty.
  const double expected = std::pow(0.75 * 0.75 * (2.0 / 3.0) * 0.5, 0.25);
  EXPECT_NEAR(sentence_bleu(ref, hyp), expected, 1e-15);
  EXPECT_NEAR(sentence_bleu(ref, hyp), 0.658, 5e-4);
}

TEST(SentenceBleu, MatchesCountingOracleOnRandomPairs) {
  Rng rng(17);
  for (int i = 0; i < 2000; ++i) {
    auto ref = random_sentence(rng, 12, 5);
    if (ref.empty()) ref.push_back(1);
    const auto hyp = random_sentence(rng, 14, 5);
    EXPECT_NEAR(sentence_bleu(ref, hyp), oracle::sentence_bleu(ref, hyp), 1e-12);
  }
}

TEST(CorpusBleu, MatchesAggregatedOracle) {
  Rng rng(23);
  for (int k = 0; k < 100; ++k) {
    std::vector<Sentence> refs, hyps;
    for (int i = 0; i < 5; ++i) {
      auto r = random_sentence(rng, 15, 4);
      if (r.empty()) r.push_back(2);
      refs.push_back(r);
      hyps.push_back(uniform01(rng) < 0.5 ? r : random_sentence(rng, 15, 4));
    }
    EXPECT_NEAR(corpus_bleu(refs, hyps), oracle::corpus_bleu(refs, hyps), 1e-9);
  }
}

TEST(CorpusBleu, TwoSentenceHandCount) {
  // Aggregate counts: 1-grams 6/7, 2-grams 4/5, 3-grams 2/3, 4-grams 1/1;
  // hyp length 7 vs ref length 8.
  const std::vector<Sentence> refs{{1, 2, 3, 4}, {5, 6, 7, 8}};
  const std::vector<Sentence> hyps{{1, 2, 3, 4}, {5, 6, 9}};
  const double expected = 100.0 * std::exp(1.0 - 8.0 / 7.0) * std::pow(6.0 / 7 * 4.0 / 5 * 2.0 / 3 * 1.0, 0.25);
  EXPECT_NEAR(corpus_bleu(refs, hyps), expected, 1e-12);
}

TEST(CorpusBleu, PerfectAndEmpty) {
  const std::vector<Sentence> refs{{1, 2, 3, 4, 5}, {6, 7, 8, 9}};
  EXPECT_DOUBLE_EQ(corpus_bleu(refs, refs), 100.0);
  EXPECT_EQ(corpus_bleu(refs, std::vector<Sentence>{{}, {}}), 0.0);
  EXPECT_THROW(corpus_bleu(refs, std::vector<Sentence>{{}}), ConfigError);
}

TEST(AverageLagging, HandWorkedExamples) {
  EXPECT_NEAR(average_lagging(std::vector<std::size_t>{2, 3, 4, 5, 5}, 5, 5), 2.0, 1e-12);
  EXPECT_NEAR(average_lagging(std::vector<std::size_t>{1, 2, 3, 4, 4, 4}, 4, 6), 1.5, 1e-12);
  EXPECT_EQ(average_lagging(std::vector<std::size_t>(7, 10), 10, 7), 10.0);
  EXPECT_EQ(average_lagging(std::vector<std::size_t>{}, 6, 0), 6.0);
}

TEST(AverageLagging, MatchesDirectOracle) {
  Rng rng(29);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t src = uniform_int(rng, 1, 30);
    const std::size_t hyp = uniform_int(rng, 1, 40);
    std::vector<std::size_t> l(hyp);
    std::size_t cur = uniform_int(rng, 1, src);
    for (auto& x : l) {
      cur = std::min(src, cur + uniform_int(rng, 0, 2));
      x = cur;
    }
    l.back() = src;
    EXPECT_NEAR(average_lagging(l, src, hyp), oracle::average_lagging(l, src, hyp), 1e-12);
  }
}

TEST(ConsecutiveWait, Examples) {
  const std::vector<std::size_t> c16(16, 1), w16{0, 0, 0, 0, 3, 0, 0, 0, 0, 0, 5, 0, 0, 0, 0, 4};
  const auto cw = consecutive_wait(c16, w16);
  EXPECT_TRUE(cw.defined);
  EXPECT_NEAR(cw.value, 16.0 / 3.0, 1e-12);
  EXPECT_EQ(consecutive_wait(std::vector<std::size_t>{2, 2, 2}, std::vector<std::size_t>{0, 1, 2}).value, 3.0);
  EXPECT_EQ(consecutive_wait(std::vector<std::size_t>(4, 1), std::vector<std::size_t>(4, 1)).value, 1.0);
  const auto none = consecutive_wait(std::vector<std::size_t>{3, 2}, std::vector<std::size_t>{0, 0});
  EXPECT_FALSE(none.defined);
  EXPECT_EQ(none.value, 5.0);
}

TEST(Report, HistogramAndRatios) {
  StreamTrace a;
  a.c = {1, 1, 1};
  a.w = {1, 1, 1};
  a.stop_reasons = std::vector<StopReason>(3, StopReason::kQuota);
  a.l = {1, 2, 3};
  a.output = {1, 2, 3};
  StreamTrace b;
  b.c = {3};
  b.w = {2};
  b.stop_reasons = {StopReason::kEos};
  b.l = {3, 3};
  b.output = {4, 5};
  const std::vector<StreamTrace> traces{a, b};
  const std::vector<Sentence> refs{{1, 2, 3}, {4, 5, 6}};
  const auto r = compute_report(traces, refs);
  EXPECT_EQ(r.sentences, 2u);
  EXPECT_EQ(r.initial_delay_histogram.at(1), 1u);
  EXPECT_EQ(r.initial_delay_histogram.at(3), 1u);
  EXPECT_DOUBLE_EQ(r.mean_initial_delay, 2.0);
  EXPECT_DOUBLE_EQ(r.length_ratio, 5.0 / 6.0);
  EXPECT_DOUBLE_EQ(r.mean_cw, (1.0 + 3.0) / 2.0);
  EXPECT_DOUBLE_EQ(r.mean_al, (1.0 + 3.0) / 2.0);
  EXPECT_EQ(r.cw_undefined, 0u);
  const auto row = csv_row("le", "2", "c=1", r);
  EXPECT_EQ(row.rfind("le,2,c=1,", 0), 0u);
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), 7);
}

}  // namespace
}  // namespace simulseq
