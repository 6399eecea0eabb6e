// Copyright 2026 The simulseq Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>

#include "simulseq/toy_model.hpp"

namespace simulseq {
namespace {

ToyModel make(TaskKind kind, std::uint64_t seed = 1) {
  SyntheticTaskSpec spec;
  spec.kind = kind;
  spec.seed = seed;
  return ToyModel(spec);
}

Sentence ids(const ToyModel& m, std::initializer_list<std::size_t> idx) {
  Sentence s;
  for (auto i : idx) s.push_back(m.source_id(i));
  return s;
}

TEST(ToyModel, CopyTranslatesTokenForToken) {
  const auto m = make(TaskKind::kCopy);
  const auto src = ids(m, {3, 9, 27});
  EXPECT_EQ(m.vocab().decode(consecutive_greedy(m, src)), (std::vector<std::string>{"T3", "T9", "T27"}));
}

TEST(ToyModel, ReorderReversesWindowsAndMarksBeforeMarkers) {
  const auto m = make(TaskKind::kReorder);
  ASSERT_EQ(m.spec().marker_count(), 10u);  // s0..s9 are markers
  // Window (20,21,22) is followed by marker s4, so it renders marked.
  const auto src = ids(m, {20, 21, 22, 4, 30, 31});
  EXPECT_EQ(m.vocab().decode(consecutive_greedy(m, src)),
            (std::vector<std::string>{"T22^", "T21^", "T20^", "T31", "T30", "T4"}));
}

TEST(ToyModel, ExpandEmitsRatioTokensPerSource) {
  const auto m = make(TaskKind::kExpand);
  const auto src = ids(m, {5, 6});
  EXPECT_EQ(m.vocab().decode(consecutive_greedy(m, src)),
            (std::vector<std::string>{"T5_1", "T5_2", "T6_1", "T6_2"}));
}

TEST(ToyModel, PrefixTranslationStopsAtIncompleteWindow) {
  const auto m = make(TaskKind::kReorder);
  const auto src = ids(m, {20, 21, 22, 23, 24});
  // Only the first window is complete; its right neighbour s23 is visible.
  EXPECT_EQ(m.vocab().decode(consecutive_greedy(m, src)), (std::vector<std::string>{"T22", "T21", "T20"}));
}

TEST(ToyModel, BlindPrefixGuessesUnmarked) {
  const auto m = make(TaskKind::kCopy);
  SyntheticTaskSpec spec = m.spec();
  spec.marker_fraction = 0.5;
  const ToyModel marked(spec);
  // Full source: s30 is followed by marker s1.
  EXPECT_EQ(marked.vocab().decode(consecutive_greedy(marked, ids(marked, {30, 1}))),
            (std::vector<std::string>{"T30^", "T1"}));
  // With only s30 observed the model cannot know and emits the plain form.
  EXPECT_EQ(marked.vocab().decode(consecutive_greedy(marked, ids(marked, {30}))),
            (std::vector<std::string>{"T30"}));
}

TEST(ToyModel, GreedyMatchesIndependentReferenceRule) {
  for (auto kind : {TaskKind::kCopy, TaskKind::kReorder, TaskKind::kExpand}) {
    const auto m = make(kind, 3);
    for (const auto& p : generate_corpus(m, 200)) EXPECT_EQ(consecutive_greedy(m, p.source), p.reference);
  }
}

TEST(ToyModel, CorpusIsDeterministicAndShaped) {
  const auto m = make(TaskKind::kReorder, 9);
  const auto a = generate_corpus(m, 300), b = generate_corpus(m, 300);
  ASSERT_EQ(a.size(), 300u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].source, b[i].source);
    EXPECT_EQ(a[i].source.size() % 3, 0u);
    EXPECT_GE(a[i].source.size(), 6u);  // 8 rounds down to 6
    EXPECT_LE(a[i].source.size(), 18u);
  }
  EXPECT_NE(generate_corpus(make(TaskKind::kReorder, 10), 1)[0].source, a[0].source);
  EXPECT_THROW(generate_corpus(m, 0), ConfigError);
}

TEST(ToyModel, CorpusFileRoundTrip) {
  const auto m = make(TaskKind::kExpand);
  const auto corpus = generate_corpus(m, 20);
  const auto path = std::filesystem::temp_directory_path() / "simulseq_corpus_test.jsonl";
  save_corpus(path.string(), corpus, m.vocab());
  const auto back = load_corpus(path.string(), m.vocab());
  ASSERT_EQ(back.size(), corpus.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].source, corpus[i].source);
    EXPECT_EQ(back[i].reference, corpus[i].reference);
  }
  std::filesystem::remove(path);
}

TEST(ToyModel, EncodeShapesAndErrors) {
  const auto m = make(TaskKind::kCopy);
  const auto rows = m.encode(ids(m, {1, 2, 3}));
  ASSERT_EQ(rows.size(), 4u);
  for (const auto& r : rows) EXPECT_EQ(r.size(), m.hidden_dim());
  EXPECT_EQ(rows.back()[ToyModel::kEncIsEos], 1.0);
  EXPECT_THROW(m.encode(Sentence{}), PreconditionError);
  EXPECT_THROW(m.encode(Sentence{m.vocab().id_of("T3")}), VocabError);
}

TEST(ToyModel, DecodeStepGuards) {
  SyntheticTaskSpec spec;
  const ToyModel m(spec, 2);
  ModelState st;
  const auto src = ids(m, {1, 2, 3});
  EXPECT_THROW(m.decode_step(st, Sentence{}), PreconditionError);
  const Sentence tgt{m.vocab().id_of("T1"), m.vocab().id_of("T2")};
  m.prepare_states(st, src, tgt);
  EXPECT_THROW(m.decode_step(st, tgt), CapError);
  EXPECT_EQ(consecutive_greedy(m, src, 2).size(), 2u);
}

TEST(ToyModel, HiddenStateIsDeterministic) {
  const auto m = make(TaskKind::kReorder);
  const auto src = ids(m, {11, 12, 13, 14});
  ModelState a, b;
  m.prepare_states(a, src, Sentence{});
  m.prepare_states(b, src, Sentence{});
  EXPECT_EQ(m.decode_step(a, Sentence{}), m.decode_step(b, Sentence{}));
}

TEST(ToyModel, EosProbabilityTracksVisibility) {
  const auto m = make(TaskKind::kCopy);
  ModelState st;
  const auto src = ids(m, {20, 21});
  m.prepare_states(st, src, Sentence{});
  EXPECT_EQ(m.decode_step(st, Sentence{}).eos_prob, ToyModel::kEosProbSighted);
  const Sentence one{m.vocab().id_of("T20")};
  m.prepare_states(st, src, one);
  EXPECT_EQ(m.decode_step(st, one).eos_prob, ToyModel::kEosProbBlind);
  const Sentence two{m.vocab().id_of("T20"), m.vocab().id_of("T21")};
  m.prepare_states(st, src, two);
  const auto last = m.decode_step(st, two);
  EXPECT_TRUE(last.is_eos);
  EXPECT_EQ(last.eos_prob, ToyModel::kEosProbAtEos);
}

TEST(TaskSpec, JsonRoundTripAndValidation) {
  SyntheticTaskSpec s;
  s.kind = TaskKind::kExpand;
  s.ratio = 3;
  s.seed = 77;
  const auto back = task_spec_from_json(to_json(s));
  EXPECT_EQ(back.kind, TaskKind::kExpand);
  EXPECT_EQ(back.ratio, 3u);
  EXPECT_EQ(back.seed, 77u);
  s.min_length = 30;
  EXPECT_THROW(s.validate(), ConfigError);
  EXPECT_THROW(parse_task_kind("shuffle"), ConfigError);
}

}  // namespace
}  // namespace simulseq
