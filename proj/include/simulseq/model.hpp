// Copyright 2026 The simulseq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <concepts>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "simulseq/core.hpp"

namespace simulseq {

inline constexpr std::size_t kDefaultLengthCap = 200;

/// How hidden states carry over from one outer step to the next.
enum class StateStrategy { kRebuildAll, kReuseDecoder, kReuseEncoder };

inline const char* to_string(StateStrategy s) {
  switch (s) {
    case StateStrategy::kRebuildAll: return "rebuild-all";
    case StateStrategy::kReuseDecoder: return "reuse-decoder";
    case StateStrategy::kReuseEncoder: return "reuse-encoder";
  }
  return "?";
}

inline StateStrategy parse_strategy(const std::string& s) {
  if (s == "rebuild-all" || s == "none") return StateStrategy::kRebuildAll;
  if (s == "reuse-decoder" || s == "decoder") return StateStrategy::kReuseDecoder;
  if (s == "reuse-encoder" || s == "encoder") return StateStrategy::kReuseEncoder;
  throw ConfigError("unknown state strategy '" + s + "'");
}

using StateRow = std::vector<double>;
using StateBank = std::vector<StateRow>;

/// Encoder and decoder hidden states for one run.
///
/// `encoder_states` has one row per observed source token plus one for the
/// source-side EOS. `decoder_states` has one row per committed target token:
/// row t is the state that predicted token t. Remote models keep the encoder
/// side to themselves and leave `encoder_states` empty.
struct ModelState {
  StateStrategy strategy = StateStrategy::kRebuildAll;
  Sentence source_prefix;
  StateBank encoder_states;
  StateBank decoder_states;
};

struct DecodeStepResult {
  TokenId next_token = 0;
  bool is_eos = false;
  StateRow hidden_state;  // decoder state z_t, before the output projection
  double eos_prob = 0.0;

  friend bool operator==(const DecodeStepResult&, const DecodeStepResult&) = default;
};

/// A frozen consecutive translation model driven one greedy step at a time.
///
/// prepare_states() brings `state` in line with a new source prefix according
/// to `state.strategy`; decode_step() predicts the token after `target_prefix`;
/// append_committed() extends the decoder bank after a token is committed.
template <typename M>
concept TranslationModel = requires(const M& m, ModelState& state, const ModelState& cstate,
                                    std::span<const TokenId> ids, const DecodeStepResult& r) {
  { m.vocab() } -> std::convertible_to<const Vocab&>;
  { m.hidden_dim() } -> std::convertible_to<std::size_t>;
  { m.prepare_states(state, ids, ids) } -> std::same_as<void>;
  { m.decode_step(cstate, ids) } -> std::same_as<DecodeStepResult>;
  { m.append_committed(state, r) } -> std::same_as<void>;
};

/// Standard greedy decoding on the full source until EOS or the length cap.
/// EOS is not part of the result.
template <TranslationModel Model>
Sentence consecutive_greedy(const Model& model, std::span<const TokenId> source,
                            std::size_t cap = kDefaultLengthCap) {
  ModelState state;
  state.strategy = StateStrategy::kRebuildAll;
  Sentence output;
  model.prepare_states(state, source, output);
  while (output.size() < cap) {
    auto step = model.decode_step(state, output);
    if (step.is_eos) break;
    output.push_back(step.next_token);
    model.append_committed(state, step);
  }
  return output;
}

}  // namespace simulseq
