// Copyright 2026 The simulseq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "simulseq/core.hpp"
#include "simulseq/model.hpp"
#include "simulseq/rng.hpp"

namespace simulseq {

enum class TaskKind { kCopy, kReorder, kExpand };

inline const char* to_string(TaskKind k) {
  switch (k) {
    case TaskKind::kCopy: return "copy";
    case TaskKind::kReorder: return "reorder";
    case TaskKind::kExpand: return "expand";
  }
  return "?";
}

inline TaskKind parse_task_kind(const std::string& s) {
  if (s == "copy") return TaskKind::kCopy;
  if (s == "reorder") return TaskKind::kReorder;
  if (s == "expand") return TaskKind::kExpand;
  throw ConfigError("unknown task kind '" + s + "'");
}

/// A synthetic translation task.
///
/// Source tokens are `s<i>`. A unit is one source token (copy, expand) or a
/// window of `window` tokens (reorder). Copy maps s<i> to T<i>; reorder emits
/// each window reversed; expand emits T<i>_1..T<i>_ratio per token. A unit
/// whose right neighbour is a marker token (the first `marker_fraction` of the
/// source vocabulary) is rendered in marked form, T<i>^, which makes the
/// correct translation depend on one token of right context.
struct SyntheticTaskSpec {
  TaskKind kind = TaskKind::kCopy;
  std::size_t vocab_size = 50;
  std::size_t min_length = 8;
  std::size_t max_length = 20;
  std::size_t window = 3;
  std::size_t ratio = 2;
  std::optional<double> marker_fraction;  // unset: 0.2 for reorder, 0 otherwise
  std::uint64_t seed = 1;
  std::size_t hidden_dim = 16;

  double effective_marker_fraction() const {
    if (marker_fraction) return *marker_fraction;
    return kind == TaskKind::kReorder ? 0.2 : 0.0;
  }
  std::size_t unit_source_length() const { return kind == TaskKind::kReorder ? window : 1; }
  std::size_t unit_target_length() const {
    switch (kind) {
      case TaskKind::kCopy: return 1;
      case TaskKind::kReorder: return window;
      case TaskKind::kExpand: return ratio;
    }
    return 1;
  }
  std::size_t marker_count() const {
    return static_cast<std::size_t>(std::lround(effective_marker_fraction() * static_cast<double>(vocab_size)));
  }

  void validate() const {
    if (vocab_size == 0) throw ConfigError("vocab_size must be positive");
    if (min_length == 0 || min_length > max_length) throw ConfigError("bad sentence length range");
    if (kind == TaskKind::kReorder && (window == 0 || window > max_length))
      throw ConfigError("reorder window must be in [1, max_length]");
    if (kind == TaskKind::kExpand && ratio == 0) throw ConfigError("expand ratio must be positive");
    const double f = effective_marker_fraction();
    if (f < 0.0 || f > 1.0) throw ConfigError("marker_fraction must lie in [0, 1]");
    if (hidden_dim < 16) throw ConfigError("toy model needs hidden_dim >= 16");
  }
};

inline json to_json(const SyntheticTaskSpec& s) {
  json j;
  j["kind"] = to_string(s.kind);
  j["vocab_size"] = s.vocab_size;
  j["min_length"] = s.min_length;
  j["max_length"] = s.max_length;
  j["window"] = s.window;
  j["ratio"] = s.ratio;
  j["marker_fraction"] = s.effective_marker_fraction();
  j["seed"] = s.seed;
  j["hidden_dim"] = s.hidden_dim;
  return j;
}

inline SyntheticTaskSpec task_spec_from_json(const json& j) {
  SyntheticTaskSpec s;
  try {
    s.kind = parse_task_kind(j.at("kind").get<std::string>());
    s.vocab_size = j.value("vocab_size", s.vocab_size);
    s.min_length = j.value("min_length", s.min_length);
    s.max_length = j.value("max_length", s.max_length);
    s.window = j.value("window", s.window);
    s.ratio = j.value("ratio", s.ratio);
    if (j.contains("marker_fraction")) s.marker_fraction = j.at("marker_fraction").get<double>();
    s.seed = j.value("seed", s.seed);
    s.hidden_dim = j.value("hidden_dim", s.hidden_dim);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed task spec: ") + e.what());
  }
  s.validate();
  return s;
}

namespace detail {

inline double token_angle(std::uint64_t key) {
  return bits_to_unit(splitmix64(key)) * 6.283185307179586;
}

}  // namespace detail

/// Rule-based stand-in for a pretrained consecutive translation model.
///
/// Behaves like a full-sentence model fed a prefix: it translates every unit
/// that is complete in the observed source, left to right, then predicts EOS.
/// Token choice reads the encoder rows, so stale rows change the output.
class ToyModel {
 public:
  // Encoder row layout.
  static constexpr std::size_t kEncIndex = 0;       // source index i, -1 for EOS
  static constexpr std::size_t kEncIsEos = 1;
  static constexpr std::size_t kEncNextSeen = 2;    // right neighbour observed
  static constexpr std::size_t kEncNextMarker = 3;  // right neighbour is a marker
  static constexpr std::size_t kEncIsMarker = 4;
  static constexpr std::size_t kEncPosition = 5;

  // Decoder row layout.
  static constexpr std::size_t kDecCovered = 0;
  static constexpr std::size_t kDecPending = 1;      // one-hot, 4 slots
  static constexpr std::size_t kDecRightSeen = 5;
  static constexpr std::size_t kDecPartial = 6;      // one-hot, 3 slots
  static constexpr std::size_t kDecEosProb = 9;
  static constexpr std::size_t kDecLastToken = 10;   // 2 slots
  static constexpr std::size_t kDecTargetPos = 12;
  static constexpr std::size_t kDecSourceLen = 13;
  static constexpr std::size_t kDecMarked = 14;
  static constexpr std::size_t kDecCarry = 15;

  static constexpr double kEosProbAtEos = 0.9;
  static constexpr double kEosProbBlind = 0.3;
  static constexpr double kEosProbSighted = 0.05;

  explicit ToyModel(SyntheticTaskSpec spec, std::size_t cap = kDefaultLengthCap)
      : spec_(std::move(spec)), cap_(cap) {
    spec_.validate();
    const auto n = spec_.vocab_size;
    for (std::size_t i = 0; i < n; ++i) vocab_.add("s" + std::to_string(i));
    const auto k = spec_.unit_target_length();
    target_ids_.resize(n * k * 2);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t o = 0; o < (spec_.kind == TaskKind::kExpand ? k : 1); ++o)
        for (int marked = 0; marked < 2; ++marked) {
          std::string t = "T" + std::to_string(i);
          if (spec_.kind == TaskKind::kExpand) t += "_" + std::to_string(o + 1);
          if (marked) t += "^";
          target_ids_[(i * k + o) * 2 + static_cast<std::size_t>(marked)] = vocab_.add(t);
        }
  }

  const Vocab& vocab() const noexcept { return vocab_; }
  std::size_t hidden_dim() const noexcept { return spec_.hidden_dim; }
  std::size_t length_cap() const noexcept { return cap_; }
  const SyntheticTaskSpec& spec() const noexcept { return spec_; }

  TokenId source_id(std::size_t index) const { return static_cast<TokenId>(1 + index); }

  bool is_source_token(TokenId id) const noexcept {
    return id >= 1 && static_cast<std::size_t>(id) <= spec_.vocab_size;
  }
  std::size_t source_index(TokenId id) const {
    if (!is_source_token(id)) throw VocabError("token id " + std::to_string(id) + " is not a source token");
    return static_cast<std::size_t>(id - 1);
  }
  bool is_marker(std::size_t index) const noexcept { return index < spec_.marker_count(); }

  TokenId target_id(std::size_t index, std::size_t offset, bool marked) const {
    const auto k = spec_.unit_target_length();
    const std::size_t o = spec_.kind == TaskKind::kExpand ? offset : 0;
    return target_ids_[(index * k + o) * 2 + (marked ? 1 : 0)];
  }

  /// States over the prefix with the source EOS appended: |prefix|+1 rows.
  StateBank encode(std::span<const TokenId> prefix) const {
    if (prefix.empty()) throw PreconditionError("empty source prefix");
    const std::size_t n = prefix.size();
    std::vector<std::size_t> index(n);
    for (std::size_t p = 0; p < n; ++p) index[p] = source_index(prefix[p]);
    StateBank rows(n + 1, StateRow(spec_.hidden_dim, 0.0));
    for (std::size_t p = 0; p <= n; ++p) {
      auto& r = rows[p];
      const bool eos = p == n;
      r[kEncIndex] = eos ? -1.0 : static_cast<double>(index[p]);
      r[kEncIsEos] = eos ? 1.0 : 0.0;
      r[kEncNextSeen] = (!eos && p + 1 < n) ? 1.0 : 0.0;
      r[kEncNextMarker] = (!eos && p + 1 < n && is_marker(index[p + 1])) ? 1.0 : 0.0;
      r[kEncIsMarker] = (!eos && is_marker(index[p])) ? 1.0 : 0.0;
      r[kEncPosition] = static_cast<double>(p + 1) / static_cast<double>(n + 1);
      const double a = detail::token_angle(eos ? 0xE05ULL : index[p] + 1);
      for (std::size_t d = kEncPosition + 1; d < spec_.hidden_dim; ++d)
        r[d] = std::sin(a * static_cast<double>(d - kEncPosition));
    }
    return rows;
  }

  void prepare_states(ModelState& state, std::span<const TokenId> source_prefix,
                      std::span<const TokenId> target_prefix) const {
    StateBank fresh = encode(source_prefix);
    switch (state.strategy) {
      case StateStrategy::kRebuildAll:
        state.encoder_states = std::move(fresh);
        state.decoder_states.clear();
        break;
      case StateStrategy::kReuseDecoder:
        state.encoder_states = std::move(fresh);
        if (state.decoder_states.size() > target_prefix.size())
          state.decoder_states.resize(target_prefix.size());
        break;
      case StateStrategy::kReuseEncoder: {
        // Keep rows of previously seen real positions; append the new ones.
        std::size_t kept = state.encoder_states.empty() ? 0 : state.encoder_states.size() - 1;
        if (kept > source_prefix.size()) kept = 0;
        for (std::size_t p = 0; p < kept; ++p) fresh[p] = state.encoder_states[p];
        state.encoder_states = std::move(fresh);
        state.decoder_states.clear();
        break;
      }
    }
    state.source_prefix.assign(source_prefix.begin(), source_prefix.end());
    while (state.decoder_states.size() < target_prefix.size()) {
      const auto t = state.decoder_states.size();
      auto step = predict(state.encoder_states, target_prefix.first(t),
                          t == 0 ? nullptr : &state.decoder_states.back());
      state.decoder_states.push_back(std::move(step.hidden_state));
    }
  }

  DecodeStepResult decode_step(const ModelState& state, std::span<const TokenId> target_prefix) const {
    if (target_prefix.size() >= cap_) throw CapError("target prefix already at the length cap");
    if (state.encoder_states.empty()) throw PreconditionError("states not prepared");
    if (state.decoder_states.size() != target_prefix.size())
      throw PreconditionError("decoder states do not cover the target prefix");
    return predict(state.encoder_states, target_prefix,
                   target_prefix.empty() ? nullptr : &state.decoder_states.back());
  }

  void append_committed(ModelState& state, const DecodeStepResult& step) const {
    state.decoder_states.push_back(step.hidden_state);
  }

 private:
  DecodeStepResult predict(const StateBank& enc, std::span<const TokenId> target_prefix,
                           const StateRow* previous) const {
    std::size_t n_real = 0;
    while (n_real < enc.size() && enc[n_real][kEncIsEos] == 0.0) ++n_real;
    const std::size_t us = spec_.unit_source_length();
    const std::size_t ut = spec_.unit_target_length();
    const std::size_t complete = n_real / us;
    const std::size_t t = target_prefix.size();
    const std::size_t unit = t / ut;
    const std::size_t offset = t % ut;

    DecodeStepResult r;
    bool right_seen = false;
    bool marked = false;
    if (unit >= complete) {
      r.is_eos = true;
      r.next_token = vocab_.eos_id();
      r.eos_prob = kEosProbAtEos;
    } else {
      const std::size_t last = unit * us + us - 1;
      const std::size_t pos =
          spec_.kind == TaskKind::kReorder ? unit * us + (us - 1 - offset) : unit * us;
      const auto index = static_cast<std::size_t>(enc[pos][kEncIndex]);
      right_seen = enc[last][kEncNextSeen] != 0.0;
      marked = enc[last][kEncNextMarker] != 0.0;
      r.next_token = target_id(index, offset, marked);
      r.eos_prob = right_seen ? kEosProbSighted : kEosProbBlind;
    }

    auto& z = r.hidden_state;
    z.assign(spec_.hidden_dim, 0.0);
    const std::size_t done_units = std::min(t / ut, complete);
    const double nr = static_cast<double>(n_real);
    z[kDecCovered] = n_real == 0 ? 0.0 : static_cast<double>(done_units * us) / nr;
    z[kDecPending + std::min<std::size_t>(complete - done_units, 3)] = 1.0;
    z[kDecRightSeen] = right_seen ? 1.0 : 0.0;
    z[kDecPartial + std::min<std::size_t>(n_real - complete * us, 2)] = 1.0;
    z[kDecEosProb] = r.eos_prob;
    if (t > 0) {
      const double a = detail::token_angle(0x7A11ULL + static_cast<std::uint64_t>(target_prefix.back()));
      z[kDecLastToken] = std::sin(a);
      z[kDecLastToken + 1] = std::cos(a);
    }
    z[kDecTargetPos] = static_cast<double>(t) / (static_cast<double>(t) + nr);
    z[kDecSourceLen] = nr / (nr + 8.0);
    z[kDecMarked] = marked ? 1.0 : 0.0;
    z[kDecCarry] = 0.5 * (previous ? (*previous)[kDecCarry] : 0.0) + 0.5 * z[kDecCovered];
    const double a = detail::token_angle(0xC0DEULL + static_cast<std::uint64_t>(r.next_token));
    for (std::size_t d = kDecCarry + 1; d < spec_.hidden_dim; ++d)
      z[d] = std::sin(a * static_cast<double>(d - kDecCarry));
    return r;
  }

  SyntheticTaskSpec spec_;
  std::size_t cap_;
  Vocab vocab_;
  std::vector<TokenId> target_ids_;
};

/// Reference translation computed directly from the task rule, independent of
/// the model's decoding path.
inline Sentence reference_translation(const ToyModel& model, std::span<const TokenId> source) {
  const auto& spec = model.spec();
  const std::size_t n = source.size();
  const std::size_t us = spec.unit_source_length();
  Sentence out;
  for (std::size_t start = 0; start + us <= n; start += us) {
    const std::size_t next = start + us;
    const bool marked = next < n && model.is_marker(model.source_index(source[next]));
    switch (spec.kind) {
      case TaskKind::kCopy:
        out.push_back(model.target_id(model.source_index(source[start]), 0, marked));
        break;
      case TaskKind::kReorder:
        for (std::size_t p = next; p-- > start;)
          out.push_back(model.target_id(model.source_index(source[p]), 0, marked));
        break;
      case TaskKind::kExpand:
        for (std::size_t o = 0; o < spec.ratio; ++o)
          out.push_back(model.target_id(model.source_index(source[start]), o, marked));
        break;
    }
  }
  return out;
}

/// Deterministic corpus: identical spec and n give identical pairs.
inline std::vector<SentencePair> generate_corpus(const ToyModel& model, std::size_t n) {
  if (n == 0) throw ConfigError("corpus size must be positive");
  const auto& spec = model.spec();
  Rng rng(derive_seed({spec.seed, 0xC0A9ULL}));
  std::vector<SentencePair> corpus;
  corpus.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t len = uniform_int(rng, spec.min_length, spec.max_length);
    if (spec.kind == TaskKind::kReorder) len = std::max(spec.window, len - len % spec.window);
    SentencePair pair;
    for (std::size_t p = 0; p < len; ++p)
      pair.source.push_back(model.source_id(uniform_int(rng, 0, spec.vocab_size - 1)));
    pair.reference = reference_translation(model, pair.source);
    corpus.push_back(std::move(pair));
  }
  return corpus;
}

/// One JSON object per line: {"src": [...], "ref": [...]}.
inline void save_corpus(const std::string& path, std::span<const SentencePair> corpus, const Vocab& vocab) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write corpus file " + path);
  for (const auto& p : corpus) {
    json j;
    j["src"] = vocab.decode(p.source);
    j["ref"] = vocab.decode(p.reference);
    out << j.dump() << '\n';
  }
}

inline std::vector<SentencePair> load_corpus(const std::string& path, const Vocab& vocab) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read corpus file " + path);
  std::vector<SentencePair> corpus;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      SentencePair p;
      p.source = vocab.encode(j.at("src").get<std::vector<std::string>>());
      p.reference = vocab.encode(j.at("ref").get<std::vector<std::string>>());
      validate(p, vocab);
      corpus.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (corpus.empty()) throw ConfigError("corpus file " + path + " is empty");
  return corpus;
}

}  // namespace simulseq
