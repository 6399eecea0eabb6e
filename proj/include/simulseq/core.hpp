// Copyright 2026 The simulseq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"
#include "simulseq/errors.hpp"

namespace simulseq {

using TokenId = std::int32_t;
using Sentence = std::vector<TokenId>;
using json = nlohmann::ordered_json;

inline constexpr std::string_view kEosToken = "</s>";

/// Bijection between token strings and ids. Id 0 is always the end-of-sentence token.
class Vocab {
 public:
  Vocab() { add(std::string(kEosToken)); }

  explicit Vocab(const std::vector<std::string>& tokens) : Vocab() {
    for (const auto& t : tokens) {
      if (t == kEosToken) continue;
      add(t);
    }
  }

  TokenId add(const std::string& token) {
    auto it = ids_.find(token);
    if (it != ids_.end()) return it->second;
    const auto id = static_cast<TokenId>(tokens_.size());
    tokens_.push_back(token);
    ids_.emplace(token, id);
    return id;
  }

  TokenId id_of(std::string_view token) const {
    auto it = ids_.find(std::string(token));
    if (it == ids_.end()) throw VocabError("unknown token '" + std::string(token) + "'");
    return it->second;
  }

  const std::string& token_of(TokenId id) const {
    if (!contains(id)) throw VocabError("unknown token id " + std::to_string(id));
    return tokens_[static_cast<std::size_t>(id)];
  }

  bool contains(TokenId id) const noexcept {
    return id >= 0 && static_cast<std::size_t>(id) < tokens_.size();
  }
  bool contains(std::string_view token) const { return ids_.count(std::string(token)) > 0; }

  TokenId eos_id() const noexcept { return 0; }
  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  Sentence encode(std::span<const std::string> words) const {
    Sentence out;
    out.reserve(words.size());
    for (const auto& w : words) out.push_back(id_of(w));
    return out;
  }

  std::vector<std::string> decode(std::span<const TokenId> ids) const {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (auto id : ids) out.push_back(token_of(id));
    return out;
  }

  /// One token per line, line number = id.
  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write vocabulary file " + path);
    for (const auto& t : tokens_) out << t << '\n';
  }

  static Vocab load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read vocabulary file " + path);
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) lines.push_back(line);
    if (lines.empty() || lines.front() != kEosToken)
      throw ConfigError("vocabulary file must start with " + std::string(kEosToken));
    return Vocab(lines);
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
};

struct SentencePair {
  Sentence source;
  Sentence reference;
};

inline void validate(const SentencePair& pair, const Vocab& vocab) {
  if (pair.source.empty() || pair.reference.empty())
    throw ConfigError("sentence pair with empty side");
  for (const auto* side : {&pair.source, &pair.reference})
    for (auto id : *side)
      if (id == vocab.eos_id()) throw ConfigError("EOS inside a sentence pair");
}

/// How many new source tokens arrive at each outer step.
class ArrivalSchedule {
 public:
  struct Constant {
    std::size_t c;
  };
  struct Explicit {
    std::vector<std::size_t> counts;
  };
  struct FullSentence {};

  static ArrivalSchedule constant(std::size_t c) {
    if (c == 0) throw ConfigError("constant schedule needs c > 0");
    return ArrivalSchedule(Constant{c});
  }
  static ArrivalSchedule explicit_counts(std::vector<std::size_t> counts) {
    for (auto c : counts)
      if (c == 0) throw ConfigError("explicit schedule contains c_s = 0");
    if (counts.empty()) throw ConfigError("explicit schedule is empty");
    return ArrivalSchedule(Explicit{std::move(counts)});
  }
  static ArrivalSchedule full_sentence() { return ArrivalSchedule(FullSentence{}); }

  /// Per-step counts for a source of the given length. The last constant step
  /// carries the remainder.
  std::vector<std::size_t> counts(std::size_t source_length) const {
    if (source_length == 0) throw ConfigError("empty source");
    if (const auto* k = std::get_if<Constant>(&kind_)) {
      std::vector<std::size_t> out;
      for (std::size_t seen = 0; seen < source_length; seen += k->c)
        out.push_back(std::min(k->c, source_length - seen));
      return out;
    }
    if (const auto* e = std::get_if<Explicit>(&kind_)) {
      std::size_t total = 0;
      for (auto c : e->counts) total += c;
      if (total != source_length)
        throw ConfigError("schedule reveals " + std::to_string(total) + " tokens but source has " +
                          std::to_string(source_length));
      return e->counts;
    }
    return {source_length};
  }

  /// "full", "c=<n>", or "explicit:<c1>+<c2>+...".
  std::string label() const {
    if (const auto* k = std::get_if<Constant>(&kind_)) return "c=" + std::to_string(k->c);
    if (const auto* e = std::get_if<Explicit>(&kind_)) {
      std::string s;
      for (auto c : e->counts) s += (s.empty() ? "" : "+") + std::to_string(c);
      return "explicit:" + s;
    }
    return "full";
  }

  bool is_full_sentence() const noexcept { return std::holds_alternative<FullSentence>(kind_); }

 private:
  using Kind = std::variant<Constant, Explicit, FullSentence>;
  explicit ArrivalSchedule(Kind kind) : kind_(std::move(kind)) {}
  Kind kind_;
};

enum class StopReason : int { kQuota = 0, kEos = 1, kPolicyStop = 2, kLengthCap = 3 };
enum class Action : int { kContinue = 0, kStop = 1 };

inline const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::kQuota: return "quota";
    case StopReason::kEos: return "eos";
    case StopReason::kPolicyStop: return "policy-stop";
    case StopReason::kLengthCap: return "length-cap";
  }
  return "?";
}

struct ActionRecord {
  std::size_t t;  // 1-based target position the decision was about
  Action action;
  friend bool operator==(const ActionRecord&, const ActionRecord&) = default;
};

/// Everything a simulated run produced; all metrics derive from it.
struct StreamTrace {
  std::vector<std::size_t> c;        // tokens revealed per outer step
  std::vector<std::size_t> w;        // tokens written per outer step
  std::vector<StopReason> stop_reasons;
  std::vector<std::size_t> l;        // observed source count when token t was committed
  Sentence output;
  std::vector<ActionRecord> actions;

  std::size_t steps() const noexcept { return c.size(); }

  std::size_t source_length() const noexcept {
    std::size_t n = 0;
    for (auto x : c) n += x;
    return n;
  }

  friend bool operator==(const StreamTrace&, const StreamTrace&) = default;
};

/// Source tokens observed after outer step s (eta[0] = 0).
inline std::size_t eta(const StreamTrace& trace, std::size_t s) {
  if (s > trace.steps()) throw std::out_of_range("outer step out of range");
  std::size_t n = 0;
  for (std::size_t i = 0; i < s; ++i) n += trace.c[i];
  return n;
}

/// Target tokens committed after outer step s (tau[0] = 0).
inline std::size_t tau(const StreamTrace& trace, std::size_t s) {
  if (s > trace.w.size()) throw std::out_of_range("outer step out of range");
  std::size_t n = 0;
  for (std::size_t i = 0; i < s; ++i) n += trace.w[i];
  return n;
}

/// l(t) implied by (c, w) alone.
inline std::vector<std::size_t> replay_lags(std::span<const std::size_t> c,
                                            std::span<const std::size_t> w) {
  std::vector<std::size_t> l;
  std::size_t observed = 0;
  for (std::size_t s = 0; s < c.size() && s < w.size(); ++s) {
    observed += c[s];
    l.insert(l.end(), w[s], observed);
  }
  return l;
}

/// Throws ConfigError describing the first violated trace invariant.
inline void check_invariants(const StreamTrace& trace) {
  if (trace.c.size() != trace.w.size() || trace.c.size() != trace.stop_reasons.size())
    throw ConfigError("trace: per-step arrays differ in length");
  std::size_t total_w = 0;
  for (auto x : trace.w) total_w += x;
  if (total_w != trace.output.size()) throw ConfigError("trace: sum of w != |output|");
  if (trace.l.size() != trace.output.size()) throw ConfigError("trace: |l| != |output|");
  const auto src = trace.source_length();
  for (std::size_t t = 0; t < trace.l.size(); ++t) {
    if (trace.l[t] > src) throw ConfigError("trace: l(t) exceeds source length");
    if (t > 0 && trace.l[t] < trace.l[t - 1]) throw ConfigError("trace: l(t) decreasing");
  }
  if (replay_lags(trace.c, trace.w) != trace.l) throw ConfigError("trace: l(t) inconsistent with (c, w)");
}

inline json to_json(const StreamTrace& trace) {
  json j;
  j["c"] = trace.c;
  j["w"] = trace.w;
  j["l"] = trace.l;
  j["output"] = trace.output;
  json actions = json::array();
  for (const auto& a : trace.actions) actions.push_back({a.t, static_cast<int>(a.action)});
  j["actions"] = std::move(actions);
  json reasons = json::array();
  for (auto r : trace.stop_reasons) reasons.push_back(static_cast<int>(r));
  j["stop_reasons"] = std::move(reasons);
  return j;
}

inline StreamTrace trace_from_json(const json& j) {
  StreamTrace t;
  try {
    t.c = j.at("c").get<std::vector<std::size_t>>();
    t.w = j.at("w").get<std::vector<std::size_t>>();
    t.l = j.at("l").get<std::vector<std::size_t>>();
    t.output = j.at("output").get<Sentence>();
    for (const auto& a : j.at("actions")) {
      const int act = a.at(1).get<int>();
      if (act != 0 && act != 1) throw ConfigError("trace: bad action code");
      t.actions.push_back({a.at(0).get<std::size_t>(), static_cast<Action>(act)});
    }
    for (const auto& r : j.at("stop_reasons")) {
      const int code = r.get<int>();
      if (code < 0 || code > 3) throw ConfigError("trace: bad stop reason code");
      t.stop_reasons.push_back(static_cast<StopReason>(code));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed trace: ") + e.what());
  }
  return t;
}

}  // namespace simulseq
