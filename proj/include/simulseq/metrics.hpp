// Copyright 2026 The simulseq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "simulseq/core.hpp"

namespace simulseq {

inline constexpr std::size_t kBleuOrder = 4;

namespace detail {

struct NgramStats {
  std::array<std::size_t, kBleuOrder> matches{};
  std::array<std::size_t, kBleuOrder> totals{};
  std::size_t hyp_len = 0;
  std::size_t ref_len = 0;

  NgramStats& operator+=(const NgramStats& o) {
    for (std::size_t n = 0; n < kBleuOrder; ++n) {
      matches[n] += o.matches[n];
      totals[n] += o.totals[n];
    }
    hyp_len += o.hyp_len;
    ref_len += o.ref_len;
    return *this;
  }
};

inline NgramStats ngram_stats(std::span<const TokenId> ref, std::span<const TokenId> hyp) {
  NgramStats st;
  st.hyp_len = hyp.size();
  st.ref_len = ref.size();
  for (std::size_t n = 1; n <= kBleuOrder; ++n) {
    std::map<std::vector<TokenId>, std::size_t> ref_counts;
    for (std::size_t i = 0; i + n <= ref.size(); ++i)
      ++ref_counts[std::vector<TokenId>(ref.begin() + i, ref.begin() + i + n)];
    std::map<std::vector<TokenId>, std::size_t> hyp_counts;
    for (std::size_t i = 0; i + n <= hyp.size(); ++i)
      ++hyp_counts[std::vector<TokenId>(hyp.begin() + i, hyp.begin() + i + n)];
    for (const auto& [gram, count] : hyp_counts) {
      auto it = ref_counts.find(gram);
      if (it != ref_counts.end()) st.matches[n - 1] += std::min(count, it->second);
      st.totals[n - 1] += count;
    }
  }
  return st;
}

inline double brevity_penalty(std::size_t hyp_len, std::size_t ref_len) {
  if (hyp_len >= ref_len) return 1.0;
  return std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
}

}  // namespace detail

/// Smoothed sentence BLEU-4 in [0, 1]. Orders n >= 2 get add-one smoothing on
/// numerator and denominator; the empty hypothesis scores 0.
inline double sentence_bleu(std::span<const TokenId> reference, std::span<const TokenId> hypothesis) {
  if (hypothesis.empty()) return 0.0;
  const auto st = detail::ngram_stats(reference, hypothesis);
  if (st.matches[0] == 0) return 0.0;
  double log_sum = std::log(static_cast<double>(st.matches[0]) / static_cast<double>(st.totals[0]));
  for (std::size_t n = 1; n < kBleuOrder; ++n)
    log_sum += std::log(static_cast<double>(st.matches[n] + 1) / static_cast<double>(st.totals[n] + 1));
  return detail::brevity_penalty(st.hyp_len, st.ref_len) * std::exp(log_sum / kBleuOrder);
}

/// Corpus BLEU-4 from aggregated counts, unsmoothed, in [0, 100].
inline double corpus_bleu(std::span<const Sentence> references, std::span<const Sentence> hypotheses) {
  if (references.size() != hypotheses.size()) throw ConfigError("corpus_bleu: size mismatch");
  if (references.empty()) throw ConfigError("corpus_bleu: empty corpus");
  detail::NgramStats total;
  for (std::size_t i = 0; i < references.size(); ++i) total += detail::ngram_stats(references[i], hypotheses[i]);
  if (total.hyp_len == 0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 0; n < kBleuOrder; ++n) {
    if (total.matches[n] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(total.matches[n]) / static_cast<double>(total.totals[n]));
  }
  return 100.0 * detail::brevity_penalty(total.hyp_len, total.ref_len) * std::exp(log_sum / kBleuOrder);
}

/// Average lagging over the tokens emitted up to the first one that saw the
/// whole source. lambda = hyp_len / src_len. An empty hypothesis lags by the
/// full source length.
inline double average_lagging(std::span<const std::size_t> l, std::size_t src_len, std::size_t hyp_len) {
  if (src_len == 0) throw ConfigError("average_lagging: empty source");
  if (hyp_len == 0 || l.empty()) return static_cast<double>(src_len);
  const double lambda = static_cast<double>(hyp_len) / static_cast<double>(src_len);
  std::size_t t_e = l.size();
  for (std::size_t t = 0; t < l.size(); ++t)
    if (l[t] >= src_len) {
      t_e = t + 1;
      break;
    }
  double sum = 0.0;
  for (std::size_t t = 1; t <= t_e; ++t)
    sum += static_cast<double>(l[t - 1]) - static_cast<double>(t - 1) / lambda;
  return sum / static_cast<double>(t_e);
}

inline double average_lagging(const StreamTrace& trace) {
  return average_lagging(trace.l, trace.source_length(), trace.output.size());
}

struct ConsecutiveWait {
  double value;
  bool defined;  // false when no outer step wrote anything; value is then src_len
};

/// Total revealed tokens over the number of outer steps that wrote something.
inline ConsecutiveWait consecutive_wait(std::span<const std::size_t> c, std::span<const std::size_t> w) {
  std::size_t revealed = 0, writing_steps = 0;
  for (auto x : c) revealed += x;
  for (auto x : w) writing_steps += x > 0 ? 1 : 0;
  if (writing_steps == 0) return {static_cast<double>(revealed), false};
  return {static_cast<double>(revealed) / static_cast<double>(writing_steps), true};
}

/// Source tokens observed before the first committed token.
inline std::size_t initial_delay(const StreamTrace& trace) {
  return trace.l.empty() ? trace.source_length() : trace.l.front();
}

inline double length_ratio(std::span<const Sentence> hypotheses, std::span<const Sentence> references) {
  if (references.empty()) throw ConfigError("length_ratio: empty corpus");
  std::size_t h = 0, r = 0;
  for (const auto& s : hypotheses) h += s.size();
  for (const auto& s : references) r += s.size();
  return r == 0 ? 0.0 : static_cast<double>(h) / static_cast<double>(r);
}

struct MetricsReport {
  std::size_t sentences = 0;
  double corpus_bleu = 0.0;  // percent
  double mean_al = 0.0;
  double mean_cw = 0.0;
  std::size_t cw_undefined = 0;
  double mean_initial_delay = 0.0;
  std::map<std::size_t, std::size_t> initial_delay_histogram;
  double length_ratio = 0.0;
};

inline MetricsReport compute_report(std::span<const StreamTrace> traces, std::span<const Sentence> references) {
  if (traces.size() != references.size()) throw ConfigError("report: trace/reference count mismatch");
  if (traces.empty()) throw ConfigError("report: empty corpus");
  MetricsReport rep;
  rep.sentences = traces.size();
  std::vector<Sentence> hyps;
  hyps.reserve(traces.size());
  double al = 0.0, cw = 0.0, delay = 0.0;
  for (const auto& t : traces) {
    hyps.push_back(t.output);
    al += average_lagging(t);
    const auto w = consecutive_wait(t.c, t.w);
    cw += w.value;
    rep.cw_undefined += w.defined ? 0 : 1;
    const auto d = initial_delay(t);
    delay += static_cast<double>(d);
    ++rep.initial_delay_histogram[d];
  }
  const double n = static_cast<double>(traces.size());
  rep.corpus_bleu = corpus_bleu(references, hyps);
  rep.mean_al = al / n;
  rep.mean_cw = cw / n;
  rep.mean_initial_delay = delay / n;
  rep.length_ratio = length_ratio(hyps, references);
  return rep;
}

inline json to_json(const MetricsReport& r) {
  json j;
  j["sentences"] = r.sentences;
  j["corpus_bleu"] = r.corpus_bleu;
  j["mean_al"] = r.mean_al;
  j["mean_cw"] = r.mean_cw;
  j["cw_undefined"] = r.cw_undefined;
  j["mean_initial_delay"] = r.mean_initial_delay;
  json hist = json::object();
  for (const auto& [k, v] : r.initial_delay_histogram) hist[std::to_string(k)] = v;
  j["initial_delay_histogram"] = std::move(hist);
  j["length_ratio"] = r.length_ratio;
  return j;
}

inline constexpr const char* kResultsCsvHeader =
    "controller,param,schedule,corpus_bleu,mean_al,mean_cw,mean_initial_delay,length_ratio";

inline std::string csv_row(const std::string& controller, const std::string& param, const std::string& schedule,
                           const MetricsReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g", r.corpus_bleu, r.mean_al, r.mean_cw,
                r.mean_initial_delay, r.length_ratio);
  return controller + "," + param + "," + schedule + "," + buf;
}

}  // namespace simulseq
