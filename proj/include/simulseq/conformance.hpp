// Copyright 2026 The simulseq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Checks a bridge server against the wire contract and, for servers that wrap
// the toy model, against the in-process model.

#include <functional>
#include <string>
#include <vector>

#include "simulseq/bridge.hpp"
#include "simulseq/decoding.hpp"
#include "simulseq/rng.hpp"
#include "simulseq/toy_model.hpp"

namespace simulseq {

struct ConformanceCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct ConformanceOptions {
  std::size_t decode_calls = 1000;
  std::size_t simulations = 100;
  std::uint64_t seed = 1;
};

namespace detail {

/// Random (source prefix, target prefix) pairs drawn from a toy corpus. Target
/// prefixes run up to the reference length, so both token and EOS answers occur.
struct PrefixSample {
  Sentence src;
  Sentence tgt;
};

inline std::vector<PrefixSample> sample_prefixes(const ToyModel& model, std::span<const SentencePair> corpus,
                                                 std::size_t n, std::uint64_t seed) {
  Rng rng(derive_seed({seed, 0xB41DULL}));
  std::vector<PrefixSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& pair = corpus[uniform_int(rng, 0, corpus.size() - 1)];
    const std::size_t eta = uniform_int(rng, 1, pair.source.size());
    PrefixSample s;
    s.src.assign(pair.source.begin(), pair.source.begin() + static_cast<std::ptrdiff_t>(eta));
    const std::size_t tau = uniform_int(rng, 0, std::min(pair.reference.size(), model.length_cap() - 1));
    s.tgt.assign(pair.reference.begin(), pair.reference.begin() + static_cast<std::ptrdiff_t>(tau));
    out.push_back(std::move(s));
  }
  return out;
}

inline DecodeStepResult local_step(const ToyModel& model, std::span<const TokenId> src, std::span<const TokenId> tgt) {
  ModelState state;
  model.prepare_states(state, src, tgt);
  return model.decode_step(state, tgt);
}

}  // namespace detail

/// Runs every check. `open` must return a fresh session per call.
inline std::vector<ConformanceCheck> run_conformance(const std::function<std::unique_ptr<Session>()>& open,
                                                     const ToyModel& model, const ConformanceOptions& opt) {
  std::vector<ConformanceCheck> checks;
  auto run = [&](const std::string& name, const std::function<std::string()>& body) {
    ConformanceCheck c{name, false, {}};
    try {
      c.detail = body();
      c.passed = c.detail.empty();
    } catch (const std::exception& e) {
      c.detail = e.what();
    }
    checks.push_back(std::move(c));
  };

  const auto corpus = generate_corpus(model, std::max<std::size_t>(opt.simulations, 1));
  const auto samples = detail::sample_prefixes(model, corpus, opt.decode_calls, opt.seed);

  run("hello-first", [&]() -> std::string {
    auto s = open();
    const auto& d = s->descriptor();
    if (d.protocol_version != kProtocolVersion) return "unexpected protocol version";
    if (d.hidden_dim != model.hidden_dim())
      return "hello declares hidden_dim " + std::to_string(d.hidden_dim) + ", model has " +
             std::to_string(model.hidden_dim());
    return {};
  });

  run("id-correlation", [&]() -> std::string {
    auto s = open();
    const auto& v = model.vocab();
    for (std::size_t i = 0; i < std::min<std::size_t>(samples.size(), 20); ++i) {
      const auto id = static_cast<std::int64_t>(1000 + 7 * i);
      json req;
      req["type"] = "decode_request";
      req["id"] = id;
      req["src"] = v.decode(samples[i].src);
      req["tgt_prefix"] = v.decode(samples[i].tgt);
      s->send_raw(req.dump());
      const auto resp = json::parse(s->read_raw());
      if (resp.at("id").get<std::int64_t>() != id) return "response id does not match request " + std::to_string(id);
    }
    return {};
  });

  run("hidden-dim-consistency", [&]() -> std::string {
    auto s = open();
    const auto& v = model.vocab();
    for (std::size_t i = 0; i < std::min<std::size_t>(samples.size(), 100); ++i) {
      const auto r = s->decode(v.decode(samples[i].src), v.decode(samples[i].tgt));
      if (r.hidden_state.size() != s->descriptor().hidden_dim) return "hidden_state length mismatch";
    }
    return {};
  });

  run("malformed-input-recovery", [&]() -> std::string {
    auto s = open();
    for (const std::string bad : {"this is not json", "{\"type\":\"decode_request\"}", "[1,2,3]"}) {
      s->send_raw(bad);
      const auto resp = json::parse(s->read_raw());
      if (resp.value("type", std::string()) != "error") return "no error reply to malformed line: " + bad;
    }
    const auto& v = model.vocab();
    const auto r = s->decode(v.decode(samples.front().src), v.decode(samples.front().tgt));
    if (r.hidden_state.size() != model.hidden_dim()) return "valid request after malformed input failed";
    return {};
  });

  run("empty-source-rejected", [&]() -> std::string {
    auto s = open();
    try {
      s->decode({}, {});
    } catch (const PreconditionError&) {
      return {};
    }
    return "empty source prefix was accepted";
  });

  run("differential-decode-step", [&]() -> std::string {
    auto session = std::shared_ptr<Session>(open());
    RemoteModel remote(session, model.vocab(), model.length_cap());
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto local = detail::local_step(model, samples[i].src, samples[i].tgt);
      const auto bridged = remote.request(samples[i].src, samples[i].tgt);
      if (!(local == bridged)) return "decode_step differs on sample " + std::to_string(i);
    }
    return {};
  });

  run("differential-simulate", [&]() -> std::string {
    auto session = std::shared_ptr<Session>(open());
    RemoteModel remote(session, model.vocab(), model.length_cap());
    auto policy = std::make_shared<const PolicyParams>(
        PolicyParams::initialize(model.hidden_dim(), 64, 64, opt.seed));
    const std::vector<ControllerConfig> controllers{LEConfig{2}, WaitkConfig{3},
                                                    TnConfig{policy, PolicyMode::kSample, "tn"}};
    const std::vector<ArrivalSchedule> schedules{ArrivalSchedule::constant(1), ArrivalSchedule::constant(2),
                                                 ArrivalSchedule::full_sentence()};
    for (std::size_t i = 0; i < opt.simulations; ++i) {
      RunConfig cfg;
      cfg.controller = controllers[i % controllers.size()];
      cfg.schedule = schedules[(i / controllers.size()) % schedules.size()];
      cfg.seed = derive_seed({opt.seed, i});
      const auto& src = corpus[i % corpus.size()].source;
      if (!(simulate(model, src, cfg) == simulate(remote, src, cfg)))
        return "trace differs on simulation " + std::to_string(i);
    }
    return {};
  });

  return checks;
}

}  // namespace simulseq
