// Copyright 2026 The simulseq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "simulseq/core.hpp"
#include "simulseq/model.hpp"
#include "simulseq/rng.hpp"

namespace simulseq {

// ---------------------------------------------------------------------------
// Length-and-EOS and wait-k quotas

struct LEConfig {
  std::size_t d = 0;
};

/// Maximum number of tokens the inner loop may write at this outer step.
/// Non-terminal: max(0, eta - tau_prev - d). Terminal: cap - tau_prev.
/// The inner loop additionally stops on a predicted EOS.
constexpr std::size_t le_quota(std::size_t eta_s, std::size_t tau_prev, std::size_t d, bool terminal,
                               std::size_t cap = kDefaultLengthCap) {
  if (terminal) return cap > tau_prev ? cap - tau_prev : 0;
  return eta_s > tau_prev + d ? eta_s - tau_prev - d : 0;
}

/// Wait-k under one-token arrivals is LE with d = k - 1.
inline std::size_t waitk_quota(std::size_t k, std::size_t eta_s, std::size_t tau_prev, bool terminal,
                               std::size_t cap = kDefaultLengthCap) {
  if (k == 0) throw ConfigError("wait-k needs k >= 1");
  return le_quota(eta_s, tau_prev, k - 1, terminal, cap);
}

// ---------------------------------------------------------------------------
// TN policy network: z -> tanh(H1) -> tanh(H2) -> softmax over {continue, stop}

/// Parameters stored flat in the order W1, b1, W2, b2, W3, b3; matrices are
/// row-major with the input dimension as rows (h = x W + b).
class PolicyParams {
 public:
  PolicyParams() = default;
  PolicyParams(std::size_t input_dim, std::size_t hidden1, std::size_t hidden2)
      : input_(input_dim), h1_(hidden1), h2_(hidden2), theta_(size_for(input_dim, hidden1, hidden2), 0.0) {
    if (input_dim == 0 || hidden1 == 0 || hidden2 == 0) throw ShapeError("policy dimensions must be positive");
  }

  /// Glorot-uniform hidden layers, zero biases, zero output layer: the fresh
  /// policy is exactly uniform over the two actions.
  static PolicyParams initialize(std::size_t input_dim, std::size_t hidden1, std::size_t hidden2,
                                 std::uint64_t seed) {
    PolicyParams p(input_dim, hidden1, hidden2);
    Rng rng(derive_seed({seed, 0x1A17ULL}));
    auto fill = [&](std::span<double> w, std::size_t fan_in, std::size_t fan_out) {
      const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      for (auto& x : w) x = (2.0 * uniform01(rng) - 1.0) * limit;
    };
    fill(p.w1(), input_dim, hidden1);
    fill(p.w2(), hidden1, hidden2);
    return p;
  }

  static constexpr std::size_t size_for(std::size_t in, std::size_t h1, std::size_t h2) {
    return in * h1 + h1 + h1 * h2 + h2 + h2 * 2 + 2;
  }

  std::size_t input_dim() const noexcept { return input_; }
  std::size_t hidden1() const noexcept { return h1_; }
  std::size_t hidden2() const noexcept { return h2_; }
  std::size_t size() const noexcept { return theta_.size(); }

  std::span<double> flat() noexcept { return theta_; }
  std::span<const double> flat() const noexcept { return theta_; }

  std::span<double> w1() noexcept { return slice(0, input_ * h1_); }
  std::span<double> b1() noexcept { return slice(off_b1(), h1_); }
  std::span<double> w2() noexcept { return slice(off_w2(), h1_ * h2_); }
  std::span<double> b2() noexcept { return slice(off_b2(), h2_); }
  std::span<double> w3() noexcept { return slice(off_w3(), h2_ * 2); }
  std::span<double> b3() noexcept { return slice(off_b3(), 2); }
  std::span<const double> w1() const noexcept { return cslice(0, input_ * h1_); }
  std::span<const double> b1() const noexcept { return cslice(off_b1(), h1_); }
  std::span<const double> w2() const noexcept { return cslice(off_w2(), h1_ * h2_); }
  std::span<const double> b2() const noexcept { return cslice(off_b2(), h2_); }
  std::span<const double> w3() const noexcept { return cslice(off_w3(), h2_ * 2); }
  std::span<const double> b3() const noexcept { return cslice(off_b3(), 2); }

  bool all_finite() const {
    return std::all_of(theta_.begin(), theta_.end(), [](double x) { return std::isfinite(x); });
  }

  friend bool operator==(const PolicyParams&, const PolicyParams&) = default;

 private:
  std::size_t off_b1() const noexcept { return input_ * h1_; }
  std::size_t off_w2() const noexcept { return off_b1() + h1_; }
  std::size_t off_b2() const noexcept { return off_w2() + h1_ * h2_; }
  std::size_t off_w3() const noexcept { return off_b2() + h2_; }
  std::size_t off_b3() const noexcept { return off_w3() + h2_ * 2; }
  std::span<double> slice(std::size_t off, std::size_t n) noexcept { return {theta_.data() + off, n}; }
  std::span<const double> cslice(std::size_t off, std::size_t n) const noexcept {
    return {theta_.data() + off, n};
  }

  std::size_t input_ = 0, h1_ = 0, h2_ = 0;
  std::vector<double> theta_;
};

/// [p_continue, p_stop]
using ActionProbs = std::array<double, 2>;

struct StopDecision {
  Action action = Action::kContinue;
  double p_stop = 0.5;
};

namespace detail {

struct ForwardPass {
  std::vector<double> h1, h2;
  ActionProbs probs{};
};

inline ForwardPass forward(const PolicyParams& p, std::span<const double> z) {
  if (z.size() != p.input_dim())
    throw ShapeError("policy expects input of size " + std::to_string(p.input_dim()) + ", got " +
                     std::to_string(z.size()));
  const std::size_t n0 = p.input_dim(), n1 = p.hidden1(), n2 = p.hidden2();
  ForwardPass f;
  f.h1.assign(p.b1().begin(), p.b1().end());
  const auto w1 = p.w1();
  for (std::size_t i = 0; i < n0; ++i) {
    if (z[i] == 0.0) continue;
    for (std::size_t j = 0; j < n1; ++j) f.h1[j] += z[i] * w1[i * n1 + j];
  }
  for (auto& x : f.h1) x = std::tanh(x);
  f.h2.assign(p.b2().begin(), p.b2().end());
  const auto w2 = p.w2();
  for (std::size_t i = 0; i < n1; ++i)
    for (std::size_t j = 0; j < n2; ++j) f.h2[j] += f.h1[i] * w2[i * n2 + j];
  for (auto& x : f.h2) x = std::tanh(x);
  std::array<double, 2> logits{p.b3()[0], p.b3()[1]};
  const auto w3 = p.w3();
  for (std::size_t i = 0; i < n2; ++i) {
    logits[0] += f.h2[i] * w3[i * 2];
    logits[1] += f.h2[i] * w3[i * 2 + 1];
  }
  const double m = std::max(logits[0], logits[1]);
  const double e0 = std::exp(logits[0] - m), e1 = std::exp(logits[1] - m);
  f.probs = {e0 / (e0 + e1), e1 / (e0 + e1)};
  return f;
}

}  // namespace detail

inline ActionProbs policy_forward(const PolicyParams& params, std::span<const double> z) {
  return detail::forward(params, z).probs;
}

/// Adds `scale * d log pi(action | z) / d theta` into `grad` (same layout as params).
inline void accumulate_grad_logp(const PolicyParams& params, std::span<const double> z, Action action,
                                 double scale, std::span<double> grad) {
  if (grad.size() != params.size()) throw ShapeError("gradient buffer has wrong size");
  const auto f = detail::forward(params, z);
  const std::size_t n0 = params.input_dim(), n1 = params.hidden1(), n2 = params.hidden2();
  const std::size_t a = action == Action::kStop ? 1 : 0;
  // d log softmax_a / d logits = onehot(a) - p
  const std::array<double, 2> dout{(a == 0 ? 1.0 : 0.0) - f.probs[0], (a == 1 ? 1.0 : 0.0) - f.probs[1]};

  std::size_t off = 0;
  const std::size_t off_w1 = off;
  off += n0 * n1;
  const std::size_t off_b1 = off;
  off += n1;
  const std::size_t off_w2 = off;
  off += n1 * n2;
  const std::size_t off_b2 = off;
  off += n2;
  const std::size_t off_w3 = off;
  off += n2 * 2;
  const std::size_t off_b3 = off;

  grad[off_b3] += scale * dout[0];
  grad[off_b3 + 1] += scale * dout[1];
  const auto w3 = params.w3();
  std::vector<double> d2(n2);
  for (std::size_t i = 0; i < n2; ++i) {
    grad[off_w3 + i * 2] += scale * f.h2[i] * dout[0];
    grad[off_w3 + i * 2 + 1] += scale * f.h2[i] * dout[1];
    d2[i] = (w3[i * 2] * dout[0] + w3[i * 2 + 1] * dout[1]) * (1.0 - f.h2[i] * f.h2[i]);
  }
  const auto w2 = params.w2();
  std::vector<double> d1(n1, 0.0);
  for (std::size_t i = 0; i < n1; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n2; ++j) {
      grad[off_w2 + i * n2 + j] += scale * f.h1[i] * d2[j];
      acc += w2[i * n2 + j] * d2[j];
    }
    d1[i] = acc * (1.0 - f.h1[i] * f.h1[i]);
  }
  for (std::size_t j = 0; j < n2; ++j) grad[off_b2 + j] += scale * d2[j];
  for (std::size_t i = 0; i < n0; ++i) {
    if (z[i] == 0.0) continue;
    for (std::size_t j = 0; j < n1; ++j) grad[off_w1 + i * n1 + j] += scale * z[i] * d1[j];
  }
  for (std::size_t j = 0; j < n1; ++j) grad[off_b1 + j] += scale * d1[j];
}

/// Gradient of log pi(action | z) with respect to every parameter.
inline std::vector<double> policy_grad_logp(const PolicyParams& params, std::span<const double> z,
                                            Action action) {
  std::vector<double> grad(params.size(), 0.0);
  accumulate_grad_logp(params, z, action, 1.0, grad);
  return grad;
}

enum class PolicyMode { kGreedy, kSample };

/// Sample mode draws a ~ pi (training); greedy mode takes the more likely
/// action, continuing on a tie.
inline StopDecision tn_should_stop(const PolicyParams& params, std::span<const double> z, PolicyMode mode,
                                   Rng* rng = nullptr) {
  const auto probs = policy_forward(params, z);
  StopDecision d;
  d.p_stop = probs[1];
  if (mode == PolicyMode::kGreedy) {
    d.action = probs[1] > probs[0] ? Action::kStop : Action::kContinue;
  } else {
    if (rng == nullptr) throw ConfigError("sample mode needs a random generator");
    d.action = uniform01(*rng) < probs[1] ? Action::kStop : Action::kContinue;
  }
  return d;
}

// ---------------------------------------------------------------------------
// Adam moments (kept next to the parameters so checkpoints can carry them)

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::size_t step = 0;
  std::vector<double> m, v;

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// One Adam ascent step: theta += lr * mhat / (sqrt(vhat) + eps).
inline void adam_ascent(std::span<double> theta, std::span<const double> grad, AdamState& st,
                        const AdamConfig& cfg) {
  if (grad.size() != theta.size()) throw ShapeError("gradient and parameters differ in size");
  if (st.m.size() != theta.size()) {
    st.m.assign(theta.size(), 0.0);
    st.v.assign(theta.size(), 0.0);
    st.step = 0;
  }
  ++st.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * grad[i];
    st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    theta[i] += cfg.lr * (st.m[i] / c1) / (std::sqrt(st.v[i] / c2) + cfg.eps);
  }
}

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  PolicyParams params;
  std::optional<AdamState> adam;
  json training_config = json::object();
};

inline json to_json(const Checkpoint& ck) {
  const auto& p = ck.params;
  auto arr = [](std::span<const double> s) { return std::vector<double>(s.begin(), s.end()); };
  json j;
  j["version"] = kCheckpointVersion;
  j["H"] = p.input_dim();
  j["H1"] = p.hidden1();
  j["H2"] = p.hidden2();
  json w;
  w["W1"] = arr(p.w1());
  w["b1"] = arr(p.b1());
  w["W2"] = arr(p.w2());
  w["b2"] = arr(p.b2());
  w["W3"] = arr(p.w3());
  w["b3"] = arr(p.b3());
  j["weights"] = std::move(w);
  if (ck.adam) {
    json m;
    m["step"] = ck.adam->step;
    m["m"] = ck.adam->m;
    m["v"] = ck.adam->v;
    j["optimizer_moments"] = std::move(m);
  }
  j["training_config"] = ck.training_config;
  return j;
}

inline Checkpoint checkpoint_from_json(const json& j) {
  Checkpoint ck;
  try {
    if (j.at("version").get<int>() != kCheckpointVersion) throw ConfigError("unsupported checkpoint version");
    ck.params = PolicyParams(j.at("H").get<std::size_t>(), j.at("H1").get<std::size_t>(),
                             j.at("H2").get<std::size_t>());
    const auto& w = j.at("weights");
    auto load = [&](const char* key, std::span<double> dst) {
      const auto v = w.at(key).get<std::vector<double>>();
      if (v.size() != dst.size()) throw ShapeError(std::string("checkpoint tensor ") + key + " has wrong size");
      std::copy(v.begin(), v.end(), dst.begin());
    };
    load("W1", ck.params.w1());
    load("b1", ck.params.b1());
    load("W2", ck.params.w2());
    load("b2", ck.params.b2());
    load("W3", ck.params.w3());
    load("b3", ck.params.b3());
    if (j.contains("optimizer_moments")) {
      const auto& m = j.at("optimizer_moments");
      AdamState st;
      st.step = m.at("step").get<std::size_t>();
      st.m = m.at("m").get<std::vector<double>>();
      st.v = m.at("v").get<std::vector<double>>();
      if (st.m.size() != ck.params.size() || st.v.size() != ck.params.size())
        throw ShapeError("optimizer moments have wrong size");
      ck.adam = std::move(st);
    }
    if (j.contains("training_config")) ck.training_config = j.at("training_config");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed checkpoint: ") + e.what());
  }
  if (!ck.params.all_finite()) throw ConfigError("checkpoint contains non-finite weights");
  return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write checkpoint " + path);
  out << to_json(ck).dump(1) << '\n';
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read checkpoint " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return checkpoint_from_json(json::parse(buf.str()));
  } catch (const json::parse_error& e) {
    throw ConfigError("checkpoint " + path + ": " + e.what());
  }
}

}  // namespace simulseq
