#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <vector>

#include "cats/graph.hpp"

namespace cats::nn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam with bias correction. Moment buffers are kept per parameter in the
// order the parameters were registered.
template <typename T>
class Adam {
 public:
  Adam(std::vector<Parameter<T>*> params, AdamConfig cfg = {})
      : params_(std::move(params)), cfg_(cfg) {
    for (auto* p : params_) {
      m_.emplace_back(p->size(), T(0));
      v_.emplace_back(p->size(), T(0));
    }
  }

  void step() {
    for (auto* p : params_) {
      if (p->grad.size() != p->value.size()) {
        throw std::logic_error("adam_step: parameter '" + p->name + "' has no gradient");
      }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& p = *params_[k];
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const T g = p.grad[i];
        m[i] = b1 * m[i] + (T(1) - b1) * g;
        v[i] = b2 * v[i] + (T(1) - b2) * g * g;
        const double mhat = static_cast<double>(m[i]) / bc1;
        const double vhat = static_cast<double>(v[i]) / bc2;
        p.value[i] -= static_cast<T>(cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon));
      }
    }
  }

  std::uint64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  std::span<const T> first_moment(std::size_t k) const { return m_[k]; }
  std::span<const T> second_moment(std::size_t k) const { return v_[k]; }

 private:
  std::vector<Parameter<T>*> params_;
  AdamConfig cfg_;
  std::vector<std::vector<T>> m_, v_;
  std::uint64_t t_ = 0;
};

template <typename T>
void zero_grads(const std::vector<Parameter<T>*>& params) {
  for (auto* p : params) p->zero_grad();
}

// Rescales all gradients so their joint L2 norm is at most max_norm.
// Returns the norm before clipping.
template <typename T>
double clip_grad_norm(const std::vector<Parameter<T>*>& params, double max_norm) {
  double sq = 0;
  for (auto* p : params)
    for (T g : p->grad) sq += static_cast<double>(g) * static_cast<double>(g);
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0) {
    const T s = static_cast<T>(max_norm / norm);
    for (auto* p : params)
      for (T& g : p->grad) g *= s;
  }
  return norm;
}

// uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)) with fan_in = rows.
template <typename T>
void init_uniform(Parameter<T>& p, std::mt19937_64& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(p.rows));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (T& v : p.value) v = static_cast<T>(dist(rng));
}

template <typename T>
void init_lstm(LstmParams<T>& p, std::mt19937_64& rng) {
  init_uniform(p.w, rng);
  init_uniform(p.u, rng);
  const std::size_t h = p.hidden();
  std::fill(p.b.value.begin(), p.b.value.end(), T(0));
  for (std::size_t j = h; j < 2 * h; ++j) p.b.value[j] = T(1);
}

template <typename T>
LstmParams<T> make_lstm(const std::string& name, std::size_t input, std::size_t hidden) {
  return {Parameter<T>(name + ".w", input, 4 * hidden), Parameter<T>(name + ".u", hidden, 4 * hidden),
          Parameter<T>(name + ".b", 1, 4 * hidden)};
}

using GraphBuilder = std::function<Var(Graph<double>&)>;

// Largest |analytic - numeric| / max(1, |analytic|, |numeric|) over every
// parameter entry, with numeric gradients from central differences.
inline double grad_check(const GraphBuilder& build, const std::vector<Parameter<double>*>& params,
                         double eps = 1e-5) {
  zero_grads(params);
  {
    Graph<double> g(false);
    Var loss = build(g);
    g.backward(loss);
  }
  double worst = 0;
  for (auto* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + eps;
      double plus, minus;
      {
        Graph<double> g(false);
        plus = g.scalar(build(g));
      }
      p->value[i] = saved - eps;
      {
        Graph<double> g(false);
        minus = g.scalar(build(g));
      }
      p->value[i] = saved;
      const double numeric = (plus - minus) / (2 * eps);
      const double analytic = p->grad[i];
      const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
      worst = std::max(worst, std::abs(analytic - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace cats::nn
