#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace tgpo {

// Dense row-major matrix, just enough for linear-softmax policies.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

  double& operator()(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

  void add_scaled(const Matrix& o, double s) {
    if (!same_shape(o)) throw std::invalid_argument("Matrix::add_scaled: shape mismatch");
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += s * o.a[i];
  }

  void scale(double s) {
    for (double& v : a) v *= s;
  }

  bool finite() const {
    for (double v : a) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }
};

inline double logsumexp(std::span<const double> x) {
  double m = x[0];
  for (double v : x) m = std::max(m, v);
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

inline std::vector<double> log_softmax(std::span<const double> logits) {
  const double lse = logsumexp(logits);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

inline std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out = log_softmax(logits);
  for (double& v : out) v = std::exp(v);
  return out;
}

// Exact KL(p || q) for two log-probability vectors over the same support.
inline double kl_from_logprobs(std::span<const double> logp, std::span<const double> logq) {
  double kl = 0.0;
  for (std::size_t i = 0; i < logp.size(); ++i) {
    kl += std::exp(logp[i]) * (logp[i] - logq[i]);
  }
  return kl;
}

inline double population_mean(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

inline double population_std(std::span<const double> x) {
  const double mu = population_mean(x);
  double s = 0.0;
  for (double v : x) s += (v - mu) * (v - mu);
  return std::sqrt(s / static_cast<double>(x.size()));
}

}  // namespace tgpo
