#pragma once

// Shared test utilities. The finite-difference oracle lives here so it stays
// independent of the reverse-mode implementation it checks.

#include <cmath>
#include <functional>
#include <vector>

#include "flagcns/rng.hpp"
#include "flagcns/tensor.hpp"

namespace testsupport {

using flagcns::Rng;
using flagcns::Tensor;

inline Tensor random_tensor(std::vector<int64_t> shape, Rng& rng, double lo = -1.0,
                            double hi = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

// Central finite differences of a scalar function of one flat parameter
// vector. h = 1e-5 per the gradient-check contract.
inline std::vector<double> central_differences(std::function<double(const std::vector<double>&)> f,
                                               std::vector<double> x, double h = 1e-5) {
  std::vector<double> g(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    double orig = x[i];
    x[i] = orig + h;
    double fp = f(x);
    x[i] = orig - h;
    double fm = f(x);
    x[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// Relative error with an absolute floor so near-zero gradients do not blow up
// the ratio: |a-b| / max(|a|+|b|, 1e-6).
inline double rel_err(double a, double b) {
  return std::fabs(a - b) / std::max(std::fabs(a) + std::fabs(b), 1e-6);
}

inline double max_rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, rel_err(a[i], b[i]));
  return m;
}

}  // namespace testsupport
