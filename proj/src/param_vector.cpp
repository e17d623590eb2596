#include "moreaufl/param_vector.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace moreaufl {

void check_same_layout(const ParamVector& x, const ParamVector& y) {
  if (x.layout_id != y.layout_id || x.size() != y.size()) {
    throw std::invalid_argument(
        "parameter layout mismatch: (" + std::to_string(x.layout_id) + ", n=" +
        std::to_string(x.size()) + ") vs (" + std::to_string(y.layout_id) +
        ", n=" + std::to_string(y.size()) + ")");
  }
}

ParamVector axpy(double a, const ParamVector& x, const ParamVector& y) {
  check_same_layout(x, y);
  ParamVector out = y;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += a * x.data[i];
  return out;
}

void axpy_inplace(double a, const ParamVector& x, ParamVector& y) {
  check_same_layout(x, y);
  for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += a * x.data[i];
}

ParamVector add(const ParamVector& x, const ParamVector& y) { return axpy(1.0, x, y); }

ParamVector sub(const ParamVector& x, const ParamVector& y) {
  check_same_layout(x, y);
  ParamVector out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= y.data[i];
  return out;
}

ParamVector scaled(double a, const ParamVector& x) {
  ParamVector out = x;
  scale_inplace(a, out);
  return out;
}

void scale_inplace(double a, ParamVector& x) {
  for (double& v : x.data) v *= a;
}

double dot(const ParamVector& x, const ParamVector& y) {
  check_same_layout(x, y);
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x.data[i] * y.data[i];
  return acc;
}

double norm2_sq(const ParamVector& x) { return dot(x, x); }

double norm2(const ParamVector& x) { return std::sqrt(norm2_sq(x)); }

bool is_finite(const ParamVector& x) {
  for (double v : x.data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace moreaufl
