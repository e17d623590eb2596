#pragma once

#include <cstdint>
#include <cstddef>
#include <vector>

namespace moreaufl {

// Flat vector of f64 model parameters. layout_id identifies the parameter
// layout of the owning model spec; mixing vectors from different layouts is a
// structural error.
struct ParamVector {
  std::uint64_t layout_id = 0;
  std::vector<double> data;

  ParamVector() = default;
  ParamVector(std::uint64_t layout, std::size_t n, double fill = 0.0)
      : layout_id(layout), data(n, fill) {}

  std::size_t size() const { return data.size(); }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
};

void check_same_layout(const ParamVector& x, const ParamVector& y);

// y + a*x
ParamVector axpy(double a, const ParamVector& x, const ParamVector& y);
// y += a*x
void axpy_inplace(double a, const ParamVector& x, ParamVector& y);

ParamVector add(const ParamVector& x, const ParamVector& y);
ParamVector sub(const ParamVector& x, const ParamVector& y);  // x - y
ParamVector scaled(double a, const ParamVector& x);
void scale_inplace(double a, ParamVector& x);

// Reductions use a fixed sequential, index-ascending summation order so that
// results are bit-reproducible; norm2_sq(x) == dot(x, x) exactly.
double dot(const ParamVector& x, const ParamVector& y);
double norm2_sq(const ParamVector& x);
double norm2(const ParamVector& x);

bool is_finite(const ParamVector& x);

}  // namespace moreaufl
