#pragma once

#include <cmath>

#include "mkh/array.hpp"
#include "mkh/rng.hpp"

namespace mkh::testing {

inline Array random_array(const Shape& shape, Rng& rng, double scale = 1.0) {
  Array out(shape);
  for (double& v : out.values()) v = scale * rng.normal();
  return out;
}

inline double max_abs_diff(const Array& a, const Array& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace mkh::testing
