#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "mkh/array.hpp"
#include "mkh/tape.hpp"

namespace mkh {

/// Builds a scalar on `tape` from leaves holding the probed arguments.
using ScalarFn = std::function<Var(Tape& tape, std::span<const Var> args)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_arg = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

/// |a - n| / max(1e-8, |a| + |n|)
double relative_error(double analytic, double numeric);

/// Compares reverse-mode gradients of `f` with central differences
/// (f(p + eps) - f(p - eps)) / 2 eps over every coordinate of `args`.
GradCheckReport grad_check(const ScalarFn& f, const std::vector<Array>& args, double eps = 1e-5);

}  // namespace mkh
