#include "mkh/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace mkh {
namespace {

double evaluate(const ScalarFn& f, const std::vector<Array>& args) {
  Tape tape(false);
  std::vector<Var> leaves;
  leaves.reserve(args.size());
  for (const Array& a : args) leaves.push_back(tape.leaf(a));
  return f(tape, leaves).value().item();
}

}  // namespace

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

GradCheckReport grad_check(const ScalarFn& f, const std::vector<Array>& args, double eps) {
  std::vector<Array> analytic;
  {
    Tape tape;
    std::vector<Var> leaves;
    for (const Array& a : args) leaves.push_back(tape.leaf(a));
    Var out = f(tape, leaves);
    tape.backward(out);
    for (const Var& v : leaves) analytic.push_back(v.grad());
  }

  GradCheckReport report;
  std::vector<Array> probe = args;
  for (std::size_t a = 0; a < probe.size(); ++a) {
    for (std::size_t i = 0; i < probe[a].size(); ++i) {
      const double saved = probe[a][i];
      probe[a][i] = saved + eps;
      const double up = evaluate(f, probe);
      probe[a][i] = saved - eps;
      const double down = evaluate(f, probe);
      probe[a][i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double err = relative_error(analytic[a][i], numeric);
      ++report.coordinates;
      if (err > report.max_rel_error || report.coordinates == 1) {
        report.max_rel_error = std::max(report.max_rel_error, err);
        report.worst_arg = a;
        report.worst_index = i;
        report.analytic = analytic[a][i];
        report.numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace mkh
