#include "mkh/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace mkh {
namespace {

enum class Bcast { same, left_scalar, right_scalar };

Bcast broadcast_kind(const Array& a, const Array& b, const char* op) {
  if (a.shape() == b.shape()) return Bcast::same;
  if (a.size() == 1) return Bcast::left_scalar;
  if (b.size() == 1) return Bcast::right_scalar;
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_string(a.shape()) + " and " +
                       shape_string(b.shape()));
}

void check_same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw std::invalid_argument("operands recorded on different tapes");
}

// Adds `g` into the gradient of `target`, summing when the target was a
// broadcast scalar.
void accumulate(Tape& t, Var target, const Array& g) {
  if (!t.requires_grad(target.id)) return;
  Array& acc = t.grad_accumulator(target.id);
  if (acc.size() == g.size()) {
    for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
  } else {
    double s = 0.0;
    for (double v : g.values()) s += v;
    acc[0] += s;
  }
}

template <typename F>
Array map(const Array& a, F f) {
  Array out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

// Unary op whose local derivative is expressed through input x and output y.
template <typename Fwd, typename Deriv>
Var unary(const char* op, Var a, Fwd fwd, Deriv deriv) {
  Tape& t = *a.tape;
  Array out = map(a.value(), fwd);
  return t.record(op, std::move(out), {a}, [a, deriv, self = t.size()](Tape& tp, const Array& g) {
    const Array& x = tp.value(a.id);
    const Array& y = tp.value(self);
    Array& acc = tp.grad_accumulator(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * deriv(x[i], y[i]);
  });
}

std::size_t block_rows(const Array& a, std::size_t blocks, const char* op) {
  if (blocks == 0 || a.rows() % blocks != 0) {
    throw DimensionError(std::string(op) + ": " + std::to_string(a.rows()) + " rows not divisible into " +
                         std::to_string(blocks) + " blocks");
  }
  return a.rows() / blocks;
}

Shape as_matrix_shape(const Array& a) { return Shape{a.rows(), a.cols()}; }

}  // namespace

Var add(Var a, Var b) {
  check_same_tape(a, b);
  const Array& x = a.value();
  const Array& y = b.value();
  const Bcast k = broadcast_kind(x, y, "add");
  Array out(k == Bcast::left_scalar ? y.shape() : x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = (k == Bcast::left_scalar ? x[0] : x[i]) + (k == Bcast::right_scalar ? y[0] : y[i]);
  }
  return a.tape->record("add", std::move(out), {a, b}, [a, b](Tape& t, const Array& g) {
    accumulate(t, a, g);
    accumulate(t, b, g);
  });
}

Var sub(Var a, Var b) {
  check_same_tape(a, b);
  const Array& x = a.value();
  const Array& y = b.value();
  const Bcast k = broadcast_kind(x, y, "sub");
  Array out(k == Bcast::left_scalar ? y.shape() : x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = (k == Bcast::left_scalar ? x[0] : x[i]) - (k == Bcast::right_scalar ? y[0] : y[i]);
  }
  return a.tape->record("sub", std::move(out), {a, b}, [a, b](Tape& t, const Array& g) {
    accumulate(t, a, g);
    Array ng = map(g, [](double v) { return -v; });
    accumulate(t, b, ng);
  });
}

Var mul(Var a, Var b) {
  check_same_tape(a, b);
  const Array& x = a.value();
  const Array& y = b.value();
  const Bcast k = broadcast_kind(x, y, "mul");
  Array out(k == Bcast::left_scalar ? y.shape() : x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = (k == Bcast::left_scalar ? x[0] : x[i]) * (k == Bcast::right_scalar ? y[0] : y[i]);
  }
  return a.tape->record("mul", std::move(out), {a, b}, [a, b, k](Tape& t, const Array& g) {
    const Array& x = t.value(a.id);
    const Array& y = t.value(b.id);
    if (t.requires_grad(a.id)) {
      Array ga(g.shape());
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * (k == Bcast::right_scalar ? y[0] : y[i]);
      accumulate(t, a, ga);
    }
    if (t.requires_grad(b.id)) {
      Array gb(g.shape());
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] = g[i] * (k == Bcast::left_scalar ? x[0] : x[i]);
      accumulate(t, b, gb);
    }
  });
}

Var div(Var a, Var b) {
  check_same_tape(a, b);
  const Array& x = a.value();
  const Array& y = b.value();
  const Bcast k = broadcast_kind(x, y, "div");
  for (double v : y.values()) {
    if (v == 0.0) throw NumericError("div: division by zero");
  }
  Array out(k == Bcast::left_scalar ? y.shape() : x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = (k == Bcast::left_scalar ? x[0] : x[i]) / (k == Bcast::right_scalar ? y[0] : y[i]);
  }
  return a.tape->record("div", std::move(out), {a, b}, [a, b, k](Tape& t, const Array& g) {
    const Array& x = t.value(a.id);
    const Array& y = t.value(b.id);
    if (t.requires_grad(a.id)) {
      Array ga(g.shape());
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] / (k == Bcast::right_scalar ? y[0] : y[i]);
      accumulate(t, a, ga);
    }
    if (t.requires_grad(b.id)) {
      Array gb(g.shape());
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double xv = k == Bcast::left_scalar ? x[0] : x[i];
        const double yv = k == Bcast::right_scalar ? y[0] : y[i];
        gb[i] = -g[i] * xv / (yv * yv);
      }
      accumulate(t, b, gb);
    }
  });
}

Var add_scalar(Var a, double c) {
  return unary("add_scalar", a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var scale(Var a, double c) {
  return unary("scale", a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var neg(Var a) {
  return unary("neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Var rsub_scalar(double c, Var a) {
  return unary("rsub_scalar", a, [c](double x) { return c - x; }, [](double, double) { return -1.0; });
}

Var sigmoid(Var a) {
  return unary(
      "sigmoid", a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var relu(Var a) {
  return unary("relu", a, [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var softplus(Var a) {
  return unary(
      "softplus", a, [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
      [](double x, double) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      });
}

Var exp(Var a) {
  return unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  for (double v : a.value().values()) {
    if (!(v > 0.0)) throw NumericError("log: non-positive argument " + std::to_string(v));
  }
  return unary("log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var sqrt(Var a) {
  for (double v : a.value().values()) {
    if (v < 0.0) throw NumericError("sqrt: negative argument " + std::to_string(v));
  }
  return unary("sqrt", a, [](double x) { return std::sqrt(x); },
               [](double, double y) { return y > 0 ? 0.5 / y : 0.0; });
}

Var square(Var a) {
  return unary("square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var abs(Var a) {
  return unary(
      "abs", a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Var clamp(Var a, double lo, double hi) {
  return unary(
      "clamp", a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Var matmul(Var a, Var b) {
  check_same_tape(a, b);
  const Array& x = a.value();
  const Array& y = b.value();
  if (x.rank() != 2 || y.rank() != 2 || x.cols() != y.rows()) {
    throw DimensionError("matmul: cannot multiply " + shape_string(x.shape()) + " by " + shape_string(y.shape()));
  }
  const std::size_t r = x.rows(), k = x.cols(), c = y.cols();
  Array out({r, c});
  for (std::size_t i = 0; i < r; ++i) {
    double* orow = out.data() + i * c;
    for (std::size_t p = 0; p < k; ++p) {
      const double xv = x(i, p);
      if (xv == 0.0) continue;
      const double* yrow = y.data() + p * c;
      for (std::size_t j = 0; j < c; ++j) orow[j] += xv * yrow[j];
    }
  }
  return a.tape->record("matmul", std::move(out), {a, b}, [a, b, r, k, c](Tape& t, const Array& g) {
    const Array& x = t.value(a.id);
    const Array& y = t.value(b.id);
    if (t.requires_grad(a.id)) {
      Array& ga = t.grad_accumulator(a.id);  // g * y^T
      for (std::size_t i = 0; i < r; ++i) {
        const double* grow = g.data() + i * c;
        for (std::size_t p = 0; p < k; ++p) {
          const double* yrow = y.data() + p * c;
          double s = 0.0;
          for (std::size_t j = 0; j < c; ++j) s += grow[j] * yrow[j];
          ga(i, p) += s;
        }
      }
    }
    if (t.requires_grad(b.id)) {
      Array& gb = t.grad_accumulator(b.id);  // x^T * g
      for (std::size_t i = 0; i < r; ++i) {
        const double* grow = g.data() + i * c;
        for (std::size_t p = 0; p < k; ++p) {
          const double xv = x(i, p);
          if (xv == 0.0) continue;
          double* brow = gb.data() + p * c;
          for (std::size_t j = 0; j < c; ++j) brow[j] += xv * grow[j];
        }
      }
    }
  });
}

Var transpose(Var a) {
  Array out = a.value().transposed();
  return a.tape->record("transpose", std::move(out), {a}, [a](Tape& t, const Array& g) {
    Array& acc = t.grad_accumulator(a.id);
    const std::size_t r = g.rows(), c = g.cols();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) acc[j * r + i] += g(i, j);
  });
}

Var reshape(Var a, Shape shape) {
  Array out = a.value().reshaped(std::move(shape));
  return a.tape->record("reshape", std::move(out), {a}, [a](Tape& t, const Array& g) {
    Array& acc = t.grad_accumulator(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
  });
}

Var sum(Var a, Axis axis) {
  const Array& x = a.value();
  if (axis == Axis::all) {
    double s = 0.0;
    for (double v : x.values()) s += v;
    return a.tape->record("sum", Array::scalar(s), {a}, [a](Tape& t, const Array& g) {
      Array& acc = t.grad_accumulator(a.id);
      for (double& v : acc.values()) v += g[0];
    });
  }
  const std::size_t r = x.rows(), c = x.cols();
  const bool over_rows = axis == Axis::rows;
  Array out = over_rows ? Array({1, c}) : Array({r, 1});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[over_rows ? j : i] += x[i * c + j];
  return a.tape->record("sum", std::move(out), {a}, [a, r, c, over_rows](Tape& t, const Array& g) {
    Array& acc = t.grad_accumulator(a.id);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) acc[i * c + j] += g[over_rows ? j : i];
  });
}

Var mean(Var a, Axis axis) {
  const Array& x = a.value();
  std::size_t n = x.size();
  if (axis == Axis::rows) n = x.rows();
  if (axis == Axis::cols) n = x.cols();
  return scale(sum(a, axis), 1.0 / static_cast<double>(n));
}

Var softmax_rows(Var a, const Array* mask, bool allow_empty) {
  const Array& x = a.value();
  const std::size_t r = x.rows(), c = x.cols();
  if (mask && mask->size() != x.size()) {
    throw DimensionError("softmax_rows: mask shape " + shape_string(mask->shape()) + " does not match " +
                         shape_string(x.shape()));
  }
  Array out(as_matrix_shape(x));
  for (std::size_t i = 0; i < r; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) {
      if (!mask || (*mask)[i * c + j] != 0.0) mx = std::max(mx, x[i * c + j]);
    }
    if (mx == -std::numeric_limits<double>::infinity()) {
      if (allow_empty) continue;
      throw NumericError("softmax_rows: row " + std::to_string(i) + " is fully masked");
    }
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      if (!mask || (*mask)[i * c + j] != 0.0) {
        const double e = std::exp(x[i * c + j] - mx);
        out[i * c + j] = e;
        z += e;
      }
    }
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= z;
  }
  if (x.rank() != 2) out = out.reshaped(x.shape());
  return a.tape->record("softmax_rows", std::move(out), {a}, [a, r, c, self = a.tape->size()](Tape& t, const Array& g) {
    const Array& y = t.value(self);
    Array& acc = t.grad_accumulator(a.id);
    for (std::size_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * y[i * c + j];
      for (std::size_t j = 0; j < c; ++j) acc[i * c + j] += y[i * c + j] * (g[i * c + j] - dot);
    }
  });
}

Var layer_norm(Var a, Var gain, Var bias, double eps) {
  const Array& x = a.value();
  const std::size_t r = x.rows(), c = x.cols();
  if (gain.value().size() != c || bias.value().size() != c) {
    throw DimensionError("layer_norm: gain/bias must hold " + std::to_string(c) + " values");
  }
  const Array& gv = gain.value();
  const Array& bv = bias.value();
  Array out(as_matrix_shape(x));
  Array xhat({r, c});
  Array inv_std({r});
  for (std::size_t i = 0; i < r; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += x[i * c + j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double d = x[i * c + j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(c);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[i] = is;
    for (std::size_t j = 0; j < c; ++j) {
      xhat(i, j) = (x[i * c + j] - mu) * is;
      out(i, j) = xhat(i, j) * gv[j] + bv[j];
    }
  }
  return a.tape->record(
      "layer_norm", std::move(out), {a, gain, bias},
      [a, gain, bias, r, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, const Array& g) {
        const Array& gv = t.value(gain.id);
        if (t.requires_grad(gain.id)) {
          Array& gg = t.grad_accumulator(gain.id);
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) gg[j] += g[i * c + j] * xhat(i, j);
        }
        if (t.requires_grad(bias.id)) {
          Array& gb = t.grad_accumulator(bias.id);
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) gb[j] += g[i * c + j];
        }
        if (t.requires_grad(a.id)) {
          Array& ga = t.grad_accumulator(a.id);
          const double inv_c = 1.0 / static_cast<double>(c);
          for (std::size_t i = 0; i < r; ++i) {
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
              const double dxh = g[i * c + j] * gv[j];
              s1 += dxh;
              s2 += dxh * xhat(i, j);
            }
            for (std::size_t j = 0; j < c; ++j) {
              const double dxh = g[i * c + j] * gv[j];
              ga[i * c + j] += inv_std[i] * (dxh - inv_c * s1 - xhat(i, j) * inv_c * s2);
            }
          }
        }
      });
}

Var concat(Var a, Var b, int axis) {
  check_same_tape(a, b);
  const Array& x = a.value();
  const Array& y = b.value();
  if (x.rank() <= 1 && y.rank() <= 1) {
    if (axis != 0) throw DimensionError("concat: rank-1 operands only concatenate along axis 0");
    std::vector<double> data(x.values().begin(), x.values().end());
    data.insert(data.end(), y.values().begin(), y.values().end());
    const std::size_t nx = x.size();
    const std::size_t total = data.size();
    return a.tape->record("concat", Array({total}, std::move(data)), {a, b}, [a, b, nx](Tape& t, const Array& g) {
      if (t.requires_grad(a.id)) {
        Array& ga = t.grad_accumulator(a.id);
        for (std::size_t i = 0; i < nx; ++i) ga[i] += g[i];
      }
      if (t.requires_grad(b.id)) {
        Array& gb = t.grad_accumulator(b.id);
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[nx + i];
      }
    });
  }
  if (x.rank() != 2 || y.rank() != 2) throw DimensionError("concat: operands must both be rank 1 or rank 2");
  if (axis == 0) {
    if (x.cols() != y.cols()) {
      throw DimensionError("concat: column mismatch " + shape_string(x.shape()) + " vs " + shape_string(y.shape()));
    }
    std::vector<double> data(x.values().begin(), x.values().end());
    data.insert(data.end(), y.values().begin(), y.values().end());
    const std::size_t nx = x.size();
    Array out({x.rows() + y.rows(), x.cols()}, std::move(data));
    return a.tape->record("concat", std::move(out), {a, b}, [a, b, nx](Tape& t, const Array& g) {
      if (t.requires_grad(a.id)) {
        Array& ga = t.grad_accumulator(a.id);
        for (std::size_t i = 0; i < nx; ++i) ga[i] += g[i];
      }
      if (t.requires_grad(b.id)) {
        Array& gb = t.grad_accumulator(b.id);
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[nx + i];
      }
    });
  }
  if (axis != 1) throw DimensionError("concat: axis must be 0 or 1");
  return concat_cols({a, b});
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no operands");
  const std::size_t r = parts.front().value().rows();
  std::size_t total = 0;
  std::vector<std::size_t> offsets;
  for (const Var& p : parts) {
    if (p.tape != parts.front().tape) throw std::invalid_argument("concat_cols: operands on different tapes");
    if (p.value().rank() != 2 || p.value().rows() != r) throw DimensionError("concat_cols: row count mismatch");
    offsets.push_back(total);
    total += p.value().cols();
  }
  Array out({r, total});
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Array& v = parts[k].value();
    const std::size_t c = v.cols();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out(i, offsets[k] + j) = v(i, j);
  }
  return parts.front().tape->record("concat", std::move(out), parts, [parts, offsets, r, total](Tape& t, const Array& g) {
    for (std::size_t k = 0; k < parts.size(); ++k) {
      if (!t.requires_grad(parts[k].id)) continue;
      Array& acc = t.grad_accumulator(parts[k].id);
      const std::size_t c = acc.cols();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) acc(i, j) += g[i * total + offsets[k] + j];
    }
  });
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
  const Array& x = a.value();
  if (x.rank() != 2 || count == 0 || start + count > x.cols()) {
    throw DimensionError("slice_cols: range [" + std::to_string(start) + ", " + std::to_string(start + count) +
                         ") out of bounds for " + shape_string(x.shape()));
  }
  const std::size_t r = x.rows(), c = x.cols();
  Array out({r, count});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = x(i, start + j);
  return a.tape->record("slice_cols", std::move(out), {a}, [a, start, count, r, c](Tape& t, const Array& g) {
    Array& acc = t.grad_accumulator(a.id);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < count; ++j) acc[i * c + start + j] += g[i * count + j];
  });
}

Var tile_rows(Var a, std::size_t reps) {
  const Array& x = a.value();
  if (reps == 0) throw DimensionError("tile_rows: reps must be positive");
  const std::size_t r = x.rows(), c = x.cols();
  Array out({reps * r, c});
  for (std::size_t k = 0; k < reps; ++k) std::copy(x.data(), x.data() + x.size(), out.data() + k * x.size());
  return a.tape->record("tile_rows", std::move(out), {a}, [a, reps](Tape& t, const Array& g) {
    Array& acc = t.grad_accumulator(a.id);
    const std::size_t n = acc.size();
    for (std::size_t k = 0; k < reps; ++k)
      for (std::size_t i = 0; i < n; ++i) acc[i] += g[k * n + i];
  });
}

Var block_matmul(Var a, Var b, std::size_t blocks) {
  check_same_tape(a, b);
  const Array& x = a.value();
  const Array& y = b.value();
  const std::size_t r = block_rows(x, blocks, "block_matmul");
  const std::size_t k = x.cols();
  if (block_rows(y, blocks, "block_matmul") != k) {
    throw DimensionError("block_matmul: inner dims differ, " + shape_string(x.shape()) + " vs " +
                         shape_string(y.shape()) + " over " + std::to_string(blocks) + " blocks");
  }
  const std::size_t c = y.cols();
  Array out({blocks * r, c});
  for (std::size_t bi = 0; bi < blocks; ++bi) {
    const double* xb = x.data() + bi * r * k;
    const double* yb = y.data() + bi * k * c;
    double* ob = out.data() + bi * r * c;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t p = 0; p < k; ++p) {
        const double xv = xb[i * k + p];
        if (xv == 0.0) continue;
        for (std::size_t j = 0; j < c; ++j) ob[i * c + j] += xv * yb[p * c + j];
      }
  }
  return a.tape->record("block_matmul", std::move(out), {a, b}, [a, b, blocks, r, k, c](Tape& t, const Array& g) {
    const Array& x = t.value(a.id);
    const Array& y = t.value(b.id);
    const bool need_a = t.requires_grad(a.id), need_b = t.requires_grad(b.id);
    Array* ga = need_a ? &t.grad_accumulator(a.id) : nullptr;
    Array* gb = need_b ? &t.grad_accumulator(b.id) : nullptr;
    for (std::size_t bi = 0; bi < blocks; ++bi) {
      const double* xb = x.data() + bi * r * k;
      const double* yb = y.data() + bi * k * c;
      const double* gblk = g.data() + bi * r * c;
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          if (need_a) {
            double s = 0.0;
            for (std::size_t j = 0; j < c; ++j) s += gblk[i * c + j] * yb[p * c + j];
            (*ga)[bi * r * k + i * k + p] += s;
          }
          if (need_b) {
            const double xv = xb[i * k + p];
            double* gbrow = gb->data() + bi * k * c + p * c;
            for (std::size_t j = 0; j < c; ++j) gbrow[j] += xv * gblk[i * c + j];
          }
        }
    }
  });
}

Var block_matmul_nt(Var a, Var b, std::size_t blocks) {
  check_same_tape(a, b);
  const Array& x = a.value();
  const Array& y = b.value();
  const std::size_t r = block_rows(x, blocks, "block_matmul_nt");
  const std::size_t s = block_rows(y, blocks, "block_matmul_nt");
  const std::size_t k = x.cols();
  if (y.cols() != k) {
    throw DimensionError("block_matmul_nt: feature dims differ, " + shape_string(x.shape()) + " vs " +
                         shape_string(y.shape()));
  }
  Array out({blocks * r, s});
  for (std::size_t bi = 0; bi < blocks; ++bi) {
    const double* xb = x.data() + bi * r * k;
    const double* yb = y.data() + bi * s * k;
    double* ob = out.data() + bi * r * s;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < s; ++j) {
        double acc = 0.0;
        for (std::size_t p = 0; p < k; ++p) acc += xb[i * k + p] * yb[j * k + p];
        ob[i * s + j] = acc;
      }
  }
  return a.tape->record("block_matmul_nt", std::move(out), {a, b}, [a, b, blocks, r, s, k](Tape& t, const Array& g) {
    const Array& x = t.value(a.id);
    const Array& y = t.value(b.id);
    const bool need_a = t.requires_grad(a.id), need_b = t.requires_grad(b.id);
    Array* ga = need_a ? &t.grad_accumulator(a.id) : nullptr;
    Array* gb = need_b ? &t.grad_accumulator(b.id) : nullptr;
    for (std::size_t bi = 0; bi < blocks; ++bi) {
      const double* xb = x.data() + bi * r * k;
      const double* yb = y.data() + bi * s * k;
      const double* gblk = g.data() + bi * r * s;
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < s; ++j) {
          const double gv = gblk[i * s + j];
          if (gv == 0.0) continue;
          if (need_a) {
            double* garow = ga->data() + bi * r * k + i * k;
            for (std::size_t p = 0; p < k; ++p) garow[p] += gv * yb[j * k + p];
          }
          if (need_b) {
            double* gbrow = gb->data() + bi * s * k + j * k;
            for (std::size_t p = 0; p < k; ++p) gbrow[p] += gv * xb[i * k + p];
          }
        }
    }
  });
}

Var left_apply(const Array& m, Var x, std::size_t blocks) {
  const Array& xv = x.value();
  const std::size_t s = block_rows(xv, blocks, "left_apply");
  if (m.rank() != 2 || m.cols() != s) {
    throw DimensionError("left_apply: matrix " + shape_string(m.shape()) + " incompatible with blocks of " +
                         std::to_string(s) + " rows");
  }
  const std::size_t r = m.rows(), c = xv.cols();
  Array out({blocks * r, c});
  for (std::size_t bi = 0; bi < blocks; ++bi) {
    const double* xb = xv.data() + bi * s * c;
    double* ob = out.data() + bi * r * c;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t p = 0; p < s; ++p) {
        const double mv = m(i, p);
        if (mv == 0.0) continue;
        for (std::size_t j = 0; j < c; ++j) ob[i * c + j] += mv * xb[p * c + j];
      }
  }
  return x.tape->record("left_apply", std::move(out), {x}, [x, m, blocks, r, s, c](Tape& t, const Array& g) {
    Array& acc = t.grad_accumulator(x.id);
    for (std::size_t bi = 0; bi < blocks; ++bi) {
      const double* gblk = g.data() + bi * r * c;
      double* ab = acc.data() + bi * s * c;
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t p = 0; p < s; ++p) {
          const double mv = m(i, p);
          if (mv == 0.0) continue;
          for (std::size_t j = 0; j < c; ++j) ab[p * c + j] += mv * gblk[i * c + j];
        }
    }
  });
}

Var pair_sum(Var p, Var q, std::size_t blocks) {
  check_same_tape(p, q);
  const Array& pv = p.value();
  const Array& qv = q.value();
  if (pv.cols() != 1 || qv.cols() != 1) throw DimensionError("pair_sum: operands must be column vectors");
  const std::size_t r = block_rows(pv, blocks, "pair_sum");
  const std::size_t c = block_rows(qv, blocks, "pair_sum");
  Array out({blocks * r, c});
  for (std::size_t bi = 0; bi < blocks; ++bi)
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[(bi * r + i) * c + j] = pv[bi * r + i] + qv[bi * c + j];
  return p.tape->record("pair_sum", std::move(out), {p, q}, [p, q, blocks, r, c](Tape& t, const Array& g) {
    const bool need_p = t.requires_grad(p.id), need_q = t.requires_grad(q.id);
    Array* gp = need_p ? &t.grad_accumulator(p.id) : nullptr;
    Array* gq = need_q ? &t.grad_accumulator(q.id) : nullptr;
    for (std::size_t bi = 0; bi < blocks; ++bi)
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) {
          const double gv = g[(bi * r + i) * c + j];
          if (need_p) (*gp)[bi * r + i] += gv;
          if (need_q) (*gq)[bi * c + j] += gv;
        }
  });
}

Var gather_rows(Var a, const std::vector<std::size_t>& index) {
  const Array& x = a.value();
  const std::size_t r = x.rows(), c = x.cols();
  if (index.empty()) throw DimensionError("gather_rows: empty index");
  Array out({index.size(), c});
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= r) throw DimensionError("gather_rows: index " + std::to_string(index[i]) + " out of range");
    std::copy(x.data() + index[i] * c, x.data() + (index[i] + 1) * c, out.data() + i * c);
  }
  return a.tape->record("gather_rows", std::move(out), {a}, [a, index, c](Tape& t, const Array& g) {
    Array& acc = t.grad_accumulator(a.id);
    for (std::size_t i = 0; i < index.size(); ++i)
      for (std::size_t j = 0; j < c; ++j) acc[index[i] * c + j] += g[i * c + j];
  });
}

Var scatter_add_rows(Var a, const std::vector<std::size_t>& index, std::size_t rows) {
  const Array& x = a.value();
  const std::size_t c = x.cols();
  if (index.size() != x.rows()) throw DimensionError("scatter_add_rows: index length must equal row count");
  Array out({rows, c});
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= rows) throw DimensionError("scatter_add_rows: index out of range");
    for (std::size_t j = 0; j < c; ++j) out[index[i] * c + j] += x[i * c + j];
  }
  return a.tape->record("scatter_add_rows", std::move(out), {a}, [a, index, c](Tape& t, const Array& g) {
    Array& acc = t.grad_accumulator(a.id);
    for (std::size_t i = 0; i < index.size(); ++i)
      for (std::size_t j = 0; j < c; ++j) acc[i * c + j] += g[index[i] * c + j];
  });
}

Var straight_through(Array hard, Var soft) {
  if (hard.shape() != soft.value().shape()) throw DimensionError("straight_through: shape mismatch");
  return soft.tape->record("straight_through", std::move(hard), {soft}, [soft](Tape& t, const Array& g) {
    Array& acc = t.grad_accumulator(soft.id);
    for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
  });
}

}  // namespace mkh
