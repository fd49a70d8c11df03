#include "mkh/projection.hpp"

#include <string>

namespace mkh {

Var glu_project(Var x, Var w0, Var w1, Var w2) {
  if (x.value().cols() != w0.value().rows()) {
    throw DimensionError("glu_project: window length " + std::to_string(x.value().cols()) +
                         " does not match projection input " + std::to_string(w0.value().rows()));
  }
  return matmul(mul(sigmoid(matmul(x, w0)), matmul(x, w1)), w2);
}

}  // namespace mkh
