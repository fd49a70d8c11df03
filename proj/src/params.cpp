#include "mkh/params.hpp"

#include <cmath>
#include <stdexcept>

namespace mkh {

Array& ParamStore::add(const std::string& name, Array value) {
  if (index_.contains(name)) throw std::invalid_argument("duplicate parameter name " + name);
  index_.emplace(name, values_.size());
  names_.push_back(name);
  values_.push_back(std::move(value));
  return values_.back();
}

std::size_t ParamStore::index_of(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter " + name);
  return it->second;
}

std::size_t ParamStore::element_count() const noexcept {
  std::size_t total = 0;
  for (const auto& v : values_) total += v.size();
  return total;
}

BoundParams::BoundParams(Tape& tape, const ParamStore& store) : tape_(&tape), store_(&store) {
  vars_.reserve(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) vars_.push_back(tape.leaf(store.value(i)));
}

BoundParams::BoundParams(const ParamStore& store, std::vector<Var> vars)
    : tape_(vars.empty() ? nullptr : vars.front().tape), store_(&store), vars_(std::move(vars)) {
  if (vars_.size() != store.size()) throw std::invalid_argument("BoundParams: one var per parameter required");
}

Array glorot_uniform(const Shape& shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Array out(shape);
  for (double& v : out.values()) v = (2.0 * rng.uniform() - 1.0) * limit;
  return out;
}

}  // namespace mkh
