#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "mkh/array.hpp"
#include "mkh/rng.hpp"
#include "mkh/tape.hpp"

namespace mkh {

/// Named trainable arrays in insertion order. The order is part of the
/// checkpoint layout and of the optimizer state.
class ParamStore {
 public:
  /// Throws std::invalid_argument on a duplicate name.
  Array& add(const std::string& name, Array value);

  bool contains(const std::string& name) const { return index_.contains(name); }
  std::size_t index_of(const std::string& name) const;
  const Array& get(const std::string& name) const { return values_[index_of(name)]; }
  Array& get(const std::string& name) { return values_[index_of(name)]; }

  std::size_t size() const noexcept { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  const Array& value(std::size_t i) const { return values_.at(i); }
  Array& value(std::size_t i) { return values_.at(i); }
  std::size_t element_count() const noexcept;

  bool operator==(const ParamStore& other) const { return names_ == other.names_ && values_ == other.values_; }

 private:
  std::vector<std::string> names_;
  std::vector<Array> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Every parameter of a store placed on one tape as a leaf.
class BoundParams {
 public:
  BoundParams(Tape& tape, const ParamStore& store);
  /// Uses caller-made vars, one per parameter in store order.
  BoundParams(const ParamStore& store, std::vector<Var> vars);

  Var operator[](const std::string& name) const { return vars_[store_->index_of(name)]; }
  Var at(std::size_t i) const { return vars_.at(i); }
  std::size_t size() const noexcept { return vars_.size(); }
  Tape& tape() const noexcept { return *tape_; }

 private:
  Tape* tape_;
  const ParamStore* store_;
  std::vector<Var> vars_;
};

/// Uniform on +-sqrt(6 / (fan_in + fan_out)).
Array glorot_uniform(const Shape& shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);
inline Array glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  return glorot_uniform({rows, cols}, rows, cols, rng);
}

}  // namespace mkh
