#pragma once

#include <cmath>
#include <string>

#include "toba/rng.hpp"
#include "toba/tensor.hpp"

namespace toba {

// Optimizer parameter groups. The engram group trains with its own
// learning-rate multiplier.
enum class ParamGroup { backbone, engram };

template <typename T>
struct Param {
  std::string name;
  ParamGroup group = ParamGroup::backbone;
  Matrix<T> value;
  Matrix<T> grad;

  Param() = default;
  Param(std::string n, ParamGroup g, std::size_t rows, std::size_t cols)
      : name(std::move(n)), group(g), value(rows, cols), grad(rows, cols) {}

  void zero_grad() { grad.fill(T{0}); }

  void init_normal(Rng& rng, double stddev) {
    for (std::size_t i = 0; i < value.size(); ++i)
      value[i] = static_cast<T>(rng.normal() * stddev);
  }
};

}  // namespace toba
