#pragma once

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "toba/param.hpp"
#include "toba/rng.hpp"
#include "toba/tensor.hpp"

namespace toba::testing {

template <typename T>
Matrix<T> random_matrix(Rng& rng, std::size_t r, std::size_t c,
                        double scale = 1.0) {
  Matrix<T> m(r, c);
  for (std::size_t i = 0; i < m.size(); ++i)
    m[i] = static_cast<T>(rng.normal() * scale);
  return m;
}

// Central difference of f with respect to *x.
inline double central_difference(const std::function<double()>& f, double* x,
                                 double h = 1e-5) {
  const double saved = *x;
  *x = saved + h;
  const double fp = f();
  *x = saved - h;
  const double fm = f();
  *x = saved;
  return (fp - fm) / (2.0 * h);
}

inline bool close_rel(double analytic, double numeric, double rtol,
                      double atol = 1e-9) {
  return std::abs(analytic - numeric) <=
         rtol * std::max(std::abs(analytic), std::abs(numeric)) + atol;
}

inline std::string temp_dir(const std::string& tag) {
  std::string base = "/tmp/toba_test_" + tag + "_" +
                     std::to_string(std::hash<std::string>{}(tag) ^
                                    static_cast<std::size_t>(::getpid()));
  std::filesystem::remove_all(base);
  std::filesystem::create_directories(base);
  return base;
}

}  // namespace toba::testing
