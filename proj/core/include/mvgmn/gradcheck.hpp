#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "mvgmn/autograd.hpp"

namespace mvgmn {

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

/// Builds the scalar loss on the given tape.
using LossFn = std::function<Var(Tape&)>;

/// Compares tape gradients with central differences (f(θ+h) - f(θ-h)) / 2h
/// for every scalar of every parameter. The relative error of one entry is
/// |a - n| / max(|a|, |n|, floor); the floor keeps entries whose true
/// gradient is ~0 from dividing round-off by round-off.
GradCheckReport check_gradients(const LossFn& loss_fn, ParamStore& params, double h = 1e-5,
                                double floor = 1e-6);

}  // namespace mvgmn
