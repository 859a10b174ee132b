#pragma once

#include "mvgmn/random.hpp"
#include "mvgmn/tensor.hpp"

namespace mvgmn::init {

Tensor uniform(Shape shape, double bound, Rng& rng);
/// U(-sqrt(3/fan_in), sqrt(3/fan_in)): unit gain for linear maps. fan_in is
/// the product of all but the last dimension.
Tensor lecun_uniform(Shape shape, Rng& rng);
/// U(-sqrt(6/fan_in), sqrt(6/fan_in)): for maps feeding a ReLU.
Tensor he_uniform(Shape shape, Rng& rng);

}  // namespace mvgmn::init
