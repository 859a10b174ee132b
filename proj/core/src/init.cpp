#include "mvgmn/init.hpp"

#include <cmath>

namespace mvgmn::init {

namespace {

double fan_in(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t i = 0; i + 1 < shape.size(); ++i) n *= shape[i];
  return static_cast<double>(n);
}

}  // namespace

Tensor uniform(Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

Tensor lecun_uniform(Shape shape, Rng& rng) {
  const double bound = std::sqrt(3.0 / fan_in(shape));
  return uniform(std::move(shape), bound, rng);
}

Tensor he_uniform(Shape shape, Rng& rng) {
  const double bound = std::sqrt(6.0 / fan_in(shape));
  return uniform(std::move(shape), bound, rng);
}

}  // namespace mvgmn::init
