#pragma once

// Small models and random inputs shared by the unit and acceptance tests.

#include <cstddef>

#include "mvgmn/model.hpp"
#include "oracles.hpp"

namespace mvgmn::testing {

inline ModelConfig tiny_config(Aggregator aggregator = Aggregator::MvGmn) {
  ModelConfig c;
  c.views = 2;
  c.steps = 3;
  c.width = 6;
  c.patches = 3;
  c.rgb_dim = 5;
  c.skeleton_dim = 4;
  c.key_dim = 3;
  c.blocks = 4;
  c.aggregator = aggregator;
  c.knn_k = 2;
  c.classes = 3;
  c.state = 4;
  return c;
}

inline ModelInput random_input(const ModelConfig& c, Rng& rng) {
  ModelInput in{c.views, c.steps, {}};
  for (std::size_t i = 0; i < c.views * c.steps; ++i)
    in.frames.push_back({random_tensor({c.patches, c.rgb_dim}, rng), random_tensor({1, c.skeleton_dim}, rng)});
  return in;
}

}  // namespace mvgmn::testing
