#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "lgnn/tensor.hpp"

namespace lgnn::testutil {

// Central finite differences against the tape gradients. `make_loss` must
// rebuild the scalar loss from the current leaf values on every call.
inline double max_grad_error(std::vector<Tensor>& leaves,
                             const std::function<Tensor()>& make_loss,
                             double step = 1e-5) {
  Tape::active().clear();
  for (auto& leaf : leaves) leaf.zero_grad();
  Tensor loss = make_loss();
  backward(loss);

  std::vector<std::vector<double>> analytic;
  for (auto& leaf : leaves) {
    if (leaf.has_grad())
      analytic.emplace_back(leaf.grad().begin(), leaf.grad().end());
    else
      analytic.emplace_back(static_cast<size_t>(leaf.size()), 0.0);
  }

  double worst = 0.0;
  NoGradGuard no_grad;
  for (size_t l = 0; l < leaves.size(); ++l) {
    auto values = leaves[l].data();
    for (size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double up = make_loss().item();
      values[i] = saved - step;
      const double down = make_loss().item();
      values[i] = saved;
      const double fd = (up - down) / (2.0 * step);
      const double ad = analytic[l][i];
      const double err =
          std::fabs(ad - fd) / std::max({1.0, std::fabs(ad), std::fabs(fd)});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace lgnn::testutil
