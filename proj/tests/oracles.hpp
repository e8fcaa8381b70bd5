#pragma once

// Independent reference computations shared by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "chronovec/toylab/model.hpp"

namespace cvtest {

// Central finite differences of the double-precision toy loss against its
// analytic gradient on a 5-token corpus with V=4, d=2, h=3. Returns the
// largest relative error seen in each parameter block, keyed by tensor name.
inline std::map<std::string, double> gradient_check(std::uint64_t seed, double eps = 1e-3) {
  using namespace chronovec::toylab;
  const ToyDims dims{4, 2, 3};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 0.8);
  auto p = MlpParams<double>::zeros(dims);
  for (auto block : p.blocks()) {
    for (auto& x : block) x = n(rng);
  }
  const std::vector<std::uint16_t> tokens = {0, 2, 1, 3, 2};
  const auto counts = PairCounts::from_sequence(tokens, dims.vocab);

  auto analytic = MlpParams<double>::zeros(dims);
  loss_and_gradient(p, counts, &analytic);

  static const char* kBlockNames[] = {names::kEmbed, names::kB1, names::kW1, names::kBout, names::kWout};
  std::map<std::string, double> worst;
  auto blocks = p.blocks();
  auto grads = analytic.blocks();
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    double w = 0.0;
    for (std::size_t i = 0; i < blocks[b].size(); ++i) {
      const double saved = blocks[b][i];
      blocks[b][i] = saved + eps;
      const double up = loss_and_gradient<double>(p, counts, nullptr);
      blocks[b][i] = saved - eps;
      const double down = loss_and_gradient<double>(p, counts, nullptr);
      blocks[b][i] = saved;
      const double fd = (up - down) / (2.0 * eps);
      const double g = grads[b][i];
      const double denom = std::max({std::abs(fd), std::abs(g), 1e-6});
      w = std::max(w, std::abs(fd - g) / denom);
    }
    worst[kBlockNames[b]] = w;
  }
  return worst;
}

}  // namespace cvtest
