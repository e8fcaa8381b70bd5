#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace chronovec {

// Fixed-shape pairwise summation: identical inputs give identical sums
// regardless of thread count or call site.
double pairwise_sum(std::span<const double> values);

double dot_f64(std::span<const float> a, std::span<const float> b);
double sum_squares_f64(std::span<const float> a);

}  // namespace chronovec
