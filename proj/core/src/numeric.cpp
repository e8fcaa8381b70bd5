#include "chronovec/numeric.hpp"

#include <algorithm>

#include "chronovec/error.hpp"

namespace chronovec {

namespace {

constexpr std::size_t kLeaf = 64;

template <class Term>
double pairwise(std::size_t begin, std::size_t end, const Term& term) {
  if (end - begin <= kLeaf) {
    double s = 0.0;
    for (std::size_t i = begin; i < end; ++i) s += term(i);
    return s;
  }
  const std::size_t mid = begin + (end - begin) / 2;
  return pairwise(begin, mid, term) + pairwise(mid, end, term);
}

}  // namespace

double pairwise_sum(std::span<const double> values) {
  return pairwise(0, values.size(), [&](std::size_t i) { return values[i]; });
}

double dot_f64(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw Error("dot product of mismatched lengths");
  return pairwise(0, a.size(), [&](std::size_t i) {
    return static_cast<double>(a[i]) * static_cast<double>(b[i]);
  });
}

double sum_squares_f64(std::span<const float> a) {
  return pairwise(0, a.size(), [&](std::size_t i) {
    const double v = a[i];
    return v * v;
  });
}

}  // namespace chronovec
