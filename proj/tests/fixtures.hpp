#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "chronovec/checkpoint.hpp"
#include "chronovec/error.hpp"
#include "chronovec/vecalg.hpp"

namespace cvtest {

using namespace chronovec;

// Fresh directory under the system temp dir, removed with its contents.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("chronovec-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << bytes;
}

inline Shape random_shape(std::mt19937_64& rng, std::size_t max_elems) {
  std::uniform_int_distribution<int> rank_dist(0, 3);
  Shape shape;
  std::size_t n = 1;
  const int rank = rank_dist(rng);
  for (int d = 0; d < rank; ++d) {
    const auto cap = static_cast<int>(std::max<std::size_t>(1, max_elems / n));
    std::uniform_int_distribution<int> dim(0, std::min(cap, 8));
    shape.push_back(dim(rng));
    n *= std::max<std::int64_t>(1, shape.back());
  }
  return shape;
}

inline std::vector<float> random_values(std::mt19937_64& rng, std::size_t n, float scale = 1.0f) {
  std::normal_distribution<float> dist(0.0f, scale);
  std::vector<float> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

// Random F32 checkpoint with at most max_elems scalars in total.
inline Checkpoint random_checkpoint(std::mt19937_64& rng, std::size_t tensors, std::size_t max_elems = 64) {
  Checkpoint c;
  std::size_t budget = max_elems;
  for (std::size_t i = 0; i < tensors; ++i) {
    Shape shape = random_shape(rng, std::max<std::size_t>(1, budget / (tensors - i)));
    const auto n = element_count(shape);
    budget = budget > n ? budget - n : 0;
    c.insert("layer" + std::to_string(i) + ".w", Tensor::from_f32(shape, random_values(rng, n)));
  }
  return c;
}

// Same inventory as `like`, fresh values.
inline Checkpoint perturbed(std::mt19937_64& rng, const Checkpoint& like, float scale = 1.0f) {
  Checkpoint c;
  for (const auto& [name, t] : like.tensors) {
    c.insert(name, Tensor::from_f32(t.shape(), random_values(rng, t.numel(), scale)));
  }
  return c;
}

inline Checkpoint single(const std::string& name, Shape shape, std::vector<float> values) {
  Checkpoint c;
  c.insert(name, Tensor::from_f32(std::move(shape), std::move(values)));
  return c;
}

inline TimeVector vector_of(const Checkpoint& delta, const Checkpoint& base) {
  return TimeVector{delta, fingerprint(base), std::nullopt, {}};
}

inline double rel_err(double got, double want) {
  return std::abs(got - want) / std::max(1.0, std::abs(want));
}

}  // namespace cvtest
