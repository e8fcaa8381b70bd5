#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include "chronovec/period.hpp"

namespace chronovec::toylab {

using TokenSeq = std::vector<std::uint16_t>;

enum class Split { Train, Validation, Test };

// Synthetic temporal corpus. For period t (ordinal offset from the earliest
// period in `periods`) next-token logits are
//   base[prev][next] + drift_rate * t * drift[prev][next]
//   + season_strength * sin(2 pi t / season_period + phase[prev][next])
//   + task_strength * task[prev][next]
// with base/drift/phase/task tables fixed by `seed` (task also by task_id).
// base is Gaussian noise plus a shared Zipf-Mandelbrot prior over next tokens.
struct ToyCorpusSpec {
  int vocab_size = 64;
  std::size_t tokens_per_period = 50'000;
  std::vector<TimePeriod> periods;
  double drift_rate = 0.0;
  double season_strength = 0.0;
  int season_period = 12;
  std::uint64_t seed = 0;
  double task_strength = 0.0;
  std::uint64_t task_id = 0;
};

// Row-major vocab x vocab next-token probabilities for one period.
std::vector<double> transition_matrix(const ToyCorpusSpec& spec, const TimePeriod& period);

std::map<TimePeriod, TokenSeq> generate_corpus(const ToyCorpusSpec& spec, Split split = Split::Train);

std::vector<double> unigram_distribution(std::span<const std::uint16_t> tokens, int vocab_size);
double total_variation(std::span<const double> p, std::span<const double> q);

// File: "TOYC", u16 version, u16 vocab_size, u64 token count, then u16 tokens
// (all little-endian).
struct CorpusFile {
  int vocab_size = 0;
  TokenSeq tokens;
};
void write_corpus_file(const std::filesystem::path& path, std::span<const std::uint16_t> tokens, int vocab_size);
CorpusFile read_corpus_file(const std::filesystem::path& path);

}  // namespace chronovec::toylab
