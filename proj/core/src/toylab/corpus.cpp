#include "chronovec/toylab/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>

#include "chronovec/error.hpp"
#include "chronovec/toylab/rng.hpp"

namespace chronovec::toylab {

namespace {

constexpr double kBaseScale = 1.0;
// Zipf-Mandelbrot prior on the next token, shared by every row of the base table.
constexpr double kZipfOffset = 2.0;
constexpr double kZipfExponent = 2.0;
constexpr std::uint16_t kCorpusVersion = 1;

std::vector<double> normal_table(std::uint64_t seed, std::uint64_t stream, std::size_t n, double scale) {
  CounterRng rng(seed, stream);
  std::vector<double> out(n);
  for (auto& v : out) v = scale * rng.normal();
  return out;
}

void validate(const ToyCorpusSpec& spec) {
  if (spec.vocab_size <= 1 || spec.vocab_size > 65536) throw Error("vocab_size must be in [2, 65536]");
  if (spec.drift_rate < 0.0) throw Error("drift_rate must be non-negative");
  if (spec.season_strength < 0.0) throw Error("season_strength must be non-negative");
  if (spec.season_period <= 0) throw Error("season_period must be positive");
  if (spec.periods.empty()) throw Error("corpus spec has no periods");
}

struct Tables {
  std::vector<double> base, drift, phase, task;
};

Tables make_tables(const ToyCorpusSpec& spec) {
  const auto n = static_cast<std::size_t>(spec.vocab_size) * static_cast<std::size_t>(spec.vocab_size);
  Tables t;
  t.base = normal_table(spec.seed, stream_key("base"), n, kBaseScale);
  const auto v = static_cast<std::size_t>(spec.vocab_size);
  for (std::size_t k = 0; k < n; ++k) t.base[k] -= kZipfExponent * std::log(kZipfOffset + static_cast<double>(k % v));
  t.drift = normal_table(spec.seed, stream_key("drift"), n, 1.0);
  CounterRng phase_rng(spec.seed, stream_key("phase"));
  t.phase.resize(n);
  for (auto& v : t.phase) v = 2.0 * std::numbers::pi * phase_rng.uniform();
  if (spec.task_strength != 0.0) t.task = normal_table(spec.seed, stream_key("task", spec.task_id), n, 1.0);
  return t;
}

std::vector<double> probabilities(const ToyCorpusSpec& spec, const Tables& tables, const TimePeriod& period) {
  const auto origin = std::min_element(spec.periods.begin(), spec.periods.end())->ordinal;
  const double t = static_cast<double>(period.ordinal - origin);
  const auto v = static_cast<std::size_t>(spec.vocab_size);
  std::vector<double> probs(v * v);
  for (std::size_t p = 0; p < v; ++p) {
    double* row = probs.data() + p * v;
    double max_logit = -INFINITY;
    for (std::size_t n = 0; n < v; ++n) {
      const std::size_t k = p * v + n;
      double logit = tables.base[k] + spec.drift_rate * t * tables.drift[k] +
                     spec.season_strength * std::sin(2.0 * std::numbers::pi * t / spec.season_period + tables.phase[k]);
      if (!tables.task.empty()) logit += spec.task_strength * tables.task[k];
      row[n] = logit;
      max_logit = std::max(max_logit, logit);
    }
    double z = 0.0;
    for (std::size_t n = 0; n < v; ++n) {
      row[n] = std::exp(row[n] - max_logit);
      z += row[n];
    }
    for (std::size_t n = 0; n < v; ++n) row[n] /= z;
  }
  return probs;
}

}  // namespace

std::vector<double> transition_matrix(const ToyCorpusSpec& spec, const TimePeriod& period) {
  validate(spec);
  return probabilities(spec, make_tables(spec), period);
}

std::map<TimePeriod, TokenSeq> generate_corpus(const ToyCorpusSpec& spec, Split split) {
  validate(spec);
  const Tables tables = make_tables(spec);
  const auto v = static_cast<std::size_t>(spec.vocab_size);
  std::map<TimePeriod, TokenSeq> out;
  for (const auto& period : spec.periods) {
    if (out.count(period)) throw Error("duplicate period " + format_period(period) + " in corpus spec");
    const auto probs = probabilities(spec, tables, period);
    std::vector<double> cdf(probs.size());
    for (std::size_t p = 0; p < v; ++p) {
      double acc = 0.0;
      for (std::size_t n = 0; n < v; ++n) {
        acc += probs[p * v + n];
        cdf[p * v + n] = acc;
      }
    }
    CounterRng rng(spec.seed, stream_key("sample", static_cast<std::uint64_t>(split),
                                         static_cast<std::uint64_t>(period.ordinal)));
    TokenSeq tokens(spec.tokens_per_period);
    if (!tokens.empty()) tokens[0] = static_cast<std::uint16_t>(rng.below(v));
    for (std::size_t i = 1; i < tokens.size(); ++i) {
      const double* row = cdf.data() + tokens[i - 1] * v;
      const double u = rng.uniform() * row[v - 1];
      const auto next = static_cast<std::size_t>(std::upper_bound(row, row + v, u) - row);
      tokens[i] = static_cast<std::uint16_t>(std::min(next, v - 1));
    }
    out.emplace(period, std::move(tokens));
  }
  return out;
}

std::vector<double> unigram_distribution(std::span<const std::uint16_t> tokens, int vocab_size) {
  std::vector<double> dist(static_cast<std::size_t>(vocab_size), 0.0);
  for (auto t : tokens) {
    if (t >= vocab_size) throw Error("token " + std::to_string(t) + " outside vocabulary");
    dist[t] += 1.0;
  }
  if (!tokens.empty()) {
    for (auto& d : dist) d /= static_cast<double>(tokens.size());
  }
  return dist;
}

double total_variation(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw Error("total variation of distributions with different support");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

void write_corpus_file(const std::filesystem::path& path, std::span<const std::uint16_t> tokens, int vocab_size) {
  if (vocab_size <= 0 || vocab_size > 65536) throw Error("vocab_size must be in [1, 65536]");
  for (auto t : tokens) {
    if (t >= vocab_size) throw Error("token " + std::to_string(t) + " outside vocabulary of " + std::to_string(vocab_size));
  }
  std::string bytes = "TOYC";
  auto put = [&](auto value) {
    // little-endian host asserted in checkpoint.cpp
    bytes.append(reinterpret_cast<const char*>(&value), sizeof value);
  };
  put(kCorpusVersion);
  put(static_cast<std::uint16_t>(vocab_size));  // 65536 wraps to 0
  put(static_cast<std::uint64_t>(tokens.size()));
  bytes.append(reinterpret_cast<const char*>(tokens.data()), tokens.size_bytes());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("I/O failure writing " + path.string());
}

CorpusFile read_corpus_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open corpus " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 16 || bytes.compare(0, 4, "TOYC") != 0) {
    throw Error(path.string() + ": not a TOYC corpus file");
  }
  std::uint16_t version = 0, vocab = 0;
  std::uint64_t count = 0;
  std::memcpy(&version, bytes.data() + 4, 2);
  std::memcpy(&vocab, bytes.data() + 6, 2);
  std::memcpy(&count, bytes.data() + 8, 8);
  if (version != kCorpusVersion) throw Error(path.string() + ": unsupported corpus version " + std::to_string(version));
  if (count > (bytes.size() - 16) / 2 || bytes.size() - 16 != count * 2) {
    throw Error(path.string() + ": token count " + std::to_string(count) + " does not match file size");
  }
  CorpusFile file;
  file.vocab_size = vocab == 0 ? 65536 : vocab;
  file.tokens.resize(count);
  if (count) std::memcpy(file.tokens.data(), bytes.data() + 16, count * 2);
  for (auto t : file.tokens) {
    if (t >= file.vocab_size) throw Error(path.string() + ": token " + std::to_string(t) + " outside vocabulary");
  }
  return file;
}

}  // namespace chronovec::toylab
