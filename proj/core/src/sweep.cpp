#include "chronovec/sweep.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <charconv>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <ostream>
#include <thread>

#include "chronovec/error.hpp"
#include "chronovec/subprocess.hpp"

namespace chronovec {

void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, count));
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  auto worker = [&] {
    while (!failed.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
        failed.store(true);
      }
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::filesystem::path default_temp_dir() {
  if (const char* env = std::getenv("CHRONOVEC_TMPDIR"); env && *env) return env;
  return std::filesystem::temp_directory_path();
}

namespace {

// Owns one temporary checkpoint file; removes it on scope exit.
class TempCheckpoint {
 public:
  TempCheckpoint(const std::filesystem::path& dir, const Checkpoint& ckpt) {
    static std::atomic<unsigned long> counter{0};
    path_ = std::filesystem::absolute(dir) / ("chronovec-" + std::to_string(::getpid()) + "-" +
                                              std::to_string(counter.fetch_add(1)) + ".safetensors");
    try {
      write_checkpoint(ckpt, path_);
    } catch (...) {
      std::error_code ec;
      std::filesystem::remove(path_, ec);
      throw;
    }
  }
  TempCheckpoint(const TempCheckpoint&) = delete;
  TempCheckpoint& operator=(const TempCheckpoint&) = delete;
  ~TempCheckpoint() {
    std::error_code ec;
    std::filesystem::remove(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

std::string substitute(std::string arg, std::string_view placeholder, const std::string& value) {
  for (auto pos = arg.find(placeholder); pos != std::string::npos; pos = arg.find(placeholder, pos + value.size())) {
    arg.replace(pos, placeholder.size(), value);
  }
  return arg;
}

bool better(double candidate, double incumbent, bool higher_is_better) {
  return higher_is_better ? candidate > incumbent : candidate < incumbent;
}

std::string describe(const std::vector<double>& coefs) {
  std::string s;
  for (double c : coefs) {
    if (!s.empty()) s += ",";
    s += format_number(c);
  }
  return s;
}

}  // namespace

double parse_evaluator_output(std::string_view text) {
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v'; };
  while (!text.empty() && is_space(text.back())) text.remove_suffix(1);
  const auto nl = text.rfind('\n');
  std::string_view line = nl == std::string_view::npos ? text : text.substr(nl + 1);
  while (!line.empty() && is_space(line.front())) line.remove_prefix(1);
  while (!line.empty() && is_space(line.back())) line.remove_suffix(1);
  if (!line.empty() && line.front() == '+') line.remove_prefix(1);

  double v = 0.0;
  auto [ptr, ec] = std::from_chars(line.data(), line.data() + line.size(), v);
  if (line.empty() || ec != std::errc{} || ptr != line.data() + line.size() || !std::isfinite(v)) {
    throw Error("evaluator output \"" + std::string(line) + "\" is not a finite decimal");
  }
  return v;
}

SubprocessEvaluator::SubprocessEvaluator(EvaluatorSpec spec, std::filesystem::path temp_dir)
    : spec_(std::move(spec)), temp_dir_(temp_dir.empty() ? default_temp_dir() : std::move(temp_dir)) {
  if (spec_.command.empty()) throw Error("evaluator command is empty");
  bool has_placeholder = false;
  for (const auto& a : spec_.command) has_placeholder |= a.find("{checkpoint}") != std::string::npos;
  if (!has_placeholder) throw Error("evaluator command lacks the {checkpoint} placeholder");
}

double SubprocessEvaluator::score(const Checkpoint& model, std::string_view eval_arg) const {
  TempCheckpoint temp(temp_dir_, model);
  std::vector<std::string> argv;
  for (const auto& a : spec_.command) {
    argv.push_back(substitute(substitute(a, "{checkpoint}", temp.path().string()), "{eval}", std::string(eval_arg)));
  }
  const auto result = run_process(argv, spec_.timeout);
  if (result.timed_out) {
    throw Error("evaluator timed out after " + std::to_string(spec_.timeout.count()) + " ms");
  }
  if (result.exit_code != 0) {
    throw Error("evaluator exited with status " + std::to_string(result.exit_code));
  }
  return parse_evaluator_output(result.stdout_text);
}

std::size_t best_index(const std::vector<double>& scores, bool higher_is_better) {
  if (scores.empty()) throw Error("no scores to select from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (better(scores[i], scores[best], higher_is_better)) best = i;
  }
  return best;
}

void write_sweep_csv(const SweepResult& result, std::ostream& out) {
  out << "a1,a2,a3,score\n";
  for (const auto& row : result.rows) {
    for (std::size_t i = 0; i < 3; ++i) {
      if (i < row.coefficients.size()) out << format_number(row.coefficients[i]);
      out << ',';
    }
    out << format_number(row.score) << '\n';
  }
}

void write_sweep_csv(const SweepResult& result, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_sweep_csv(result, out);
  if (!out) throw Error("I/O failure writing " + path.string());
}

namespace {

SweepResult run_sweep(const std::vector<std::vector<double>>& coefs,
                      const std::function<Checkpoint(const std::vector<double>&)>& build,
                      const Evaluator& evaluator, const SweepOptions& options, const char* label) {
  SweepResult result;
  result.rows.resize(coefs.size());
  parallel_for(coefs.size(), options.workers, [&](std::size_t i) {
    try {
      result.rows[i] = {coefs[i], evaluator.score(build(coefs[i]))};
    } catch (const Error& e) {
      throw Error(std::string("evaluation failed at ") + label + "=" + describe(coefs[i]) + ": " + e.what());
    }
  });
  std::vector<double> scores;
  for (const auto& r : result.rows) scores.push_back(r.score);
  result.best = best_index(scores, evaluator.higher_is_better());
  return result;
}

}  // namespace

SweepResult sweep_interpolation(const TimeVector& vj, const TimeVector& vk, const Checkpoint& base,
                                const std::vector<double>& alphas, const Evaluator& evaluator,
                                const SweepOptions& options) {
  if (alphas.empty()) throw Error("interpolation sweep needs at least one alpha");
  std::vector<std::vector<double>> coefs;
  for (double a : alphas) {
    if (!(a >= 0.0 && a <= 1.0)) throw Error("sweep alpha " + format_number(a) + " outside [0, 1]");
    coefs.push_back({a});
  }
  return run_sweep(
      coefs, [&](const std::vector<double>& c) { return apply(base, interpolate(vj, vk, c[0])); }, evaluator,
      options, "alpha");
}

AlphaGrid AlphaGrid::standard() {
  AlphaGrid g;
  for (int i = 6; i <= 22; i += 2) g.a1.push_back(i / 10.0);
  for (int i = 1; i <= 6; ++i) {
    g.a2.push_back(i / 10.0);
    g.a3.push_back(i / 10.0);
  }
  return g;
}

Ablation parse_ablation(std::string_view name) {
  if (name == "full") return Ablation::Full;
  if (name == "task_addition") return Ablation::TaskAddition;
  if (name == "scaling_only") return Ablation::ScalingOnly;
  throw Error("unknown ablation \"" + std::string(name) + "\"");
}

std::string_view ablation_name(Ablation a) {
  switch (a) {
    case Ablation::Full: return "full";
    case Ablation::TaskAddition: return "task_addition";
    case Ablation::ScalingOnly: return "scaling_only";
  }
  return "?";
}

AlphaGrid restrict_grid(AlphaGrid grid, Ablation ablation) {
  if (ablation == Ablation::TaskAddition || ablation == Ablation::ScalingOnly) grid.a3 = {0.0};
  if (ablation == Ablation::ScalingOnly) grid.a2 = {0.0};
  return grid;
}

SweepResult sweep_analogy(const TimeVector& task_j, const TimeVector& lm_j, const TimeVector& lm_k,
                          const Checkpoint& base, const AlphaGrid& grid, const Evaluator& evaluator,
                          Ablation ablation, const SweepOptions& options) {
  if (grid.a1.empty() || grid.a2.empty() || grid.a3.empty()) throw Error("alpha grid lists must be non-empty");
  auto all_zero = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
  };
  if (ablation != Ablation::Full && !all_zero(grid.a3)) {
    throw Error(std::string(ablation_name(ablation)) + " ablation requires a3 = [0]");
  }
  if (ablation == Ablation::ScalingOnly && !all_zero(grid.a2)) {
    throw Error("scaling_only ablation requires a2 = [0]");
  }
  std::vector<std::vector<double>> coefs;
  for (double a1 : grid.a1) {
    for (double a2 : grid.a2) {
      for (double a3 : grid.a3) coefs.push_back({a1, a2, a3});
    }
  }
  return run_sweep(
      coefs,
      [&](const std::vector<double>& c) { return apply(base, analogy(task_j, lm_j, lm_k, c[0], c[1], c[2])); },
      evaluator, options, "(a1,a2,a3)");
}

GreedySoupResult greedy_soup(const std::vector<TimeVector>& candidates, const Checkpoint& base,
                             const Evaluator& evaluator, std::size_t max_passes, const SweepOptions& options) {
  if (candidates.empty()) throw Error("greedy soup needs at least one candidate");
  if (max_passes == 0) throw Error("max_passes must be positive");
  const bool higher = evaluator.higher_is_better();

  GreedySoupResult result;
  result.individual_scores.resize(candidates.size());
  parallel_for(candidates.size(), options.workers, [&](std::size_t i) {
    try {
      result.individual_scores[i] = evaluator.score(apply(base, candidates[i]));
    } catch (const Error& e) {
      throw Error("evaluation of candidate " + std::to_string(i) + " failed: " + e.what());
    }
  });

  const auto& scores = result.individual_scores;
  result.order.resize(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) result.order[i] = i;
  std::stable_sort(result.order.begin(), result.order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return better(scores[a], scores[b], higher);
    const auto& pa = candidates[a].period;
    const auto& pb = candidates[b].period;
    if (pa != pb) return pa < pb;
    return candidates[a].provenance < candidates[b].provenance;
  });

  auto soup_of = [&](const std::vector<std::size_t>& ingredients) {
    std::vector<const TimeVector*> refs;
    for (auto i : ingredients) refs.push_back(&candidates[i]);
    return uniform_soup(refs, base);
  };

  result.ingredients = {result.order.front()};
  result.score = scores[result.order.front()];
  for (std::size_t pass = 0; pass < max_passes; ++pass) {
    bool added = false;
    for (auto c : result.order) {
      auto trial = result.ingredients;
      trial.push_back(c);
      double s = 0.0;
      try {
        s = evaluator.score(soup_of(trial));
      } catch (const Error& e) {
        throw Error("evaluation of soup with candidate " + std::to_string(c) + " failed: " + e.what());
      }
      if (better(s, result.score, higher)) {
        result.ingredients = std::move(trial);
        result.score = s;
        added = true;
      }
    }
    if (!added) break;
  }
  result.soup = soup_of(result.ingredients);
  return result;
}

MisalignmentMatrix build_misalignment_matrix(const std::map<TimePeriod, Checkpoint>& models,
                                             const std::map<TimePeriod, std::string>& eval_sets,
                                             const Evaluator& evaluator, const SweepOptions& options,
                                             std::string metric_name) {
  if (models.empty() || eval_sets.empty()) throw Error("misalignment matrix needs models and eval sets");
  MisalignmentMatrix m;
  m.higher_is_better = evaluator.higher_is_better();
  m.metric_name = std::move(metric_name);
  std::vector<const Checkpoint*> model_refs;
  std::vector<const std::string*> eval_refs;
  for (const auto& [p, ckpt] : models) {
    m.train_periods.push_back(p);
    model_refs.push_back(&ckpt);
  }
  for (const auto& [p, arg] : eval_sets) {
    m.eval_periods.push_back(p);
    eval_refs.push_back(&arg);
  }
  m.values.resize(m.rows() * m.cols());
  parallel_for(m.values.size(), options.workers, [&](std::size_t cell) {
    const std::size_t f = cell / m.cols(), e = cell % m.cols();
    try {
      m.values[cell] = evaluator.score(*model_refs[f], *eval_refs[e]);
    } catch (const Error& ex) {
      throw Error("evaluation of train " + format_period(m.train_periods[f]) + " on eval " +
                  format_period(m.eval_periods[e]) + " failed: " + ex.what());
    }
  });
  return m;
}

}  // namespace chronovec
