#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "chronovec/analysis.hpp"
#include "chronovec/checkpoint.hpp"
#include "chronovec/vecalg.hpp"

namespace chronovec {

// Scores a candidate model. Implementations must be safe to call from
// several threads at once.
class Evaluator {
 public:
  virtual ~Evaluator() = default;
  // eval_arg selects the evaluation set where the protocol needs one
  // (misalignment matrices); empty otherwise.
  virtual double score(const Checkpoint& model, std::string_view eval_arg = {}) const = 0;
  virtual bool higher_is_better() const = 0;
};

// External command contract: "{checkpoint}" in the argument template is
// replaced by an absolute path to a container file and "{eval}" by the
// evaluation-set argument; the last non-empty stdout line must be one finite
// decimal and the exit status zero.
struct EvaluatorSpec {
  std::vector<std::string> command;
  bool higher_is_better = true;
  std::chrono::milliseconds timeout{std::chrono::seconds(600)};
};

class SubprocessEvaluator final : public Evaluator {
 public:
  explicit SubprocessEvaluator(EvaluatorSpec spec, std::filesystem::path temp_dir = {});

  double score(const Checkpoint& model, std::string_view eval_arg = {}) const override;
  bool higher_is_better() const override { return spec_.higher_is_better; }

  const std::filesystem::path& temp_dir() const { return temp_dir_; }

 private:
  EvaluatorSpec spec_;
  std::filesystem::path temp_dir_;
};

// Wraps a callable; used by the toy experiments and by tests.
class FunctionEvaluator final : public Evaluator {
 public:
  using Fn = std::function<double(const Checkpoint&, std::string_view)>;
  FunctionEvaluator(Fn fn, bool higher_is_better) : fn_(std::move(fn)), higher_(higher_is_better) {}

  double score(const Checkpoint& model, std::string_view eval_arg = {}) const override {
    return fn_(model, eval_arg);
  }
  bool higher_is_better() const override { return higher_; }

 private:
  Fn fn_;
  bool higher_;
};

// Parses the last non-empty, whitespace-trimmed line as a finite decimal.
double parse_evaluator_output(std::string_view stdout_text);

// Temp directory for sweep checkpoints: $CHRONOVEC_TMPDIR or the system default.
std::filesystem::path default_temp_dir();

struct SweepRow {
  std::vector<double> coefficients;  // interpolation: {alpha}; analogy: {a1, a2, a3}
  double score = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::size_t best = 0;  // first-encountered optimum
};

// First-encountered argmax (or argmin) over scores.
std::size_t best_index(const std::vector<double>& scores, bool higher_is_better);

// CSV "a1,a2,a3,score"; single-coefficient rows leave a2/a3 blank.
void write_sweep_csv(const SweepResult& result, std::ostream& out);
void write_sweep_csv(const SweepResult& result, const std::filesystem::path& path);

struct SweepOptions {
  std::size_t workers = 1;
};

SweepResult sweep_interpolation(const TimeVector& vj, const TimeVector& vk, const Checkpoint& base,
                                const std::vector<double>& alphas, const Evaluator& evaluator,
                                const SweepOptions& options = {});

struct AlphaGrid {
  std::vector<double> a1, a2, a3;

  // a1 in {0.6, 0.8, ..., 2.2}; a2, a3 in {0.1, ..., 0.6}: 324 combinations.
  static AlphaGrid standard();
  std::size_t size() const { return a1.size() * a2.size() * a3.size(); }
};

enum class Ablation { Full, TaskAddition, ScalingOnly };
Ablation parse_ablation(std::string_view name);
std::string_view ablation_name(Ablation a);

// Collapses the grid dimensions an ablation pins to zero.
AlphaGrid restrict_grid(AlphaGrid grid, Ablation ablation);

// Rows enumerate the grid with a1 outermost, then a2, then a3.
SweepResult sweep_analogy(const TimeVector& task_j, const TimeVector& lm_j, const TimeVector& lm_k,
                          const Checkpoint& base, const AlphaGrid& grid, const Evaluator& evaluator,
                          Ablation ablation = Ablation::Full, const SweepOptions& options = {});

struct GreedySoupResult {
  Checkpoint soup;
  std::vector<std::size_t> ingredients;  // candidate indices, repeats allowed, in acceptance order
  std::vector<std::size_t> order;        // candidates sorted by decreasing individual score
  std::vector<double> individual_scores; // indexed like the candidate list
  double score = 0.0;                    // evaluator score of the final soup
};

// Starts from the best single candidate, then sweeps the score-sorted list up
// to max_passes times, keeping an addition only when the score strictly
// improves. Stops after a pass with no additions.
GreedySoupResult greedy_soup(const std::vector<TimeVector>& candidates, const Checkpoint& base,
                             const Evaluator& evaluator, std::size_t max_passes = 3,
                             const SweepOptions& options = {});

// One evaluator call per (train, eval) pair, assembled in map (period) order.
MisalignmentMatrix build_misalignment_matrix(const std::map<TimePeriod, Checkpoint>& models,
                                             const std::map<TimePeriod, std::string>& eval_sets,
                                             const Evaluator& evaluator, const SweepOptions& options = {},
                                             std::string metric_name = "score");

// Runs fn(i) for i in [0, count) on up to `workers` threads. Exceptions are
// rethrown on the caller's thread, lowest index first.
void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace chronovec
