#pragma once

#include <array>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "chronovec/period.hpp"
#include "chronovec/vecalg.hpp"

namespace chronovec {

// Score grid indexed by (train period, eval period), row-major.
struct MisalignmentMatrix {
  std::vector<TimePeriod> train_periods;
  std::vector<TimePeriod> eval_periods;
  std::vector<double> values;
  bool higher_is_better = true;
  std::string metric_name;

  std::size_t rows() const { return train_periods.size(); }
  std::size_t cols() const { return eval_periods.size(); }
  double at(std::size_t train, std::size_t eval) const { return values[train * cols() + eval]; }
  double& at(std::size_t train, std::size_t eval) { return values[train * cols() + eval]; }

  // Throws if the grid is not rows x cols or holds a non-finite value.
  void validate() const;
};

// CSV: header "train\eval,<eval labels...>", then "<train label>,<values...>".
void write_matrix_csv(const MisalignmentMatrix& m, std::ostream& out);
void write_matrix_csv(const MisalignmentMatrix& m, const std::filesystem::path& path);
MisalignmentMatrix read_matrix_csv(std::istream& in, bool higher_is_better = true, std::string metric_name = {});
MisalignmentMatrix read_matrix_csv(const std::filesystem::path& path, bool higher_is_better = true,
                                   std::string metric_name = {});

// Shortest representation that round-trips the double.
std::string format_number(double v);

inline constexpr const char* kPercentFromMeanSuffix = " %Δmean";

// 100 * (v - column mean) / |column mean|, per eval column.
MisalignmentMatrix normalize_percent_from_mean(const MisalignmentMatrix& m);

struct CorrelationReport {
  double pearson_r = 0.0;
  double p_value = 1.0;  // two-sided, t distribution with n - 2 dof
  std::size_t n = 0;
};

CorrelationReport pearson(std::span<const double> x, std::span<const double> y);

// Pairs every cell (diagonal included) of the similarity grid with the
// same cell of the performance grid.
CorrelationReport correlate_similarity_degradation(const MisalignmentMatrix& sims, const MisalignmentMatrix& m);

struct TdReport {
  double slope = 0.0;  // per unit of ordinal offset (train - eval)
  double r2 = 0.0;
  bool normalized = false;
};

enum class TdMode {
  PerEvalColumn,  // regress each eval column, average slope and r2
  Pooled,         // one regression over every cell
};

TdReport td_score(const MisalignmentMatrix& m, TdMode mode = TdMode::PerEvalColumn);

struct SeasonGroup {
  double mean = 0.0;  // 0 when count == 0
  std::size_t count = 0;
};

struct SeasonalityStats {
  SeasonGroup aligned;  // train == eval
  SeasonGroup stripe;   // train != eval, same month of year
  SeasonGroup other;
};

SeasonalityStats seasonality_stats(const MisalignmentMatrix& m);

// Divides each column (one per year vector) by its mean over all checkpoints.
MisalignmentMatrix normalize_online_similarity(const MisalignmentMatrix& series);

// Square grid of pairwise cosine similarities, labeled by each vector's
// period (index:i when unlabeled).
MisalignmentMatrix similarity_matrix(const std::vector<TimeVector>& vectors, const GroupFilter* filter = nullptr);

// PCA onto the top two principal axes of the centered, flattened deltas.
// Each axis is signed so that its largest-magnitude coordinate is positive.
std::vector<std::array<double, 2>> project_2d(const std::vector<TimeVector>& vectors,
                                              const GroupFilter* filter = nullptr);

}  // namespace chronovec
