#include "chronovec/analysis.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

#include "chronovec/error.hpp"
#include "chronovec/numeric.hpp"

namespace chronovec {

void MisalignmentMatrix::validate() const {
  if (train_periods.empty() || eval_periods.empty()) throw Error("matrix has no rows or no columns");
  if (values.size() != rows() * cols()) {
    throw Error("matrix holds " + std::to_string(values.size()) + " values for a " + std::to_string(rows()) +
                "x" + std::to_string(cols()) + " grid");
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw Error("matrix contains a non-finite value");
  }
}

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

void write_matrix_csv(const MisalignmentMatrix& m, std::ostream& out) {
  m.validate();
  out << "train\\eval";
  for (const auto& p : m.eval_periods) out << ',' << format_period(p);
  out << '\n';
  for (std::size_t f = 0; f < m.rows(); ++f) {
    out << format_period(m.train_periods[f]);
    for (std::size_t e = 0; e < m.cols(); ++e) out << ',' << format_number(m.at(f, e));
    out << '\n';
  }
}

void write_matrix_csv(const MisalignmentMatrix& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_matrix_csv(m, out);
  if (!out) throw Error("I/O failure writing " + path.string());
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    cells.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return cells;
}

double parse_number(const std::string& cell, std::size_t lineno) {
  double v = 0.0;
  const char* end = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(cell.data(), end, v);
  if (ec != std::errc{} || ptr != end || cell.empty()) {
    throw Error("matrix CSV line " + std::to_string(lineno) + ": \"" + cell + "\" is not a number");
  }
  return v;
}

}  // namespace

MisalignmentMatrix read_matrix_csv(std::istream& in, bool higher_is_better, std::string metric_name) {
  MisalignmentMatrix m;
  m.higher_is_better = higher_is_better;
  m.metric_name = std::move(metric_name);
  std::string line;
  std::size_t lineno = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (header) {
      if (cells.front() != "train\\eval") throw Error("matrix CSV must start with \"train\\eval\"");
      for (std::size_t i = 1; i < cells.size(); ++i) m.eval_periods.push_back(parse_period(cells[i]));
      header = false;
      continue;
    }
    if (cells.size() != m.eval_periods.size() + 1) {
      throw Error("matrix CSV line " + std::to_string(lineno) + " has " + std::to_string(cells.size() - 1) +
                  " values, expected " + std::to_string(m.eval_periods.size()));
    }
    m.train_periods.push_back(parse_period(cells[0]));
    for (std::size_t i = 1; i < cells.size(); ++i) m.values.push_back(parse_number(cells[i], lineno));
  }
  if (header) throw Error("matrix CSV is empty");
  m.validate();
  return m;
}

MisalignmentMatrix read_matrix_csv(const std::filesystem::path& path, bool higher_is_better,
                                   std::string metric_name) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open matrix CSV " + path.string());
  return read_matrix_csv(in, higher_is_better, std::move(metric_name));
}

namespace {

std::vector<double> column_means(const MisalignmentMatrix& m) {
  std::vector<double> means(m.cols());
  std::vector<double> column(m.rows());
  for (std::size_t e = 0; e < m.cols(); ++e) {
    for (std::size_t f = 0; f < m.rows(); ++f) column[f] = m.at(f, e);
    means[e] = pairwise_sum(column) / static_cast<double>(m.rows());
  }
  return means;
}

struct Fit {
  double slope = 0.0;
  double r2 = 0.0;
};

Fit least_squares(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  const double mx = pairwise_sum(x) / n;
  const double my = pairwise_sum(y) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx == 0.0) throw Error("degenerate regression: fewer than two distinct misalignment offsets");
  Fit fit;
  fit.slope = sxy / sxx;
  // A constant response has zero explained variance by convention.
  fit.r2 = syy == 0.0 ? 0.0 : (sxy * sxy) / (sxx * syy);
  return fit;
}

}  // namespace

MisalignmentMatrix normalize_percent_from_mean(const MisalignmentMatrix& m) {
  m.validate();
  const auto means = column_means(m);
  MisalignmentMatrix out = m;
  out.metric_name += kPercentFromMeanSuffix;
  for (std::size_t e = 0; e < m.cols(); ++e) {
    if (means[e] == 0.0) {
      throw Error("column " + format_period(m.eval_periods[e]) + " has zero mean; percent change undefined");
    }
    for (std::size_t f = 0; f < m.rows(); ++f) {
      out.at(f, e) = 100.0 * (m.at(f, e) - means[e]) / std::abs(means[e]);
    }
  }
  return out;
}

CorrelationReport pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error("correlation samples differ in length");
  if (x.size() < 3) throw Error("correlation needs at least 3 paired samples");
  const double n = static_cast<double>(x.size());
  const double mx = pairwise_sum(x) / n;
  const double my = pairwise_sum(y) / n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw Error("correlation undefined: zero variance in a sample");

  CorrelationReport report;
  report.n = x.size();
  report.pearson_r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double dof = n - 2.0;
  const double one_minus_r2 = 1.0 - report.pearson_r * report.pearson_r;
  if (one_minus_r2 <= 0.0) {
    report.p_value = 0.0;
  } else {
    const double t = std::abs(report.pearson_r) * std::sqrt(dof / one_minus_r2);
    boost::math::students_t dist(dof);
    report.p_value = std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, t)), 0.0, 1.0);
  }
  return report;
}

CorrelationReport correlate_similarity_degradation(const MisalignmentMatrix& sims, const MisalignmentMatrix& m) {
  sims.validate();
  m.validate();
  if (sims.train_periods != m.train_periods || sims.eval_periods != m.eval_periods) {
    throw Error("similarity grid and performance grid are indexed by different periods");
  }
  return pearson(sims.values, m.values);
}

TdReport td_score(const MisalignmentMatrix& m, TdMode mode) {
  m.validate();
  TdReport report;
  const std::string_view suffix = kPercentFromMeanSuffix;
  report.normalized = m.metric_name.size() >= suffix.size() &&
                      m.metric_name.compare(m.metric_name.size() - suffix.size(), suffix.size(), suffix) == 0;

  auto offset = [&](std::size_t f, std::size_t e) {
    return static_cast<double>(m.train_periods[f].ordinal - m.eval_periods[e].ordinal);
  };
  if (mode == TdMode::Pooled) {
    std::vector<double> x, y;
    for (std::size_t f = 0; f < m.rows(); ++f) {
      for (std::size_t e = 0; e < m.cols(); ++e) {
        x.push_back(offset(f, e));
        y.push_back(m.at(f, e));
      }
    }
    const auto fit = least_squares(x, y);
    report.slope = fit.slope;
    report.r2 = fit.r2;
    return report;
  }

  std::vector<double> slopes, r2s;
  std::vector<double> x(m.rows()), y(m.rows());
  for (std::size_t e = 0; e < m.cols(); ++e) {
    for (std::size_t f = 0; f < m.rows(); ++f) {
      x[f] = offset(f, e);
      y[f] = m.at(f, e);
    }
    Fit fit;
    try {
      fit = least_squares(x, y);
    } catch (const Error&) {
      throw Error("degenerate column " + format_period(m.eval_periods[e]) +
                  ": needs at least two distinct train periods");
    }
    slopes.push_back(fit.slope);
    r2s.push_back(fit.r2);
  }
  report.slope = pairwise_sum(slopes) / static_cast<double>(slopes.size());
  report.r2 = pairwise_sum(r2s) / static_cast<double>(r2s.size());
  return report;
}

SeasonalityStats seasonality_stats(const MisalignmentMatrix& m) {
  m.validate();
  auto is_month = [](const TimePeriod& p) { return p.kind == PeriodKind::Month; };
  if (!std::all_of(m.train_periods.begin(), m.train_periods.end(), is_month) ||
      !std::all_of(m.eval_periods.begin(), m.eval_periods.end(), is_month)) {
    throw Error("seasonality statistics need month periods");
  }
  std::vector<double> aligned, stripe, other;
  for (std::size_t f = 0; f < m.rows(); ++f) {
    for (std::size_t e = 0; e < m.cols(); ++e) {
      const auto& pf = m.train_periods[f];
      const auto& pe = m.eval_periods[e];
      if (pf.ordinal == pe.ordinal) {
        aligned.push_back(m.at(f, e));
      } else if (pf.month_of_year() == pe.month_of_year()) {
        stripe.push_back(m.at(f, e));
      } else {
        other.push_back(m.at(f, e));
      }
    }
  }
  auto summarize = [](const std::vector<double>& v) {
    SeasonGroup g;
    g.count = v.size();
    if (!v.empty()) g.mean = pairwise_sum(v) / static_cast<double>(v.size());
    return g;
  };
  return {summarize(aligned), summarize(stripe), summarize(other)};
}

MisalignmentMatrix normalize_online_similarity(const MisalignmentMatrix& series) {
  series.validate();
  const auto means = column_means(series);
  MisalignmentMatrix out = series;
  for (std::size_t e = 0; e < series.cols(); ++e) {
    if (means[e] == 0.0) {
      throw Error("column " + format_period(series.eval_periods[e]) + " has zero mean similarity");
    }
    for (std::size_t f = 0; f < series.rows(); ++f) out.at(f, e) = series.at(f, e) / means[e];
  }
  return out;
}

MisalignmentMatrix similarity_matrix(const std::vector<TimeVector>& vectors, const GroupFilter* filter) {
  if (vectors.empty()) throw Error("similarity matrix needs at least one vector");
  MisalignmentMatrix m;
  m.metric_name = "cosine";
  m.higher_is_better = true;
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    m.train_periods.push_back(vectors[i].period.value_or(TimePeriod::index(static_cast<std::int64_t>(i))));
  }
  m.eval_periods = m.train_periods;
  m.values.assign(vectors.size() * vectors.size(), 0.0);
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    for (std::size_t j = i; j < vectors.size(); ++j) {
      const double c = cosine_similarity(vectors[i], vectors[j], filter);
      m.at(i, j) = c;
      m.at(j, i) = c;
    }
  }
  return m;
}

std::vector<std::array<double, 2>> project_2d(const std::vector<TimeVector>& vectors, const GroupFilter* filter) {
  const std::size_t n = vectors.size();
  if (n < 3) throw Error("projection needs at least 3 vectors");

  const auto& first = vectors.front().delta;
  std::vector<std::string> names;
  for (const auto& [name, _] : first.tensors) {
    if (!filter || filter->groups.contains(filter->rules.classify(name))) names.push_back(name);
  }
  if (names.empty()) throw Error("projection: no tensors selected");
  for (const auto& v : vectors) {
    for (const auto& name : names) {
      if (!v.delta.contains(name)) throw Error("projection: \"" + name + "\" missing from a vector");
      if (v.delta.at(name).shape() != first.at(name).shape()) {
        throw Error("projection: shape mismatch on \"" + name + "\"");
      }
    }
  }

  // Centered Gram matrix, accumulated tensor by tensor in name order.
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  std::vector<std::vector<float>> rows(n);
  for (const auto& name : names) {
    for (std::size_t i = 0; i < n; ++i) rows[i] = vectors[i].delta.at(name).to_f32();
    const std::size_t len = rows[0].size();
    std::vector<std::vector<double>> centered(n, std::vector<double>(len));
    for (std::size_t k = 0; k < len; ++k) {
      double mean = 0.0;
      for (std::size_t i = 0; i < n; ++i) mean += rows[i][k];
      mean /= static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) centered[i][k] = rows[i][k] - mean;
    }
    std::vector<double> products(len);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i; j < n; ++j) {
        for (std::size_t k = 0; k < len; ++k) products[k] = centered[i][k] * centered[j][k];
        const double s = pairwise_sum(products);
        gram(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) += s;
        if (i != j) gram(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) += s;
      }
    }
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
  if (solver.info() != Eigen::Success) throw Error("projection: eigendecomposition failed");
  const auto& eigenvalues = solver.eigenvalues();  // ascending
  const double top = eigenvalues(static_cast<Eigen::Index>(n) - 1);
  if (!(top > 0.0)) throw Error("projection: zero-variance data");

  std::vector<std::array<double, 2>> coords(n, {0.0, 0.0});
  for (int axis = 0; axis < 2; ++axis) {
    const auto col = static_cast<Eigen::Index>(n) - 1 - axis;
    const double lambda = eigenvalues(col);
    if (lambda <= top * 1e-12) continue;  // numerically rank-deficient axis
    const double sigma = std::sqrt(lambda);
    std::size_t argmax = 0;
    for (std::size_t i = 0; i < n; ++i) {
      coords[i][axis] = sigma * solver.eigenvectors()(static_cast<Eigen::Index>(i), col);
      if (std::abs(coords[i][axis]) > std::abs(coords[argmax][axis]) + 1e-12 * sigma) argmax = i;
    }
    if (coords[argmax][axis] < 0.0) {
      for (auto& c : coords) c[axis] = -c[axis];
    }
  }
  return coords;
}

}  // namespace chronovec
