#include "chronovec/toylab/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "chronovec/analysis.hpp"
#include "chronovec/error.hpp"
#include "chronovec/numeric.hpp"
#include "chronovec/sweep.hpp"
#include "chronovec/toylab/corpus.hpp"
#include "chronovec/toylab/model.hpp"
#include "chronovec/toylab/rng.hpp"
#include "chronovec/vecalg.hpp"

namespace chronovec::toylab {

double ExperimentReport::metric(std::string_view key) const {
  for (const auto& [k, v] : metrics) {
    if (k == key) return v;
  }
  throw Error("experiment " + name + " has no metric \"" + std::string(key) + "\"");
}

namespace {

// Pretraining runs from random init; finetunes use the TrainSpec defaults.
constexpr double kPretrainLearningRate = 0.5;
constexpr int kPretrainEpochs = 5;

std::vector<TimePeriod> years(int first, int count) {
  std::vector<TimePeriod> out;
  for (int i = 0; i < count; ++i) out.push_back(TimePeriod::year(first + i));
  return out;
}

std::vector<TimePeriod> months(int first_year, int count) {
  std::vector<TimePeriod> out;
  for (int i = 0; i < count; ++i) out.push_back(TimePeriod::month(first_year + i / 12, i % 12 + 1));
  return out;
}

// Collects files and metrics for one experiment run.
class ReportWriter {
 public:
  ReportWriter(std::string name, std::filesystem::path dir) : dir_(std::move(dir)) {
    report_.name = std::move(name);
    std::filesystem::create_directories(dir_);
  }

  void file(const std::string& filename, const std::function<void(std::ostream&)>& body) {
    std::ofstream out(dir_ / filename, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + (dir_ / filename).string() + " for writing");
    body(out);
    if (!out) throw Error("I/O failure writing " + (dir_ / filename).string());
    report_.files.emplace_back(filename);
  }

  void matrix(const std::string& filename, const MisalignmentMatrix& m) {
    file(filename, [&](std::ostream& out) { write_matrix_csv(m, out); });
  }

  void metric(std::string key, double value) { report_.metrics.emplace_back(std::move(key), value); }

  ExperimentReport finish() {
    file("summary.txt", [&](std::ostream& out) {
      out << "experiment=" << report_.name << '\n';
      for (const auto& [k, v] : report_.metrics) out << k << '=' << format_number(v) << '\n';
    });
    return std::move(report_);
  }

 private:
  std::filesystem::path dir_;
  ExperimentReport report_;
};

double perplexity(const Checkpoint& model, const PairCounts& counts) {
  return evaluate(from_checkpoint(model), counts).perplexity;
}

TokenSeq concat(std::initializer_list<std::pair<const TokenSeq*, std::size_t>> parts) {
  TokenSeq out;
  for (const auto& [seq, n] : parts) out.insert(out.end(), seq->begin(), seq->begin() + static_cast<std::ptrdiff_t>(n));
  return out;
}

// Shared state of a toy run: corpora, pretrained base, per-period finetunes
// and their time vectors.
struct Lab {
  ToyCorpusSpec spec;
  ExperimentOptions options;
  std::map<TimePeriod, TokenSeq> train, validation, test;
  std::map<TimePeriod, PairCounts> validation_counts, test_counts;
  Checkpoint pretrained;
  std::vector<Checkpoint> finetuned;  // parallel to spec.periods
  std::vector<TimeVector> vectors;

  Lab(ToyCorpusSpec corpus_spec, const ExperimentOptions& opts, bool finetune_each = true)
      : spec(std::move(corpus_spec)), options(opts) {
    spec.seed = options.seed;
    train = generate_corpus(spec, Split::Train);
    validation = generate_corpus(spec, Split::Validation);
    test = generate_corpus(spec, Split::Test);
    for (const auto& [p, seq] : validation) validation_counts.emplace(p, PairCounts::from_sequence(seq, spec.vocab_size));
    for (const auto& [p, seq] : test) test_counts.emplace(p, PairCounts::from_sequence(seq, spec.vocab_size));

    // Pretraining pool: the first two periods at half weight each.
    const auto& first = train.at(spec.periods[0]);
    const auto& second = train.at(spec.periods[1]);
    TrainSpec pre;
    pre.learning_rate = kPretrainLearningRate;
    pre.epochs = kPretrainEpochs;
    pre.seed = stream_key("pretrain", options.seed);
    pre.dims.vocab = spec.vocab_size;
    pretrained = toylab::train(concat({{&first, first.size() / 2}, {&second, second.size() / 2}}), pre);

    if (finetune_each) {
      finetuned.resize(spec.periods.size());
      parallel_for(spec.periods.size(), options.workers,
                   [&](std::size_t i) { finetuned[i] = finetune(train.at(spec.periods[i]), "finetune", spec.periods[i].ordinal); });
      for (std::size_t i = 0; i < spec.periods.size(); ++i) {
        vectors.push_back(diff(finetuned[i], pretrained, spec.periods[i]));
        vectors.back().provenance = "toy finetune " + format_period(spec.periods[i]);
      }
    }
  }

  Checkpoint finetune(const TokenSeq& tokens, std::string_view purpose, std::int64_t key,
                      const Checkpoint* from = nullptr) const {
    TrainSpec ft;
    ft.init = InitMode::FromCheckpoint;
    ft.seed = stream_key(purpose, options.seed, static_cast<std::uint64_t>(key));
    return toylab::train(tokens, ft, from ? *from : pretrained);
  }

  // Test perplexity of every finetuned model on every period.
  MisalignmentMatrix misalignment() const {
    std::map<TimePeriod, Checkpoint> models;
    std::map<TimePeriod, std::string> eval_sets;
    for (std::size_t i = 0; i < spec.periods.size(); ++i) {
      models.emplace(spec.periods[i], finetuned[i]);
      eval_sets.emplace(spec.periods[i], format_period(spec.periods[i]));
    }
    FunctionEvaluator ppl(
        [&](const Checkpoint& m, std::string_view arg) { return perplexity(m, test_counts.at(parse_period(arg))); },
        false);
    return build_misalignment_matrix(models, eval_sets, ppl, {options.workers}, "perplexity");
  }
};

ExperimentReport manifold(const std::filesystem::path& dir, const ExperimentOptions& opt) {
  ToyCorpusSpec spec;
  spec.periods = years(2012, 8);
  spec.drift_rate = 0.15;
  Lab lab(spec, opt);
  ReportWriter w("manifold", dir);

  const auto sims = similarity_matrix(lab.vectors);
  w.matrix("similarity.csv", sims);

  // Pairwise similarity against -|dt| over distinct pairs.
  std::vector<double> cos, neg_distance;
  for (std::size_t a = 0; a < lab.vectors.size(); ++a) {
    for (std::size_t b = a + 1; b < lab.vectors.size(); ++b) {
      cos.push_back(sims.at(a, b));
      neg_distance.push_back(-std::abs(static_cast<double>(spec.periods[b].ordinal - spec.periods[a].ordinal)));
    }
  }
  const auto manifold_corr = pearson(cos, neg_distance);

  const auto raw = lab.misalignment();
  const auto normalized = normalize_percent_from_mean(raw);
  w.matrix("misalignment.csv", raw);
  w.matrix("misalignment_normalized.csv", normalized);
  const auto sim_deg = correlate_similarity_degradation(sims, normalized);

  const GroupFilter ff{ParamGroupRules::toy(), GroupSet::of({ParamGroup::FeedForward})};
  const auto coords = project_2d(lab.vectors, &ff);
  w.file("projection.csv", [&](std::ostream& out) {
    out << "period,x,y\n";
    for (std::size_t i = 0; i < coords.size(); ++i) {
      out << format_period(spec.periods[i]) << ',' << format_number(coords[i][0]) << ','
          << format_number(coords[i][1]) << '\n';
    }
  });

  const auto td_raw = td_score(raw);
  const auto td_norm = td_score(normalized);
  w.metric("manifold_r", manifold_corr.pearson_r);
  w.metric("manifold_p", manifold_corr.p_value);
  w.metric("similarity_degradation_r", sim_deg.pearson_r);
  w.metric("similarity_degradation_p", sim_deg.p_value);
  w.metric("td_slope_raw", td_raw.slope);
  w.metric("td_r2_raw", td_raw.r2);
  w.metric("td_slope_normalized", td_norm.slope);
  w.metric("td_r2_normalized", td_norm.r2);
  return w.finish();
}

ExperimentReport intervening(const std::filesystem::path& dir, const ExperimentOptions& opt, bool monthly) {
  ToyCorpusSpec spec;
  if (monthly) {
    spec.periods = months(2012, 7);
    spec.drift_rate = 0.05;
    spec.season_strength = 0.2;
  } else {
    spec.periods = years(2012, 5);
    spec.drift_rate = 0.15;
  }
  Lab lab(spec, opt);
  ReportWriter w(monthly ? "intervening_months" : "intervening_years", dir);

  std::vector<double> alphas;
  for (int i = 1; i <= 10; ++i) alphas.push_back(i / 10.0);
  const auto& first = lab.vectors.front();
  const auto& last = lab.vectors.back();
  const std::size_t n = spec.periods.size();

  std::ostringstream table;
  table << "period,start_perplexity,end_perplexity,best_alpha,best_perplexity\n";
  for (std::size_t t = 1; t + 1 < n; ++t) {
    const auto& counts = lab.test_counts.at(spec.periods[t]);
    FunctionEvaluator ppl([&](const Checkpoint& m, std::string_view) { return perplexity(m, counts); }, false);
    const auto result = sweep_interpolation(first, last, lab.pretrained, alphas, ppl, {opt.workers});
    w.file("sweep_" + period_slug(spec.periods[t]) + ".csv", [&](std::ostream& out) { write_sweep_csv(result, out); });

    // Best strictly interior alpha (alpha = 1 is the start model itself).
    std::vector<double> interior;
    for (const auto& row : result.rows) {
      if (row.coefficients[0] < 1.0) interior.push_back(row.score);
    }
    const auto best = best_index(interior, false);
    const double start_ppl = perplexity(lab.finetuned.front(), counts);
    const double end_ppl = perplexity(lab.finetuned.back(), counts);
    table << format_period(spec.periods[t]) << ',' << format_number(start_ppl) << ',' << format_number(end_ppl) << ','
          << format_number(result.rows[best].coefficients[0]) << ',' << format_number(interior[best]) << '\n';
    if (t == (n - 1) / 2) {
      w.metric("middle_start_perplexity", start_ppl);
      w.metric("middle_end_perplexity", end_ppl);
      w.metric("middle_best_alpha", result.rows[best].coefficients[0]);
      w.metric("middle_best_perplexity", interior[best]);
    }
  }
  w.file("interpolation.csv", [&](std::ostream& out) { out << table.str(); });
  return w.finish();
}

ExperimentReport analogy_experiment(const std::filesystem::path& dir, const ExperimentOptions& opt) {
  ToyCorpusSpec lm_spec;
  lm_spec.periods = years(2012, 5);
  lm_spec.drift_rate = 0.15;
  Lab lm(lm_spec, opt);

  ToyCorpusSpec task_spec = lm.spec;
  task_spec.task_strength = 1.0;
  task_spec.task_id = 1;
  task_spec.tokens_per_period = 20'000;
  const auto task_train = generate_corpus(task_spec, Split::Train);
  const auto task_val = generate_corpus(task_spec, Split::Validation);
  const auto task_test = generate_corpus(task_spec, Split::Test);

  const TimePeriod source = lm_spec.periods.front();
  const Checkpoint task_model = lm.finetune(task_train.at(source), "task_finetune", source.ordinal);
  TimeVector task_vector = diff(task_model, lm.pretrained, source);
  task_vector.provenance = "toy task finetune " + format_period(source);
  const TimeVector& lm_source = lm.vectors.front();

  ReportWriter w("analogy", dir);
  std::ostringstream table;
  table << "target,ablation,a1,a2,a3,test_perplexity,source_model_perplexity,improvement\n";
  const auto grid = AlphaGrid::standard();
  for (std::size_t k = 1; k < lm_spec.periods.size(); ++k) {
    const TimePeriod target = lm_spec.periods[k];
    const auto val_counts = PairCounts::from_sequence(task_val.at(target), task_spec.vocab_size);
    const auto test_counts = PairCounts::from_sequence(task_test.at(target), task_spec.vocab_size);
    FunctionEvaluator ppl([&](const Checkpoint& m, std::string_view) { return perplexity(m, val_counts); }, false);
    const double baseline = perplexity(task_model, test_counts);

    for (auto ablation : {Ablation::Full, Ablation::TaskAddition, Ablation::ScalingOnly}) {
      const auto result = sweep_analogy(task_vector, lm_source, lm.vectors[k], lm.pretrained,
                                        restrict_grid(grid, ablation), ppl, ablation, {opt.workers});
      w.file("sweep_" + period_slug(target) + "_" + std::string(ablation_name(ablation)) + ".csv",
             [&](std::ostream& out) { write_sweep_csv(result, out); });
      const auto& c = result.rows[result.best].coefficients;
      const double test_ppl =
          perplexity(apply(lm.pretrained, analogy(task_vector, lm_source, lm.vectors[k], c[0], c[1], c[2])), test_counts);
      table << format_period(target) << ',' << ablation_name(ablation) << ',' << format_number(c[0]) << ','
            << format_number(c[1]) << ',' << format_number(c[2]) << ',' << format_number(test_ppl) << ','
            << format_number(baseline) << ',' << format_number(baseline - test_ppl) << '\n';
      if (ablation == Ablation::Full) {
        w.metric("improvement_" + period_slug(target), baseline - test_ppl);
        if (k + 1 == lm_spec.periods.size()) {
          w.metric("farthest_source_perplexity", baseline);
          w.metric("farthest_analogy_perplexity", test_ppl);
        }
      }
    }
  }
  w.file("analogy.csv", [&](std::ostream& out) { out << table.str(); });
  return w.finish();
}

ExperimentReport soups(const std::filesystem::path& dir, const ExperimentOptions& opt) {
  ToyCorpusSpec spec;
  spec.periods = years(2012, 5);
  spec.drift_rate = 0.15;
  Lab lab(spec, opt);
  ReportWriter w("soups", dir);

  auto mean_ppl = [&](const Checkpoint& m, const std::map<TimePeriod, PairCounts>& counts) {
    std::vector<double> v;
    for (const auto& [_, c] : counts) v.push_back(perplexity(m, c));
    return pairwise_sum(v) / static_cast<double>(v.size());
  };
  FunctionEvaluator validation(
      [&](const Checkpoint& m, std::string_view) { return mean_ppl(m, lab.validation_counts); }, false);

  const auto greedy = greedy_soup(lab.vectors, lab.pretrained, validation, 3, {opt.workers});
  const std::size_t best_single = greedy.order.front();
  const Checkpoint best_model = lab.finetuned[best_single];
  const Checkpoint uniform = uniform_soup(lab.vectors, lab.pretrained);

  TokenSeq all;
  for (const auto& p : spec.periods) all.insert(all.end(), lab.train.at(p).begin(), lab.train.at(p).end());
  const Checkpoint all_years = lab.finetune(all, "finetune_all", 0);

  struct Row {
    const char* method;
    const Checkpoint* model;
  };
  const Row rows[] = {{"best_single", &best_model},
                      {"uniform_soup", &uniform},
                      {"greedy_soup", &greedy.soup},
                      {"all_periods", &all_years}};
  w.file("soups.csv", [&](std::ostream& out) {
    out << "method,mean_test_perplexity,mean_validation_perplexity\n";
    for (const auto& r : rows) {
      const double test = mean_ppl(*r.model, lab.test_counts);
      const double val = mean_ppl(*r.model, lab.validation_counts);
      out << r.method << ',' << format_number(test) << ',' << format_number(val) << '\n';
      w.metric(std::string(r.method) + "_test_perplexity", test);
      w.metric(std::string(r.method) + "_validation_perplexity", val);
    }
  });
  w.file("greedy_ingredients.csv", [&](std::ostream& out) {
    out << "step,period,individual_validation_perplexity\n";
    for (std::size_t i = 0; i < greedy.ingredients.size(); ++i) {
      const auto c = greedy.ingredients[i];
      out << i << ',' << format_period(spec.periods[c]) << ',' << format_number(greedy.individual_scores[c]) << '\n';
    }
  });
  w.metric("greedy_ingredient_count", static_cast<double>(greedy.ingredients.size()));
  return w.finish();
}

ExperimentReport online(const std::filesystem::path& dir, const ExperimentOptions& opt) {
  ToyCorpusSpec spec;
  spec.periods = months(2012, 36);
  spec.drift_rate = 0.15 / 12.0;
  spec.tokens_per_period = 15'000;
  Lab lab(spec, opt, false);
  ReportWriter w("online", dir);

  // Yearly vectors from each year's pooled months.
  std::vector<TimePeriod> year_periods;
  std::map<TimePeriod, TokenSeq> year_train, year_test;
  for (const auto& p : spec.periods) {
    const auto y = TimePeriod::year(p.ordinal / 12);
    if (year_periods.empty() || year_periods.back() != y) year_periods.push_back(y);
    auto& tr = year_train[y];
    tr.insert(tr.end(), lab.train.at(p).begin(), lab.train.at(p).end());
    auto& te = year_test[y];
    te.insert(te.end(), lab.test.at(p).begin(), lab.test.at(p).end());
  }
  std::vector<TimeVector> year_vectors(year_periods.size());
  parallel_for(year_periods.size(), opt.workers, [&](std::size_t i) {
    const auto& y = year_periods[i];
    year_vectors[i] = diff(lab.finetune(year_train.at(y), "finetune_year", y.ordinal), lab.pretrained, y);
  });
  std::map<TimePeriod, PairCounts> year_counts;
  for (const auto& [y, seq] : year_test) year_counts.emplace(y, PairCounts::from_sequence(seq, spec.vocab_size));

  // Sequential online run, one checkpoint per month.
  MisalignmentMatrix perf, cos;
  perf.train_periods = cos.train_periods = spec.periods;
  perf.eval_periods = cos.eval_periods = year_periods;
  perf.higher_is_better = false;
  perf.metric_name = "perplexity";
  cos.metric_name = "cosine";
  Checkpoint current = lab.pretrained;
  for (const auto& p : spec.periods) {
    current = lab.finetune(lab.train.at(p), "online", p.ordinal, &current);
    const auto v = diff(current, lab.pretrained, p);
    for (std::size_t y = 0; y < year_periods.size(); ++y) {
      perf.values.push_back(perplexity(current, year_counts.at(year_periods[y])));
      cos.values.push_back(cosine_similarity(v, year_vectors[y]));
    }
  }
  const auto normalized = normalize_online_similarity(cos);
  w.matrix("online_perplexity.csv", perf);
  w.matrix("online_cosine.csv", cos);
  w.matrix("online_cosine_normalized.csv", normalized);

  std::size_t peaks_in_year = 0;
  for (std::size_t y = 0; y < year_periods.size(); ++y) {
    std::vector<double> column;
    for (std::size_t m = 0; m < normalized.rows(); ++m) column.push_back(normalized.at(m, y));
    const auto peak = spec.periods[best_index(column, true)];
    const bool inside = peak.ordinal / 12 == year_periods[y].ordinal;
    peaks_in_year += inside ? 1 : 0;
    w.metric("peak_month_ordinal_" + period_slug(year_periods[y]), static_cast<double>(peak.ordinal));
  }
  w.metric("normalized_peaks_within_year", static_cast<double>(peaks_in_year));
  return w.finish();
}

ExperimentReport swap(const std::filesystem::path& dir, const ExperimentOptions& opt) {
  ToyCorpusSpec spec;
  spec.periods = years(2012, 5);
  spec.drift_rate = 0.15;
  Lab lab(spec, opt);
  ReportWriter w("swap", dir);

  const Checkpoint& source = lab.finetuned.front();
  const Checkpoint& target = lab.finetuned.back();
  const auto& counts = lab.test_counts.at(spec.periods.back());
  const double source_ppl = perplexity(source, counts);
  const double target_ppl = perplexity(target, counts);
  const auto rules = ParamGroupRules::toy();

  w.file("swap.csv", [&](std::ostream& out) {
    out << "swapped,perplexity,gap_recovered\n";
    for (const char* groups : {"", "embeddings", "attention", "feed_forward", "non_embedding", "all"}) {
      const double ppl = perplexity(swap_groups(source, target, GroupSet::parse_list(groups), rules), counts);
      const double recovered = (source_ppl - ppl) / (source_ppl - target_ppl);
      const std::string label = *groups ? groups : "none";
      out << label << ',' << format_number(ppl) << ',' << format_number(recovered) << '\n';
      w.metric("recovered_" + label, recovered);
    }
  });
  w.metric("source_perplexity", source_ppl);
  w.metric("target_perplexity", target_ppl);

  const auto norms = group_norms(lab.vectors.back(), rules);
  w.file("group_norms.csv", [&](std::ostream& out) {
    out << "group,l2_norm,tensors\n";
    for (const auto& [g, n] : norms) out << group_name(g) << ',' << format_number(n.norm) << ',' << n.tensors << '\n';
  });
  return w.finish();
}

ExperimentReport seasonality(const std::filesystem::path& dir, const ExperimentOptions& opt) {
  ToyCorpusSpec spec;
  spec.periods = months(2012, 24);
  spec.drift_rate = 0.02;
  spec.season_strength = 0.5;
  spec.season_period = 12;
  Lab lab(spec, opt);
  ReportWriter w("seasonality", dir);

  const auto raw = lab.misalignment();
  const auto normalized = normalize_percent_from_mean(raw);
  const auto sims = similarity_matrix(lab.vectors);
  w.matrix("misalignment.csv", raw);
  w.matrix("misalignment_normalized.csv", normalized);
  w.matrix("similarity.csv", sims);

  const auto stats = seasonality_stats(normalized);
  w.file("seasonality.csv", [&](std::ostream& out) {
    out << "group,mean,count\n";
    out << "aligned," << format_number(stats.aligned.mean) << ',' << stats.aligned.count << '\n';
    out << "stripe," << format_number(stats.stripe.mean) << ',' << stats.stripe.count << '\n';
    out << "other," << format_number(stats.other.mean) << ',' << stats.other.count << '\n';
  });
  const auto corr = correlate_similarity_degradation(sims, normalized);
  w.metric("aligned_mean", stats.aligned.mean);
  w.metric("stripe_mean", stats.stripe.mean);
  w.metric("other_mean", stats.other.mean);
  w.metric("similarity_degradation_r", corr.pearson_r);
  w.metric("similarity_degradation_p", corr.p_value);
  return w.finish();
}

}  // namespace

ExperimentReport run_experiment(std::string_view name, const std::filesystem::path& out_dir,
                                const ExperimentOptions& options) {
  if (name == "manifold") return manifold(out_dir, options);
  if (name == "intervening_years") return intervening(out_dir, options, false);
  if (name == "intervening_months") return intervening(out_dir, options, true);
  if (name == "analogy") return analogy_experiment(out_dir, options);
  if (name == "soups") return soups(out_dir, options);
  if (name == "online") return online(out_dir, options);
  if (name == "swap") return swap(out_dir, options);
  if (name == "seasonality") return seasonality(out_dir, options);
  throw Error("unknown experiment \"" + std::string(name) + "\"");
}

}  // namespace chronovec::toylab
