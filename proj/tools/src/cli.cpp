#include "chronovec/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <functional>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>

#include "chronovec/analysis.hpp"
#include "chronovec/checkpoint.hpp"
#include "chronovec/error.hpp"
#include "chronovec/subprocess.hpp"
#include "chronovec/sweep.hpp"
#include "chronovec/toylab/corpus.hpp"
#include "chronovec/toylab/experiments.hpp"
#include "chronovec/toylab/model.hpp"
#include "chronovec/vecalg.hpp"

namespace chronovec::cli {
namespace {

using Json = nlohmann::ordered_json;

struct Globals {
  std::size_t workers = 1;
  std::uint64_t seed = 0;
  bool intersect = false;
  std::string rules = "builtin:t5";

  InventoryPolicy policy() const { return intersect ? InventoryPolicy::Intersect : InventoryPolicy::Strict; }
  SweepOptions sweep() const { return {workers}; }
};

struct Io {
  std::ostream& out;
  std::ostream& err;
};

// Flags shared by every subcommand that scores checkpoints externally.
struct EvalFlags {
  std::string command;
  bool lower_is_better = false;
  double timeout_s = 600.0;

  void attach(CLI::App* sub) {
    sub->add_option("--eval-cmd", command,
                    "evaluator command; {checkpoint} and {eval} are substituted, last stdout line is the score")
        ->required();
    sub->add_flag("--lower-is-better", lower_is_better, "treat smaller scores as better (e.g. perplexity)");
    sub->add_option("--timeout", timeout_s, "per-call timeout in seconds")->check(CLI::PositiveNumber);
  }

  SubprocessEvaluator make() const {
    EvaluatorSpec spec;
    spec.command = split_command_line(command);
    spec.higher_is_better = !lower_is_better;
    spec.timeout = std::chrono::milliseconds(static_cast<std::int64_t>(timeout_s * 1000.0));
    return SubprocessEvaluator(std::move(spec));
  }
};

std::optional<DType> parse_dtype_flag(const std::string& text) {
  if (text.empty()) return std::nullopt;
  std::string upper;
  for (char c : text) upper += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return parse_dtype(upper);
}

void write_model(const Checkpoint& ckpt, const std::string& path, const std::string& dtype, Io io) {
  const auto report = write_checkpoint(ckpt, path, parse_dtype_flag(dtype));
  if (report.saturated > 0) {
    io.err << "warning: " << report.saturated << " finite values saturated while narrowing to " << dtype << '\n';
  }
}

std::vector<TimeVector> load_vectors(const std::vector<std::string>& paths) {
  std::vector<TimeVector> out;
  out.reserve(paths.size());
  for (const auto& p : paths) out.push_back(load_time_vector(p));
  return out;
}

std::optional<GroupFilter> make_filter(const std::string& groups, const Globals& g) {
  if (groups.empty()) return std::nullopt;
  return GroupFilter{ParamGroupRules::resolve(g.rules), GroupSet::parse_list(groups)};
}

// Writes `body` to `path`, or to stdout when path is empty or "-".
void emit(const std::string& path, Io io, const std::function<void(std::ostream&)>& body) {
  if (path.empty() || path == "-") {
    body(io.out);
    return;
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw Error("cannot open " + path + " for writing");
  body(file);
  if (!file) throw Error("I/O failure writing " + path);
}

void emit_json(const std::string& path, Io io, const Json& j) {
  emit(path, io, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
}

std::pair<TimePeriod, std::string> split_assignment(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) throw Error("expected PERIOD=VALUE, got \"" + text + "\"");
  return {parse_period(text.substr(0, eq)), text.substr(eq + 1)};
}

std::string label_of(const TimeVector& v, std::size_t i) {
  return v.period ? format_period(*v.period) : format_period(TimePeriod::index(static_cast<std::int64_t>(i)));
}

// Each subcommand registers its flags and returns the action to run once
// parsing succeeds.
using Action = std::function<void()>;

Action add_diff(CLI::App& app, Globals& g, Io io) {
  struct Flags {
    std::string finetuned, pretrained, period, provenance, out;
  };
  auto f = std::make_shared<Flags>();
  auto* sub = app.add_subcommand("diff", "time vector = finetuned - pretrained");
  sub->add_option("--finetuned", f->finetuned)->required();
  sub->add_option("--pretrained", f->pretrained)->required();
  sub->add_option("--period", f->period, "e.g. year:2015, month:2015-03, index:7");
  sub->add_option("--provenance", f->provenance);
  sub->add_option("--out", f->out)->required();
  return [f, &g, io] {
    std::optional<TimePeriod> period;
    if (!f->period.empty()) period = parse_period(f->period);
    std::vector<std::string> dropped;
    auto v = diff(load_checkpoint(f->finetuned), load_checkpoint(f->pretrained), period, g.policy(), &dropped);
    v.provenance = f->provenance;
    for (const auto& name : dropped) io.err << "dropped: " << name << '\n';
    save_time_vector(v, f->out);
  };
}

Action add_apply(CLI::App& app, Globals& g, Io io) {
  struct Flags {
    std::string base, vector, out, dtype;
    double scale = 1.0;
  };
  auto f = std::make_shared<Flags>();
  auto* sub = app.add_subcommand("apply", "checkpoint = base + scale * vector");
  sub->add_option("--base", f->base)->required();
  sub->add_option("--vector", f->vector)->required();
  sub->add_option("--scale", f->scale);
  sub->add_option("--dtype", f->dtype, "rewrite every tensor as f32, f16 or bf16");
  sub->add_option("--out", f->out)->required();
  return [f, &g, io] {
    write_model(apply(load_checkpoint(f->base), load_time_vector(f->vector), f->scale, g.policy()), f->out,
                f->dtype, io);
  };
}

Action add_lincomb(CLI::App& app, Globals&, Io) {
  struct Flags {
    std::vector<std::string> vectors;
    std::vector<double> coefs;
    std::string out;
  };
  auto f = std::make_shared<Flags>();
  auto* sub = app.add_subcommand("lincomb", "sum_i coef_i * vector_i");
  sub->add_option("--vectors", f->vectors)->required();
  sub->add_option("--coefs", f->coefs, "one coefficient per vector")->required();
  sub->add_option("--out", f->out)->required();
  return [f] {
    if (f->coefs.size() != f->vectors.size()) {
      throw Error("--coefs has " + std::to_string(f->coefs.size()) + " values for " +
                  std::to_string(f->vectors.size()) + " vectors");
    }
    const auto vs = load_vectors(f->vectors);
    std::vector<std::pair<double, const TimeVector*>> terms;
    for (std::size_t i = 0; i < vs.size(); ++i) terms.emplace_back(f->coefs[i], &vs[i]);
    save_time_vector(lincomb(terms), f->out);
  };
}

Action add_interp(CLI::App& app, Globals&, Io) {
  struct Flags {
    std::string vj, vk, out;
    double alpha = 0.5;
  };
  auto f = std::make_shared<Flags>();
  auto* sub = app.add_subcommand("interp", "alpha * vj + (1 - alpha) * vk");
  sub->add_option("--vj", f->vj)->required();
  sub->add_option("--vk", f->vk)->required();
  sub->add_option("--alpha", f->alpha)->required();
  sub->add_option("--out", f->out)->required();
  return [f] { save_time_vector(interpolate(load_time_vector(f->vj), load_time_vector(f->vk), f->alpha), f->out); };
}

Action add_analogy(CLI::App& app, Globals&, Io) {
  struct Flags {
    std::string task_j, lm_j, lm_k, out;
    double a1 = 1.0, a2 = 1.0, a3 = 1.0;
  };
  auto f = std::make_shared<Flags>();
  auto* sub = app.add_subcommand("analogy", "a1 * task_j + a2 * lm_k - a3 * lm_j");
  sub->add_option("--task-j", f->task_j)->required();
  sub->add_option("--lm-j", f->lm_j)->required();
  sub->add_option("--lm-k", f->lm_k)->required();
  sub->add_option("--a1", f->a1);
  sub->add_option("--a2", f->a2);
  sub->add_option("--a3", f->a3);
  sub->add_option("--out", f->out)->required();
  return [f] {
    save_time_vector(analogy(load_time_vector(f->task_j), load_time_vector(f->lm_j), load_time_vector(f->lm_k),
                             f->a1, f->a2, f->a3),
                     f->out);
  };
}

Action add_soup_uniform(CLI::App& app, Globals&, Io io) {
  struct Flags {
    std::vector<std::string> vectors;
    std::string base, out, dtype;
  };
  auto f = std::make_shared<Flags>();
  auto* sub = app.add_subcommand("soup-uniform", "base + mean of the vectors");
  sub->add_option("--vectors", f->vectors)->required();
  sub->add_option("--base", f->base)->required();
  sub->add_option("--dtype", f->dtype);
  sub->add_option("--out", f->out)->required();
  return [f, io] { write_model(uniform_soup(load_vectors(f->vectors), load_checkpoint(f->base)), f->out, f->dtype, io); };
}

Action add_soup_greedy(CLI::App& app, Globals& g, Io io) {
  struct Flags {
    std::vector<std::string> vectors;
    std::string base, out, dtype, report;
    std::size_t max_passes = 3;
    EvalFlags eval;
  };
  auto f = std::make_shared<Flags>();
  auto* sub = app.add_subcommand("soup-greedy", "greedy soup selected by an external evaluator");
  sub->add_option("--vectors", f->vectors)->required();
  sub->add_option("--base", f->base)->required();
  sub->add_option("--max-passes", f->max_passes)->check(CLI::PositiveNumber);
  sub->add_option("--report", f->report, "JSON summary path (default stdout)");
  sub->add_option("--dtype", f->dtype);
  sub->add_option("--out", f->out)->required();
  f->eval.attach(sub);
  return [f, &g, io] {
    const auto result =
        greedy_soup(load_vectors(f->vectors), load_checkpoint(f->base), f->eval.make(), f->max_passes, g.sweep());
    write_model(result.soup, f->out, f->dtype, io);
    Json j;
    j["score"] = result.score;
    j["ingredients"] = Json::array();
    for (auto i : result.ingredients) j["ingredients"].push_back(f->vectors[i]);
    j["individual_scores"] = Json::object();
    for (auto i : result.order) j["individual_scores"][f->vectors[i]] = result.individual_scores[i];
    emit_json(f->report, io, j);
  };
}

Action add_merge_lora(CLI::App& app, Globals&, Io io) {
  struct Flags {
    std::string base, adapter, out, dtype;
  };
  auto f = std::make_shared<Flags>();
  auto* sub = app.add_subcommand("merge-lora", "W += (alpha / r) * B A for each adapted tensor");
  sub->add_option("--base", f->base)->required();
  sub->add_option("--adapter", f->adapter)->required();
  sub->add_option("--dtype", f->dtype);
  sub->add_option("--out", f->out)->required();
  return [f, io] {
    write_model(merge_lora(load_checkpoint(f->base), LoraAdapter::from_container(load_checkpoint(f->adapter))), f->out,
                f->dtype, io);
  };
}

Action add_cossim(CLI::App& app, Globals& g, Io io) {
  struct Flags {
    std::vector<std::string> vectors;
    std::string groups, out;
  };
  auto f = std::make_shared<Flags>();
  auto* sub = app.add_subcommand("cossim-matrix", "pairwise cosine similarity CSV");
  sub->add_option("--vectors", f->vectors)->required();
  sub->add_option("--groups", f->groups, "comma list of groups to restrict to (uses --rules)");
  sub->add_option("--out", f->out);
  return [f, &g, io] {
    const auto filter = make_filter(f->groups, g);
    const auto m = similarity_matrix(load_vectors(f->vectors), filter ? &*filter : nullptr);
    emit(f->out, io, [&](std::ostream& os) { write_matrix_csv(m, os); });
  };
}

Action add_group_norms(CLI::App& app, Globals& g, Io io) {
  struct Flags {
    std::string vector, out;
  };
  auto f = std::make_shared<Flags>();
  auto* sub = app.add_subcommand("group-norms", "L2 norm of a vector per parameter group");
  sub->add_option("--vector", f->vector)->required();
  sub->add_option("--out", f->out);
  return [f, &g, io] {
    const auto norms = group_norms(load_time_vector(f->vector), ParamGroupRules::resolve(g.rules));
    emit(f->out, io, [&](std::ostream& os) {
      os << "group,l2_norm,tensors\n";
      for (const auto& [group, n] : norms) os << group_name(group) << ',' << format_number(n.norm) << ',' << n.tensors << '\n';
    });
  };
}

Action add_swap(CLI::App& app, Globals& g, Io io) {
  struct Flags {
    std::string base, donor, groups, out, dtype;
  };
  auto f = std::make_shared<Flags>();
  auto* sub = app.add_subcommand("swap", "take the selected groups from donor, the rest from base");
  sub->add_option("--base", f->base)->required();
  sub->add_option("--donor", f->donor)->required();
  sub->add_option("--groups", f->groups, "embeddings,attention,feed_forward,other,non_embedding,all")->required();
  sub->add_option("--dtype", f->dtype);
  sub->add_option("--out", f->out)->required();
  return [f, &g, io] {
    write_model(swap_groups(load_checkpoint(f->base), load_checkpoint(f->donor), GroupSet::parse_list(f->groups),
                            ParamGroupRules::resolve(g.rules)),
                f->out, f->dtype, io);
  };
}

Action add_matrix(CLI::App& app, Globals& g, Io io) {
  struct Flags {
    std::vector<std::string> models, eval_sets;
    std::string metric = "score", out;
    EvalFlags eval;
  };
  auto f = std::make_shared<Flags>();
  auto* sub = app.add_subcommand("matrix", "score every model on every evaluation set");
  sub->add_option("--models", f->models, "PERIOD=checkpoint entries")->required();
  sub->add_option("--eval-sets", f->eval_sets, "PERIOD=argument entries substituted for {eval}")->required();
  sub->add_option("--metric", f->metric);
  sub->add_option("--out", f->out);
  f->eval.attach(sub);
  return [f, &g, io] {
    std::map<TimePeriod, Checkpoint> models;
    std::map<TimePeriod, std::string> sets;
    for (const auto& m : f->models) {
      auto [p, path] = split_assignment(m);
      if (!models.emplace(p, load_checkpoint(path)).second) throw Error("duplicate model period " + format_period(p));
    }
    for (const auto& s : f->eval_sets) {
      auto [p, arg] = split_assignment(s);
      if (!sets.emplace(p, arg).second) throw Error("duplicate eval period " + format_period(p));
    }
    const auto m = build_misalignment_matrix(models, sets, f->eval.make(), g.sweep(), f->metric);
    emit(f->out, io, [&](std::ostream& os) { write_matrix_csv(m, os); });
  };
}

struct MatrixFlags {
  std::string matrix;
  bool lower_is_better = false;

  void attach(CLI::App* sub) {
    sub->add_option("--matrix", matrix, "performance matrix CSV")->required();
    sub->add_flag("--lower-is-better", lower_is_better);
  }
  MisalignmentMatrix load() const { return read_matrix_csv(std::filesystem::path(matrix), !lower_is_better); }
};

Action add_analyze_normalize(CLI::App& app, Globals&, Io io) {
  struct Flags {
    MatrixFlags m;
    std::string out;
  };
  auto f = std::make_shared<Flags>();
  auto* sub = app.add_subcommand("analyze-normalize", "percent change from each column's mean");
  f->m.attach(sub);
  sub->add_option("--out", f->out);
  return [f, io] {
    const auto n = normalize_percent_from_mean(f->m.load());
    emit(f->out, io, [&](std::ostream& os) { write_matrix_csv(n, os); });
  };
}

Action add_analyze_td(CLI::App& app, Globals&, Io io) {
  struct Flags {
    MatrixFlags m;
    bool pooled = false;
    std::string out;
  };
  auto f = std::make_shared<Flags>();
  auto* sub = app.add_subcommand("analyze-td", "temporal degradation slope against train-eval offset");
  f->m.attach(sub);
  sub->add_flag("--pooled", f->pooled, "single regression over every cell");
  sub->add_option("--out", f->out);
  return [f, io] {
    const auto r = td_score(f->m.load(), f->pooled ? TdMode::Pooled : TdMode::PerEvalColumn);
    emit_json(f->out, io, Json{{"slope", r.slope}, {"r2", r.r2}, {"normalized", r.normalized}});
  };
}

Action add_analyze_corr(CLI::App& app, Globals&, Io io) {
  struct Flags {
    MatrixFlags m;
    std::string similarity, out;
  };
  auto f = std::make_shared<Flags>();
  auto* sub = app.add_subcommand("analyze-corr", "Pearson correlation of similarity and performance cells");
  sub->add_option("--similarity", f->similarity, "cosine similarity matrix CSV")->required();
  f->m.attach(sub);
  sub->add_option("--out", f->out);
  return [f, io] {
    const auto r =
        correlate_similarity_degradation(read_matrix_csv(std::filesystem::path(f->similarity)), f->m.load());
    emit_json(f->out, io, Json{{"pearson_r", r.pearson_r}, {"p_value", r.p_value}, {"n", r.n}});
  };
}

Action add_analyze_season(CLI::App& app, Globals&, Io io) {
  struct Flags {
    MatrixFlags m;
    std::string out;
  };
  auto f = std::make_shared<Flags>();
  auto* sub = app.add_subcommand("analyze-season", "aligned / same-month stripe / other cell means");
  f->m.attach(sub);
  sub->add_option("--out", f->out);
  return [f, io] {
    const auto s = seasonality_stats(f->m.load());
    auto group = [](const SeasonGroup& sg) { return Json{{"mean", sg.mean}, {"count", sg.count}}; };
    emit_json(f->out, io, Json{{"aligned", group(s.aligned)}, {"stripe", group(s.stripe)}, {"other", group(s.other)}});
  };
}

Action add_analyze_online(CLI::App& app, Globals&, Io io) {
  struct Flags {
    MatrixFlags m;
    std::string out;
  };
  auto f = std::make_shared<Flags>();
  auto* sub = app.add_subcommand("analyze-online", "divide each similarity column by its mean");
  f->m.attach(sub);
  sub->add_option("--out", f->out);
  return [f, io] {
    const auto n = normalize_online_similarity(f->m.load());
    emit(f->out, io, [&](std::ostream& os) { write_matrix_csv(n, os); });
  };
}

Action add_project(CLI::App& app, Globals& g, Io io) {
  struct Flags {
    std::vector<std::string> vectors;
    std::string groups, out;
  };
  auto f = std::make_shared<Flags>();
  auto* sub = app.add_subcommand("project", "2-D PCA coordinates of the vectors");
  sub->add_option("--vectors", f->vectors)->required();
  sub->add_option("--groups", f->groups);
  sub->add_option("--out", f->out);
  return [f, &g, io] {
    const auto vs = load_vectors(f->vectors);
    const auto filter = make_filter(f->groups, g);
    const auto coords = project_2d(vs, filter ? &*filter : nullptr);
    emit(f->out, io, [&](std::ostream& os) {
      os << "label,x,y\n";
      for (std::size_t i = 0; i < vs.size(); ++i) {
        os << label_of(vs[i], i) << ',' << format_number(coords[i][0]) << ',' << format_number(coords[i][1]) << '\n';
      }
    });
  };
}

Action add_sweep_interp(CLI::App& app, Globals& g, Io io) {
  struct Flags {
    std::string vj, vk, base, out;
    std::vector<double> alphas = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    EvalFlags eval;
  };
  auto f = std::make_shared<Flags>();
  auto* sub = app.add_subcommand("sweep-interp", "score base + interp(vj, vk, alpha) over an alpha grid");
  sub->add_option("--vj", f->vj)->required();
  sub->add_option("--vk", f->vk)->required();
  sub->add_option("--base", f->base)->required();
  sub->add_option("--alphas", f->alphas)->delimiter(',');
  sub->add_option("--out", f->out);
  f->eval.attach(sub);
  return [f, &g, io] {
    const auto r = sweep_interpolation(load_time_vector(f->vj), load_time_vector(f->vk), load_checkpoint(f->base),
                                       f->alphas, f->eval.make(), g.sweep());
    emit(f->out, io, [&](std::ostream& os) { write_sweep_csv(r, os); });
    io.err << "best alpha " << format_number(r.rows[r.best].coefficients[0]) << " score "
           << format_number(r.rows[r.best].score) << '\n';
  };
}

Action add_sweep_analogy(CLI::App& app, Globals& g, Io io) {
  struct Flags {
    std::string task_j, lm_j, lm_k, base, out, ablation = "full";
    AlphaGrid grid = AlphaGrid::standard();
    EvalFlags eval;
  };
  auto f = std::make_shared<Flags>();
  auto* sub = app.add_subcommand("sweep-analogy", "score base + analogy(...) over an (a1, a2, a3) grid");
  sub->add_option("--task-j", f->task_j)->required();
  sub->add_option("--lm-j", f->lm_j)->required();
  sub->add_option("--lm-k", f->lm_k)->required();
  sub->add_option("--base", f->base)->required();
  sub->add_option("--a1", f->grid.a1)->delimiter(',');
  sub->add_option("--a2", f->grid.a2)->delimiter(',');
  sub->add_option("--a3", f->grid.a3)->delimiter(',');
  sub->add_option("--ablation", f->ablation, "full, task_addition or scaling_only");
  sub->add_option("--out", f->out);
  f->eval.attach(sub);
  return [f, &g, io] {
    const auto ablation = parse_ablation(f->ablation);
    const auto r = sweep_analogy(load_time_vector(f->task_j), load_time_vector(f->lm_j), load_time_vector(f->lm_k),
                                 load_checkpoint(f->base), restrict_grid(f->grid, ablation), f->eval.make(), ablation,
                                 g.sweep());
    emit(f->out, io, [&](std::ostream& os) { write_sweep_csv(r, os); });
    const auto& c = r.rows[r.best].coefficients;
    io.err << "best a1=" << format_number(c[0]) << " a2=" << format_number(c[1]) << " a3=" << format_number(c[2])
           << " score " << format_number(r.rows[r.best].score) << '\n';
  };
}

toylab::Split parse_split(const std::string& s) {
  if (s == "train") return toylab::Split::Train;
  if (s == "validation") return toylab::Split::Validation;
  if (s == "test") return toylab::Split::Test;
  throw Error("unknown split \"" + s + "\" (expected train, validation or test)");
}

Action add_toy_gen(CLI::App& app, Globals& g, Io io) {
  struct Flags {
    toylab::ToyCorpusSpec spec;
    std::vector<std::string> periods;
    std::string split = "train", out;
  };
  auto f = std::make_shared<Flags>();
  auto* sub = app.add_subcommand("toy-gen", "generate synthetic corpus files, one per period");
  sub->add_option("--periods", f->periods, "comma list, e.g. year:2012,year:2013")->required()->delimiter(',');
  sub->add_option("--vocab", f->spec.vocab_size)->check(CLI::Range(2, 65535));
  sub->add_option("--tokens", f->spec.tokens_per_period)->check(CLI::PositiveNumber);
  sub->add_option("--drift", f->spec.drift_rate)->check(CLI::NonNegativeNumber);
  sub->add_option("--season", f->spec.season_strength)->check(CLI::NonNegativeNumber);
  sub->add_option("--season-period", f->spec.season_period)->check(CLI::PositiveNumber);
  sub->add_option("--task-strength", f->spec.task_strength)->check(CLI::NonNegativeNumber);
  sub->add_option("--task-id", f->spec.task_id);
  sub->add_option("--split", f->split, "train, validation or test");
  sub->add_option("--out", f->out, "output directory; files are named <period-slug>.toyc")->required();
  return [f, &g, io] {
    auto spec = f->spec;
    spec.seed = g.seed;
    for (const auto& p : f->periods) spec.periods.push_back(parse_period(p));
    const auto corpora = toylab::generate_corpus(spec, parse_split(f->split));
    std::filesystem::create_directories(f->out);
    for (const auto& [period, tokens] : corpora) {
      const auto path = std::filesystem::path(f->out) / (period_slug(period) + ".toyc");
      toylab::write_corpus_file(path, tokens, spec.vocab_size);
      io.out << path.string() << '\n';
    }
  };
}

Action add_toy_train(CLI::App& app, Globals& g, Io io) {
  struct Flags {
    std::vector<std::string> corpus;
    std::string init, out;
    toylab::TrainSpec spec;
  };
  auto f = std::make_shared<Flags>();
  auto* sub = app.add_subcommand("toy-train", "train the toy bigram model");
  sub->add_option("--corpus", f->corpus, "corpus files, concatenated in order")->required();
  sub->add_option("--init", f->init, "start from this checkpoint instead of random init");
  sub->add_option("--lr", f->spec.learning_rate)->check(CLI::PositiveNumber);
  sub->add_option("--epochs", f->spec.epochs)->check(CLI::NonNegativeNumber);
  sub->add_option("--batch", f->spec.batch_size)->check(CLI::PositiveNumber);
  sub->add_option("--embed-dim", f->spec.dims.embed)->check(CLI::PositiveNumber);
  sub->add_option("--hidden-dim", f->spec.dims.hidden)->check(CLI::PositiveNumber);
  sub->add_option("--out", f->out)->required();
  return [f, &g, io] {
    toylab::TokenSeq tokens;
    int vocab = 0;
    for (const auto& path : f->corpus) {
      auto file = toylab::read_corpus_file(path);
      if (vocab != 0 && file.vocab_size != vocab) throw Error("corpus files disagree on vocab size");
      vocab = file.vocab_size;
      tokens.insert(tokens.end(), file.tokens.begin(), file.tokens.end());
    }
    auto spec = f->spec;
    spec.seed = g.seed;
    spec.dims.vocab = vocab;
    std::optional<Checkpoint> init;
    if (!f->init.empty()) {
      spec.init = toylab::InitMode::FromCheckpoint;
      init = load_checkpoint(f->init);
    }
    const auto model = toylab::train(tokens, spec, init);
    write_checkpoint(model, f->out);
    io.err << "train perplexity " << format_number(toylab::evaluate(model, tokens).perplexity) << '\n';
  };
}

Action add_toy_eval(CLI::App& app, Globals&, Io io) {
  struct Flags {
    std::string model, corpus, metric = "perplexity";
  };
  auto f = std::make_shared<Flags>();
  auto* sub = app.add_subcommand("toy-eval", "print a toy model's score on a corpus as one number");
  sub->add_option("--model", f->model)->required();
  sub->add_option("--corpus", f->corpus)->required();
  sub->add_option("--metric", f->metric, "perplexity or cross_entropy")
      ->check(CLI::IsMember({"perplexity", "cross_entropy"}));
  return [f, io] {
    const auto r = toylab::evaluate(load_checkpoint(f->model), toylab::read_corpus_file(f->corpus).tokens);
    io.out << format_number(f->metric == "perplexity" ? r.perplexity : r.cross_entropy) << '\n';
  };
}

Action add_toy_experiment(CLI::App& app, Globals& g, Io io) {
  struct Flags {
    std::string name, out;
  };
  auto f = std::make_shared<Flags>();
  std::vector<std::string> names(std::begin(toylab::kExperimentNames), std::end(toylab::kExperimentNames));
  auto* sub = app.add_subcommand("toy-experiment", "run one toy reproduction end to end");
  sub->add_option("--name", f->name)->required()->check(CLI::IsMember(names));
  sub->add_option("--out", f->out, "report directory")->required();
  return [f, &g, io] {
    const auto report = toylab::run_experiment(f->name, f->out, {g.seed, g.workers});
    for (const auto& [k, v] : report.metrics) io.out << k << '=' << format_number(v) << '\n';
  };
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Io io{out, err};
  Globals g;
  CLI::App app{"chronovec: time-vector arithmetic on model checkpoints", "chronovec"};
  app.fallthrough();
  app.require_subcommand(1, 1);
  app.add_option("--workers", g.workers, "parallel evaluations and finetunes")->check(CLI::PositiveNumber);
  app.add_option("--seed", g.seed, "seed for toy corpora, training and experiments");
  app.add_flag("--intersect", g.intersect, "operate on the common tensor set instead of requiring equal inventories");
  app.add_option("--rules", g.rules, "parameter group rules: builtin:t5, builtin:toy or a rules file");

  using Adder = Action (*)(CLI::App&, Globals&, Io);
  const Adder adders[] = {
      add_diff,          add_apply,          add_lincomb,          add_interp,          add_analogy,
      add_soup_uniform,  add_soup_greedy,    add_merge_lora,       add_cossim,          add_group_norms,
      add_swap,          add_matrix,         add_analyze_normalize, add_analyze_td,     add_analyze_corr,
      add_analyze_season, add_analyze_online, add_project,         add_sweep_interp,    add_sweep_analogy,
      add_toy_gen,       add_toy_train,      add_toy_eval,         add_toy_experiment,
  };
  std::map<const CLI::App*, Action> actions;
  for (auto add : adders) {
    auto action = add(app, g, io);
    actions.emplace(app.get_subcommands({}).back(), std::move(action));
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUserError;
  }

  try {
    actions.at(app.get_subcommands().front())();
    return kOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kUserError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInternalError;
  } catch (...) {
    err << "internal error: unknown exception\n";
    return kInternalError;
  }
}

}  // namespace chronovec::cli
