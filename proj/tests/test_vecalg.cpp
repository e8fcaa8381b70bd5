#include <cmath>

#include "chronovec/numeric.hpp"
#include "support.hpp"

using namespace chronovec;
using cvtest::single;
using cvtest::vector_of;

namespace {

std::vector<float> values(const Checkpoint& c, const std::string& name) { return c.at(name).to_f32(); }

// Flattens in lexicographic name order; the oracle for every test below.
std::vector<double> flat(const Checkpoint& c) {
  std::vector<double> out;
  for (const auto& [_, t] : c.tensors) {
    for (float x : t.to_f32()) out.push_back(x);
  }
  return out;
}

void expect_close(const std::vector<double>& got, const std::vector<double>& want, double tol = 1e-6) {
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_LE(cvtest::rel_err(got[i], want[i]), tol) << i;
}

struct Trio {
  Checkpoint base;
  TimeVector a, b, c;
};

Trio random_trio(std::mt19937_64& rng, std::size_t tensors = 5) {
  Trio t;
  t.base = cvtest::random_checkpoint(rng, tensors);
  t.a = vector_of(cvtest::perturbed(rng, t.base), t.base);
  t.b = vector_of(cvtest::perturbed(rng, t.base), t.base);
  t.c = vector_of(cvtest::perturbed(rng, t.base), t.base);
  return t;
}

}  // namespace

TEST(Numeric, PairwiseSumMatchesLongDouble) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  for (std::size_t n : {0u, 1u, 63u, 64u, 65u, 1000u, 4097u}) {
    std::vector<double> v(n);
    long double want = 0;
    for (auto& x : v) want += (x = d(rng));
    EXPECT_NEAR(pairwise_sum(v), static_cast<double>(want), 1e-12);
  }
}

TEST(Diff, SubtractsElementwise) {
  const auto ft = single("w", {2}, {1.0f, 2.0f});
  const auto pre = single("w", {2}, {0.5f, 0.5f});
  const auto v = diff(ft, pre, TimePeriod::year(2015));
  EXPECT_EQ(values(v.delta, "w"), (std::vector<float>{0.5f, 1.5f}));
  EXPECT_EQ(v.base, fingerprint(pre));
  EXPECT_EQ(v.period, TimePeriod::year(2015));
  const auto zero = diff(pre, pre, std::nullopt);
  EXPECT_EQ(values(zero.delta, "w"), (std::vector<float>{0.0f, 0.0f}));
}

TEST(Diff, InventoryPolicies) {
  Checkpoint ft = single("w", {2}, {1, 2});
  ft.insert("extra", Tensor::from_f32({1}, {1}));
  Checkpoint pre = single("w", {2}, {0, 0});
  pre.insert("missing", Tensor::from_f32({1}, {1}));
  try {
    diff(ft, pre, std::nullopt);
    FAIL();
  } catch (const Error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("extra"), std::string::npos) << msg;
    EXPECT_NE(msg.find("missing"), std::string::npos) << msg;
  }
  std::vector<std::string> dropped;
  const auto v = diff(ft, pre, std::nullopt, InventoryPolicy::Intersect, &dropped);
  EXPECT_EQ(v.delta.names(), std::vector<std::string>{"w"});
  EXPECT_EQ(dropped, (std::vector<std::string>{"extra", "missing"}));

  // Shape mismatch is fatal under either policy.
  const auto wide = single("w", {3}, {1, 2, 3});
  EXPECT_THROW(diff(wide, single("w", {2}, {0, 0}), std::nullopt, InventoryPolicy::Intersect), Error);
}

TEST(Apply, ScalesAndChecksFingerprint) {
  const auto base = single("w", {2}, {0.5f, 0.5f});
  const auto v = vector_of(single("w", {2}, {0.5f, 1.5f}), base);
  EXPECT_EQ(values(apply(base, v), "w"), (std::vector<float>{1.0f, 2.0f}));
  EXPECT_EQ(apply(base, v, 0.0).tensors, base.tensors);
  const auto zero = single("w", {1}, {0.0f});
  EXPECT_EQ(values(apply(zero, vector_of(single("w", {1}, {1.0f}), zero), 2.0), "w"), std::vector<float>{2.0f});
  EXPECT_THROW(apply(single("v", {2}, {0, 0}), v), Error);
}

TEST(Apply, InvertsDiffOnRandomCheckpoints) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 50; ++i) {
    const auto pre = cvtest::random_checkpoint(rng, 10);
    const auto ft = cvtest::perturbed(rng, pre, 3.0f);
    const auto back = apply(pre, diff(ft, pre, std::nullopt));
    const auto got = flat(back);
    const auto want = flat(ft);
    double max_abs = 0;
    for (double x : want) max_abs = std::max(max_abs, std::abs(x));
    for (std::size_t k = 0; k < got.size(); ++k) {
      ASSERT_LE(std::abs(got[k] - want[k]), 1e-6 * std::max(1.0, max_abs));
    }
  }
}

TEST(Lincomb, MatchesScalarOracle) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 100; ++i) {
    const auto t = random_trio(rng);
    const double c1 = 0.25, c2 = 0.75, c3 = -1.3;
    const auto got = flat(lincomb(std::vector<std::pair<double, const TimeVector*>>{{c1, &t.a}, {c2, &t.b}, {c3, &t.c}}).delta);
    const auto fa = flat(t.a.delta), fb = flat(t.b.delta), fc = flat(t.c.delta);
    std::vector<double> want(fa.size());
    for (std::size_t k = 0; k < want.size(); ++k) want[k] = c1 * fa[k] + c2 * fb[k] + c3 * fc[k];
    expect_close(got, want);
  }
}

TEST(Lincomb, IdentityCancellationAndErrors) {
  std::mt19937_64 rng(9);
  const auto t = random_trio(rng);
  EXPECT_EQ(lincomb(std::vector<std::pair<double, const TimeVector*>>{{1.0, &t.a}}).delta.tensors, t.a.delta.tensors);
  for (double x : flat(lincomb(std::vector<std::pair<double, const TimeVector*>>{{1.0, &t.a}, {-1.0, &t.a}}).delta)) {
    EXPECT_EQ(x, 0.0);
  }
  // Powers of two are exact.
  const auto scaled = flat(lincomb(std::vector<std::pair<double, const TimeVector*>>{{0.5, &t.a}}).delta);
  const auto fa = flat(t.a.delta);
  for (std::size_t k = 0; k < fa.size(); ++k) EXPECT_EQ(scaled[k], static_cast<double>(static_cast<float>(fa[k] * 0.5)));

  EXPECT_THROW(lincomb(std::vector<std::pair<double, const TimeVector*>>{}), Error);
  auto other = t.b;
  other.base.hex = std::string(64, '0');
  EXPECT_THROW(lincomb(std::vector<std::pair<double, const TimeVector*>>{{1, &t.a}, {1, &other}}), Error);
}

TEST(Lincomb, PeriodLabel) {
  std::mt19937_64 rng(10);
  auto t = random_trio(rng);
  t.a.period = TimePeriod::year(2015);
  t.b.period = TimePeriod::year(2015);
  EXPECT_EQ(lincomb(std::vector<std::pair<double, const TimeVector*>>{{1, &t.a}, {1, &t.b}}).period, TimePeriod::year(2015));
  t.b.period = TimePeriod::year(2016);
  EXPECT_EQ(lincomb(std::vector<std::pair<double, const TimeVector*>>{{1, &t.a}, {1, &t.b}}).period, std::nullopt);
}

TEST(Interpolate, EndpointsMidpointSymmetry) {
  const auto base = single("w", {1}, {0});
  const auto vj = vector_of(single("w", {1}, {2.0f}), base);
  const auto vk = vector_of(single("w", {1}, {4.0f}), base);
  EXPECT_EQ(values(interpolate(vj, vk, 0.5).delta, "w"), std::vector<float>{3.0f});
  EXPECT_THROW(interpolate(vj, vk, 1.5), Error);
  EXPECT_THROW(interpolate(vj, vk, -0.1), Error);

  std::mt19937_64 rng(12);
  for (int i = 0; i < 10; ++i) {
    const auto t = random_trio(rng);
    EXPECT_EQ(interpolate(t.a, t.b, 1.0).delta.tensors, t.a.delta.tensors);
    EXPECT_EQ(interpolate(t.a, t.b, 0.0).delta.tensors, t.b.delta.tensors);
    for (int k = 1; k <= 9; ++k) {
      const double alpha = k / 10.0;
      expect_close(flat(interpolate(t.a, t.b, alpha).delta), flat(interpolate(t.b, t.a, 1.0 - alpha).delta));
    }
  }
}

TEST(Analogy, MatchesScalarOracle) {
  const auto base = single("w", {2}, {0, 0});
  const auto task = vector_of(single("w", {2}, {1.0f, 2.0f}), base);
  auto lmj = vector_of(single("w", {2}, {0.5f, -1.0f}), base);
  auto lmk = vector_of(single("w", {2}, {3.0f, 0.25f}), base);
  lmk.period = TimePeriod::year(2020);
  const auto r = analogy(task, lmj, lmk, 1.0, 0.5, 0.5);
  EXPECT_EQ(values(r.delta, "w"), (std::vector<float>{1.0f + 1.5f - 0.25f, 2.0f + 0.125f + 0.5f}));
  EXPECT_EQ(r.period, TimePeriod::year(2020));
  EXPECT_EQ(analogy(task, lmj, lmk, 1, 0, 0).delta.tensors, task.delta.tensors);
  expect_close(flat(analogy(task, lmk, lmk, 1.7, 0.4, 0.4).delta), flat(lincomb(std::vector<std::pair<double, const TimeVector*>>{{1.7, &task}}).delta));

  std::mt19937_64 rng(13);
  for (int i = 0; i < 100; ++i) {
    const auto t = random_trio(rng);
    const auto got = flat(analogy(t.a, t.b, t.c, 1.4, 0.3, 0.6).delta);
    const auto fa = flat(t.a.delta), fb = flat(t.b.delta), fc = flat(t.c.delta);
    std::vector<double> want(fa.size());
    for (std::size_t k = 0; k < want.size(); ++k) want[k] = 1.4 * fa[k] + 0.3 * fc[k] - 0.6 * fb[k];
    expect_close(got, want);
  }
}

TEST(UniformSoup, MeanOfDeltas) {
  const auto base = single("w", {1}, {0});
  const std::vector<TimeVector> two = {vector_of(single("w", {1}, {2}), base), vector_of(single("w", {1}, {4}), base)};
  EXPECT_EQ(values(uniform_soup(two, base), "w"), std::vector<float>{3.0f});
  EXPECT_THROW(uniform_soup(std::vector<TimeVector>{}, base), Error);

  std::mt19937_64 rng(14);
  const auto t = random_trio(rng);
  EXPECT_EQ(uniform_soup(std::vector<TimeVector>{t.a, t.a, t.a}, t.base).tensors, apply(t.base, t.a).tensors);

  std::vector<TimeVector> five;
  for (int i = 0; i < 5; ++i) five.push_back(vector_of(cvtest::perturbed(rng, t.base), t.base));
  std::vector<std::pair<double, const TimeVector*>> terms;
  for (const auto& v : five) terms.emplace_back(0.2, &v);
  expect_close(flat(uniform_soup(five, t.base)), flat(apply(t.base, lincomb(terms))));
}

TEST(MergeLora, RankOneOuterProduct) {
  const auto base = single("W", {2, 2}, {0, 0, 0, 0});
  LoraAdapter adapter;
  adapter.rank = 1;
  adapter.alpha = 1.0;
  adapter.pairs["W"] = {Tensor::from_f32({1, 2}, {0, 1}), Tensor::from_f32({2, 1}, {1, 0})};
  EXPECT_EQ(values(merge_lora(base, adapter), "W"), (std::vector<float>{0, 1, 0, 0}));

  adapter.pairs["W"].b = Tensor::from_f32({2, 1}, {0, 0});
  EXPECT_EQ(merge_lora(base, adapter).tensors, base.tensors);
}

TEST(MergeLora, MatchesTripleLoopOracle) {
  std::mt19937_64 rng(15);
  const int d = 4, k = 3, r = 2;
  const double alpha = 32.0;
  for (int trial = 0; trial < 100; ++trial) {
    Checkpoint base;
    const auto w = cvtest::random_values(rng, d * k);
    base.insert("layer.W", Tensor::from_f32({d, k}, w));
    base.insert("layer.bias", Tensor::from_f32({d}, cvtest::random_values(rng, d)));
    const auto a = cvtest::random_values(rng, r * k);
    const auto b = cvtest::random_values(rng, d * r);
    LoraAdapter adapter;
    adapter.rank = r;
    adapter.alpha = alpha;
    adapter.pairs["layer.W"] = {Tensor::from_f32({r, k}, a), Tensor::from_f32({d, r}, b)};

    // Through the container representation, as the CLI does.
    const auto merged = merge_lora(base, LoraAdapter::from_container(adapter.to_container()));
    const auto got = values(merged, "layer.W");
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < k; ++j) {
        double acc = 0;
        for (int q = 0; q < r; ++q) acc += static_cast<double>(b[i * r + q]) * a[q * k + j];
        const double want = w[i * k + j] + alpha / r * acc;
        ASSERT_LE(cvtest::rel_err(got[i * k + j], want), 1e-6);
      }
    }
    EXPECT_EQ(merged.at("layer.bias"), base.at("layer.bias"));
  }
}

TEST(MergeLora, Errors) {
  const auto base = single("W", {2, 2}, {0, 0, 0, 0});
  LoraAdapter adapter;
  adapter.rank = 1;
  adapter.alpha = 1.0;
  adapter.pairs["missing"] = {Tensor::from_f32({1, 2}, {0, 1}), Tensor::from_f32({2, 1}, {1, 0})};
  EXPECT_THROW(merge_lora(base, adapter), Error);
  adapter.pairs.clear();
  adapter.pairs["W"] = {Tensor::from_f32({1, 3}, {0, 1, 2}), Tensor::from_f32({2, 1}, {1, 0})};
  EXPECT_THROW(merge_lora(base, adapter), Error);

  Checkpoint no_alpha;
  no_alpha.insert("W.lora_A", Tensor::from_f32({1, 2}, {0, 1}));
  no_alpha.insert("W.lora_B", Tensor::from_f32({2, 1}, {1, 0}));
  EXPECT_THROW(LoraAdapter::from_container(no_alpha), Error);
}

TEST(Cosine, BasicIdentities) {
  std::mt19937_64 rng(16);
  const auto t = random_trio(rng);
  EXPECT_NEAR(cosine_similarity(t.a, t.a), 1.0, 1e-12);
  const auto neg = lincomb(std::vector<std::pair<double, const TimeVector*>>{{-1.0, &t.a}});
  EXPECT_NEAR(cosine_similarity(t.a, neg), -1.0, 1e-12);
  const auto scaled = lincomb(std::vector<std::pair<double, const TimeVector*>>{{2.0, &t.a}});
  const auto neg_scaled = lincomb(std::vector<std::pair<double, const TimeVector*>>{{-3.0, &t.a}});
  EXPECT_NEAR(cosine_similarity(scaled, neg_scaled), -1.0, 1e-12);
  EXPECT_NEAR(cosine_similarity(t.a, t.b), cosine_similarity(t.b, t.a), 1e-15);

  const auto base = single("w", {2}, {0, 0});
  EXPECT_EQ(cosine_similarity(vector_of(single("w", {2}, {1, 0}), base), vector_of(single("w", {2}, {0, 1}), base)), 0.0);
  try {
    cosine_similarity(vector_of(single("w", {2}, {0, 0}), base), vector_of(single("w", {2}, {0, 1}), base));
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("undefined similarity"), std::string::npos);
  }
}

TEST(Cosine, MatchesF64OracleAndFilter) {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 50; ++i) {
    const auto t = random_trio(rng, 8);
    const auto x = flat(t.a.delta), y = flat(t.b.delta);
    double dot = 0, nx = 0, ny = 0;
    for (std::size_t k = 0; k < x.size(); ++k) {
      dot += x[k] * y[k];
      nx += x[k] * x[k];
      ny += y[k] * y[k];
    }
    if (nx == 0 || ny == 0) continue;
    EXPECT_NEAR(cosine_similarity(t.a, t.b), dot / std::sqrt(nx * ny), 1e-12);
  }

  Checkpoint base;
  base.insert("embed.weight", Tensor::from_f32({2}, {0, 0}));
  base.insert("ff.w1", Tensor::from_f32({2}, {0, 0}));
  Checkpoint d1 = base, d2 = base;
  d1.tensors["embed.weight"] = Tensor::from_f32({2}, {1, 0});
  d1.tensors["ff.w1"] = Tensor::from_f32({2}, {1, 1});
  d2.tensors["embed.weight"] = Tensor::from_f32({2}, {-1, 0});
  d2.tensors["ff.w1"] = Tensor::from_f32({2}, {2, 2});
  const GroupFilter ff{ParamGroupRules::toy(), GroupSet::of({ParamGroup::FeedForward})};
  EXPECT_NEAR(cosine_similarity(vector_of(d1, base), vector_of(d2, base), &ff), 1.0, 1e-12);
  EXPECT_NEAR(cosine_similarity(vector_of(d1, base), vector_of(d2, base)), 3.0 / std::sqrt(3.0 * 9.0), 1e-12);
}

TEST(GroupNorms, PythagoreanAndCounts) {
  const auto base = single("SelfAttention.q", {2}, {0, 0});
  const auto norms = group_norms(vector_of(single("SelfAttention.q", {2}, {3, 4}), base), ParamGroupRules::t5());
  EXPECT_DOUBLE_EQ(norms.at(ParamGroup::Attention).norm, 5.0);
  EXPECT_EQ(norms.at(ParamGroup::Attention).tensors, 1u);
  EXPECT_EQ(norms.at(ParamGroup::Embeddings).tensors, 0u);
  EXPECT_EQ(norms.at(ParamGroup::Embeddings).norm, 0.0);

  std::mt19937_64 rng(18);
  Checkpoint pre;
  for (const char* n : {"embed.weight", "ff.w1", "ff.b1", "out.weight", "out.bias"}) {
    pre.insert(n, Tensor::from_f32({7}, cvtest::random_values(rng, 7)));
  }
  const auto v = vector_of(cvtest::perturbed(rng, pre), pre);
  double total = 0;
  for (double x : flat(v.delta)) total += x * x;
  double parts = 0;
  for (const auto& [_, n] : group_norms(v, ParamGroupRules::toy())) parts += n.norm * n.norm;
  EXPECT_NEAR(parts, total, 1e-9 * total);

  for (const auto& [_, n] : group_norms(diff(pre, pre, std::nullopt), ParamGroupRules::toy())) {
    EXPECT_EQ(n.norm, 0.0);
  }
}

TEST(SwapGroups, RowsAndPartition) {
  std::mt19937_64 rng(19);
  Checkpoint base;
  for (const char* n : {"embed.weight", "ff.w1", "ff.b1", "out.weight", "out.bias"}) {
    base.insert(n, Tensor::from_f32({3}, cvtest::random_values(rng, 3)));
  }
  const auto donor = cvtest::perturbed(rng, base);
  const auto rules = ParamGroupRules::toy();
  EXPECT_EQ(swap_groups(base, donor, GroupSet{}, rules).tensors, base.tensors);
  EXPECT_EQ(swap_groups(base, donor, GroupSet::parse_list("all"), rules).tensors, donor.tensors);

  auto donor_names = [&](const Checkpoint& c) {
    std::set<std::string> s;
    for (const auto& [n, t] : c.tensors) {
      if (t == donor.at(n)) s.insert(n);
    }
    return s;
  };
  const auto emb = donor_names(swap_groups(base, donor, GroupSet::parse_list("embeddings"), rules));
  const auto non = donor_names(swap_groups(base, donor, GroupSet::parse_list("non_embedding"), rules));
  EXPECT_EQ(emb, std::set<std::string>{"embed.weight"});
  std::set<std::string> both = emb;
  both.insert(non.begin(), non.end());
  EXPECT_EQ(both.size(), base.tensors.size());
  EXPECT_EQ(emb.size() + non.size(), base.tensors.size());

  EXPECT_THROW(swap_groups(base, single("x", {1}, {0}), GroupSet::all(), rules), Error);
}

TEST(TimeVectorFile, RoundTripsMetadata) {
  cvtest::TempDir dir;
  std::mt19937_64 rng(20);
  const auto t = random_trio(rng);
  auto v = t.a;
  v.period = TimePeriod::month(2016, 7);
  v.provenance = "unit test";
  save_time_vector(v, dir / "v.st");
  const auto raw = load_checkpoint(dir / "v.st");
  EXPECT_EQ(raw.metadata.at("chronovec.role"), "time_vector");
  EXPECT_EQ(raw.metadata.at("chronovec.base_fingerprint"), fingerprint(t.base).hex);
  const auto back = load_time_vector(dir / "v.st");
  EXPECT_EQ(back.delta.tensors, v.delta.tensors);
  EXPECT_EQ(back.base, v.base);
  EXPECT_EQ(back.period, v.period);
  EXPECT_EQ(back.provenance, v.provenance);

  write_checkpoint(t.base, dir / "model.st");
  EXPECT_THROW(load_time_vector(dir / "model.st"), Error);
}
