#include "chronovec/toylab/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "chronovec/error.hpp"
#include "chronovec/toylab/rng.hpp"

namespace chronovec::toylab {

template <class T>
MlpParams<T> MlpParams<T>::zeros(const ToyDims& dims) {
  MlpParams<T> p;
  p.dims = dims;
  const auto v = static_cast<std::size_t>(dims.vocab);
  const auto d = static_cast<std::size_t>(dims.embed);
  const auto h = static_cast<std::size_t>(dims.hidden);
  p.embed.assign(v * d, T(0));
  p.w1.assign(h * d, T(0));
  p.b1.assign(h, T(0));
  p.wout.assign(v * h, T(0));
  p.bout.assign(v, T(0));
  return p;
}

template <class T>
std::vector<std::span<T>> MlpParams<T>::blocks() {
  return {std::span<T>(embed), std::span<T>(b1), std::span<T>(w1), std::span<T>(bout), std::span<T>(wout)};
}

template struct MlpParams<float>;
template struct MlpParams<double>;

PairCounts PairCounts::from_sequence(std::span<const std::uint16_t> tokens, int vocab) {
  std::vector<std::uint32_t> starts(tokens.size() > 1 ? tokens.size() - 1 : 0);
  std::iota(starts.begin(), starts.end(), 0u);
  return from_pairs(tokens, starts, vocab);
}

PairCounts PairCounts::from_pairs(std::span<const std::uint16_t> tokens, std::span<const std::uint32_t> starts,
                                  int vocab) {
  const auto v = static_cast<std::size_t>(vocab);
  std::vector<std::uint32_t> dense(v * v, 0);
  std::vector<char> active(v, 0);
  for (auto s : starts) {
    const auto prev = tokens[s];
    const auto next = tokens[s + 1];
    if (prev >= vocab || next >= vocab) throw Error("token outside the model vocabulary");
    ++dense[prev * v + next];
    active[prev] = 1;
  }
  PairCounts pc;
  pc.vocab = vocab;
  pc.total = starts.size();
  for (std::size_t p = 0; p < v; ++p) {
    if (!active[p]) continue;
    pc.prev.push_back(static_cast<int>(p));
    pc.next.insert(pc.next.end(), dense.begin() + static_cast<std::ptrdiff_t>(p * v),
                   dense.begin() + static_cast<std::ptrdiff_t>((p + 1) * v));
  }
  return pc;
}

template <class T>
double loss_and_gradient(const MlpParams<T>& params, const PairCounts& counts, MlpParams<T>* grad) {
  const auto v = static_cast<std::size_t>(params.dims.vocab);
  const auto d = static_cast<std::size_t>(params.dims.embed);
  const auto h = static_cast<std::size_t>(params.dims.hidden);
  if (counts.vocab != params.dims.vocab) throw Error("pair counts and model disagree on vocabulary size");
  if (counts.total == 0) throw Error("no token pairs to evaluate");
  if (grad) *grad = MlpParams<T>::zeros(params.dims);

  const double inv_total = 1.0 / static_cast<double>(counts.total);
  std::vector<T> z(h), a(h), logits(v), g(v), ga(h);
  double loss = 0.0;

  for (std::size_t r = 0; r < counts.prev.size(); ++r) {
    const auto p = static_cast<std::size_t>(counts.prev[r]);
    const std::uint32_t* c = counts.next.data() + r * v;
    const T* x = params.embed.data() + p * d;

    for (std::size_t j = 0; j < h; ++j) {
      T s = params.b1[j];
      const T* w = params.w1.data() + j * d;
      for (std::size_t k = 0; k < d; ++k) s += w[k] * x[k];
      z[j] = s;
      a[j] = s > T(0) ? s : T(0);
    }
    double max_logit = -INFINITY;
    for (std::size_t n = 0; n < v; ++n) {
      T s = params.bout[n];
      const T* w = params.wout.data() + n * h;
      for (std::size_t j = 0; j < h; ++j) s += w[j] * a[j];
      logits[n] = s;
      max_logit = std::max(max_logit, static_cast<double>(s));
    }
    double z_sum = 0.0;
    for (std::size_t n = 0; n < v; ++n) z_sum += std::exp(static_cast<double>(logits[n]) - max_logit);
    const double lse = max_logit + std::log(z_sum);

    double row_total = 0.0;
    for (std::size_t n = 0; n < v; ++n) {
      if (c[n]) loss += static_cast<double>(c[n]) * (lse - static_cast<double>(logits[n]));
      row_total += c[n];
    }
    if (!grad) continue;

    for (std::size_t n = 0; n < v; ++n) {
      const double softmax = std::exp(static_cast<double>(logits[n]) - lse);
      g[n] = static_cast<T>((row_total * softmax - static_cast<double>(c[n])) * inv_total);
    }
    std::fill(ga.begin(), ga.end(), T(0));
    for (std::size_t n = 0; n < v; ++n) {
      grad->bout[n] += g[n];
      T* gw = grad->wout.data() + n * h;
      const T* w = params.wout.data() + n * h;
      for (std::size_t j = 0; j < h; ++j) {
        gw[j] += g[n] * a[j];
        ga[j] += g[n] * w[j];
      }
    }
    T* gx = grad->embed.data() + p * d;
    for (std::size_t j = 0; j < h; ++j) {
      if (!(z[j] > T(0))) continue;
      const T gz = ga[j];
      grad->b1[j] += gz;
      T* gw = grad->w1.data() + j * d;
      const T* w = params.w1.data() + j * d;
      for (std::size_t k = 0; k < d; ++k) {
        gw[k] += gz * x[k];
        gx[k] += gz * w[k];
      }
    }
  }
  return loss * inv_total;
}

template double loss_and_gradient<float>(const MlpParams<float>&, const PairCounts&, MlpParams<float>*);
template double loss_and_gradient<double>(const MlpParams<double>&, const PairCounts&, MlpParams<double>*);

Checkpoint to_checkpoint(const MlpParams<float>& params) {
  const std::int64_t v = params.dims.vocab, d = params.dims.embed, h = params.dims.hidden;
  Checkpoint ckpt;
  ckpt.tensors.emplace(names::kEmbed, Tensor::from_f32({v, d}, params.embed));
  ckpt.tensors.emplace(names::kW1, Tensor::from_f32({h, d}, params.w1));
  ckpt.tensors.emplace(names::kB1, Tensor::from_f32({h}, params.b1));
  ckpt.tensors.emplace(names::kWout, Tensor::from_f32({v, h}, params.wout));
  ckpt.tensors.emplace(names::kBout, Tensor::from_f32({v}, params.bout));
  return ckpt;
}

ToyDims dims_of(const Checkpoint& ckpt) {
  for (const char* n : {names::kEmbed, names::kW1, names::kB1, names::kWout, names::kBout}) {
    if (!ckpt.contains(n)) throw Error(std::string("toy model lacks tensor \"") + n + "\"");
  }
  if (ckpt.tensors.size() != 5) throw Error("toy model must hold exactly five tensors");
  const auto& e = ckpt.at(names::kEmbed).shape();
  const auto& w1 = ckpt.at(names::kW1).shape();
  if (e.size() != 2 || w1.size() != 2) throw Error("toy model weights must be matrices");
  ToyDims dims{static_cast<int>(e[0]), static_cast<int>(e[1]), static_cast<int>(w1[0])};
  const std::int64_t v = dims.vocab, d = dims.embed, h = dims.hidden;
  if (w1 != Shape{h, d} || ckpt.at(names::kB1).shape() != Shape{h} || ckpt.at(names::kWout).shape() != Shape{v, h} ||
      ckpt.at(names::kBout).shape() != Shape{v}) {
    throw Error("toy model tensor shapes are inconsistent");
  }
  return dims;
}

MlpParams<float> from_checkpoint(const Checkpoint& ckpt) {
  MlpParams<float> p;
  p.dims = dims_of(ckpt);
  p.embed = ckpt.at(names::kEmbed).to_f32();
  p.w1 = ckpt.at(names::kW1).to_f32();
  p.b1 = ckpt.at(names::kB1).to_f32();
  p.wout = ckpt.at(names::kWout).to_f32();
  p.bout = ckpt.at(names::kBout).to_f32();
  return p;
}

MlpParams<float> init_params(const ToyDims& dims, std::uint64_t seed) {
  if (dims.vocab <= 0 || dims.embed <= 0 || dims.hidden <= 0) throw Error("toy model dimensions must be positive");
  auto p = MlpParams<float>::zeros(dims);
  CounterRng rng(seed, stream_key("init"));
  for (auto& x : p.embed) x = static_cast<float>(rng.normal());
  const double s1 = 1.0 / std::sqrt(static_cast<double>(dims.embed));
  for (auto& x : p.w1) x = static_cast<float>(s1 * rng.normal());
  const double s2 = 1.0 / std::sqrt(static_cast<double>(dims.hidden));
  for (auto& x : p.wout) x = static_cast<float>(s2 * rng.normal());
  return p;
}

Checkpoint train(std::span<const std::uint16_t> corpus, const TrainSpec& spec,
                 const std::optional<Checkpoint>& init_ckpt) {
  if (spec.epochs < 0) throw Error("epochs must be non-negative");
  if (spec.batch_size == 0) throw Error("batch_size must be positive");
  MlpParams<float> params;
  if (spec.init == InitMode::FromCheckpoint) {
    if (!init_ckpt) throw Error("init=from_checkpoint needs an initial checkpoint");
    params = from_checkpoint(*init_ckpt);
  } else {
    if (init_ckpt) throw Error("init=random conflicts with a supplied initial checkpoint");
    params = init_params(spec.dims, spec.seed);
  }
  for (auto t : corpus) {
    if (t >= params.dims.vocab) throw Error("token " + std::to_string(t) + " outside the model vocabulary");
  }
  if (spec.epochs == 0 || corpus.size() < 2) return to_checkpoint(params);

  const std::size_t pairs = corpus.size() - 1;
  std::vector<std::uint32_t> order(pairs);
  MlpParams<float> grad;
  const auto lr = static_cast<float>(spec.learning_rate);
  for (int epoch = 0; epoch < spec.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0u);
    CounterRng rng(spec.seed, stream_key("shuffle", static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = pairs - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);

    for (std::size_t begin = 0, batch = 0; begin < pairs; begin += spec.batch_size, ++batch) {
      const std::size_t end = std::min(pairs, begin + spec.batch_size);
      const auto counts = PairCounts::from_pairs(
          corpus, std::span<const std::uint32_t>(order).subspan(begin, end - begin), params.dims.vocab);
      const double loss = loss_and_gradient(params, counts, &grad);
      if (!std::isfinite(loss)) {
        throw Error("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                    std::to_string(batch) + " (learning rate " + std::to_string(spec.learning_rate) + ")");
      }
      auto pb = params.blocks();
      auto gb = grad.blocks();
      for (std::size_t b = 0; b < pb.size(); ++b) {
        for (std::size_t i = 0; i < pb[b].size(); ++i) pb[b][i] -= lr * gb[b][i];
      }
    }
  }
  return to_checkpoint(params);
}

EvalResult evaluate(const MlpParams<float>& model, const PairCounts& counts) {
  EvalResult r;
  r.cross_entropy = loss_and_gradient<float>(model, counts, nullptr);
  r.perplexity = std::exp(r.cross_entropy);
  return r;
}

EvalResult evaluate(const Checkpoint& model, std::span<const std::uint16_t> corpus) {
  if (corpus.size() < 2) throw Error("evaluation corpus needs at least 2 tokens");
  const auto params = from_checkpoint(model);
  return evaluate(params, PairCounts::from_sequence(corpus, params.dims.vocab));
}

}  // namespace chronovec::toylab
