#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "chronovec/checkpoint.hpp"

namespace chronovec::toylab {

struct ToyDims {
  int vocab = 64;
  int embed = 16;
  int hidden = 32;
};

// Bigram MLP: logits = out.weight * relu(ff.w1 * embed.weight[prev] + ff.b1) + out.bias.
template <class T>
struct MlpParams {
  ToyDims dims;
  std::vector<T> embed;  // vocab x embed
  std::vector<T> w1;     // hidden x embed
  std::vector<T> b1;     // hidden
  std::vector<T> wout;   // vocab x hidden
  std::vector<T> bout;   // vocab

  static MlpParams zeros(const ToyDims& dims);
  std::size_t size() const { return embed.size() + w1.size() + b1.size() + wout.size() + bout.size(); }
  // Views over the five parameter blocks, in tensor-name order
  // embed.weight, ff.b1, ff.w1, out.bias, out.weight.
  std::vector<std::span<T>> blocks();
};

// Next-token counts grouped by previous token.
struct PairCounts {
  int vocab = 0;
  std::vector<int> prev;                // active previous tokens
  std::vector<std::uint32_t> next;      // prev.size() x vocab
  std::uint64_t total = 0;

  static PairCounts from_sequence(std::span<const std::uint16_t> tokens, int vocab);
  // Pairs (tokens[i], tokens[i + 1]) for the given start indices.
  static PairCounts from_pairs(std::span<const std::uint16_t> tokens, std::span<const std::uint32_t> starts,
                               int vocab);
};

// Mean next-token cross-entropy (nats) over the counted pairs, with F64 loss
// accumulation. When grad is non-null it receives d(loss)/d(params).
template <class T>
double loss_and_gradient(const MlpParams<T>& params, const PairCounts& counts, MlpParams<T>* grad);

extern template struct MlpParams<float>;
extern template struct MlpParams<double>;
extern template double loss_and_gradient<float>(const MlpParams<float>&, const PairCounts&, MlpParams<float>*);
extern template double loss_and_gradient<double>(const MlpParams<double>&, const PairCounts&, MlpParams<double>*);

// Tensor names of the toy model.
namespace names {
inline constexpr const char* kEmbed = "embed.weight";
inline constexpr const char* kW1 = "ff.w1";
inline constexpr const char* kB1 = "ff.b1";
inline constexpr const char* kWout = "out.weight";
inline constexpr const char* kBout = "out.bias";
}  // namespace names

Checkpoint to_checkpoint(const MlpParams<float>& params);
MlpParams<float> from_checkpoint(const Checkpoint& ckpt);
ToyDims dims_of(const Checkpoint& ckpt);

MlpParams<float> init_params(const ToyDims& dims, std::uint64_t seed);

enum class InitMode { Random, FromCheckpoint };

struct TrainSpec {
  double learning_rate = 0.1;
  int epochs = 3;
  std::size_t batch_size = 256;
  std::uint64_t seed = 0;
  InitMode init = InitMode::Random;
  ToyDims dims;  // used for random init
};

// Plain minibatch gradient descent over consecutive token pairs, reshuffled
// every epoch from a seed-derived stream.
Checkpoint train(std::span<const std::uint16_t> corpus, const TrainSpec& spec,
                 const std::optional<Checkpoint>& init_ckpt = std::nullopt);

struct EvalResult {
  double cross_entropy = 0.0;  // nats / token
  double perplexity = 0.0;     // exp(cross_entropy)
};

EvalResult evaluate(const Checkpoint& model, std::span<const std::uint16_t> corpus);
EvalResult evaluate(const MlpParams<float>& model, const PairCounts& counts);

}  // namespace chronovec::toylab
