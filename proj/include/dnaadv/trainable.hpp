#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dnaadv/model.hpp"

namespace dnaadv {

enum class ModelKind { KmerLogReg, EmbeddingMlp };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view text);

/// Architecture description. `k` applies to KmerLogReg; `tokenizer`,
/// `embed_dim` and `hidden_dim` to EmbeddingMlp.
struct ModelSpec {
  ModelKind kind = ModelKind::EmbeddingMlp;
  int num_classes = 2;
  std::size_t k = 4;
  std::string tokenizer = "kmer:4:1";
  std::size_t embed_dim = 16;
  std::size_t hidden_dim = 32;
};

/// Target for the optional binary anomaly head (clean = 0, randomized = 1).
struct AuxTarget {
  double target = 0.0;
  double weight = 1.0;
};

struct ExampleGrad {
  double loss = 0.0;  // main cross-entropy, excluding the auxiliary term
  Matrix emb_grad;    // dLoss/dEmbeddings (only filled when a delta was given)
  Probs probs;
};

/// Built-in model with a flat parameter vector and an analytic backward pass.
class TrainableModel : public GradOracle {
 public:
  virtual ModelKind kind() const = 0;
  virtual ModelSpec spec() const = 0;
  virtual std::unique_ptr<TrainableModel> clone() const = 0;

  std::vector<double>& params() noexcept { return params_; }
  const std::vector<double>& params() const noexcept { return params_; }

  std::size_t max_tokens() const noexcept { return max_tokens_; }
  void set_max_tokens(std::size_t n) noexcept { max_tokens_ = n; }

  TokenizedSeq truncate(TokenizedSeq ts) const override;

  /// Forward and backward for one example on (embeddings + delta). Adds
  /// scale * dLoss/dParams into `grad`. With `aux`, the anomaly-head loss
  /// (weighted by aux->weight) joins the objective.
  virtual ExampleGrad backward(const TokenizedSeq& ts, const Matrix* delta, int label, double scale,
                               std::span<double> grad, const AuxTarget* aux = nullptr) const = 0;

  /// Adds zero-initialized anomaly-head parameters at the end of params().
  virtual void enable_aux_head() = 0;
  bool has_aux_head() const noexcept { return aux_head_; }
  /// Anomaly-head probability that the input is a randomized variant.
  virtual double aux_probability(const DnaSequence& s) const = 0;

 protected:
  std::vector<double> params_;
  std::size_t max_tokens_ = 256;
  bool aux_head_ = false;
};

std::unique_ptr<TrainableModel> make_model(const ModelSpec& spec, std::size_t max_tokens, std::uint64_t seed);

}  // namespace dnaadv
