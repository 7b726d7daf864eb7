#pragma once

#include <atomic>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dnaadv/sequence.hpp"
#include "dnaadv/tokenizer.hpp"

namespace dnaadv {

using Probs = std::vector<double>;
using Matrix = Eigen::MatrixXd;  // rows = tokens, cols = embedding dim
using Vector = Eigen::VectorXd;

/// Index of the largest probability; ties go to the lowest class index.
int argmax(std::span<const double> probs);

void softmax_inplace(Vector& logits);

/// Black-box probability oracle. Every predict call adds its batch size to
/// a monotone, thread-safe query counter.
class ProbOracle {
 public:
  ProbOracle() = default;
  /// Copies start with a fresh query counter.
  ProbOracle(const ProbOracle&) {}
  ProbOracle& operator=(const ProbOracle&) { return *this; }
  virtual ~ProbOracle() = default;

  virtual int num_classes() const = 0;

  std::vector<Probs> predict(std::span<const DnaSequence> batch) const;
  Probs predict_one(const DnaSequence& s) const;

  std::uint64_t queries() const noexcept { return queries_.load(std::memory_order_relaxed); }

  /// Tokenizer the model consumes natively, if it has one. Discrete attacks
  /// default to it.
  virtual const Tokenizer* native_tokenizer() const { return nullptr; }

 protected:
  void count_queries(std::uint64_t n) const { queries_.fetch_add(n, std::memory_order_relaxed); }
  virtual std::vector<Probs> predict_batch(std::span<const DnaSequence> batch) const = 0;

 private:
  mutable std::atomic<std::uint64_t> queries_{0};
};

struct LossGrad {
  double loss = 0.0;
  Matrix grad;  // same shape as the embeddings
  Probs probs;
};

/// Gradient extension. Forward and backward passes through the embedding
/// interface also count as one query each.
class GradOracle : public ProbOracle {
 public:
  virtual const Tokenizer& tokenizer() const = 0;
  virtual std::size_t embedding_dim() const = 0;
  /// Embedding row table used for nearest-token rounding.
  virtual Matrix token_embeddings() const = 0;

  const Tokenizer* native_tokenizer() const override { return &tokenizer(); }

  Matrix embed(const DnaSequence& s) const { return embed_tokens(truncate(tokenizer().tokenize(s))); }
  virtual Matrix embed_tokens(const TokenizedSeq& ts) const = 0;

  LossGrad loss_and_grad(const Matrix& embeddings, int label) const;
  Probs classify_from_embeddings(const Matrix& embeddings) const;

  /// Right-truncates to the model's maximum token count.
  virtual TokenizedSeq truncate(TokenizedSeq ts) const = 0;

 protected:
  virtual LossGrad loss_and_grad_impl(const Matrix& embeddings, int label) const = 0;
  virtual Probs classify_impl(const Matrix& embeddings) const = 0;
};

/// Feature-space view of a model over normalized k-mer count vectors.
class FeatureOracle {
 public:
  virtual ~FeatureOracle() = default;
  virtual std::size_t feature_k() const = 0;
  virtual std::size_t feature_count() const = 0;
  virtual std::vector<Probs> predict_features(std::span<const Vector> features) const = 0;
  Vector features_of(const DnaSequence& s) const;
};

class TrainableModel;

/// Normalized k-mer count vector (counts / window count). Windows that touch
/// a mask symbol are skipped but still count toward the normalizer.
Vector kmer_features(const DnaSequence& s, std::size_t k);

}  // namespace dnaadv
