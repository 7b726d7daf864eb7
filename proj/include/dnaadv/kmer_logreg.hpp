#pragma once

#include "dnaadv/trainable.hpp"

namespace dnaadv {

/// Multinomial logistic regression on normalized k-mer counts.
///
/// Through the gradient interface the "embedding" of a sequence is the
/// one-hot matrix of its k-mer windows (tokens x 4^k); mean pooling of those
/// rows is exactly the normalized count vector, so PGD and FreeLB apply.
class KmerLogReg final : public TrainableModel, public FeatureOracle {
 public:
  KmerLogReg(std::size_t k, int num_classes, std::size_t max_tokens = 256);

  ModelKind kind() const override { return ModelKind::KmerLogReg; }
  ModelSpec spec() const override;
  std::unique_ptr<TrainableModel> clone() const override;

  int num_classes() const override { return num_classes_; }
  const Tokenizer& tokenizer() const override { return tokenizer_; }
  std::size_t embedding_dim() const override { return features_; }
  Matrix token_embeddings() const override;
  Matrix embed_tokens(const TokenizedSeq& ts) const override;

  std::size_t feature_k() const override { return k_; }
  std::size_t feature_count() const override { return features_; }
  std::vector<Probs> predict_features(std::span<const Vector> features) const override;

  ExampleGrad backward(const TokenizedSeq& ts, const Matrix* delta, int label, double scale,
                       std::span<double> grad, const AuxTarget* aux = nullptr) const override;
  void enable_aux_head() override;
  double aux_probability(const DnaSequence& s) const override;

  /// C x 4^k weight view and C bias view over params().
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> weights() const;
  Eigen::Map<const Vector> bias() const;

  Probs probs_from_features(const Vector& u) const;

 protected:
  std::vector<Probs> predict_batch(std::span<const DnaSequence> batch) const override;
  LossGrad loss_and_grad_impl(const Matrix& embeddings, int label) const override;
  Probs classify_impl(const Matrix& embeddings) const override;

 private:
  Vector pooled_features(const TokenizedSeq& ts) const;

  std::size_t k_;
  int num_classes_;
  std::size_t features_;
  Tokenizer tokenizer_;
};

}  // namespace dnaadv
