#pragma once

#include "dnaadv/trainable.hpp"

namespace dnaadv {

/// Token embeddings, mean pooling, one tanh hidden layer, softmax output.
///
/// Parameter layout in params(): embedding table (V x E), W1 (H x E), b1 (H),
/// W2 (C x H), b2 (C), then the optional anomaly head a (H), c (1). All
/// matrices are row-major.
class EmbeddingMlp final : public TrainableModel {
 public:
  EmbeddingMlp(Tokenizer tokenizer, std::size_t embed_dim, std::size_t hidden_dim, int num_classes,
               std::size_t max_tokens = 256);

  /// Reserved-token rows start at zero so masking removes a token's
  /// contribution instead of injecting noise.
  void initialize(std::uint64_t seed);

  ModelKind kind() const override { return ModelKind::EmbeddingMlp; }
  ModelSpec spec() const override;
  std::unique_ptr<TrainableModel> clone() const override;

  int num_classes() const override { return num_classes_; }
  const Tokenizer& tokenizer() const override { return tokenizer_; }
  std::size_t embedding_dim() const override { return embed_dim_; }
  std::size_t hidden_dim() const noexcept { return hidden_dim_; }
  std::size_t vocab_size() const noexcept { return vocab_; }
  Matrix token_embeddings() const override;
  Matrix embed_tokens(const TokenizedSeq& ts) const override;

  ExampleGrad backward(const TokenizedSeq& ts, const Matrix* delta, int label, double scale,
                       std::span<double> grad, const AuxTarget* aux = nullptr) const override;
  void enable_aux_head() override;
  double aux_probability(const DnaSequence& s) const override;

  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  struct View {
    Eigen::Map<RowMajor> table, w1, w2;
    Eigen::Map<Vector> b1, b2;
  };
  struct ConstView {
    Eigen::Map<const RowMajor> table, w1, w2;
    Eigen::Map<const Vector> b1, b2;
  };
  View view(std::span<double> flat) const;
  ConstView view() const;

  /// Offsets of each tensor in params(), in layout order.
  struct Layout {
    std::size_t table, w1, b1, w2, b2, aux, total;
  };
  Layout layout() const noexcept;

 protected:
  std::vector<Probs> predict_batch(std::span<const DnaSequence> batch) const override;
  LossGrad loss_and_grad_impl(const Matrix& embeddings, int label) const override;
  Probs classify_impl(const Matrix& embeddings) const override;

 private:
  struct Forward {
    Vector pooled, hidden, logits;
  };
  Forward forward(const Matrix& x) const;
  Vector pool_tokens(const TokenizedSeq& ts) const;

  Tokenizer tokenizer_;
  std::size_t vocab_;
  std::size_t embed_dim_;
  std::size_t hidden_dim_;
  int num_classes_;
};

}  // namespace dnaadv
