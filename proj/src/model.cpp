#include "dnaadv/model.hpp"

#include <algorithm>
#include <cmath>

#include "dnaadv/embedding_mlp.hpp"
#include "dnaadv/error.hpp"
#include "dnaadv/random.hpp"
#include "dnaadv/kmer_logreg.hpp"
#include "dnaadv/trainable.hpp"

namespace dnaadv {

int argmax(std::span<const double> probs) {
  int best = 0;
  for (std::size_t i = 1; i < probs.size(); ++i) {
    if (probs[i] > probs[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

void softmax_inplace(Vector& logits) {
  const double m = logits.maxCoeff();
  logits = (logits.array() - m).exp();
  logits /= logits.sum();
}

std::vector<Probs> ProbOracle::predict(std::span<const DnaSequence> batch) const {
  count_queries(batch.size());
  return predict_batch(batch);
}

Probs ProbOracle::predict_one(const DnaSequence& s) const {
  return predict(std::span<const DnaSequence>(&s, 1)).front();
}

LossGrad GradOracle::loss_and_grad(const Matrix& embeddings, int label) const {
  if (static_cast<std::size_t>(embeddings.cols()) != embedding_dim() || embeddings.rows() == 0) {
    throw Error(ErrorKind::ShapeMismatch, "embeddings must be tokens x " + std::to_string(embedding_dim()));
  }
  if (label < 0 || label >= num_classes()) throw Error(ErrorKind::LabelOutOfRange, std::to_string(label));
  count_queries(1);
  return loss_and_grad_impl(embeddings, label);
}

Probs GradOracle::classify_from_embeddings(const Matrix& embeddings) const {
  if (static_cast<std::size_t>(embeddings.cols()) != embedding_dim() || embeddings.rows() == 0) {
    throw Error(ErrorKind::ShapeMismatch, "embeddings must be tokens x " + std::to_string(embedding_dim()));
  }
  count_queries(1);
  return classify_impl(embeddings);
}

Vector FeatureOracle::features_of(const DnaSequence& s) const { return kmer_features(s, feature_k()); }

Vector kmer_features(const DnaSequence& s, std::size_t k) {
  std::size_t dim = 1;
  for (std::size_t i = 0; i < k; ++i) dim *= 4;
  Vector f = Vector::Zero(static_cast<Eigen::Index>(dim));
  if (s.size() < k) throw Error(ErrorKind::SequenceTooShort, "sequence shorter than k");
  const std::size_t windows = s.size() - k + 1;
  const std::string& text = s.str();
  for (std::size_t b = 0; b < windows; ++b) {
    std::size_t code = 0;
    bool ok = true;
    for (std::size_t i = 0; i < k; ++i) {
      const int v = nucleotide_index(text[b + i]);
      if (v < 0) {
        ok = false;
        break;
      }
      code = code * 4 + static_cast<std::size_t>(v);
    }
    if (ok) f[static_cast<Eigen::Index>(code)] += 1.0;
  }
  f /= static_cast<double>(windows);
  return f;
}

std::string to_string(ModelKind kind) {
  return kind == ModelKind::KmerLogReg ? "kmer-logreg" : "embedding-mlp";
}

ModelKind parse_model_kind(std::string_view text) {
  if (text == "kmer-logreg") return ModelKind::KmerLogReg;
  if (text == "embedding-mlp") return ModelKind::EmbeddingMlp;
  throw Error(ErrorKind::InvalidConfig, "unknown model kind '" + std::string(text) +
                                            "' (expected kmer-logreg or embedding-mlp)");
}

TokenizedSeq TrainableModel::truncate(TokenizedSeq ts) const {
  if (ts.ids.size() > max_tokens_) {
    ts.ids.resize(max_tokens_);
    ts.spans.resize(max_tokens_);
  }
  return ts;
}

std::unique_ptr<TrainableModel> make_model(const ModelSpec& spec, std::size_t max_tokens, std::uint64_t seed) {
  if (spec.num_classes < 2) throw Error(ErrorKind::InvalidConfig, "need at least two classes");
  if (spec.kind == ModelKind::KmerLogReg) {
    auto m = std::make_unique<KmerLogReg>(spec.k, spec.num_classes, max_tokens);
    Rng rng(seed);
    // Small random weights: an untrained model predicts near-uniformly but
    // not identically across inputs.
    for (std::size_t i = 0; i < m->feature_count() * static_cast<std::size_t>(spec.num_classes); ++i) {
      m->params()[i] = 0.01 * rng.normal();
    }
    return m;
  }
  auto m = std::make_unique<EmbeddingMlp>(Tokenizer::from_spec(spec.tokenizer), spec.embed_dim, spec.hidden_dim,
                                          spec.num_classes, max_tokens);
  m->initialize(seed);
  return m;
}

}  // namespace dnaadv
