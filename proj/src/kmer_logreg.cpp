#include "dnaadv/kmer_logreg.hpp"

#include <cmath>

#include "dnaadv/error.hpp"

namespace dnaadv {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Cross-entropy from logits, computed via log-sum-exp.
double cross_entropy(const Vector& logits, int label) {
  const double m = logits.maxCoeff();
  return m + std::log((logits.array() - m).exp().sum()) - logits[label];
}

}  // namespace

KmerLogReg::KmerLogReg(std::size_t k, int num_classes, std::size_t max_tokens)
    : k_(k), num_classes_(num_classes), features_(1), tokenizer_(Tokenizer::kmer(k, 1)) {
  for (std::size_t i = 0; i < k; ++i) features_ *= 4;
  params_.assign(features_ * static_cast<std::size_t>(num_classes) + static_cast<std::size_t>(num_classes), 0.0);
  max_tokens_ = max_tokens;
}

ModelSpec KmerLogReg::spec() const {
  ModelSpec s;
  s.kind = ModelKind::KmerLogReg;
  s.num_classes = num_classes_;
  s.k = k_;
  s.tokenizer = tokenizer_.spec();
  return s;
}

std::unique_ptr<TrainableModel> KmerLogReg::clone() const { return std::make_unique<KmerLogReg>(*this); }

Eigen::Map<const RowMajor> KmerLogReg::weights() const {
  return {params_.data(), num_classes_, static_cast<Eigen::Index>(features_)};
}

Eigen::Map<const Vector> KmerLogReg::bias() const {
  return {params_.data() + features_ * static_cast<std::size_t>(num_classes_), num_classes_};
}

Matrix KmerLogReg::token_embeddings() const {
  Matrix table = Matrix::Zero(static_cast<Eigen::Index>(tokenizer_.vocab().size()),
                              static_cast<Eigen::Index>(features_));
  for (std::size_t f = 0; f < features_; ++f) {
    table(static_cast<Eigen::Index>(f) + Vocab::kReserved, static_cast<Eigen::Index>(f)) = 1.0;
  }
  return table;
}

Matrix KmerLogReg::embed_tokens(const TokenizedSeq& ts) const {
  Matrix x = Matrix::Zero(static_cast<Eigen::Index>(ts.ids.size()), static_cast<Eigen::Index>(features_));
  for (std::size_t t = 0; t < ts.ids.size(); ++t) {
    if (ts.ids[t] >= Vocab::kReserved) x(static_cast<Eigen::Index>(t), ts.ids[t] - Vocab::kReserved) = 1.0;
  }
  return x;
}

Vector KmerLogReg::pooled_features(const TokenizedSeq& ts) const {
  Vector u = Vector::Zero(static_cast<Eigen::Index>(features_));
  for (int id : ts.ids) {
    if (id >= Vocab::kReserved) u[id - Vocab::kReserved] += 1.0;
  }
  if (!ts.ids.empty()) u /= static_cast<double>(ts.ids.size());
  return u;
}

Probs KmerLogReg::probs_from_features(const Vector& u) const {
  Vector z = weights() * u + bias();
  softmax_inplace(z);
  return Probs(z.data(), z.data() + z.size());
}

std::vector<Probs> KmerLogReg::predict_batch(std::span<const DnaSequence> batch) const {
  std::vector<Probs> out;
  out.reserve(batch.size());
  for (const auto& s : batch) out.push_back(probs_from_features(pooled_features(truncate(tokenizer_.tokenize(s)))));
  return out;
}

std::vector<Probs> KmerLogReg::predict_features(std::span<const Vector> features) const {
  count_queries(features.size());
  std::vector<Probs> out;
  out.reserve(features.size());
  for (const auto& u : features) {
    if (static_cast<std::size_t>(u.size()) != features_) throw Error(ErrorKind::ShapeMismatch, "feature length");
    out.push_back(probs_from_features(u));
  }
  return out;
}

LossGrad KmerLogReg::loss_and_grad_impl(const Matrix& x, int label) const {
  const Vector u = x.colwise().mean().transpose();
  Vector z = weights() * u + bias();
  LossGrad out;
  out.loss = cross_entropy(z, label);
  softmax_inplace(z);
  out.probs.assign(z.data(), z.data() + z.size());
  Vector dz = z;
  dz[label] -= 1.0;
  const Vector row = weights().transpose() * dz / static_cast<double>(x.rows());
  out.grad = row.transpose().replicate(x.rows(), 1);
  return out;
}

Probs KmerLogReg::classify_impl(const Matrix& x) const {
  return probs_from_features(x.colwise().mean().transpose());
}

ExampleGrad KmerLogReg::backward(const TokenizedSeq& raw, const Matrix* delta, int label, double scale,
                                 std::span<double> grad, const AuxTarget* aux) const {
  if (grad.size() != params_.size()) throw Error(ErrorKind::ShapeMismatch, "gradient buffer size");
  const TokenizedSeq ts = truncate(raw);
  Vector u;
  if (delta != nullptr) {
    if (delta->rows() != static_cast<Eigen::Index>(ts.ids.size()) ||
        delta->cols() != static_cast<Eigen::Index>(features_)) {
      throw Error(ErrorKind::ShapeMismatch, "delta shape");
    }
    u = (embed_tokens(ts) + *delta).colwise().mean().transpose();
  } else {
    u = pooled_features(ts);
  }
  Vector z = weights() * u + bias();
  ExampleGrad out;
  out.loss = cross_entropy(z, label);
  softmax_inplace(z);
  out.probs.assign(z.data(), z.data() + z.size());
  Vector dz = z;
  dz[label] -= 1.0;

  const auto c = static_cast<Eigen::Index>(num_classes_);
  const auto f = static_cast<Eigen::Index>(features_);
  Eigen::Map<RowMajor> gw(grad.data(), c, f);
  Eigen::Map<Vector> gb(grad.data() + c * f, c);
  gw.noalias() += scale * dz * u.transpose();
  gb += scale * dz;
  Vector du = weights().transpose() * dz;

  if (aux != nullptr) {
    if (!aux_head_) throw Error(ErrorKind::InvalidConfig, "model has no anomaly head");
    const std::size_t off = static_cast<std::size_t>(c * f + c);
    Eigen::Map<const Vector> a(params_.data() + off, f);
    const double q = sigmoid(a.dot(u) + params_[off + features_]);
    const double g = aux->weight * (q - aux->target);
    Eigen::Map<Vector>(grad.data() + off, f) += scale * g * u;
    grad[off + features_] += scale * g;
    du += g * a;
  }
  if (delta != nullptr) {
    out.emb_grad = (du / static_cast<double>(ts.ids.size())).transpose().replicate(delta->rows(), 1);
  }
  return out;
}

void KmerLogReg::enable_aux_head() {
  if (aux_head_) return;
  params_.resize(params_.size() + features_ + 1, 0.0);
  aux_head_ = true;
}

double KmerLogReg::aux_probability(const DnaSequence& s) const {
  if (!aux_head_) throw Error(ErrorKind::InvalidConfig, "model has no anomaly head");
  const Vector u = pooled_features(truncate(tokenizer_.tokenize(s)));
  const std::size_t off = features_ * static_cast<std::size_t>(num_classes_) + static_cast<std::size_t>(num_classes_);
  Eigen::Map<const Vector> a(params_.data() + off, static_cast<Eigen::Index>(features_));
  return sigmoid(a.dot(u) + params_[off + features_]);
}

}  // namespace dnaadv
