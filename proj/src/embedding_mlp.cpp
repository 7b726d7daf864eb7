#include "dnaadv/embedding_mlp.hpp"

#include <cmath>

#include "dnaadv/error.hpp"
#include "dnaadv/random.hpp"

namespace dnaadv {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double cross_entropy(const Vector& logits, int label) {
  const double m = logits.maxCoeff();
  return m + std::log((logits.array() - m).exp().sum()) - logits[label];
}

}  // namespace

EmbeddingMlp::EmbeddingMlp(Tokenizer tokenizer, std::size_t embed_dim, std::size_t hidden_dim, int num_classes,
                           std::size_t max_tokens)
    : tokenizer_(std::move(tokenizer)),
      vocab_(tokenizer_.vocab().size()),
      embed_dim_(embed_dim),
      hidden_dim_(hidden_dim),
      num_classes_(num_classes) {
  if (embed_dim == 0 || hidden_dim == 0) throw Error(ErrorKind::InvalidConfig, "zero model dimension");
  max_tokens_ = max_tokens;
  params_.assign(layout().total, 0.0);
}

EmbeddingMlp::Layout EmbeddingMlp::layout() const noexcept {
  Layout l{};
  const std::size_t c = static_cast<std::size_t>(num_classes_);
  l.table = 0;
  l.w1 = l.table + vocab_ * embed_dim_;
  l.b1 = l.w1 + hidden_dim_ * embed_dim_;
  l.w2 = l.b1 + hidden_dim_;
  l.b2 = l.w2 + c * hidden_dim_;
  l.aux = l.b2 + c;
  l.total = l.aux + (aux_head_ ? hidden_dim_ + 1 : 0);
  return l;
}

void EmbeddingMlp::initialize(std::uint64_t seed) {
  Rng rng(seed);
  const Layout l = layout();
  std::fill(params_.begin(), params_.end(), 0.0);
  for (std::size_t v = Vocab::kReserved; v < vocab_; ++v) {
    for (std::size_t e = 0; e < embed_dim_; ++e) params_[l.table + v * embed_dim_ + e] = 0.5 * rng.normal();
  }
  const double s1 = 1.0 / std::sqrt(static_cast<double>(embed_dim_));
  for (std::size_t i = 0; i < hidden_dim_ * embed_dim_; ++i) params_[l.w1 + i] = s1 * rng.normal();
  const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden_dim_));
  for (std::size_t i = 0; i < hidden_dim_ * static_cast<std::size_t>(num_classes_); ++i) {
    params_[l.w2 + i] = s2 * rng.normal();
  }
}

ModelSpec EmbeddingMlp::spec() const {
  ModelSpec s;
  s.kind = ModelKind::EmbeddingMlp;
  s.num_classes = num_classes_;
  s.tokenizer = tokenizer_.spec();
  s.embed_dim = embed_dim_;
  s.hidden_dim = hidden_dim_;
  return s;
}

std::unique_ptr<TrainableModel> EmbeddingMlp::clone() const { return std::make_unique<EmbeddingMlp>(*this); }

EmbeddingMlp::View EmbeddingMlp::view(std::span<double> flat) const {
  const Layout l = layout();
  const auto v = static_cast<Eigen::Index>(vocab_);
  const auto e = static_cast<Eigen::Index>(embed_dim_);
  const auto h = static_cast<Eigen::Index>(hidden_dim_);
  const auto c = static_cast<Eigen::Index>(num_classes_);
  double* p = flat.data();
  return View{Eigen::Map<RowMajor>(p + l.table, v, e), Eigen::Map<RowMajor>(p + l.w1, h, e),
              Eigen::Map<RowMajor>(p + l.w2, c, h), Eigen::Map<Vector>(p + l.b1, h),
              Eigen::Map<Vector>(p + l.b2, c)};
}

EmbeddingMlp::ConstView EmbeddingMlp::view() const {
  const Layout l = layout();
  const auto v = static_cast<Eigen::Index>(vocab_);
  const auto e = static_cast<Eigen::Index>(embed_dim_);
  const auto h = static_cast<Eigen::Index>(hidden_dim_);
  const auto c = static_cast<Eigen::Index>(num_classes_);
  const double* p = params_.data();
  return ConstView{Eigen::Map<const RowMajor>(p + l.table, v, e), Eigen::Map<const RowMajor>(p + l.w1, h, e),
                   Eigen::Map<const RowMajor>(p + l.w2, c, h), Eigen::Map<const Vector>(p + l.b1, h),
                   Eigen::Map<const Vector>(p + l.b2, c)};
}

Matrix EmbeddingMlp::token_embeddings() const { return view().table; }

Matrix EmbeddingMlp::embed_tokens(const TokenizedSeq& ts) const {
  const auto table = view().table;
  Matrix x(static_cast<Eigen::Index>(ts.ids.size()), static_cast<Eigen::Index>(embed_dim_));
  for (std::size_t t = 0; t < ts.ids.size(); ++t) x.row(static_cast<Eigen::Index>(t)) = table.row(ts.ids[t]);
  return x;
}

Vector EmbeddingMlp::pool_tokens(const TokenizedSeq& ts) const {
  const auto table = view().table;
  Vector u = Vector::Zero(static_cast<Eigen::Index>(embed_dim_));
  for (int id : ts.ids) u += table.row(id).transpose();
  if (!ts.ids.empty()) u /= static_cast<double>(ts.ids.size());
  return u;
}

EmbeddingMlp::Forward EmbeddingMlp::forward(const Matrix& x) const {
  Forward f;
  f.pooled = x.colwise().mean().transpose();
  const auto v = view();
  f.hidden = (v.w1 * f.pooled + v.b1).array().tanh().matrix();
  f.logits = v.w2 * f.hidden + v.b2;
  return f;
}

std::vector<Probs> EmbeddingMlp::predict_batch(std::span<const DnaSequence> batch) const {
  const auto v = view();
  std::vector<Probs> out;
  out.reserve(batch.size());
  for (const auto& s : batch) {
    const Vector u = pool_tokens(truncate(tokenizer_.tokenize(s)));
    const Vector h = (v.w1 * u + v.b1).array().tanh().matrix();
    Vector z = v.w2 * h + v.b2;
    softmax_inplace(z);
    out.emplace_back(z.data(), z.data() + z.size());
  }
  return out;
}

Probs EmbeddingMlp::classify_impl(const Matrix& x) const {
  Vector z = forward(x).logits;
  softmax_inplace(z);
  return Probs(z.data(), z.data() + z.size());
}

LossGrad EmbeddingMlp::loss_and_grad_impl(const Matrix& x, int label) const {
  Forward f = forward(x);
  LossGrad out;
  out.loss = cross_entropy(f.logits, label);
  softmax_inplace(f.logits);
  out.probs.assign(f.logits.data(), f.logits.data() + f.logits.size());
  Vector dz = f.logits;
  dz[label] -= 1.0;
  const auto v = view();
  const Vector dpre = ((v.w2.transpose() * dz).array() * (1.0 - f.hidden.array().square())).matrix();
  const Vector du = v.w1.transpose() * dpre / static_cast<double>(x.rows());
  out.grad = du.transpose().replicate(x.rows(), 1);
  return out;
}

ExampleGrad EmbeddingMlp::backward(const TokenizedSeq& raw, const Matrix* delta, int label, double scale,
                                   std::span<double> grad, const AuxTarget* aux) const {
  if (grad.size() != params_.size()) throw Error(ErrorKind::ShapeMismatch, "gradient buffer size");
  const TokenizedSeq ts = truncate(raw);
  const auto v = view();
  const double inv_t = 1.0 / static_cast<double>(ts.ids.size());
  Vector u;
  if (delta != nullptr) {
    if (delta->rows() != static_cast<Eigen::Index>(ts.ids.size()) ||
        delta->cols() != static_cast<Eigen::Index>(embed_dim_)) {
      throw Error(ErrorKind::ShapeMismatch, "delta shape");
    }
    u = (embed_tokens(ts) + *delta).colwise().mean().transpose();
  } else {
    u = pool_tokens(ts);
  }
  const Vector h = (v.w1 * u + v.b1).array().tanh().matrix();
  Vector z = v.w2 * h + v.b2;
  ExampleGrad out;
  out.loss = cross_entropy(z, label);
  softmax_inplace(z);
  out.probs.assign(z.data(), z.data() + z.size());
  Vector dz = z;
  dz[label] -= 1.0;

  View g = view(grad);
  g.w2.noalias() += scale * dz * h.transpose();
  g.b2 += scale * dz;
  Vector dh = v.w2.transpose() * dz;
  if (aux != nullptr) {
    if (!aux_head_) throw Error(ErrorKind::InvalidConfig, "model has no anomaly head");
    const std::size_t off = layout().aux;
    const auto hd = static_cast<Eigen::Index>(hidden_dim_);
    Eigen::Map<const Vector> a(params_.data() + off, hd);
    const double q = sigmoid(a.dot(h) + params_[off + hidden_dim_]);
    const double ga = aux->weight * (q - aux->target);
    Eigen::Map<Vector>(grad.data() + off, hd) += scale * ga * h;
    grad[off + hidden_dim_] += scale * ga;
    dh += ga * a;
  }
  const Vector dpre = (dh.array() * (1.0 - h.array().square())).matrix();
  g.w1.noalias() += scale * dpre * u.transpose();
  g.b1 += scale * dpre;
  const Vector du = v.w1.transpose() * dpre;
  const Vector row_grad = du * inv_t;
  for (int id : ts.ids) g.table.row(id) += scale * row_grad.transpose();
  if (delta != nullptr) out.emb_grad = row_grad.transpose().replicate(delta->rows(), 1);
  return out;
}

void EmbeddingMlp::enable_aux_head() {
  if (aux_head_) return;
  aux_head_ = true;
  params_.resize(layout().total, 0.0);
}

double EmbeddingMlp::aux_probability(const DnaSequence& s) const {
  if (!aux_head_) throw Error(ErrorKind::InvalidConfig, "model has no anomaly head");
  const auto v = view();
  const Vector u = pool_tokens(truncate(tokenizer_.tokenize(s)));
  const Vector h = (v.w1 * u + v.b1).array().tanh().matrix();
  const std::size_t off = layout().aux;
  Eigen::Map<const Vector> a(params_.data() + off, static_cast<Eigen::Index>(hidden_dim_));
  return sigmoid(a.dot(h) + params_[off + hidden_dim_]);
}

}  // namespace dnaadv
