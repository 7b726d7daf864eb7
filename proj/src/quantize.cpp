#include "dnaadv/quantize.hpp"

#include <algorithm>
#include <cmath>

#include "dnaadv/embedding_mlp.hpp"
#include "dnaadv/error.hpp"
#include "dnaadv/kmer_logreg.hpp"

namespace dnaadv {

namespace {

std::int8_t to_int8(double x, double scale) {
  const long v = std::lround(x / scale);
  return static_cast<std::int8_t>(std::clamp(v, -127L, 127L));
}

}  // namespace

std::vector<double> QuantizedTensor::dequantize() const {
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = static_cast<double>(values[i]) * scale;
  return out;
}

QuantizedTensor quantize_tensor(std::span<const double> w, std::size_t rows, std::size_t cols, std::string name) {
  if (rows * cols != w.size()) throw Error(ErrorKind::ShapeMismatch, "tensor size does not match shape");
  QuantizedTensor q;
  q.name = std::move(name);
  q.rows = rows;
  q.cols = cols;
  double max_abs = 0.0;
  for (double x : w) max_abs = std::max(max_abs, std::abs(x));
  if (max_abs == 0.0) {
    q.scale = 1.0;
    q.degenerate = true;
  } else {
    q.scale = max_abs / 127.0;
  }
  q.values.resize(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) q.values[i] = to_int8(w[i], q.scale);
  return q;
}

QuantizedActivation quantize_activation(const Vector& x) {
  QuantizedActivation a;
  const double max_abs = x.size() == 0 ? 0.0 : x.cwiseAbs().maxCoeff();
  a.scale = max_abs == 0.0 ? 1.0 : max_abs / 127.0;
  a.values.resize(static_cast<std::size_t>(x.size()));
  for (Eigen::Index i = 0; i < x.size(); ++i) a.values[static_cast<std::size_t>(i)] = to_int8(x[i], a.scale);
  return a;
}

QuantizedModel QuantizedModel::from(const TrainableModel& model) {
  std::vector<QuantizedTensor> tensors;
  const auto& p = model.params();
  const ModelSpec spec = model.spec();
  const auto c = static_cast<std::size_t>(spec.num_classes);
  if (const auto* lr = dynamic_cast<const KmerLogReg*>(&model)) {
    const std::size_t f = lr->feature_count();
    tensors.push_back(quantize_tensor({p.data(), c * f}, c, f, "W"));
    tensors.push_back(quantize_tensor({p.data() + c * f, c}, c, 1, "b"));
  } else if (const auto* mlp = dynamic_cast<const EmbeddingMlp*>(&model)) {
    const auto l = mlp->layout();
    const std::size_t v = mlp->vocab_size(), e = mlp->embedding_dim(), h = mlp->hidden_dim();
    tensors.push_back(quantize_tensor({p.data() + l.table, v * e}, v, e, "table"));
    tensors.push_back(quantize_tensor({p.data() + l.w1, h * e}, h, e, "W1"));
    tensors.push_back(quantize_tensor({p.data() + l.b1, h}, h, 1, "b1"));
    tensors.push_back(quantize_tensor({p.data() + l.w2, c * h}, c, h, "W2"));
    tensors.push_back(quantize_tensor({p.data() + l.b2, c}, c, 1, "b2"));
  } else {
    throw Error(ErrorKind::InvalidConfig, "unsupported model for quantization");
  }
  return QuantizedModel(spec, model.max_tokens(), std::move(tensors));
}

QuantizedModel::QuantizedModel(ModelSpec spec, std::size_t max_tokens, std::vector<QuantizedTensor> tensors)
    : spec_(std::move(spec)),
      max_tokens_(max_tokens),
      tokenizer_(spec_.kind == ModelKind::KmerLogReg ? Tokenizer::kmer(spec_.k, 1)
                                                     : Tokenizer::from_spec(spec_.tokenizer)),
      tensors_(std::move(tensors)) {
  const bool mlp = spec_.kind == ModelKind::EmbeddingMlp;
  for (const char* name : mlp ? std::vector<const char*>{"table", "W1", "b1", "W2", "b2"}
                              : std::vector<const char*>{"W", "b"}) {
    tensor(name);
  }
}

const QuantizedTensor& QuantizedModel::tensor(std::string_view name) const {
  for (const auto& t : tensors_) {
    if (t.name == name) return t;
  }
  throw Error(ErrorKind::NotFound, "quantized tensor " + std::string(name));
}

bool QuantizedModel::any_degenerate() const {
  return std::any_of(tensors_.begin(), tensors_.end(), [](const QuantizedTensor& t) { return t.degenerate; });
}

// int8 x int8 products accumulate in int32, then one rescale per output.
Vector QuantizedModel::linear(const QuantizedTensor& w, const QuantizedTensor& b, const Vector& x) const {
  if (static_cast<std::size_t>(x.size()) != w.cols) throw Error(ErrorKind::ShapeMismatch, "activation width");
  const QuantizedActivation a = quantize_activation(x);
  Vector out(static_cast<Eigen::Index>(w.rows));
  for (std::size_t r = 0; r < w.rows; ++r) {
    std::int32_t acc = 0;
    const std::int8_t* row = w.values.data() + r * w.cols;
    for (std::size_t j = 0; j < w.cols; ++j) acc += static_cast<std::int32_t>(row[j]) * a.values[j];
    out[static_cast<Eigen::Index>(r)] = static_cast<double>(acc) * w.scale * a.scale + b.values[r] * b.scale;
  }
  return out;
}

Probs QuantizedModel::predict_single(const DnaSequence& s) const {
  TokenizedSeq ts = tokenizer_.tokenize(s);
  if (ts.ids.size() > max_tokens_) {
    ts.ids.resize(max_tokens_);
    ts.spans.resize(max_tokens_);
  }
  Vector z;
  if (spec_.kind == ModelKind::KmerLogReg) {
    const auto& w = tensor("W");
    Vector u = Vector::Zero(static_cast<Eigen::Index>(w.cols));
    for (int id : ts.ids) {
      if (id >= Vocab::kReserved) u[id - Vocab::kReserved] += 1.0;
    }
    if (!ts.ids.empty()) u /= static_cast<double>(ts.ids.size());
    z = linear(w, tensor("b"), u);
  } else {
    const auto& table = tensor("table");
    // Embedding rows are summed in the integer domain before pooling.
    std::vector<std::int32_t> sum(table.cols, 0);
    for (int id : ts.ids) {
      const std::int8_t* row = table.values.data() + static_cast<std::size_t>(id) * table.cols;
      for (std::size_t e = 0; e < table.cols; ++e) sum[e] += row[e];
    }
    Vector pooled(static_cast<Eigen::Index>(table.cols));
    const double n = ts.ids.empty() ? 1.0 : static_cast<double>(ts.ids.size());
    for (std::size_t e = 0; e < table.cols; ++e) pooled[static_cast<Eigen::Index>(e)] = sum[e] * table.scale / n;
    Vector hidden = linear(tensor("W1"), tensor("b1"), pooled).array().tanh().matrix();
    z = linear(tensor("W2"), tensor("b2"), hidden);
  }
  softmax_inplace(z);
  return Probs(z.data(), z.data() + z.size());
}

std::vector<Probs> QuantizedModel::predict_batch(std::span<const DnaSequence> batch) const {
  std::vector<Probs> out;
  out.reserve(batch.size());
  for (const auto& s : batch) out.push_back(predict_single(s));
  return out;
}

}  // namespace dnaadv
