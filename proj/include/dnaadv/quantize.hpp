#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dnaadv/trainable.hpp"

namespace dnaadv {

/// Per-tensor symmetric int8 tensor: w ~ values * scale.
struct QuantizedTensor {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::int8_t> values;
  double scale = 1.0;
  /// Set for an all-zero source tensor; the scale is then 1.
  bool degenerate = false;

  std::vector<double> dequantize() const;
};

/// scale = max|w| / 127, values = round(w / scale).
QuantizedTensor quantize_tensor(std::span<const double> w, std::size_t rows, std::size_t cols,
                                std::string name = {});

/// Dynamic per-tensor activation quantization.
struct QuantizedActivation {
  std::vector<std::int8_t> values;
  double scale = 1.0;
};
QuantizedActivation quantize_activation(const Vector& x);

/// W8A8 inference copy of a built-in model. Prediction uses only the int8
/// tensors and their scales; the float model is not retained.
class QuantizedModel final : public ProbOracle {
 public:
  static QuantizedModel from(const TrainableModel& model);
  QuantizedModel(ModelSpec spec, std::size_t max_tokens, std::vector<QuantizedTensor> tensors);

  int num_classes() const override { return spec_.num_classes; }
  const Tokenizer* native_tokenizer() const override { return &tokenizer_; }

  const ModelSpec& spec() const noexcept { return spec_; }
  std::size_t max_tokens() const noexcept { return max_tokens_; }
  const std::vector<QuantizedTensor>& tensors() const noexcept { return tensors_; }
  const QuantizedTensor& tensor(std::string_view name) const;
  bool any_degenerate() const;

 protected:
  std::vector<Probs> predict_batch(std::span<const DnaSequence> batch) const override;

 private:
  Vector linear(const QuantizedTensor& w, const QuantizedTensor& b, const Vector& x) const;
  Probs predict_single(const DnaSequence& s) const;

  ModelSpec spec_;
  std::size_t max_tokens_;
  Tokenizer tokenizer_;
  std::vector<QuantizedTensor> tensors_;
};

}  // namespace dnaadv
