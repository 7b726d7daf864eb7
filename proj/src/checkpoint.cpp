#include "dnaadv/checkpoint.hpp"

#include <fstream>

#include "dnaadv/error.hpp"

namespace dnaadv {

using nlohmann::json;

namespace {

json header(const ModelSpec& spec, std::size_t max_tokens, bool aux_head, bool quantized) {
  json j;
  j["format_version"] = kCheckpointFormatVersion;
  j["model_kind"] = to_string(spec.kind);
  j["tokenizer"] = spec.kind == ModelKind::KmerLogReg ? Tokenizer::kmer(spec.k, 1).spec() : spec.tokenizer;
  j["dims"] = {{"num_classes", spec.num_classes}, {"k", spec.k},
               {"embed_dim", spec.embed_dim},     {"hidden_dim", spec.hidden_dim},
               {"max_tokens", max_tokens},        {"aux_head", aux_head}};
  j["weights"] = quantized ? "int8" : "float64";
  return j;
}

void write_json(const json& j, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out << j.dump() << '\n';
  if (!out) throw Error(ErrorKind::IoError, "write failed for " + path.string());
}

ModelSpec spec_from(const json& j, std::size_t& max_tokens, bool& aux_head) {
  ModelSpec spec;
  spec.kind = parse_model_kind(j.at("model_kind").get<std::string>());
  spec.tokenizer = j.at("tokenizer").get<std::string>();
  const json& d = j.at("dims");
  spec.num_classes = d.at("num_classes").get<int>();
  spec.k = d.at("k").get<std::size_t>();
  spec.embed_dim = d.at("embed_dim").get<std::size_t>();
  spec.hidden_dim = d.at("hidden_dim").get<std::size_t>();
  max_tokens = d.at("max_tokens").get<std::size_t>();
  aux_head = d.value("aux_head", false);
  return spec;
}

}  // namespace

void save_model(const TrainableModel& model, const std::filesystem::path& path, const json& provenance) {
  json j = header(model.spec(), model.max_tokens(), model.has_aux_head(), false);
  j["params"] = model.params();
  j["provenance"] = provenance;
  write_json(j, path);
}

void save_quantized(const QuantizedModel& model, const std::filesystem::path& path, const json& provenance) {
  json j = header(model.spec(), model.max_tokens(), false, true);
  json tensors = json::array();
  for (const auto& t : model.tensors()) {
    std::vector<int> values(t.values.begin(), t.values.end());
    tensors.push_back({{"name", t.name},
                       {"rows", t.rows},
                       {"cols", t.cols},
                       {"scale", t.scale},
                       {"degenerate", t.degenerate},
                       {"values", values}});
  }
  j["tensors"] = std::move(tensors);
  j["provenance"] = provenance;
  write_json(j, path);
}

const ProbOracle& LoadedModel::oracle() const {
  if (model) return *model;
  if (quantized) return *quantized;
  throw Error(ErrorKind::NotFound, "empty checkpoint");
}

LoadedModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(1, std::string("checkpoint: ") + e.what());
  }
  LoadedModel out;
  try {
    if (j.at("format_version").get<int>() != kCheckpointFormatVersion) {
      throw Error(ErrorKind::UnsupportedFormat, "checkpoint format_version " + j.at("format_version").dump());
    }
    std::size_t max_tokens = 0;
    bool aux_head = false;
    const ModelSpec spec = spec_from(j, max_tokens, aux_head);
    out.provenance = j.value("provenance", json::object());
    const std::string weights = j.at("weights").get<std::string>();
    if (weights == "float64") {
      out.model = make_model(spec, max_tokens, 0);
      if (aux_head) out.model->enable_aux_head();
      auto params = j.at("params").get<std::vector<double>>();
      if (params.size() != out.model->params().size()) {
        throw Error(ErrorKind::ShapeMismatch, "checkpoint parameter count does not match dims");
      }
      out.model->params() = std::move(params);
    } else if (weights == "int8") {
      std::vector<QuantizedTensor> tensors;
      for (const json& t : j.at("tensors")) {
        QuantizedTensor q;
        q.name = t.at("name").get<std::string>();
        q.rows = t.at("rows").get<std::size_t>();
        q.cols = t.at("cols").get<std::size_t>();
        q.scale = t.at("scale").get<double>();
        q.degenerate = t.at("degenerate").get<bool>();
        for (int v : t.at("values").get<std::vector<int>>()) {
          if (v < -127 || v > 127) throw Error(ErrorKind::InvalidConfig, "int8 value out of range");
          q.values.push_back(static_cast<std::int8_t>(v));
        }
        if (q.values.size() != q.rows * q.cols) throw Error(ErrorKind::ShapeMismatch, "tensor " + q.name);
        tensors.push_back(std::move(q));
      }
      out.quantized = std::make_unique<QuantizedModel>(spec, max_tokens, std::move(tensors));
    } else {
      throw Error(ErrorKind::UnsupportedFormat, "weights encoding " + weights);
    }
  } catch (const json::exception& e) {
    throw ParseError(1, std::string("checkpoint: ") + e.what());
  }
  return out;
}

std::unique_ptr<TrainableModel> load_model(const std::filesystem::path& path) {
  LoadedModel m = load_checkpoint(path);
  if (!m.model) throw Error(ErrorKind::UnsupportedFormat, "expected a float checkpoint: " + path.string());
  return std::move(m.model);
}

}  // namespace dnaadv
