#include "dnaadv/defense.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dnaadv/error.hpp"

namespace dnaadv {

namespace {

using nlohmann::json;

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Substitution attacks move between tokens one nucleotide apart; these
/// are the "synonyms" randomization may swap in.
bool hamming_one(const std::string& a, const std::string& b) {
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.size() && d < 2; ++i) d += a[i] != b[i];
  return d == 1;
}

bool span_masked(const DnaSequence& s, const Span& sp) {
  return s.str().find('N', sp.begin) < sp.end;
}

std::unique_ptr<TrainableModel> fresh_model(const ModelSpec& spec, const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  check_dataset(data, spec.num_classes);
  return make_model(spec, static_cast<std::size_t>(cfg.max_seq_len), cfg.seed);
}

json train_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},          {"batch_size", c.batch_size},   {"max_seq_len", c.max_seq_len},
          {"learning_rate", c.learning_rate}, {"warmup_ratio", c.warmup_ratio}, {"grad_accum_steps", c.grad_accum_steps},
          {"weight_decay", c.weight_decay}, {"seed", c.seed}};
}

}  // namespace

// ---- configuration -------------------------------------------------------

AugmentationSource AugmentationSource::on_the_fly(std::string name, AttackFn attack, double mix_ratio) {
  AugmentationSource s;
  s.kind = Kind::OnTheFly;
  s.attack_name = std::move(name);
  s.attack = std::move(attack);
  s.mix_ratio = mix_ratio;
  return s;
}

AugmentationSource AugmentationSource::from_pool(std::vector<Example> pool, double mix_ratio) {
  AugmentationSource s;
  s.kind = Kind::Pool;
  s.attack_name = "records";
  s.pool = std::move(pool);
  s.mix_ratio = mix_ratio;
  return s;
}

void AugmentationSource::validate() const {
  if (!(mix_ratio > 0.0 && mix_ratio <= 1.0)) throw Error(ErrorKind::InvalidConfig, "mix_ratio must be in (0,1]");
  if (kind == Kind::OnTheFly && !attack) throw Error(ErrorKind::InvalidConfig, "on-the-fly source needs an attack");
  if (kind == Kind::Pool && pool.empty()) throw Error(ErrorKind::SourceEmpty, "adversarial example pool is empty");
}

void FreeLbConfig::validate() const {
  if (ascent_steps < 1) throw Error(ErrorKind::InvalidConfig, "ascent_steps must be >= 1");
  if (!(adv_lr >= 0.0) || !(adv_magnitude >= 0.0)) {
    throw Error(ErrorKind::InvalidConfig, "adversarial rate and magnitude must be >= 0");
  }
  if (!(base_lr > 0.0)) throw Error(ErrorKind::InvalidConfig, "base_lr must be > 0");
  if (!(weight_decay >= 0.0)) throw Error(ErrorKind::InvalidConfig, "weight_decay must be >= 0");
  if (grad_accum_steps < 1) throw Error(ErrorKind::InvalidConfig, "grad_accum_steps must be >= 1");
}

FreeLbConfig FreeLbConfig::desk_scale(ModelKind kind) {
  FreeLbConfig c;
  c.base_lr = TrainConfig::desk_scale(kind).learning_rate;
  c.weight_decay = 0.0;
  return c;
}

TrainConfig FreeLbConfig::train_config(TrainConfig cfg) const {
  cfg.learning_rate = base_lr;
  cfg.weight_decay = weight_decay;
  cfg.grad_accum_steps = grad_accum_steps;
  return cfg;
}

void AdfarConfig::validate() const {
  if (freq_threshold < 1) throw Error(ErrorKind::InvalidConfig, "freq_threshold must be >= 1");
  if (samples < 1) throw Error(ErrorKind::InvalidConfig, "samples must be >= 1");
  if (features < 0) throw Error(ErrorKind::InvalidConfig, "features must be >= 0");
  if (!(aux_weight >= 0.0)) throw Error(ErrorKind::InvalidConfig, "aux_weight must be >= 0");
}

// ---- frequency table -----------------------------------------------------

FrequencyTable::FrequencyTable(std::string tokenizer_spec, std::map<std::string, std::uint64_t> counts,
                               std::size_t threshold)
    : tokenizer_(std::move(tokenizer_spec)), counts_(std::move(counts)), threshold_(threshold) {
  rebuild();
}

std::uint64_t FrequencyTable::count(const std::string& token) const {
  const auto it = counts_.find(token);
  return it == counts_.end() ? 0 : it->second;
}

void FrequencyTable::set_threshold(std::size_t f) {
  threshold_ = f;
  rebuild();
}

void FrequencyTable::rebuild() {
  frequent_.clear();
  for (const auto& [tok, c] : counts_) {
    if (c >= threshold_) frequent_[tok.size()].push_back(tok);
  }
}

std::vector<std::string> FrequencyTable::rare_set() const {
  std::vector<std::string> out;
  for (const auto& [tok, c] : counts_) {
    if (c < threshold_) out.push_back(tok);
  }
  return out;
}

const std::vector<std::string>& FrequencyTable::frequent_of_length(std::size_t len) const {
  static const std::vector<std::string> none;
  const auto it = frequent_.find(len);
  return it == frequent_.end() ? none : it->second;
}

json FrequencyTable::to_json() const {
  return {{"tokenizer", tokenizer_}, {"threshold", threshold_}, {"counts", counts_}};
}

FrequencyTable FrequencyTable::from_json(const json& j) {
  return FrequencyTable(j.at("tokenizer").get<std::string>(), j.at("counts").get<std::map<std::string, std::uint64_t>>(),
                        j.at("threshold").get<std::size_t>());
}

FrequencyTable build_frequency_table(std::span<const DnaSequence> corpus, const Tokenizer& tok, std::size_t f_thres) {
  std::map<std::string, std::uint64_t> counts;
  for (const auto& s : corpus) {
    const TokenizedSeq ts = tok.tokenize(s);
    for (const Span& sp : ts.spans) {
      if (span_masked(s, sp)) continue;
      ++counts[s.str().substr(sp.begin, sp.length())];
    }
  }
  return FrequencyTable(tok.spec(), std::move(counts), f_thres);
}

DnaSequence randomize_tokens(const DnaSequence& s, const TokenizedSeq& ts, const FrequencyTable& table,
                             int n_features, std::span<const std::size_t> priority, Rng& rng) {
  if (n_features <= 0 || ts.size() == 0) return s;
  const auto piece = [&](std::size_t t) { return s.str().substr(ts.spans[t].begin, ts.spans[t].length()); };
  std::vector<std::size_t> rare;
  for (std::size_t t = 0; t < ts.size(); ++t) {
    if (!span_masked(s, ts.spans[t]) && table.is_rare(piece(t))) rare.push_back(t);
  }
  std::stable_sort(rare.begin(), rare.end(),
                   [&](std::size_t a, std::size_t b) { return table.count(piece(a)) < table.count(piece(b)); });
  std::vector<std::size_t> chosen;
  std::vector<bool> taken(ts.size(), false);
  const auto take = [&](std::size_t t) {
    if (t < ts.size() && !taken[t] && !span_masked(s, ts.spans[t]) &&
        chosen.size() < static_cast<std::size_t>(n_features)) {
      taken[t] = true;
      chosen.push_back(t);
    }
  };
  for (std::size_t t : rare) take(t);
  for (std::size_t t : priority) take(t);

  DnaSequence out = s;
  std::vector<const std::string*> synonyms;
  for (std::size_t t : chosen) {
    const Span sp = ts.spans[t];
    const std::string current = out.str().substr(sp.begin, sp.length());
    synonyms.clear();
    for (const auto& cand : table.frequent_of_length(sp.length())) {
      if (hamming_one(cand, current)) synonyms.push_back(&cand);
    }
    if (synonyms.empty()) continue;
    out = out.with_substring(sp.begin, *synonyms[rng.below(synonyms.size())]);
  }
  return out;
}

// ---- randomized inference ------------------------------------------------

AdfarOracle::AdfarOracle(std::shared_ptr<const TrainableModel> model, FrequencyTable table, AdfarConfig cfg,
                         std::uint64_t seed)
    : model_(std::move(model)), table_(std::move(table)), cfg_(cfg), seed_(seed) {
  cfg_.validate();
  if (table_.tokenizer_spec() != model_->tokenizer().spec()) {
    throw Error(ErrorKind::MixedTokenizers, "frequency table built with " + table_.tokenizer_spec() +
                                                ", model uses " + model_->tokenizer().spec());
  }
}

std::vector<DnaSequence> AdfarOracle::copies(const DnaSequence& s) const {
  const TokenizedSeq ts = model_->truncate(model_->tokenizer().tokenize(s));
  // Inference has no label to rank importance with; random order instead.
  Rng rng(combine_seed(seed_, fnv1a(s.str())));
  std::vector<std::size_t> order(ts.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<DnaSequence> out;
  out.reserve(static_cast<std::size_t>(cfg_.samples));
  for (int i = 0; i < cfg_.samples; ++i) {
    rng.shuffle(std::span<std::size_t>(order));
    out.push_back(randomize_tokens(s, ts, table_, cfg_.features, order, rng));
  }
  return out;
}

std::vector<Probs> AdfarOracle::predict_batch(std::span<const DnaSequence> batch) const {
  std::vector<Probs> out;
  out.reserve(batch.size());
  const auto c = static_cast<std::size_t>(num_classes());
  for (const auto& s : batch) {
    std::vector<DnaSequence> group = copies(s);
    group.push_back(s);
    Probs votes(c, 0.0);
    for (const auto& p : model_->predict(group)) votes[static_cast<std::size_t>(argmax(p))] += 1.0;
    for (double& v : votes) v /= static_cast<double>(group.size());
    out.push_back(std::move(votes));
  }
  return out;
}

// ---- training procedures -------------------------------------------------

const ProbOracle& DefenseResult::oracle() const {
  if (adfar) return *adfar;
  return *model;
}

DefenseResult defend_adversarial_training(const ModelSpec& spec, const Dataset& data, const AugmentationSource& source,
                                          const TrainConfig& cfg) {
  source.validate();
  DefenseResult r;
  r.model = fresh_model(spec, data, cfg);
  Trainer trainer(*r.model, cfg, data.size());
  const std::size_t n = data.size();
  const auto cap = static_cast<std::size_t>(std::ceil(source.mix_ratio * static_cast<double>(n) - 1e-9));
  // Separate stream so the clean shuffling order stays that of plain training.
  Rng pick(combine_seed(cfg.seed, 0x6175676dULL));
  std::vector<std::size_t> order;
  for (int e = 0; e < cfg.epochs; ++e) {
    std::vector<Example> adv;
    if (source.kind == AugmentationSource::Kind::OnTheFly) {
      const std::unique_ptr<TrainableModel> snapshot = r.model->clone();
      order.resize(n);
      std::iota(order.begin(), order.end(), std::size_t{0});
      pick.shuffle(std::span<std::size_t>(order));
      order.resize(std::min(cap, n));
      std::sort(order.begin(), order.end());
      for (std::size_t i : order) {
        const Example& ex = data.examples[i];
        const AttackOutcome o =
            source.attack(*snapshot, ex, combine_seed(cfg.seed + static_cast<std::uint64_t>(e), i));
        if (o.success && o.adversarial != ex.sequence) adv.push_back({o.adversarial, ex.label});
      }
    } else {
      order.resize(source.pool.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      pick.shuffle(std::span<std::size_t>(order));
      order.resize(std::min(cap, order.size()));
      std::sort(order.begin(), order.end());
      for (std::size_t i : order) adv.push_back(source.pool[i]);
    }
    std::vector<Example> epoch = data.examples;
    epoch.insert(epoch.end(), adv.begin(), adv.end());
    r.epoch_losses.push_back(trainer.run_epoch(epoch));
    r.epoch_adversarial.push_back(std::move(adv));
  }
  r.provenance = {{"defense", "at"},
                  {"source", source.kind == AugmentationSource::Kind::OnTheFly ? "on_the_fly" : "records"},
                  {"attack", source.attack_name},
                  {"mix_ratio", source.mix_ratio},
                  {"train", train_json(cfg)}};
  return r;
}

DefenseResult defend_freelb(const ModelSpec& spec, const Dataset& data, const FreeLbConfig& fl, const TrainConfig& base) {
  fl.validate();
  const TrainConfig cfg = fl.train_config(base);
  DefenseResult r;
  r.model = fresh_model(spec, data, cfg);
  if (dynamic_cast<const GradOracle*>(r.model.get()) == nullptr) {
    throw Error(ErrorKind::NoGradientCapability, "FreeLB needs a gradient-capable model");
  }
  Trainer trainer(*r.model, cfg, data.size());
  Rng delta_rng(combine_seed(cfg.seed, 0x66726565ULL));
  const int k_steps = fl.ascent_steps;
  double max_norm = 0.0;

  const ExampleGradFn fn = [&](const TrainableModel& m, const Example& ex, double scale, std::span<double> grad) {
    const TokenizedSeq ts = m.truncate(m.tokenizer().tokenize(ex.sequence));
    const auto rows = static_cast<Eigen::Index>(ts.size());
    const auto cols = static_cast<Eigen::Index>(m.embedding_dim());
    Matrix delta = Matrix::Zero(rows, cols);
    if (fl.adv_magnitude > 0.0) {
      const double r0 = fl.adv_magnitude / std::sqrt(static_cast<double>(rows * cols));
      for (Eigen::Index i = 0; i < delta.size(); ++i) delta.data()[i] = delta_rng.uniform(-r0, r0);
    }
    const double inner_scale = scale / static_cast<double>(k_steps);
    double loss = 0.0;
    for (int k = 0; k < k_steps; ++k) {
      const bool last = k + 1 == k_steps;
      // A zero perturbation on the last step needs no embedding gradient;
      // the plain path keeps the no-adversary case exact.
      const bool zero = last && delta.isZero(0.0);
      const ExampleGrad eg = m.backward(ts, zero ? nullptr : &delta, ex.label, inner_scale, grad);
      loss += eg.loss / static_cast<double>(k_steps);
      if (last) break;
      const double gn = eg.emb_grad.norm();
      if (gn > 0.0) delta += (fl.adv_lr / gn) * eg.emb_grad;
      const double dn = delta.norm();
      if (dn > fl.adv_magnitude) delta *= dn > 0.0 ? fl.adv_magnitude / dn : 0.0;
      max_norm = std::max(max_norm, delta.norm());
    }
    return loss;
  };
  for (int e = 0; e < cfg.epochs; ++e) r.epoch_losses.push_back(trainer.run_epoch(data.examples, fn));
  r.max_delta_norm = max_norm;
  r.provenance = {{"defense", "freelb"},
                  {"adv_lr", fl.adv_lr},
                  {"adv_magnitude", fl.adv_magnitude},
                  {"ascent_steps", fl.ascent_steps},
                  {"train", train_json(cfg)}};
  return r;
}

DefenseResult defend_adfar(const ModelSpec& spec, const Dataset& data, const AdfarConfig& ad, const TrainConfig& cfg) {
  ad.validate();
  DefenseResult r;
  r.model = fresh_model(spec, data, cfg);
  r.model->enable_aux_head();
  std::vector<DnaSequence> corpus;
  corpus.reserve(data.size());
  for (const auto& ex : data.examples) corpus.push_back(ex.sequence);
  const FrequencyTable table = build_frequency_table(corpus, r.model->tokenizer(), ad.freq_threshold);

  Trainer trainer(*r.model, cfg, data.size());
  const std::size_t n = data.size();
  std::vector<Example> epoch;
  const AuxTarget clean_aux{0.0, ad.aux_weight};
  const AuxTarget variant_aux{1.0, ad.aux_weight};
  const ExampleGradFn fn = [&](const TrainableModel& m, const Example& ex, double scale, std::span<double> grad) {
    const auto idx = static_cast<std::size_t>(&ex - epoch.data());
    const AuxTarget& aux = idx < n ? clean_aux : variant_aux;
    return m.backward(m.tokenizer().tokenize(ex.sequence), nullptr, ex.label, scale, grad, &aux).loss;
  };
  for (int e = 0; e < cfg.epochs; ++e) {
    const std::unique_ptr<TrainableModel> snapshot = r.model->clone();
    epoch = data.examples;
    for (std::size_t i = 0; i < n; ++i) {
      const Example& ex = data.examples[i];
      const TokenizedSeq ts = snapshot->truncate(snapshot->tokenizer().tokenize(ex.sequence));
      std::vector<std::size_t> priority;
      if (ad.features > 0) {
        for (const auto& s : rank_token_importance(*snapshot, ts, ex.sequence, ex.label)) priority.push_back(s.index);
      }
      Rng rng(combine_seed(cfg.seed, static_cast<std::uint64_t>(e) * n + i));
      for (int v = 0; v < ad.samples; ++v) {
        epoch.push_back({randomize_tokens(ex.sequence, ts, table, ad.features, priority, rng), ex.label});
      }
    }
    r.epoch_losses.push_back(trainer.run_epoch(epoch, fn));
  }
  std::shared_ptr<const TrainableModel> shared(r.model->clone());
  r.adfar = std::make_unique<AdfarOracle>(shared, table, ad, cfg.seed);
  r.provenance = {{"defense", "adfar"},
                  {"freq_threshold", ad.freq_threshold},
                  {"samples", ad.samples},
                  {"features", ad.features},
                  {"aux_weight", ad.aux_weight},
                  {"vote_seed", cfg.seed},
                  {"frequency", table.to_json()},
                  {"train", train_json(cfg)}};
  return r;
}

void save_defended(const DefenseResult& result, const std::filesystem::path& path) {
  save_model(*result.model, path, result.provenance);
}

const ProbOracle& DefendedOracle::oracle() const {
  if (adfar) return *adfar;
  return loaded.oracle();
}

DefendedOracle load_defended(const std::filesystem::path& path) {
  DefendedOracle d;
  d.loaded = load_checkpoint(path);
  const json& p = d.loaded.provenance;
  if (p.is_object() && p.value("defense", std::string()) == "adfar") {
    if (!d.loaded.model) throw Error(ErrorKind::UnsupportedFormat, "ADFAR checkpoint must hold float weights");
    AdfarConfig ad;
    try {
      ad.freq_threshold = p.at("freq_threshold").get<std::size_t>();
      ad.samples = p.at("samples").get<int>();
      ad.features = p.at("features").get<int>();
      ad.aux_weight = p.at("aux_weight").get<double>();
      d.shared = std::shared_ptr<const TrainableModel>(d.loaded.model->clone());
      d.adfar = std::make_unique<AdfarOracle>(d.shared, FrequencyTable::from_json(p.at("frequency")), ad,
                                              p.at("vote_seed").get<std::uint64_t>());
    } catch (const json::exception& e) {
      throw Error(ErrorKind::ParseError, std::string("ADFAR provenance: ") + e.what());
    }
  }
  return d;
}

}  // namespace dnaadv
