#include "dnaadv/params.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <mutex>
#include <set>

#include "dnaadv/artifact_store.hpp"
#include "dnaadv/error.hpp"
#include "dnaadv/random.hpp"

namespace dnaadv {

using nlohmann::json;

namespace {

/// Reads typed fields from a JSON object, remembering which keys exist so
/// the leftovers can be reported.
class Fields {
 public:
  Fields(const json& j, std::string what) : j_(j), what_(std::move(what)) {
    if (!j.is_object()) throw Error(ErrorKind::InvalidConfig, what_ + " must be a JSON object");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    known_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw Error(ErrorKind::InvalidConfig, what_ + ": bad value for '" + key + "'");
    }
  }
  bool has(const std::string& key) {
    known_.insert(key);
    return j_.contains(key);
  }
  const json& at(const std::string& key) const { return j_.at(key); }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!known_.count(key)) {
        std::string valid;
        for (const auto& k : known_) valid += (valid.empty() ? "" : ", ") + k;
        throw Error(ErrorKind::UnknownKey, what_ + ": unknown key '" + key + "' (valid: " + valid + ")");
      }
    }
  }

 private:
  const json& j_;
  std::string what_;
  std::set<std::string> known_;
};

template <typename E>
E pick(const std::string& what, const std::string& value, const std::vector<std::pair<std::string, E>>& table) {
  for (const auto& [name, e] : table) {
    if (normalize_id(value) == name) return e;
  }
  std::string valid;
  for (const auto& [name, _] : table) valid += (valid.empty() ? "" : ", ") + name;
  throw Error(ErrorKind::InvalidConfig, what + " '" + value + "' (expected " + valid + ")");
}

const std::vector<std::pair<std::string, AttackMethod>> kAttackTable = {
    {"textfooler", AttackMethod::TextFooler}, {"bertattack", AttackMethod::BertAttack},
    {"pgd", AttackMethod::Pgd},               {"autoattack", AttackMethod::AutoAttack},
    {"universal", AttackMethod::Universal},   {"fimba", AttackMethod::Fimba}};
const std::vector<std::pair<std::string, DefenseMethod>> kDefenseTable = {
    {"at", DefenseMethod::AdversarialTraining}, {"freelb", DefenseMethod::FreeLb}, {"adfar", DefenseMethod::Adfar}};
const std::vector<std::pair<std::string, AttackMode>> kModeTable = {{"untargeted", AttackMode::Untargeted},
                                                                   {"targeted", AttackMode::Targeted}};
const std::vector<std::pair<std::string, PgdNorm>> kNormTable = {{"linf", PgdNorm::Linf}, {"l2", PgdNorm::L2}};
const std::vector<std::pair<std::string, ShapleyMode>> kShapleyTable = {{"exact", ShapleyMode::Exact},
                                                                       {"sampled", ShapleyMode::Sampled}};
const std::vector<std::pair<std::string, TargetPolicy>> kPolicyTable = {
    {"nearest-different-class", TargetPolicy::NearestDifferentClass},
    {"nearest-of-target-class", TargetPolicy::NearestOfTargetClass}};

template <typename E>
std::string name_of(E e, const std::vector<std::pair<std::string, E>>& table) {
  for (const auto& [name, v] : table) {
    if (v == e) return name;
  }
  return "?";
}

void read_pgd(Fields& f, PgdParams& p) {
  f.get("steps", p.steps);
  f.get("alpha", p.alpha);
  f.get("radius", p.epsilon);
  std::string norm = name_of(p.norm, kNormTable);
  f.get("norm", norm);
  p.norm = pick("norm", norm, kNormTable);
  f.get("random_start", p.random_start);
  f.get("early_stop", p.early_stop);
  f.get("round_to_tokens", p.round_to_tokens);
}

json pgd_json(const PgdParams& p) {
  return {{"steps", p.steps},
          {"alpha", p.alpha},
          {"radius", p.epsilon},
          {"norm", name_of(p.norm, kNormTable)},
          {"random_start", p.random_start},
          {"early_stop", p.early_stop},
          {"round_to_tokens", p.round_to_tokens}};
}

void read_schedule(Fields& f, TrainConfig& t) {
  f.get("epochs", t.epochs);
  f.get("batch_size", t.batch_size);
  f.get("max_seq_len", t.max_seq_len);
  f.get("learning_rate", t.learning_rate);
  f.get("warmup_ratio", t.warmup_ratio);
  f.get("grad_accum_steps", t.grad_accum_steps);
  f.get("weight_decay", t.weight_decay);
}

void read_model(Fields& f, TrainSettings& s) {
  std::string kind = to_string(s.spec.kind);
  f.get("model_kind", kind);
  s.spec.kind = parse_model_kind(normalize_id(kind));
  s.train = TrainConfig::desk_scale(s.spec.kind);
  f.get("num_classes", s.spec.num_classes);
  f.get("k", s.spec.k);
  f.get("tokenizer", s.spec.tokenizer);
  f.get("embed_dim", s.spec.embed_dim);
  f.get("hidden_dim", s.spec.hidden_dim);
  read_schedule(f, s.train);
}

/// Candidate language models keyed by tokenizer spec, built on first use.
class CandidateCache {
 public:
  explicit CandidateCache(std::vector<DnaSequence> corpus) : corpus_(std::move(corpus)) {}
  const MarkovCandidateModel& get(const Tokenizer& tok) {
    std::lock_guard lock(mutex_);
    auto it = models_.find(tok.spec());
    if (it == models_.end()) {
      it = models_.emplace(tok.spec(), std::make_unique<MarkovCandidateModel>(corpus_, tok)).first;
    }
    return *it->second;
  }

 private:
  std::vector<DnaSequence> corpus_;
  std::mutex mutex_;
  std::map<std::string, std::unique_ptr<MarkovCandidateModel>> models_;
};

std::vector<DnaSequence> sequences_of(const Dataset& d) {
  std::vector<DnaSequence> out;
  out.reserve(d.size());
  for (const auto& ex : d.examples) out.push_back(ex.sequence);
  return out;
}

}  // namespace

const std::vector<std::string>& attack_method_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& [n, _] : kAttackTable) v.push_back(n);
    return v;
  }();
  return names;
}

const std::vector<std::string>& defense_method_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& [n, _] : kDefenseTable) v.push_back(n);
    return v;
  }();
  return names;
}

std::string to_string(AttackMethod m) { return name_of(m, kAttackTable); }
std::string to_string(DefenseMethod m) { return name_of(m, kDefenseTable); }

std::optional<AttackMethod> find_attack_method(const std::string& name) {
  for (const auto& [n, m] : kAttackTable) {
    if (n == normalize_id(name)) return m;
  }
  return std::nullopt;
}

std::optional<DefenseMethod> find_defense_method(const std::string& name) {
  for (const auto& [n, m] : kDefenseTable) {
    if (n == normalize_id(name)) return m;
  }
  return std::nullopt;
}

AttackSettings parse_attack_settings(AttackMethod method, const json& j) {
  AttackSettings s;
  s.method = method;
  Fields f(j, to_string(method) + " params");
  std::string mode = name_of(s.cfg.mode, kModeTable);
  f.get("mode", mode);
  s.cfg.mode = pick("mode", mode, kModeTable);
  f.get("target", s.cfg.target);
  f.get("epsilon", s.cfg.epsilon);
  f.get("max_queries", s.cfg.max_queries);
  f.get("tokenizer", s.cfg.tokenizer);
  f.get("bpe_candidate_cap", s.cfg.bpe_candidate_cap);
  switch (method) {
    case AttackMethod::TextFooler:
      break;
    case AttackMethod::BertAttack:
      f.get("k", s.bert.k);
      f.get("threshold", s.bert.threshold);
      break;
    case AttackMethod::AutoAttack:
      f.get("long_run_factor", s.long_run_factor);
      [[fallthrough]];
    case AttackMethod::Pgd:
      read_pgd(f, s.pgd);
      s.pgd.validate();
      break;
    case AttackMethod::Universal:
      f.get("bound", s.universal.bound);
      f.get("passes", s.universal.passes);
      f.get("inner_steps", s.universal.inner_steps);
      f.get("alpha", s.universal.alpha);
      f.get("pooled", s.universal.pooled);
      break;
    case AttackMethod::Fimba: {
      f.get("n_features", s.fimba.n_features);
      f.get("alphas", s.fimba.alphas);
      std::string mode_name = name_of(s.fimba.shapley_mode, kShapleyTable);
      f.get("shapley_mode", mode_name);
      s.fimba.shapley_mode = pick("shapley_mode", mode_name, kShapleyTable);
      f.get("shapley_samples", s.fimba.shapley_samples);
      std::string policy = name_of(s.fimba.policy, kPolicyTable);
      f.get("policy", policy);
      s.fimba.policy = pick("policy", policy, kPolicyTable);
      s.fimba.validate();
      break;
    }
  }
  f.finish();
  if (s.long_run_factor < 1) throw Error(ErrorKind::InvalidConfig, "long_run_factor must be >= 1");
  return s;
}

std::vector<std::string> attack_setting_keys(AttackMethod method) {
  // Mirrors the reads in parse_attack_settings.
  std::vector<std::string> keys = {"mode", "target", "epsilon", "max_queries", "tokenizer", "bpe_candidate_cap"};
  const std::vector<std::string> pgd = {"steps", "alpha", "radius", "norm", "random_start", "early_stop",
                                        "round_to_tokens"};
  switch (method) {
    case AttackMethod::TextFooler: break;
    case AttackMethod::BertAttack: keys.insert(keys.end(), {"k", "threshold"}); break;
    case AttackMethod::AutoAttack: keys.push_back("long_run_factor"); [[fallthrough]];
    case AttackMethod::Pgd: keys.insert(keys.end(), pgd.begin(), pgd.end()); break;
    case AttackMethod::Universal: keys.insert(keys.end(), {"bound", "passes", "inner_steps", "alpha", "pooled"}); break;
    case AttackMethod::Fimba:
      keys.insert(keys.end(), {"n_features", "alphas", "shapley_mode", "shapley_samples", "policy"});
      break;
  }
  return keys;
}

json AttackSettings::to_json() const {
  json j{{"mode", name_of(cfg.mode, kModeTable)}, {"target", cfg.target},
         {"epsilon", cfg.epsilon},                {"max_queries", cfg.max_queries},
         {"tokenizer", cfg.tokenizer},            {"bpe_candidate_cap", cfg.bpe_candidate_cap}};
  switch (method) {
    case AttackMethod::TextFooler: break;
    case AttackMethod::BertAttack:
      j["k"] = bert.k;
      j["threshold"] = bert.threshold;
      break;
    case AttackMethod::AutoAttack: j["long_run_factor"] = long_run_factor; [[fallthrough]];
    case AttackMethod::Pgd: j.update(pgd_json(pgd)); break;
    case AttackMethod::Universal:
      j.update(json{{"bound", universal.bound},
                    {"passes", universal.passes},
                    {"inner_steps", universal.inner_steps},
                    {"alpha", universal.alpha},
                    {"pooled", universal.pooled}});
      break;
    case AttackMethod::Fimba:
      j.update(json{{"n_features", fimba.n_features},
                    {"alphas", fimba.alphas},
                    {"shapley_mode", name_of(fimba.shapley_mode, kShapleyTable)},
                    {"shapley_samples", fimba.shapley_samples},
                    {"policy", name_of(fimba.policy, kPolicyTable)}});
      break;
  }
  return j;
}

TrainSettings parse_train_settings(const json& j) {
  TrainSettings s;
  Fields f(j, "train params");
  read_model(f, s);
  f.finish();
  s.train.validate();
  return s;
}

json TrainSettings::to_json() const {
  return {{"model_kind", to_string(spec.kind)},
          {"num_classes", spec.num_classes},
          {"k", spec.k},
          {"tokenizer", spec.tokenizer},
          {"embed_dim", spec.embed_dim},
          {"hidden_dim", spec.hidden_dim},
          {"epochs", train.epochs},
          {"batch_size", train.batch_size},
          {"max_seq_len", train.max_seq_len},
          {"learning_rate", train.learning_rate},
          {"warmup_ratio", train.warmup_ratio},
          {"grad_accum_steps", train.grad_accum_steps},
          {"weight_decay", train.weight_decay}};
}

DefenseSettings parse_defense_settings(DefenseMethod method, const json& j) {
  DefenseSettings s;
  s.method = method;
  Fields f(j, to_string(method) + " params");
  read_model(f, s.model);
  switch (method) {
    case DefenseMethod::AdversarialTraining: {
      f.get("source", s.source);
      s.source = normalize_id(s.source);
      if (s.source != "on-the-fly" && s.source != "records") {
        throw Error(ErrorKind::InvalidConfig, "source '" + s.source + "' (expected on-the-fly or records)");
      }
      std::string attack = "textfooler";
      f.get("attack", attack);
      const auto m = find_attack_method(attack);
      if (!m) throw Error(ErrorKind::InvalidConfig, "unknown attack '" + attack + "'");
      s.attack = parse_attack_settings(*m, f.has("attack_params") ? f.at("attack_params") : json::object());
      f.get("records", s.records);
      std::string rm, ra;
      if (f.has("records_model")) {
        f.get("records_model", rm);
        s.records_model = rm;
      }
      if (f.has("records_attack")) {
        f.get("records_attack", ra);
        s.records_attack = ra;
      }
      f.get("mix_ratio", s.mix_ratio);
      if (s.source == "records" && s.records.empty()) {
        throw Error(ErrorKind::InvalidConfig, "records source needs a 'records' path");
      }
      break;
    }
    case DefenseMethod::FreeLb:
      s.freelb = FreeLbConfig::desk_scale(s.model.spec.kind);
      // The base step is FreeLB's own learning rate.
      s.freelb.base_lr = s.model.train.learning_rate;
      s.freelb.weight_decay = s.model.train.weight_decay;
      s.freelb.grad_accum_steps = s.model.train.grad_accum_steps;
      f.get("adv_lr", s.freelb.adv_lr);
      f.get("adv_magnitude", s.freelb.adv_magnitude);
      f.get("ascent_steps", s.freelb.ascent_steps);
      s.freelb.validate();
      break;
    case DefenseMethod::Adfar:
      f.get("freq_threshold", s.adfar.freq_threshold);
      f.get("samples", s.adfar.samples);
      f.get("features", s.adfar.features);
      f.get("aux_weight", s.adfar.aux_weight);
      s.adfar.validate();
      break;
  }
  f.finish();
  s.model.train.validate();
  return s;
}

json DefenseSettings::to_json() const {
  json j = model.to_json();
  switch (method) {
    case DefenseMethod::AdversarialTraining:
      j["source"] = source;
      j["attack"] = to_string(attack.method);
      j["attack_params"] = attack.to_json();
      j["records"] = records;
      if (records_model) j["records_model"] = *records_model;
      if (records_attack) j["records_attack"] = *records_attack;
      j["mix_ratio"] = mix_ratio;
      break;
    case DefenseMethod::FreeLb:
      j["adv_lr"] = freelb.adv_lr;
      j["adv_magnitude"] = freelb.adv_magnitude;
      j["ascent_steps"] = freelb.ascent_steps;
      break;
    case DefenseMethod::Adfar:
      j["freq_threshold"] = adfar.freq_threshold;
      j["samples"] = adfar.samples;
      j["features"] = adfar.features;
      j["aux_weight"] = adfar.aux_weight;
      break;
  }
  return j;
}

json read_params_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot read params file " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, path.string() + ": " + e.what());
  }
}

AttackFn make_example_attack(const AttackSettings& s, const std::vector<DnaSequence>& corpus) {
  const AttackConfig base = s.cfg;
  switch (s.method) {
    case AttackMethod::TextFooler:
      return [base](const ProbOracle& m, const Example& ex, std::uint64_t seed) {
        AttackConfig c = base;
        c.seed = seed;
        return attack_textfooler(m, ex, c);
      };
    case AttackMethod::BertAttack: {
      auto cache = std::make_shared<CandidateCache>(corpus);
      const BertAttackParams bp = s.bert;
      return [base, bp, cache](const ProbOracle& m, const Example& ex, std::uint64_t seed) {
        AttackConfig c = base;
        c.seed = seed;
        return attack_bertattack(m, cache->get(attack_tokenizer(m, c)), ex, c, bp);
      };
    }
    case AttackMethod::Pgd: {
      const PgdParams pp = s.pgd;
      return [base, pp](const ProbOracle& m, const Example& ex, std::uint64_t seed) {
        AttackConfig c = base;
        c.seed = seed;
        return attack_pgd(m, ex, c, pp);
      };
    }
    case AttackMethod::AutoAttack: {
      const AutoAttackParams ap{s.pgd, s.long_run_factor};
      return [base, ap](const ProbOracle& m, const Example& ex, std::uint64_t seed) {
        AttackConfig c = base;
        c.seed = seed;
        return attack_auto(m, ex, c, ap);
      };
    }
    case AttackMethod::Universal:
    case AttackMethod::Fimba:
      break;
  }
  throw Error(ErrorKind::InvalidConfig, to_string(s.method) + " needs campaign-level preparation");
}

PreparedAttack prepare_attack(const AttackSettings& s, const ProbOracle& oracle, const Dataset& data,
                              std::uint64_t seed, const Dataset* corpus) {
  s.cfg.validate(oracle.num_classes());
  const Dataset& pool_data = corpus ? *corpus : data;
  PreparedAttack out;
  switch (s.method) {
    case AttackMethod::Universal: {
      UniversalParams up = s.universal;
      up.seed = combine_seed(seed, 0x756e6976);
      auto fitted = std::make_shared<UniversalPerturbation>(fit_universal(oracle, data, up));
      out.fooling_rate = fitted->fooling_rate;
      const AttackConfig base = s.cfg;
      out.fn = [fitted, base](const ProbOracle& m, const Example& ex, std::uint64_t example_seed) {
        AttackConfig c = base;
        c.seed = example_seed;
        return apply_universal(m, *fitted, ex, c);
      };
      out.state = fitted;
      return out;
    }
    case AttackMethod::Fimba: {
      const auto* features = dynamic_cast<const FeatureOracle*>(&oracle);
      if (features == nullptr) throw Error(ErrorKind::NoFeatureView, "fimba needs a model with a k-mer feature view");
      auto pool = std::make_shared<TargetPool>(build_target_pool(*features, sequences_of(pool_data)));
      const AttackConfig base = s.cfg;
      FimbaParams fp = s.fimba;
      fp.strict_repair = false;
      out.fn = [pool, base, fp](const ProbOracle& m, const Example& ex, std::uint64_t example_seed) {
        AttackConfig c = base;
        c.seed = example_seed;
        return attack_fimba(m, ex, *pool, c, fp);
      };
      out.state = pool;
      return out;
    }
    default:
      out.fn = make_example_attack(s, sequences_of(pool_data));
      return out;
  }
}

DefenseResult run_defense(const DefenseSettings& s, const Dataset& train, std::uint64_t seed) {
  TrainConfig cfg = s.model.train;
  cfg.seed = seed;
  switch (s.method) {
    case DefenseMethod::AdversarialTraining: {
      AugmentationSource source;
      if (s.source == "records") {
        const auto records = read_records(s.records, RecordFilter{s.records_model, s.records_attack});
        source = AugmentationSource::from_pool(records_as_examples(records), s.mix_ratio);
      } else {
        source = AugmentationSource::on_the_fly(to_string(s.attack.method),
                                                make_example_attack(s.attack, sequences_of(train)), s.mix_ratio);
      }
      DefenseResult r = defend_adversarial_training(s.model.spec, train, source, cfg);
      r.provenance["params"] = s.to_json();
      return r;
    }
    case DefenseMethod::FreeLb: {
      DefenseResult r = defend_freelb(s.model.spec, train, s.freelb, cfg);
      r.provenance["params"] = s.to_json();
      return r;
    }
    case DefenseMethod::Adfar: {
      DefenseResult r = defend_adfar(s.model.spec, train, s.adfar, cfg);
      r.provenance["params"] = s.to_json();
      return r;
    }
  }
  throw Error(ErrorKind::InvalidConfig, "unknown defense");
}

}  // namespace dnaadv
