#include "dnaadv/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <thread>

#include "dnaadv/error.hpp"
#include "dnaadv/random.hpp"
#include "dnaadv/trainer.hpp"

namespace dnaadv {

using nlohmann::json;

double accuracy(const ProbOracle& oracle, const Dataset& data) { return model_accuracy(oracle, data); }

double compute_asr(double a_clean, double a_adv) {
  if (!(a_clean > 0.0)) throw Error(ErrorKind::ZeroCleanAccuracy, "ASR needs a positive clean accuracy");
  // Ratio form: same value as the relative drop, exact on pairs like (0.8, 0.2).
  return 100.0 * (1.0 - a_adv / a_clean);
}

double compute_dsr(double a_def, double a_adv) {
  if (!(a_def > 0.0)) throw Error(ErrorKind::ZeroDefAccuracy, "DSR needs a positive defended accuracy");
  return 100.0 * (a_adv / a_def);
}

json CampaignReport::to_json() const {
  json j{{"model", model},
         {"attack", attack},
         {"dataset", dataset},
         {"a_clean", a_clean},
         {"a_adv", a_adv},
         {"a_def", a_def ? json(*a_def) : json(nullptr)},
         {"asr", asr},
         {"dsr", dsr ? json(*dsr) : json(nullptr)},
         {"dsr_variant", dsr_variant},
         {"records", records},
         {"seed", seed},
         {"wall_time_s", wall_time_s},
         {"examples", examples},
         {"successes", successes},
         {"mean_queries", mean_queries},
         {"mean_token_hamming", mean_token_hamming},
         {"params", params}};
  return j;
}

CampaignReport CampaignReport::from_json(const json& j) {
  CampaignReport r;
  try {
    r.model = j.at("model").get<std::string>();
    r.attack = j.at("attack").get<std::string>();
    r.dataset = j.at("dataset").get<std::string>();
    r.a_clean = j.at("a_clean").get<double>();
    r.a_adv = j.at("a_adv").get<double>();
    if (!j.at("a_def").is_null()) r.a_def = j.at("a_def").get<double>();
    r.asr = j.at("asr").get<double>();
    if (!j.at("dsr").is_null()) r.dsr = j.at("dsr").get<double>();
    r.dsr_variant = j.value("dsr_variant", std::string());
    r.records = j.at("records").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.wall_time_s = j.at("wall_time_s").get<double>();
    r.examples = j.at("examples").get<std::size_t>();
    r.successes = j.at("successes").get<std::size_t>();
    r.mean_queries = j.at("mean_queries").get<double>();
    r.mean_token_hamming = j.at("mean_token_hamming").get<double>();
    r.params = j.value("params", json::object());
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("campaign report: ") + e.what());
  }
  return r;
}

void CampaignReport::check_consistency(double tol) const {
  const auto in_unit = [](double x) { return x >= 0.0 && x <= 1.0; };
  if (!in_unit(a_clean) || !in_unit(a_adv) || (a_def && !in_unit(*a_def))) {
    throw Error(ErrorKind::InvalidRecord, "accuracy outside [0, 1]");
  }
  if (std::abs(compute_asr(a_clean, a_adv) - asr) > tol) throw Error(ErrorKind::InvalidRecord, "ASR not recomputable");
  if (dsr) {
    if (!a_def) throw Error(ErrorKind::InvalidRecord, "DSR without a defended accuracy");
    // The literal variant stores a foreign a_adv, so only the retained-accuracy form is checkable here.
    if (dsr_variant == "defended" && std::abs(compute_dsr(*a_def, a_adv) - *dsr) > tol) {
      throw Error(ErrorKind::InvalidRecord, "DSR not recomputable");
    }
  }
}

void attach_dsr(CampaignReport& r, DsrVariant variant, std::optional<double> undefended_a_adv) {
  r.a_def = r.a_clean;
  if (variant == DsrVariant::Defended) {
    r.dsr = compute_dsr(r.a_clean, r.a_adv);
    r.dsr_variant = "defended";
  } else {
    if (!undefended_a_adv) throw Error(ErrorKind::InvalidConfig, "literal DSR needs the undefended post-attack accuracy");
    r.dsr = compute_dsr(r.a_clean, *undefended_a_adv);
    r.dsr_variant = "literal-undefended";
  }
}

void write_report(const CampaignReport& report, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out << report.to_json().dump(2) << '\n';
  if (!out) throw Error(ErrorKind::IoError, "write failed: " + path.string());
}

CampaignReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot read " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, path.string() + ": " + e.what());
  }
  return CampaignReport::from_json(j);
}

std::string campaign_key(const std::string& model, const std::string& attack, const std::string& dataset,
                         std::uint64_t seed) {
  return normalize_id(model) + "__" + normalize_id(attack) + "__" + normalize_id(dataset) + "__s" +
         std::to_string(seed);
}

CampaignResult run_campaign(const ProbOracle& oracle, const std::string& attack_id, const AttackFn& attack,
                            const Dataset& data, const CampaignConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  check_dataset(data, oracle.num_classes());
  const double a_clean = accuracy(oracle, data);
  if (!(a_clean > 0.0)) throw Error(ErrorKind::ZeroCleanAccuracy, "no example of '" + data.id + "' is classified correctly");

  CampaignResult result;
  result.outcomes.resize(data.size());
  const std::size_t workers = std::clamp<std::size_t>(cfg.workers, 1, data.size());
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(workers);
  const auto work = [&](std::size_t w) {
    try {
      for (std::size_t i = next++; i < data.size(); i = next++) {
        result.outcomes[i] = attack(oracle, data.examples[i], combine_seed(cfg.seed, i));
      }
    } catch (...) {
      errors[w] = std::current_exception();
      next = data.size();
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  CampaignReport& rep = result.report;
  rep.model = normalize_id(cfg.model_id);
  rep.attack = normalize_id(attack_id);
  rep.dataset = cfg.dataset_id.empty() ? data.id : cfg.dataset_id;
  rep.seed = cfg.seed;
  rep.params = cfg.params;
  rep.examples = data.size();
  std::size_t before = 0, after = 0;
  double queries = 0.0, hamming = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto& o = result.outcomes[i];
    o.attack = rep.attack;
    const int y = data.examples[i].label;
    before += o.pred_before == y;
    after += o.pred_after == y;
    rep.successes += o.success;
    queries += static_cast<double>(o.queries);
    hamming += static_cast<double>(o.token_hamming);
    // An attack may only flip correct predictions; a misclassified input stays misclassified.
    if (o.pred_before != y && o.pred_after == y) {
      throw Error(ErrorKind::InvalidRecord, "attack repaired example " + std::to_string(i));
    }
  }
  const double n = static_cast<double>(data.size());
  if (std::abs(static_cast<double>(before) / n - a_clean) > 1e-12) {
    throw Error(ErrorKind::InvalidRecord, "attack clean predictions disagree with the oracle");
  }
  rep.a_clean = a_clean;
  rep.a_adv = static_cast<double>(after) / n;
  if (rep.a_adv > rep.a_clean) throw Error(ErrorKind::InvalidRecord, "post-attack accuracy above clean accuracy");
  rep.asr = compute_asr(rep.a_clean, rep.a_adv);
  rep.mean_queries = queries / n;
  rep.mean_token_hamming = hamming / n;

  if (cfg.store_root) {
    const std::string key = campaign_key(rep.model, rep.attack, rep.dataset, rep.seed);
    const std::string records_rel = "records/" + key + ".jsonl";
    const std::string report_rel = "reports/" + key + ".json";
    std::vector<GenoAdvRecord> records;
    records.reserve(result.outcomes.size());
    for (const auto& o : result.outcomes) records.push_back(GenoAdvRecord::from_outcome(o, rep.model));
    const auto records_path = *cfg.store_root / records_rel;
    std::filesystem::remove(records_path);  // a rerun of the same campaign replaces it
    write_records(records, records_path);
    rep.records = records_path.string();
    rep.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_report(rep, *cfg.store_root / report_rel);
    CampaignEntry entry;
    entry.dataset = rep.dataset;
    entry.records = records_rel;
    entry.report = report_rel;
    entry.params = rep.params;
    entry.seed = rep.seed;
    entry.a_clean = rep.a_clean;
    entry.a_adv = rep.a_adv;
    entry.asr = rep.asr;
    entry.examples = rep.examples;
    ArtifactStore(*cfg.store_root).register_campaign(rep.attack, rep.model, entry);
  } else {
    rep.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
  return result;
}

std::vector<double> tie_averaged_ranks(std::span<const double> asr) {
  std::vector<std::size_t> order(asr.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return asr[a] > asr[b]; });
  std::vector<double> rank(asr.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && asr[order[j]] == asr[order[i]]) ++j;
    // Positions i..j-1 hold ranks i+1..j.
    const double shared = static_cast<double>(i + 1 + j) / 2.0;
    for (std::size_t t = i; t < j; ++t) rank[order[t]] = shared;
    i = j;
  }
  return rank;
}

json RankTable::to_json() const {
  json rows = json::array();
  for (std::size_t a = 0; a < attacks.size(); ++a) {
    json cells = json::object();
    for (std::size_t m = 0; m < models.size(); ++m) cells[models[m]] = {{"asr", asr[a][m]}, {"rank", rank[a][m]}};
    rows.push_back({{"attack", attacks[a]}, {"models", std::move(cells)}});
  }
  json avg = json::object();
  for (std::size_t m = 0; m < models.size(); ++m) avg[models[m]] = average_rank[m];
  return {{"attacks", std::move(rows)}, {"average_rank", std::move(avg)}};
}

RankTable rank_models(const std::map<std::string, std::map<std::string, double>>& cells) {
  RankTable t;
  for (const auto& [attack, row] : cells) {
    for (const auto& [model, _] : row) {
      if (std::find(t.models.begin(), t.models.end(), model) == t.models.end()) t.models.push_back(model);
    }
  }
  std::sort(t.models.begin(), t.models.end());
  t.average_rank.assign(t.models.size(), 0.0);
  for (const auto& [attack, row] : cells) {
    std::vector<double> asr;
    for (const auto& m : t.models) {
      const auto it = row.find(m);
      if (it == row.end()) throw Error(ErrorKind::MissingCell, "model '" + m + "' has no result for '" + attack + "'");
      asr.push_back(it->second);
    }
    t.attacks.push_back(attack);
    t.rank.push_back(tie_averaged_ranks(asr));
    t.asr.push_back(std::move(asr));
    for (std::size_t m = 0; m < t.models.size(); ++m) t.average_rank[m] += t.rank.back()[m];
  }
  if (!t.attacks.empty()) {
    for (double& r : t.average_rank) r /= static_cast<double>(t.attacks.size());
  }
  return t;
}

RankTable rank_models(std::span<const CampaignReport> reports) {
  std::map<std::string, std::map<std::string, std::vector<double>>> grouped;
  for (const auto& r : reports) grouped[normalize_id(r.attack)][normalize_id(r.model)].push_back(r.asr);
  std::map<std::string, std::map<std::string, double>> cells;
  for (const auto& [attack, row] : grouped) {
    for (const auto& [model, values] : row) cells[attack][model] = mean_std(values).mean;
  }
  return rank_models(cells);
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd out;
  if (values.empty()) return out;
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return out;
}

}  // namespace dnaadv
