#include "dnaadv/cli.hpp"

#include <csignal>
#include <iostream>
#include <memory>

#include <CLI11.hpp>
#include <json.hpp>

#include "dnaadv/bridge.hpp"
#include "dnaadv/checkpoint.hpp"
#include "dnaadv/datagen.hpp"
#include "dnaadv/error.hpp"
#include "dnaadv/metrics.hpp"
#include "dnaadv/params.hpp"
#include "dnaadv/viz.hpp"

namespace dnaadv {

namespace {

using nlohmann::json;

constexpr int kOk = 0;
constexpr int kDomainError = 1;
constexpr int kUsageError = 2;

/// Invalid invocation detected after parsing (unknown method, missing
/// input); reported with exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::atomic<bool> g_stop{false};
extern "C" void on_signal(int) { g_stop = true; }

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : ", ") + s;
  return out;
}

struct Globals {
  std::string model;
  std::string endpoint;
  std::string model_name;
  std::string tokenizer;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::string store = "artifacts";
  int num_classes = 2;
};

AttackMethod require_attack(const std::string& name) {
  const auto m = find_attack_method(name);
  if (!m) throw UsageError("unknown attack method '" + name + "'; valid methods: " + join(attack_method_names()));
  return *m;
}

DefenseMethod require_defense(const std::string& name) {
  const auto m = find_defense_method(name);
  if (!m) throw UsageError("unknown defense method '" + name + "'; valid methods: " + join(defense_method_names()));
  return *m;
}

json params_or_empty(const std::string& path) { return path.empty() ? json::object() : read_params_file(path); }

/// The oracle under attack: a checkpoint (defended ones keep their wrapper)
/// or a bridge endpoint.
struct Target {
  DefendedOracle local;
  std::unique_ptr<ExternalOracle> external;
  std::string id;
  const ProbOracle& oracle() const { return external ? static_cast<const ProbOracle&>(*external) : local.oracle(); }
};

Target open_target(const Globals& g) {
  if (g.model.empty() == g.endpoint.empty()) throw UsageError("give exactly one of --model or --endpoint");
  Target t;
  if (!g.endpoint.empty()) {
    BridgeOptions opts;
    opts.num_classes = g.num_classes;
    t.external = connect_external(g.endpoint, opts);
    t.id = g.model_name.empty() ? "external" : g.model_name;
  } else {
    t.local = load_defended(g.model);
    t.id = g.model_name.empty() ? std::filesystem::path(g.model).stem().string() : g.model_name;
  }
  return t;
}

AttackSettings attack_settings(const std::string& method, const std::string& params_file, const Globals& g) {
  AttackSettings s = parse_attack_settings(require_attack(method), params_or_empty(params_file));
  if (!g.tokenizer.empty()) {
    if (!s.cfg.tokenizer.empty() && s.cfg.tokenizer != g.tokenizer) {
      throw UsageError("--tokenizer conflicts with the params file");
    }
    s.cfg.tokenizer = g.tokenizer;
  }
  return s;
}

CampaignResult campaign(const Target& t, const AttackSettings& s, const Dataset& data, const Dataset* corpus,
                        const Globals& g) {
  const PreparedAttack prepared = prepare_attack(s, t.oracle(), data, g.seed, corpus);
  CampaignConfig cfg;
  cfg.seed = g.seed;
  cfg.workers = g.workers;
  cfg.model_id = t.id;
  cfg.params = s.to_json();
  cfg.store_root = g.store;
  return run_campaign(t.oracle(), to_string(s.method), prepared.fn, data, cfg);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adversarial robustness toolkit for DNA sequence classifiers", "dnaadv"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--model", g.model, "Model checkpoint");
  app.add_option("--endpoint", g.endpoint, "Bridge endpoint (exec:<cmd> or tcp:<host>:<port>)");
  app.add_option("--model_name", g.model_name, "Model id for records and metadata");
  app.add_option("--tokenizer", g.tokenizer, "Attack tokenizer spec (char, kmer:<k>:<stride>, bpe:...)");
  app.add_option("--seed", g.seed, "Seed for all randomness");
  app.add_option("--workers", g.workers, "Concurrent campaign workers")->check(CLI::PositiveNumber);
  app.add_option("--store", g.store, "Artifact store root")->capture_default_str();
  app.add_option("--num_classes", g.num_classes, "Classes served by an --endpoint")->capture_default_str();

  std::string method, params_file, data_path, out_path, corpus_path;

  auto* gen = app.add_subcommand("gen-data", "Write a synthetic motif dataset");
  MotifSpec motif;
  gen->add_option("--motif", motif.motif)->capture_default_str();
  gen->add_option("--count", motif.count)->capture_default_str();
  gen->add_option("--length", motif.length)->capture_default_str();
  gen->add_option("--positive_fraction", motif.positive_fraction)->capture_default_str();
  gen->add_option("--noise_rate", motif.noise_rate)->capture_default_str();
  gen->add_option("--out", out_path)->required();

  auto* train_cmd = app.add_subcommand("train", "Train a built-in classifier");
  train_cmd->add_option("--data", data_path)->required();
  train_cmd->add_option("--params_file", params_file, "Model and schedule settings");
  train_cmd->add_option("--out", out_path)->required();

  auto* quant = app.add_subcommand("quantize", "Write a W8A8 copy of --model");
  quant->add_option("--out", out_path)->required();
  quant->add_option("--data", data_path, "Report float and quantized accuracy on this set");

  auto* attack = app.add_subcommand("attack", "Run an attack campaign and store records and report");
  attack->add_option("--method", method)->required();
  attack->add_option("--params_file", params_file);
  attack->add_option("--data", data_path)->required();
  attack->add_option("--corpus", corpus_path, "Candidate-model corpus and FIMBA target pool (default: --data)");

  auto* defense = app.add_subcommand("defense", "Train a defended model");
  defense->add_option("--method", method)->required();
  defense->add_option("--params_file", params_file);
  defense->add_option("--data", data_path)->required();
  defense->add_option("--out", out_path)->required();

  auto* evaluate = app.add_subcommand("evaluate", "Attack a defended model and report DSR, or rank stored campaigns");
  bool rank = false;
  std::string dsr_variant = "defended", undefended_report;
  evaluate->add_flag("--rank", rank, "Rank models per attack from the store");
  evaluate->add_option("--method", method);
  evaluate->add_option("--params_file", params_file);
  evaluate->add_option("--data", data_path);
  evaluate->add_option("--corpus", corpus_path);
  evaluate->add_option("--dsr", dsr_variant, "defended or literal")->check(CLI::IsMember({"defended", "literal"}));
  evaluate->add_option("--undefended_report", undefended_report, "Report of the undefended campaign (literal DSR)");

  auto* visualize = app.add_subcommand("visualize", "Token-modification frequency chart and table");
  std::vector<std::string> record_files;
  std::string format = "both", motif_name;
  std::size_t bins = kDefaultBins;
  visualize->add_option("--records", record_files, "Record files (default: the store's files for --method/--model_name)");
  visualize->add_option("--method", method);
  visualize->add_option("--out", out_path)->required();
  visualize->add_option("--format", format)->capture_default_str();
  visualize->add_option("--bins", bins)->check(CLI::PositiveNumber)->capture_default_str();
  visualize->add_option("--motif", motif_name, "Also report modification enrichment on this motif");

  auto* read = app.add_subcommand("read", "Print stored attack metadata");
  std::string type = "attack";
  read->add_option("--type", type)->check(CLI::IsMember({"attack"}))->capture_default_str();
  read->add_option("--method", method)->required();

  auto* serve = app.add_subcommand("serve-stub", "Serve a model over the bridge protocol (stdio or --tcp)");
  int uniform = 0;
  int tcp_port = -1;
  serve->add_option("--uniform", uniform, "Serve a uniform oracle over this many classes");
  serve->add_option("--tcp", tcp_port, "Listen on 127.0.0.1:<port> (0 picks one) instead of stdio");

  try {
    app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    if (gen->parsed()) {
      motif.seed = g.seed;
      const Dataset d = generate_motif_dataset(motif);
      write_dataset(d, out_path);
      out << json{{"dataset", d.id}, {"examples", d.size()}, {"out", out_path}}.dump() << "\n";
    } else if (train_cmd->parsed()) {
      const TrainSettings s = parse_train_settings(params_or_empty(params_file));
      TrainConfig cfg = s.train;
      cfg.seed = g.seed;
      const Dataset d = read_dataset(data_path, s.spec.num_classes);
      const TrainResult r = train(s.spec, d, cfg);
      save_model(*r.model, out_path, {{"train", s.to_json()}, {"seed", g.seed}, {"dataset", d.id}});
      out << json{{"train_accuracy", r.train_accuracy}, {"out", out_path}}.dump() << "\n";
    } else if (quant->parsed()) {
      if (g.model.empty()) throw UsageError("quantize needs --model");
      const auto model = load_model(g.model);
      const QuantizedModel q = QuantizedModel::from(*model);
      save_quantized(q, out_path, {{"quantized_from", g.model}});
      json report{{"out", out_path}, {"degenerate_tensors", q.any_degenerate()}};
      if (!data_path.empty()) {
        const Dataset d = read_dataset(data_path, model->num_classes());
        report["float_accuracy"] = accuracy(*model, d);
        report["quantized_accuracy"] = accuracy(q, d);
      }
      out << report.dump() << "\n";
    } else if (attack->parsed()) {
      const AttackSettings s = attack_settings(method, params_file, g);
      const Target t = open_target(g);
      const Dataset d = read_dataset(data_path, t.oracle().num_classes());
      const Dataset corpus = corpus_path.empty() ? d : read_dataset(corpus_path, t.oracle().num_classes());
      const auto r = campaign(t, s, d, &corpus, g);
      out << r.report.to_json().dump(2) << "\n";
    } else if (defense->parsed()) {
      const DefenseSettings s = parse_defense_settings(require_defense(method), params_or_empty(params_file));
      const Dataset d = read_dataset(data_path, s.model.spec.num_classes);
      const DefenseResult r = run_defense(s, d, g.seed);
      save_defended(r, out_path);
      out << json{{"defense", to_string(s.method)},
                  {"train_accuracy", accuracy(r.oracle(), d)},
                  {"out", out_path}}
                 .dump()
          << "\n";
    } else if (evaluate->parsed()) {
      if (rank) {
        std::vector<CampaignReport> reports;
        for (const auto& m : ArtifactStore(g.store).list()) {
          for (const auto& c : m.campaigns) {
            CampaignReport r;
            r.attack = m.attack;
            r.model = m.model;
            r.asr = c.asr;
            reports.push_back(r);
          }
        }
        out << rank_models(reports).to_json().dump(2) << "\n";
      } else {
        if (method.empty() || data_path.empty()) throw UsageError("evaluate needs --method and --data (or --rank)");
        const AttackSettings s = attack_settings(method, params_file, g);
        const Target t = open_target(g);
        const Dataset d = read_dataset(data_path, t.oracle().num_classes());
        const Dataset corpus = corpus_path.empty() ? d : read_dataset(corpus_path, t.oracle().num_classes());
        auto r = campaign(t, s, d, &corpus, g);
        if (dsr_variant == "literal") {
          if (undefended_report.empty()) throw UsageError("--dsr literal needs --undefended_report");
          attach_dsr(r.report, DsrVariant::LiteralUndefended, read_report(undefended_report).a_adv);
        } else {
          attach_dsr(r.report);
        }
        write_report(r.report, std::filesystem::path(g.store) / "reports" /
                                   (campaign_key(r.report.model, r.report.attack, r.report.dataset, r.report.seed) +
                                    ".json"));
        out << r.report.to_json().dump(2) << "\n";
      }
    } else if (visualize->parsed()) {
      const ReportFormat fmt = parse_report_format(format);
      std::vector<GenoAdvRecord> records;
      if (record_files.empty()) {
        if (method.empty() || g.model_name.empty()) {
          throw UsageError("visualize needs --records or --method with --model_name");
        }
        const AttackMetadata meta = ArtifactStore(g.store).get_attack_metadata(to_string(require_attack(method)),
                                                                               g.model_name);
        for (const auto& f : meta.record_files()) {
          const std::filesystem::path p = std::filesystem::path(f).is_absolute() ? std::filesystem::path(f) : std::filesystem::path(g.store) / f;
          record_files.push_back(p.string());
        }
      }
      for (const auto& f : record_files) {
        auto part = read_records(f);
        records.insert(records.end(), part.begin(), part.end());
      }
      const FrequencyProfile p = modification_frequency(records, bins);
      json report{{"outcomes", p.total_outcomes}, {"modifications", p.total_modifications}, {"files", json::array()}};
      for (const auto& path : render_report(p, out_path, fmt)) report["files"].push_back(path.string());
      if (!motif_name.empty()) {
        const MotifEnrichment e = motif_enrichment(records, motif_name);
        report["motif_enrichment"] = {{"motif_rate", e.motif_rate()},
                                      {"background_rate", e.background_rate()},
                                      {"ratio", e.ratio()}};
      }
      out << report.dump() << "\n";
    } else if (read->parsed()) {
      const AttackMethod m = require_attack(method);
      if (g.model_name.empty()) throw UsageError("read needs --model_name");
      out << ArtifactStore(g.store).get_attack_metadata(to_string(m), g.model_name).to_json().dump(2) << "\n";
    } else if (serve->parsed()) {
      std::unique_ptr<UniformOracle> uniform_oracle;
      DefendedOracle local;
      const ProbOracle* oracle = nullptr;
      if (uniform > 0) {
        if (!g.model.empty()) throw UsageError("give --uniform or --model, not both");
        uniform_oracle = std::make_unique<UniformOracle>(uniform);
        oracle = uniform_oracle.get();
      } else {
        if (g.model.empty()) throw UsageError("serve-stub needs --uniform <classes> or --model");
        local = load_defended(g.model);
        oracle = &local.oracle();
      }
      if (tcp_port < 0) {
        serve_stream(*oracle, in, out);
      } else {
        g_stop = false;
        std::signal(SIGTERM, on_signal);
        std::signal(SIGINT, on_signal);
        serve_tcp(*oracle, static_cast<std::uint16_t>(tcp_port),
                  [&](std::uint16_t port) { out << "listening " << port << std::endl; }, g_stop);
      }
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsageError;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.kind() == ErrorKind::UnknownKey ? kUsageError : kDomainError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kDomainError;
  }
  return kOk;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, std::cin, std::cout, std::cerr);
}

}  // namespace dnaadv
