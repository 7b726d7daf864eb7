#include "dnaadv/artifact_store.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "dnaadv/error.hpp"

namespace dnaadv {

namespace {

using nlohmann::json;

/// Exclusive advisory lock on an open descriptor, released on scope exit.
class FileLock {
 public:
  FileLock(const std::filesystem::path& path, int flags) {
    fd_ = ::open(path.c_str(), flags | O_CLOEXEC, 0644);
    if (fd_ < 0) throw Error(ErrorKind::IoError, "open " + path.string() + ": " + std::strerror(errno));
    while (::flock(fd_, LOCK_EX) != 0) {
      if (errno != EINTR) {
        ::close(fd_);
        throw Error(ErrorKind::IoError, "lock " + path.string() + ": " + std::strerror(errno));
      }
    }
  }
  ~FileLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;
  int fd() const noexcept { return fd_; }

 private:
  int fd_ = -1;
};

void write_all(int fd, const std::string& data, const std::filesystem::path& path) {
  std::size_t off = 0;
  while (off < data.size()) {
    const ssize_t n = ::write(fd, data.data() + off, data.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorKind::IoError, "write " + path.string() + ": " + std::strerror(errno));
    }
    off += static_cast<std::size_t>(n);
  }
}

const Tokenizer& cached_tokenizer(const std::string& spec) {
  thread_local std::map<std::string, Tokenizer> cache;
  auto it = cache.find(spec);
  if (it == cache.end()) it = cache.emplace(spec, Tokenizer::from_spec(spec)).first;
  return it->second;
}

json campaign_to_json(const CampaignEntry& c) {
  return {{"dataset", c.dataset}, {"records", c.records}, {"report", c.report},   {"params", c.params},
          {"seed", c.seed},       {"a_clean", c.a_clean}, {"a_adv", c.a_adv},     {"asr", c.asr},
          {"examples", c.examples}};
}

CampaignEntry campaign_from_json(const json& j) {
  CampaignEntry c;
  c.dataset = j.at("dataset").get<std::string>();
  c.records = j.at("records").get<std::string>();
  c.report = j.value("report", std::string());
  c.params = j.value("params", json::object());
  c.seed = j.at("seed").get<std::uint64_t>();
  c.a_clean = j.at("a_clean").get<double>();
  c.a_adv = j.at("a_adv").get<double>();
  c.asr = j.at("asr").get<double>();
  c.examples = j.at("examples").get<std::size_t>();
  return c;
}

json load_index(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) return json{{"format_version", 1}, {"entries", json::array()}};
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot read " + path.string());
  try {
    json j = json::parse(in);
    if (!j.contains("entries")) throw Error(ErrorKind::ParseError, "index without entries");
    return j;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, path.string() + ": " + e.what());
  }
}

AttackMetadata metadata_from_json(const json& e) {
  AttackMetadata m;
  m.attack = e.at("attack").get<std::string>();
  m.model = e.at("model").get<std::string>();
  for (const json& c : e.at("campaigns")) m.campaigns.push_back(campaign_from_json(c));
  return m;
}

}  // namespace

std::string normalize_id(std::string_view id) {
  std::string out(id);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

GenoAdvRecord GenoAdvRecord::from_outcome(const AttackOutcome& o, const std::string& model_id) {
  GenoAdvRecord r;
  r.original = o.original;
  r.adversarial = o.adversarial;
  r.label = o.label;
  r.model = model_id;
  r.attack = normalize_id(o.attack);
  r.tokenizer = o.tokenizer;
  r.success = o.success;
  r.pred_before = o.pred_before;
  r.pred_after = o.pred_after;
  r.queries = o.queries;
  r.token_hamming = o.token_hamming;
  r.modified = o.modified;
  r.seed = o.seed;
  return r;
}

json record_to_json(const GenoAdvRecord& r) {
  json mods = json::array();
  for (const auto& m : r.modified) mods.push_back({m.index, m.old_token, m.new_token});
  return {{"schema_version", r.schema_version},
          {"model", r.model},
          {"attack", r.attack},
          {"tokenizer", r.tokenizer},
          {"original", r.original.str()},
          {"adversarial", r.adversarial.str()},
          {"label", r.label},
          {"success", r.success},
          {"pred_before", r.pred_before},
          {"pred_after", r.pred_after},
          {"queries", r.queries},
          {"token_hamming", r.token_hamming},
          {"modified", std::move(mods)},
          {"seed", r.seed}};
}

GenoAdvRecord record_from_json(const json& j) {
  GenoAdvRecord r;
  r.schema_version = j.at("schema_version").get<int>();
  if (r.schema_version != kRecordSchemaVersion) {
    throw Error(ErrorKind::UnsupportedFormat, "record schema version " + std::to_string(r.schema_version));
  }
  r.model = j.at("model").get<std::string>();
  r.attack = j.at("attack").get<std::string>();
  r.tokenizer = j.at("tokenizer").get<std::string>();
  r.original = DnaSequence::parse(j.at("original").get<std::string>());
  r.adversarial = DnaSequence::parse(j.at("adversarial").get<std::string>());
  r.label = j.at("label").get<int>();
  r.success = j.at("success").get<bool>();
  r.pred_before = j.at("pred_before").get<int>();
  r.pred_after = j.at("pred_after").get<int>();
  r.queries = j.at("queries").get<std::uint64_t>();
  r.token_hamming = j.at("token_hamming").get<std::size_t>();
  for (const json& m : j.at("modified")) {
    r.modified.push_back({m.at(0).get<std::size_t>(), m.at(1).get<std::string>(), m.at(2).get<std::string>()});
  }
  r.seed = j.at("seed").get<std::uint64_t>();
  return r;
}

void validate_record(const GenoAdvRecord& r) {
  const auto fail = [](const std::string& why) { throw Error(ErrorKind::InvalidRecord, why); };
  if (r.schema_version != kRecordSchemaVersion) fail("unsupported schema version");
  if (r.original.empty()) fail("empty original sequence");
  if (r.original.has_mask() || r.adversarial.has_mask()) fail("masked sequence");
  if (r.original.size() != r.adversarial.size()) fail("sequence lengths differ");
  if (r.model.empty() || r.attack.empty()) fail("missing model or attack id");
  if (r.label < 0) fail("negative label");
  const Tokenizer* tok = nullptr;
  try {
    tok = &cached_tokenizer(r.tokenizer);
  } catch (const Error& e) {
    fail(std::string("bad tokenizer: ") + e.what());
  }
  const TokenizedSeq ts = tok->tokenize(r.original);
  const std::size_t d = sequence_token_distance(ts, r.original, r.adversarial);
  if (d != r.token_hamming) {
    fail("stored token distance " + std::to_string(r.token_hamming) + " != recomputed " + std::to_string(d));
  }
  if (modified_tokens(*tok, ts, r.original, r.adversarial) != r.modified) fail("modified positions disagree");
}

std::size_t write_records(std::span<const GenoAdvRecord> records, const std::filesystem::path& path) {
  std::string buffer;
  for (std::size_t i = 0; i < records.size(); ++i) {
    try {
      validate_record(records[i]);
    } catch (const Error& e) {
      throw Error(ErrorKind::InvalidRecord, "record " + std::to_string(i) + ": " + e.what());
    }
    buffer += record_to_json(records[i]).dump();
    buffer += '\n';
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  FileLock lock(path, O_WRONLY | O_CREAT | O_APPEND);
  write_all(lock.fd(), buffer, path);
  return records.size();
}

bool RecordFilter::matches(const GenoAdvRecord& r) const {
  if (model && normalize_id(*model) != normalize_id(r.model)) return false;
  if (attack && normalize_id(*attack) != normalize_id(r.attack)) return false;
  return true;
}

std::vector<GenoAdvRecord> read_records(const std::filesystem::path& path, const RecordFilter& filter) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot read " + path.string());
  std::vector<GenoAdvRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    GenoAdvRecord r;
    try {
      r = record_from_json(json::parse(line));
    } catch (const json::exception& e) {
      throw ParseError(lineno, e.what());
    } catch (const Error& e) {
      throw ParseError(lineno, e.what());
    }
    if (filter.matches(r)) out.push_back(std::move(r));
  }
  return out;
}

std::vector<Example> records_as_examples(std::span<const GenoAdvRecord> records) {
  std::vector<Example> out;
  for (const auto& r : records) {
    if (r.success && r.adversarial != r.original) out.push_back({r.adversarial, r.label});
  }
  return out;
}

std::vector<json> AttackMetadata::parameter_sets() const {
  std::vector<json> out;
  for (const auto& c : campaigns) {
    if (std::find(out.begin(), out.end(), c.params) == out.end()) out.push_back(c.params);
  }
  return out;
}

std::vector<std::string> AttackMetadata::dataset_ids() const {
  std::vector<std::string> out;
  for (const auto& c : campaigns) {
    if (std::find(out.begin(), out.end(), c.dataset) == out.end()) out.push_back(c.dataset);
  }
  return out;
}

std::vector<std::string> AttackMetadata::record_files() const {
  std::vector<std::string> out;
  for (const auto& c : campaigns) {
    if (std::find(out.begin(), out.end(), c.records) == out.end()) out.push_back(c.records);
  }
  return out;
}

double AttackMetadata::aggregate_asr() const {
  double clean = 0.0, adv = 0.0;
  for (const auto& c : campaigns) {
    clean += c.a_clean * static_cast<double>(c.examples);
    adv += c.a_adv * static_cast<double>(c.examples);
  }
  if (!(clean > 0.0)) throw Error(ErrorKind::ZeroCleanAccuracy, "no correctly classified examples");
  return (clean - adv) / clean * 100.0;
}

json AttackMetadata::to_json() const {
  json cs = json::array();
  for (const auto& c : campaigns) cs.push_back(campaign_to_json(c));
  json out{{"attack", attack},
           {"model", model},
           {"datasets", dataset_ids()},
           {"record_files", record_files()},
           {"parameter_sets", parameter_sets()},
           {"campaigns", std::move(cs)}};
  try {
    out["asr"] = aggregate_asr();
  } catch (const Error&) {
    out["asr"] = nullptr;
  }
  return out;
}

ArtifactStore::ArtifactStore(std::filesystem::path root) : root_(std::move(root)) {}

void ArtifactStore::register_campaign(const std::string& attack, const std::string& model, const CampaignEntry& entry) {
  std::filesystem::create_directories(root_);
  FileLock lock(root_ / "index.lock", O_RDWR | O_CREAT);
  json index = load_index(index_path());
  const std::string a = normalize_id(attack);
  const std::string m = normalize_id(model);
  json* slot = nullptr;
  for (json& e : index["entries"]) {
    if (e.at("attack") == a && e.at("model") == m) slot = &e;
  }
  if (slot == nullptr) {
    index["entries"].push_back({{"attack", a}, {"model", m}, {"campaigns", json::array()}});
    slot = &index["entries"].back();
  }
  // A rerun writing the same record file replaces its earlier entry.
  json kept = json::array();
  for (const json& c : (*slot)["campaigns"]) {
    if (c.at("records") != entry.records) kept.push_back(c);
  }
  kept.push_back(campaign_to_json(entry));
  (*slot)["campaigns"] = std::move(kept);
  const auto tmp = root_ / "index.json.tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + tmp.string());
    out << index.dump(2) << '\n';
  }
  std::filesystem::rename(tmp, index_path());
}

AttackMetadata ArtifactStore::get_attack_metadata(const std::string& attack, const std::string& model) const {
  const std::string a = normalize_id(attack);
  const std::string m = normalize_id(model);
  if (std::filesystem::exists(index_path())) {
    const json index = load_index(index_path());
    for (const json& e : index.at("entries")) {
      if (e.at("attack") == a && e.at("model") == m) return metadata_from_json(e);
    }
  }
  throw Error(ErrorKind::NotFound, "no metadata for attack '" + attack + "' on model '" + model + "'");
}

std::vector<AttackMetadata> ArtifactStore::list() const {
  std::vector<AttackMetadata> out;
  if (!std::filesystem::exists(index_path())) return out;
  const json index = load_index(index_path());
  for (const json& e : index.at("entries")) out.push_back(metadata_from_json(e));
  return out;
}

void ArtifactStore::verify() const {
  for (const auto& m : list()) {
    for (const auto& c : m.campaigns) {
      const std::filesystem::path p = std::filesystem::path(c.records).is_absolute() ? std::filesystem::path(c.records)
                                                                                      : root_ / c.records;
      if (!std::filesystem::exists(p)) throw Error(ErrorKind::NotFound, "record file missing: " + p.string());
      const auto records = read_records(p, RecordFilter{m.model, m.attack});
      if (records.empty()) throw Error(ErrorKind::InvalidRecord, "no records for campaign in " + p.string());
      std::size_t clean = 0, adv = 0;
      for (const auto& r : records) {
        clean += r.pred_before == r.label;
        adv += r.pred_after == r.label;
      }
      const double n = static_cast<double>(records.size());
      if (std::abs(clean / n - c.a_clean) > 1e-9 || std::abs(adv / n - c.a_adv) > 1e-9) {
        throw Error(ErrorKind::InvalidRecord, "campaign accuracies disagree with " + p.string());
      }
    }
  }
}

}  // namespace dnaadv
