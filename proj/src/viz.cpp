#include "dnaadv/viz.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "dnaadv/error.hpp"

namespace dnaadv {

namespace {

struct ModView {
  const std::string* tokenizer;
  const DnaSequence* original;
  const std::vector<ModifiedToken>* modified;
  bool success;
};

FrequencyProfile aggregate(std::span<const ModView> views, std::size_t bins) {
  if (bins == 0) throw Error(ErrorKind::InvalidConfig, "profile needs at least one bin");
  FrequencyProfile p;
  p.bins = bins;
  p.bin_counts.assign(bins, 0);
  for (const auto& v : views) {
    if (p.tokenizer.empty()) {
      p.tokenizer = *v.tokenizer;
    } else if (*v.tokenizer != p.tokenizer) {
      throw Error(ErrorKind::MixedTokenizers, "profile mixes '" + p.tokenizer + "' and '" + *v.tokenizer + "'");
    }
  }
  std::map<std::string, Tokenizer> tokenizers;
  for (const auto& v : views) {
    if (!v.success) continue;
    ++p.total_outcomes;
    if (v.modified->empty()) continue;
    auto it = tokenizers.find(*v.tokenizer);
    if (it == tokenizers.end()) it = tokenizers.emplace(*v.tokenizer, Tokenizer::from_spec(*v.tokenizer)).first;
    const std::size_t t = it->second.tokenize(*v.original).size();
    for (const auto& m : *v.modified) {
      ++p.token_counts[m.old_token];
      const std::size_t b = std::min(bins - 1, m.index * bins / std::max<std::size_t>(t, 1));
      ++p.bin_counts[b];
      ++p.total_modifications;
    }
  }
  return p;
}

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

/// Tokens by descending count, then by string.
std::vector<std::pair<std::string, std::uint64_t>> ranked_tokens(const FrequencyProfile& p) {
  std::vector<std::pair<std::string, std::uint64_t>> v(p.token_counts.begin(), p.token_counts.end());
  std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  return v;
}

void write_file(const std::filesystem::path& path, const std::string& body) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out << body;
  if (!out) throw Error(ErrorKind::IoError, "write failed: " + path.string());
}

}  // namespace

std::vector<double> FrequencyProfile::histogram() const {
  std::vector<double> h(bin_counts.size(), 0.0);
  if (total_modifications == 0) return h;
  for (std::size_t i = 0; i < h.size(); ++i) {
    h[i] = static_cast<double>(bin_counts[i]) / static_cast<double>(total_modifications);
  }
  return h;
}

FrequencyProfile modification_frequency(std::span<const AttackOutcome> outcomes, std::size_t bins) {
  std::vector<ModView> views;
  for (const auto& o : outcomes) views.push_back({&o.tokenizer, &o.original, &o.modified, o.success});
  return aggregate(views, bins);
}

FrequencyProfile modification_frequency(std::span<const GenoAdvRecord> records, std::size_t bins) {
  std::vector<ModView> views;
  for (const auto& r : records) views.push_back({&r.tokenizer, &r.original, &r.modified, r.success});
  return aggregate(views, bins);
}

ReportFormat parse_report_format(const std::string& name) {
  const std::string n = normalize_id(name);
  if (n == "svg") return ReportFormat::Svg;
  if (n == "tsv") return ReportFormat::Tsv;
  if (n == "both") return ReportFormat::Both;
  throw Error(ErrorKind::UnsupportedFormat, "report format '" + name + "' (expected svg, tsv or both)");
}

std::string render_svg(const FrequencyProfile& p) {
  constexpr std::size_t kMaxBars = 40;
  constexpr double kWidth = 820, kPanel = 200, kLeft = 50;
  std::ostringstream s;
  s << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"820\" height=\"560\" viewBox=\"0 0 820 560\" "
    << "data-format-version=\"" << kProfileFormatVersion << "\">\n"
    << "<style>text{font-family:monospace;font-size:11px}</style>\n"
    << "<text x=\"10\" y=\"18\">token modification frequency (" << p.total_outcomes << " successful outcomes, "
    << p.total_modifications << " modifications, tokenizer " << xml_escape(p.tokenizer) << ")</text>\n";
  if (p.total_modifications == 0) {
    s << "<text class=\"no-data\" x=\"410\" y=\"280\" text-anchor=\"middle\">no data</text>\n</svg>\n";
    return s.str();
  }
  const auto tokens = ranked_tokens(p);
  const std::size_t shown = std::min(kMaxBars, tokens.size());
  const double max_count = static_cast<double>(tokens.front().second);
  const double bar_w = (kWidth - kLeft - 20) / static_cast<double>(shown);
  const double base1 = 40 + kPanel;
  s << "<g class=\"tokens\">\n";
  for (std::size_t i = 0; i < shown; ++i) {
    const double h = static_cast<double>(tokens[i].second) / max_count * kPanel;
    const double x = kLeft + static_cast<double>(i) * bar_w;
    s << "<rect class=\"token-bar\" data-token=\"" << xml_escape(tokens[i].first) << "\" data-count=\""
      << tokens[i].second << "\" x=\"" << fmt("%.3f", x) << "\" y=\"" << fmt("%.3f", base1 - h) << "\" width=\""
      << fmt("%.3f", bar_w * 0.8) << "\" height=\"" << fmt("%.3f", h) << "\" fill=\"#3b6ea5\"/>\n";
    s << "<text x=\"" << fmt("%.3f", x + bar_w * 0.4) << "\" y=\"" << fmt("%.3f", base1 + 12)
      << "\" text-anchor=\"end\" transform=\"rotate(-60 " << fmt("%.3f", x + bar_w * 0.4) << " "
      << fmt("%.3f", base1 + 12) << ")\">" << xml_escape(tokens[i].first) << "</text>\n";
  }
  if (tokens.size() > shown) {
    s << "<text x=\"" << kLeft << "\" y=\"36\">top " << shown << " of " << tokens.size() << " tokens</text>\n";
  }
  s << "</g>\n";
  const auto hist = p.histogram();
  const double max_mass = *std::max_element(hist.begin(), hist.end());
  const double base2 = 300 + kPanel;
  const double bin_w = (kWidth - kLeft - 20) / static_cast<double>(p.bins);
  s << "<g class=\"positions\">\n<text x=\"" << kLeft << "\" y=\"296\">modified positions along the sequence ("
    << p.bins << " bins, 0 to 1)</text>\n";
  for (std::size_t b = 0; b < p.bins; ++b) {
    const double h = max_mass > 0 ? hist[b] / max_mass * kPanel : 0.0;
    s << "<rect class=\"bin-bar\" data-bin=\"" << b << "\" data-count=\"" << p.bin_counts[b] << "\" x=\""
      << fmt("%.3f", kLeft + static_cast<double>(b) * bin_w) << "\" y=\"" << fmt("%.3f", base2 - h) << "\" width=\""
      << fmt("%.3f", bin_w * 0.9) << "\" height=\"" << fmt("%.3f", h) << "\" fill=\"#a5533b\"/>\n";
  }
  s << "</g>\n</svg>\n";
  return s.str();
}

std::string render_tsv(const FrequencyProfile& p) {
  std::ostringstream s;
  s << "# modification profile\tv" << kProfileFormatVersion << "\n"
    << "# tokenizer\t" << p.tokenizer << "\n"
    << "# outcomes\t" << p.total_outcomes << "\n"
    << "# modifications\t" << p.total_modifications << "\n"
    << "# bins\t" << p.bins << "\n"
    << "section\tkey\tcount\tfraction\n";
  const double total = static_cast<double>(p.total_modifications);
  for (const auto& [token, c] : ranked_tokens(p)) {
    s << "token\t" << token << "\t" << c << "\t" << fmt("%.17g", total > 0 ? static_cast<double>(c) / total : 0.0)
      << "\n";
  }
  const auto hist = p.histogram();
  for (std::size_t b = 0; b < p.bins; ++b) {
    s << "bin\t" << b << "\t" << p.bin_counts[b] << "\t" << fmt("%.17g", hist[b]) << "\n";
  }
  return s.str();
}

FrequencyProfile parse_profile_tsv(const std::string& text) {
  FrequencyProfile p;
  p.bin_counts.clear();
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  bool have_bins = false;
  const auto fields = [](const std::string& l) {
    std::vector<std::string> out;
    std::string f;
    std::istringstream ls(l);
    while (std::getline(ls, f, '\t')) out.push_back(f);
    return out;
  };
  try {
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const auto f = fields(line);
      if (f[0] == "# modification profile") {
        if (f.size() != 2 || f[1] != "v" + std::to_string(kProfileFormatVersion)) {
          throw ParseError(lineno, "unsupported profile version");
        }
      } else if (f[0] == "# tokenizer") {
        p.tokenizer = f.size() > 1 ? f[1] : "";
      } else if (f[0] == "# outcomes") {
        p.total_outcomes = std::stoull(f.at(1));
      } else if (f[0] == "# modifications") {
        p.total_modifications = std::stoull(f.at(1));
      } else if (f[0] == "# bins") {
        p.bins = std::stoull(f.at(1));
        p.bin_counts.assign(p.bins, 0);
        have_bins = true;
      } else if (f[0] == "section") {
        continue;
      } else if (f[0] == "token") {
        p.token_counts[f.at(1)] = std::stoull(f.at(2));
      } else if (f[0] == "bin") {
        const std::size_t b = std::stoull(f.at(1));
        if (!have_bins || b >= p.bins) throw ParseError(lineno, "bin index out of range");
        p.bin_counts[b] = std::stoull(f.at(2));
      } else {
        throw ParseError(lineno, "unknown section '" + f[0] + "'");
      }
    }
  } catch (const std::logic_error& e) {
    throw ParseError(lineno, e.what());
  }
  if (!have_bins) throw ParseError(lineno, "missing bins header");
  return p;
}

std::vector<std::filesystem::path> render_report(const FrequencyProfile& p, const std::filesystem::path& stem,
                                                 ReportFormat format) {
  std::vector<std::filesystem::path> out;
  const auto with = [&](const char* ext) {
    auto path = stem;
    path += ext;
    return path;
  };
  if (format != ReportFormat::Tsv) {
    out.push_back(with(".svg"));
    write_file(out.back(), render_svg(p));
  }
  if (format != ReportFormat::Svg) {
    out.push_back(with(".tsv"));
    write_file(out.back(), render_tsv(p));
  }
  return out;
}

double MotifEnrichment::motif_rate() const {
  return motif_tokens ? static_cast<double>(motif_modified) / static_cast<double>(motif_tokens) : 0.0;
}

double MotifEnrichment::background_rate() const {
  return background_tokens ? static_cast<double>(background_modified) / static_cast<double>(background_tokens) : 0.0;
}

double MotifEnrichment::ratio() const {
  const double bg = background_rate();
  if (bg == 0.0) return motif_rate() > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  return motif_rate() / bg;
}

MotifEnrichment motif_enrichment(std::span<const GenoAdvRecord> records, const std::string& motif) {
  if (motif.empty()) throw Error(ErrorKind::InvalidMotif, "empty motif");
  MotifEnrichment e;
  std::map<std::string, Tokenizer> tokenizers;
  for (const auto& r : records) {
    if (!r.success) continue;
    auto it = tokenizers.find(r.tokenizer);
    if (it == tokenizers.end()) it = tokenizers.emplace(r.tokenizer, Tokenizer::from_spec(r.tokenizer)).first;
    const std::string& a = r.original.str();
    const std::string& b = r.adversarial.str();
    std::vector<char> covered(a.size(), 0);
    for (const std::string* s : {&a, &b}) {
      for (std::size_t i = 0; i + motif.size() <= s->size(); ++i) {
        if (s->compare(i, motif.size(), motif) == 0) std::fill_n(covered.begin() + i, motif.size(), 1);
      }
    }
    const TokenizedSeq ts = it->second.tokenize(r.original);
    std::vector<char> modified(ts.size(), 0);
    for (const auto& m : r.modified) {
      if (m.index < modified.size()) modified[m.index] = 1;
    }
    for (std::size_t t = 0; t < ts.size(); ++t) {
      const Span sp = ts.spans[t];
      const bool in_motif = std::any_of(covered.begin() + sp.begin, covered.begin() + sp.end, [](char c) { return c; });
      if (in_motif) {
        ++e.motif_tokens;
        e.motif_modified += modified[t];
      } else {
        ++e.background_tokens;
        e.background_modified += modified[t];
      }
    }
  }
  return e;
}

}  // namespace dnaadv
