#include "dnaadv/sequence.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "dnaadv/error.hpp"

namespace dnaadv {

namespace {

std::string fold(std::string_view text, bool allow_mask) {
  std::string out(text.size(), '\0');
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = static_cast<char>(std::toupper(static_cast<unsigned char>(text[i])));
    if (nucleotide_index(c) < 0 && !(allow_mask && c == DnaSequence::kMaskSymbol)) {
      throw InvalidSymbolError(i, text[i]);
    }
    out[i] = c;
  }
  return out;
}

}  // namespace

DnaSequence DnaSequence::parse(std::string_view text) {
  if (text.empty()) throw Error(ErrorKind::InvalidSymbol, "empty sequence");
  return DnaSequence(fold(text, false));
}

DnaSequence DnaSequence::parse_query(std::string_view text) {
  if (text.empty()) throw Error(ErrorKind::InvalidSymbol, "empty sequence");
  return DnaSequence(fold(text, true));
}

bool DnaSequence::has_mask() const noexcept {
  return residues_.find(kMaskSymbol) != std::string::npos;
}

DnaSequence DnaSequence::masked(std::size_t begin, std::size_t end) const {
  std::string out = residues_;
  end = std::min(end, out.size());
  for (std::size_t i = begin; i < end; ++i) out[i] = kMaskSymbol;
  return DnaSequence(std::move(out));
}

DnaSequence DnaSequence::with_substring(std::size_t begin, std::string_view replacement) const {
  if (begin + replacement.size() > residues_.size()) {
    throw Error(ErrorKind::LengthMismatch, "replacement runs past sequence end");
  }
  std::string out = residues_;
  for (std::size_t i = 0; i < replacement.size(); ++i) {
    if (nucleotide_index(replacement[i]) < 0) throw InvalidSymbolError(begin + i, replacement[i]);
    out[begin + i] = replacement[i];
  }
  return DnaSequence(std::move(out));
}

DnaSequence DnaSequence::with_residue(std::size_t pos, char nucleotide) const {
  return with_substring(pos, std::string_view(&nucleotide, 1));
}

DnaSequence validate_sequence(std::string_view text) { return DnaSequence::parse(text); }

std::size_t char_edit_distance(const DnaSequence& a, const DnaSequence& b) {
  if (a.size() != b.size()) throw Error(ErrorKind::LengthMismatch, "sequences differ in length");
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i];
  return d;
}

Dataset read_dataset(const std::filesystem::path& path, int num_classes) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  Dataset data;
  data.id = path.stem().string();
  std::string line;
  std::size_t line_no = 0;
  int max_label = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError(line_no, "expected sequence<TAB>label");
    Example ex;
    try {
      ex.sequence = DnaSequence::parse(std::string_view(line).substr(0, tab));
    } catch (const InvalidSymbolError& e) {
      throw ParseError(line_no, e.what());
    }
    const std::string label_text = line.substr(tab + 1);
    std::size_t consumed = 0;
    try {
      ex.label = std::stoi(label_text, &consumed);
    } catch (const std::exception&) {
      throw ParseError(line_no, "label is not an integer");
    }
    if (consumed != label_text.size() || ex.label < 0) throw ParseError(line_no, "bad label");
    max_label = std::max(max_label, ex.label);
    data.examples.push_back(std::move(ex));
  }
  data.num_classes = num_classes > 0 ? num_classes : std::max(2, max_label + 1);
  if (max_label >= data.num_classes) {
    throw Error(ErrorKind::LabelOutOfRange, "label " + std::to_string(max_label) + " in " + path.string());
  }
  return data;
}

void write_dataset(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  for (const auto& ex : data.examples) out << ex.sequence.str() << '\t' << ex.label << '\n';
  if (!out) throw Error(ErrorKind::IoError, "write failed for " + path.string());
}

std::vector<FastaRecord> read_fasta(std::istream& in) {
  std::vector<FastaRecord> records;
  std::string header;
  std::string body;
  bool open = false;
  std::size_t line_no = 0;
  std::size_t record_line = 0;
  auto flush = [&] {
    if (!open) return;
    try {
      records.push_back({header, DnaSequence::parse(body)});
    } catch (const InvalidSymbolError& e) {
      throw ParseError(record_line, e.what());
    }
  };
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '>') {
      flush();
      header = line.substr(1);
      body.clear();
      open = true;
      record_line = line_no;
    } else {
      if (!open) throw ParseError(line_no, "sequence data before first header");
      body += line;
    }
  }
  flush();
  return records;
}

std::vector<FastaRecord> read_fasta(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  return read_fasta(in);
}

}  // namespace dnaadv
