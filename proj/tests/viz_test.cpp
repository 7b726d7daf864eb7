#include "dnaadv/viz.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <numeric>
#include <regex>

#include "dnaadv/error.hpp"
#include "dnaadv/metrics.hpp"
#include "test_util.hpp"

using namespace dnaadv;
namespace tu = dnaadv::testing;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no exception";
  return ErrorKind::IoError;
}

AttackOutcome textfooler_fn(const ProbOracle& m, const Example& ex, std::uint64_t seed) {
  AttackConfig c;
  c.seed = seed;
  return attack_textfooler(m, ex, c);
}

const std::vector<AttackOutcome>& campaign_outcomes() {
  static const std::vector<AttackOutcome> out = [] {
    const auto& model = tu::motif_model(ModelKind::EmbeddingMlp);
    CampaignConfig cfg;
    cfg.seed = 1;
    return run_campaign(model, "textfooler", textfooler_fn, tu::motif_dataset(77, 150), cfg).outcomes;
  }();
  return out;
}

std::vector<GenoAdvRecord> as_records(const std::vector<AttackOutcome>& outcomes) {
  std::vector<GenoAdvRecord> r;
  for (const auto& o : outcomes) r.push_back(GenoAdvRecord::from_outcome(o, "m"));
  return r;
}

std::size_t count_of(const std::string& text, const std::string& needle) {
  std::size_t c = 0;
  for (std::size_t p = text.find(needle); p != std::string::npos; p = text.find(needle, p + 1)) ++c;
  return c;
}

GenoAdvRecord hand_record(std::vector<ModifiedToken> mods) {
  GenoAdvRecord r;
  r.tokenizer = "kmer:3:1";
  r.original = DnaSequence::parse("ACGTATACGA");  // 8 tokens
  r.adversarial = r.original;
  r.success = true;
  r.modified = std::move(mods);
  return r;
}

}  // namespace

TEST(Profile, NoSuccessfulOutcomesIsEmpty) {
  auto r = hand_record({{2, "TAT", "GAT"}});
  r.success = false;
  const auto p = modification_frequency(std::vector<GenoAdvRecord>{r});
  EXPECT_EQ(p.total_outcomes, 0u);
  EXPECT_EQ(p.total_modifications, 0u);
  EXPECT_TRUE(p.token_counts.empty());
  const auto h = p.histogram();
  EXPECT_EQ(std::accumulate(h.begin(), h.end(), 0.0), 0.0);
}

TEST(Profile, SingleModificationLandsInItsBin) {
  const auto p = modification_frequency(std::vector<GenoAdvRecord>{hand_record({{2, "TAT", "GAT"}})});
  EXPECT_EQ(p.token_counts, (std::map<std::string, std::uint64_t>{{"TAT", 1}}));
  const auto h = p.histogram();
  ASSERT_EQ(h.size(), 50u);
  EXPECT_EQ(h[2 * 50 / 8], 1.0);
}

TEST(Profile, ConservationOnCampaign) {
  const auto& outcomes = campaign_outcomes();
  const auto p = modification_frequency(outcomes);
  std::uint64_t mods = 0, succ = 0;
  for (const auto& o : outcomes) {
    if (!o.success) continue;
    ++succ;
    mods += o.modified.size();
  }
  ASSERT_GT(mods, 0u);
  EXPECT_EQ(p.total_outcomes, succ);
  EXPECT_EQ(p.total_modifications, mods);
  std::uint64_t sum = 0;
  for (const auto& [_, c] : p.token_counts) sum += c;
  EXPECT_EQ(sum, mods);
  const auto h = p.histogram();
  EXPECT_NEAR(std::accumulate(h.begin(), h.end(), 0.0), 1.0, 1e-12);
  EXPECT_EQ(modification_frequency(as_records(outcomes)), p);
}

TEST(Profile, MixedTokenizersRejected) {
  auto a = hand_record({});
  auto b = a;
  b.tokenizer = "char";
  b.original = DnaSequence::parse("ACGT");
  EXPECT_EQ(kind_of([&] { modification_frequency(std::vector<GenoAdvRecord>{a, b}); }), ErrorKind::MixedTokenizers);
}

TEST(Render, EmptyProfileSaysNoData) {
  tu::TempDir dir("viz_empty");
  const auto paths = render_report(FrequencyProfile{"char", 50, {}, std::vector<std::uint64_t>(50, 0), 0, 0},
                                   dir / "profile", ReportFormat::Both);
  ASSERT_EQ(paths.size(), 2u);
  std::ifstream in(paths[0]);
  const std::string svg((std::istreambuf_iterator<char>(in)), {});
  EXPECT_NE(svg.find("no data"), std::string::npos);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
}

TEST(Render, ThreeTokensGiveProportionalBars) {
  const auto p = modification_frequency(std::vector<GenoAdvRecord>{
      hand_record({{0, "ACG", "AAG"}, {2, "GTA", "GGA"}, {3, "TAT", "TTT"}}),
      hand_record({{3, "TAT", "TCT"}, {4, "ATA", "AAA"}}), hand_record({{3, "TAT", "TGT"}})});
  EXPECT_EQ(p.token_counts.size(), 4u);
  const auto q = modification_frequency(std::vector<GenoAdvRecord>{
      hand_record({{3, "TAT", "TCT"}, {4, "ATA", "AAA"}}), hand_record({{3, "TAT", "TGT"}, {4, "ATA", "ACA"}}),
      hand_record({{3, "TAT", "TTT"}, {0, "ACG", "AAG"}})});
  ASSERT_EQ(q.token_counts.size(), 3u);  // TAT 3, ATA 2, ACG 1
  const std::string svg = render_svg(q);
  EXPECT_EQ(count_of(svg, "class=\"token-bar\""), 3u);
  std::map<std::string, double> heights;
  const std::regex bar("data-token=\"([ACGT]+)\" data-count=\"\\d+\" x=\"[^\"]+\" y=\"[^\"]+\" width=\"[^\"]+\" height=\"([^\"]+)\"");
  for (std::sregex_iterator it(svg.begin(), svg.end(), bar), end; it != end; ++it) {
    heights[(*it)[1]] = std::stod((*it)[2]);
  }
  ASSERT_EQ(heights.size(), 3u);
  EXPECT_NEAR(heights["ATA"] / heights["TAT"], 2.0 / 3.0, 1e-4);
  EXPECT_NEAR(heights["ACG"] / heights["TAT"], 1.0 / 3.0, 1e-4);
}

TEST(Render, TsvRoundTripAndDeterminism) {
  const auto p = modification_frequency(campaign_outcomes());
  const std::string tsv = render_tsv(p);
  EXPECT_EQ(parse_profile_tsv(tsv), p);
  EXPECT_EQ(render_tsv(parse_profile_tsv(tsv)), tsv);
  EXPECT_EQ(render_svg(p), render_svg(parse_profile_tsv(tsv)));
  EXPECT_THROW(parse_profile_tsv("bogus\tline\n"), ParseError);
}

TEST(Render, FormatSelection) {
  tu::TempDir dir("viz_fmt");
  const auto p = modification_frequency(std::vector<GenoAdvRecord>{hand_record({{2, "TAT", "GAT"}})});
  const auto svg_only = render_report(p, dir / "a", ReportFormat::Svg);
  ASSERT_EQ(svg_only.size(), 1u);
  EXPECT_EQ(svg_only[0].extension(), ".svg");
  EXPECT_FALSE(std::filesystem::exists(dir / "a.tsv"));
  EXPECT_EQ(parse_report_format("TSV"), ReportFormat::Tsv);
  EXPECT_EQ(kind_of([] { parse_report_format("png"); }), ErrorKind::UnsupportedFormat);
}

TEST(Enrichment, MatchesIndependentRecountAndFavoursMotif) {
  const auto records = as_records(campaign_outcomes());
  const auto e = motif_enrichment(records, "TATA");
  // Recount from the raw sequence pairs: a 4-mer token at i is modified
  // when its substring differs, and in the motif when it overlaps TATA in
  // either sequence.
  std::uint64_t mt = 0, mm = 0, bt = 0, bm = 0;
  for (const auto& r : records) {
    if (!r.success) continue;
    const std::string& a = r.original.str();
    const std::string& b = r.adversarial.str();
    for (std::size_t i = 0; i + 4 <= a.size(); ++i) {
      bool motif = false;
      for (std::size_t j = (i >= 3 ? i - 3 : 0); j <= i + 3 && j + 4 <= a.size(); ++j) {
        motif = motif || a.substr(j, 4) == "TATA" || b.substr(j, 4) == "TATA";
      }
      const bool changed = a.substr(i, 4) != b.substr(i, 4);
      (motif ? mt : bt) += 1;
      (motif ? mm : bm) += changed;
    }
  }
  EXPECT_EQ(e.motif_tokens, mt);
  EXPECT_EQ(e.motif_modified, mm);
  EXPECT_EQ(e.background_tokens, bt);
  EXPECT_EQ(e.background_modified, bm);
  EXPECT_GE(e.ratio(), 2.0);
}
