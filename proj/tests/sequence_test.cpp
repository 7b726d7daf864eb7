#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "dnaadv/datagen.hpp"
#include "dnaadv/error.hpp"
#include "dnaadv/sequence.hpp"
#include "test_util.hpp"

namespace dnaadv {
namespace {

TEST(ValidateSequence, AcceptsAlphabet) {
  EXPECT_EQ(validate_sequence("ATCG").str(), "ATCG");
}

TEST(ValidateSequence, FoldsLowercase) {
  EXPECT_EQ(validate_sequence("atcg").str(), "ATCG");
}

TEST(ValidateSequence, RejectsOutOfAlphabetWithPosition) {
  try {
    validate_sequence("ATXN");
    FAIL() << "expected InvalidSymbol";
  } catch (const InvalidSymbolError& e) {
    EXPECT_EQ(e.position(), 2u);
    EXPECT_EQ(e.symbol(), 'X');
    EXPECT_EQ(e.kind(), ErrorKind::InvalidSymbol);
  }
}

TEST(ValidateSequence, RejectsAmbiguityCodeN) {
  EXPECT_THROW(validate_sequence("ACGN"), InvalidSymbolError);
  EXPECT_THROW(validate_sequence(""), Error);
}

TEST(DnaSequence, MaskedFormIsQueryOnly) {
  const auto s = validate_sequence("ACGTAC");
  const auto m = s.masked(1, 3);
  EXPECT_EQ(m.str(), "ANNTAC");
  EXPECT_TRUE(m.has_mask());
  EXPECT_FALSE(s.has_mask());
  EXPECT_EQ(DnaSequence::parse_query("annt").str(), "ANNT");
  EXPECT_THROW(s.with_substring(5, "AA"), Error);
  EXPECT_EQ(s.with_substring(2, "TT").str(), "ACTTAC");
  EXPECT_EQ(char_edit_distance(s, s.with_substring(2, "TT")), 1u);
}

TEST(Dataset, ReadsTsvAndReportsBadLines) {
  testing::TempDir dir("seq");
  {
    std::ofstream out(dir / "d.tsv");
    out << "ACGT\t0\nacgg\t1\n\n";
  }
  const auto d = read_dataset(dir / "d.tsv");
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d.examples[1].sequence.str(), "ACGG");
  EXPECT_EQ(d.num_classes, 2);
  {
    std::ofstream out(dir / "bad.tsv");
    out << "ACGT\t0\nACXT\t1\n";
  }
  try {
    read_dataset(dir / "bad.tsv");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  EXPECT_THROW(read_dataset(dir / "missing.tsv"), Error);
}

TEST(Fasta, ConcatenatesSequenceLines) {
  std::istringstream in(">r1 first\nACGT\nacgt\n>r2\nTTTT\n");
  const auto recs = read_fasta(in);
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0].header, "r1 first");
  EXPECT_EQ(recs[0].sequence.str(), "ACGTACGT");
  EXPECT_EQ(recs[1].sequence.str(), "TTTT");
  std::istringstream bad("ACGT\n>x\nAC\n");
  EXPECT_THROW(read_fasta(bad), ParseError);
}

TEST(MotifDataset, BalancedAndConstructive) {
  MotifSpec spec;
  spec.motif = "TATA";
  spec.count = 1000;
  spec.length = 64;
  spec.seed = 7;
  const auto d = generate_motif_dataset(spec);
  std::size_t pos = 0;
  for (const auto& ex : d.examples) {
    EXPECT_EQ(ex.sequence.size(), 64u);
    const bool has = ex.sequence.str().find("TATA") != std::string::npos;
    if (ex.label == 1) {
      ++pos;
      EXPECT_TRUE(has);
    } else {
      EXPECT_FALSE(has);
    }
  }
  EXPECT_EQ(pos, 500u);
}

TEST(MotifDataset, DeterministicGivenSeed) {
  MotifSpec spec;
  spec.seed = 11;
  spec.count = 50;
  const auto a = generate_motif_dataset(spec);
  const auto b = generate_motif_dataset(spec);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.examples[i].sequence, b.examples[i].sequence);
    EXPECT_EQ(a.examples[i].label, b.examples[i].label);
  }
}

TEST(MotifDataset, RejectsInvalidMotif) {
  MotifSpec spec;
  spec.motif = "TAXA";
  try {
    generate_motif_dataset(spec);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidMotif);
  }
}

}  // namespace
}  // namespace dnaadv
