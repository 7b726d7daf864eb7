#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "dnaadv/model.hpp"
#include "dnaadv/random.hpp"
#include "dnaadv/sequence.hpp"
#include "dnaadv/tokenizer.hpp"

namespace dnaadv {

enum class AttackMode { Untargeted, Targeted };

struct AttackConfig {
  AttackMode mode = AttackMode::Untargeted;
  int target = -1;
  /// Fraction of tokens that may be modified.
  double epsilon = 0.2;
  std::uint64_t max_queries = 20000;
  std::uint64_t seed = 0;
  /// Tokenizer spec that defines tokens and the budget. Empty means the
  /// oracle's native tokenizer, or single nucleotides when it has none.
  std::string tokenizer;
  /// Cap on same-length vocabulary candidates for BPE tokens.
  std::size_t bpe_candidate_cap = 32;

  void validate(int num_classes) const;
};

struct ModifiedToken {
  std::size_t index = 0;
  std::string old_token;
  std::string new_token;
  friend bool operator==(const ModifiedToken&, const ModifiedToken&) = default;
};

/// Continuous result of an embedding-space attack.
struct EmbeddingPerturbation {
  std::string norm;  // "linf" or "l2"
  double radius = 0.0;
  Matrix delta;
  std::vector<double> loss_trace;  // objective loss before each step
};

struct AttackOutcome {
  std::string attack;
  std::string tokenizer;  // spec of the tokenizer used for the budget
  DnaSequence original;
  DnaSequence adversarial;
  int label = 0;
  AttackMode mode = AttackMode::Untargeted;
  int target = -1;
  int pred_before = 0;
  int pred_after = 0;
  Probs probs_after;
  bool success = false;
  std::uint64_t queries = 0;
  std::size_t token_count = 0;
  std::size_t budget = 0;
  std::size_t token_hamming = 0;
  std::size_t char_edit = 0;
  std::vector<ModifiedToken> modified;
  std::uint64_t seed = 0;
  /// Set by embedding-space attacks; `adversarial` is then the
  /// nearest-token rounding of the perturbed embeddings.
  std::optional<EmbeddingPerturbation> embedding;
  /// Prediction on `adversarial` when it is a rounding (continuous attacks).
  std::optional<int> rounded_pred;
};

/// ceil(epsilon * tokens), at least 1 for a non-empty sequence.
std::size_t token_budget(double epsilon, std::size_t tokens);

/// Success predicate of an attack run.
bool attack_succeeded(AttackMode mode, int target, int label, int predicted);

/// Modified spans of `original_tokens` between the two sequences.
std::vector<ModifiedToken> modified_tokens(const Tokenizer& tok, const TokenizedSeq& original_tokens,
                                           const DnaSequence& original, const DnaSequence& adversarial);

/// Tokenizer used by an attack run: explicit spec, else the oracle's native
/// one, else single nucleotides.
Tokenizer attack_tokenizer(const ProbOracle& oracle, const AttackConfig& cfg);

/// Forwards to another oracle while enforcing a per-run query cap. Batches
/// that would exceed the cap are refused (callers trim them first).
class QueryBudget final : public ProbOracle {
 public:
  QueryBudget(const ProbOracle& inner, std::uint64_t cap) : inner_(inner), cap_(cap) {}
  int num_classes() const override { return inner_.num_classes(); }
  const Tokenizer* native_tokenizer() const override { return inner_.native_tokenizer(); }
  std::uint64_t remaining() const noexcept { return cap_ - std::min(cap_, queries()); }

 protected:
  std::vector<Probs> predict_batch(std::span<const DnaSequence> batch) const override;

 private:
  const ProbOracle& inner_;
  std::uint64_t cap_;
};

struct TokenScore {
  std::size_t index = 0;
  double score = 0.0;
};

/// Leave-one-out importance: p_label(original) - p_label(token i masked),
/// sorted descending with ties to the lower index.
std::vector<TokenScore> rank_token_importance(const ProbOracle& oracle, const TokenizedSeq& ts,
                                              const DnaSequence& sequence, int label);
/// Variant reusing known probabilities of the unmasked sequence.
std::vector<TokenScore> rank_token_importance(const ProbOracle& oracle, const TokenizedSeq& ts,
                                              const DnaSequence& sequence, int label, const Probs& original_probs);

// ---- substitution attacks -------------------------------------------------

AttackOutcome attack_textfooler(const ProbOracle& oracle, const Example& example, const AttackConfig& cfg);

struct Candidate {
  std::string token;
  double score = 0.0;
};

/// Masked-token proposal source for BertAttack. Proposals for `position`
/// replace that token's span in `current`; scores are probabilities.
class CandidateGenerator {
 public:
  virtual ~CandidateGenerator() = default;
  virtual std::vector<Candidate> propose(const Tokenizer& tok, const TokenizedSeq& layout,
                                         const DnaSequence& current, std::size_t position) const = 0;
};

/// Order-3 Markov language model over token strings, add-one smoothed,
/// scoring a candidate by the likelihood of the tokens around the masked
/// position after substitution.
class MarkovCandidateModel final : public CandidateGenerator {
 public:
  static constexpr std::size_t kOrder = 3;

  MarkovCandidateModel(const std::vector<DnaSequence>& corpus, const Tokenizer& tok);

  std::vector<Candidate> propose(const Tokenizer& tok, const TokenizedSeq& layout, const DnaSequence& current,
                                 std::size_t position) const override;

  double log_prob(const std::vector<std::string>& context, const std::string& token) const;
  std::size_t corpus_tokens() const noexcept { return total_; }

 private:
  std::string tokenizer_;
  std::unordered_map<std::string, std::uint64_t> context_counts_;
  std::unordered_map<std::string, std::uint64_t> ngram_counts_;
  std::size_t vocab_ = 1;
  std::size_t total_ = 0;
};

struct BertAttackParams {
  std::size_t k = 48;
  double threshold = 0.0;
};

AttackOutcome attack_bertattack(const ProbOracle& oracle, const CandidateGenerator& generator,
                                const Example& example, const AttackConfig& cfg, const BertAttackParams& params);

// ---- embedding-space attacks ----------------------------------------------

enum class PgdNorm { Linf, L2 };

struct PgdParams {
  int steps = 10;
  double alpha = 0.05;
  double epsilon = 0.25;
  PgdNorm norm = PgdNorm::Linf;
  bool random_start = false;
  bool early_stop = true;
  /// Emit a nearest-token rounding and query it.
  bool round_to_tokens = true;

  void validate() const;
};

/// Requires a GradOracle; throws NoGradientCapability otherwise.
AttackOutcome attack_pgd(const ProbOracle& oracle, const Example& example, const AttackConfig& cfg,
                         const PgdParams& params);

struct AutoAttackParams {
  PgdParams base;
  /// Stage two runs base.steps * this many steps from a zero start.
  int long_run_factor = 2;
};

AttackOutcome attack_auto(const ProbOracle& oracle, const Example& example, const AttackConfig& cfg,
                          const AutoAttackParams& params);

struct UniversalParams {
  double bound = 0.25;
  int passes = 2;
  int inner_steps = 5;
  double alpha = 0.05;
  /// One E-dim row added to every token (true) or a per-position matrix.
  bool pooled = true;
  std::uint64_t seed = 0;
};

struct UniversalPerturbation {
  Matrix delta;  // 1 x E when pooled, else max_tokens x E
  bool pooled = true;
  double bound = 0.0;
  double fooling_rate = 0.0;
  double linf_norm() const { return delta.size() == 0 ? 0.0 : delta.cwiseAbs().maxCoeff(); }
};

UniversalPerturbation fit_universal(const ProbOracle& oracle, const Dataset& data, const UniversalParams& params);

/// Applies a fitted perturbation to one example (continuous outcome).
AttackOutcome apply_universal(const ProbOracle& oracle, const UniversalPerturbation& up, const Example& example,
                              const AttackConfig& cfg);

/// Perturbation broadcast to an embedding matrix with `rows` tokens.
Matrix universal_delta_for(const UniversalPerturbation& up, Eigen::Index rows);

// ---- feature-space attack -------------------------------------------------

enum class ShapleyMode { Exact, Sampled };
enum class TargetPolicy { NearestDifferentClass, NearestOfTargetClass };

struct FimbaParams {
  std::size_t n_features = 3;
  std::vector<double> alphas = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  ShapleyMode shapley_mode = ShapleyMode::Sampled;
  std::size_t shapley_samples = 16;
  TargetPolicy policy = TargetPolicy::NearestDifferentClass;
  /// Throw RepairFailed when no interpolation step can be realized as a
  /// sequence. Campaigns clear it and record an unmodified, failed run.
  bool strict_repair = true;

  void validate() const;
};

/// Feature vectors of candidate targets with the model's predictions on them.
struct TargetPool {
  std::vector<Vector> features;
  std::vector<int> predicted;
  std::size_t windows = 0;
};

/// Predictions are issued through the feature interface once per pool.
TargetPool build_target_pool(const FeatureOracle& model, const std::vector<DnaSequence>& sequences);

/// (1 - alpha) x + alpha t on the listed features, x elsewhere.
Vector interpolate_features(const Vector& x, const Vector& t, const std::vector<std::size_t>& features, double alpha);

/// Greedy single-nucleotide edits reducing the L1 distance between the
/// sequence's k-mer counts and `target_counts`, stopping when no edit
/// improves or the token budget against `original_tokens` is spent.
/// With `focus`, the L1 distance over those features decides and the full
/// distance breaks ties; an empty focus means all features.
/// Throws RepairFailed when no edit at all could be applied.
DnaSequence repair_counts(const DnaSequence& start, const Vector& target_counts, std::size_t k,
                          const TokenizedSeq& original_tokens, const DnaSequence& original, std::size_t budget,
                          const std::vector<std::size_t>& focus = {});

AttackOutcome attack_fimba(const ProbOracle& oracle, const Example& example, const TargetPool& pool,
                           const AttackConfig& cfg, const FimbaParams& params);

}  // namespace dnaadv
