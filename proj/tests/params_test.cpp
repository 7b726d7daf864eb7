#include "dnaadv/params.hpp"

#include <gtest/gtest.h>

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

}  // namespace

TEST(Settings, RoundTripEveryAttack) {
  for (const auto& name : attack_method_names()) {
    const AttackMethod m = *find_attack_method(name);
    const AttackSettings s = parse_attack_settings(m, nlohmann::json::object());
    const nlohmann::json j = s.to_json();
    EXPECT_EQ(parse_attack_settings(m, j).to_json(), j) << name;
    std::vector<std::string> keys;
    for (const auto& [k, _] : j.items()) keys.push_back(k);
    auto expected = attack_setting_keys(m);
    std::sort(expected.begin(), expected.end());
    EXPECT_EQ(keys, expected) << name;
  }
  EXPECT_EQ(find_attack_method("TextFooler"), AttackMethod::TextFooler);
  EXPECT_FALSE(find_attack_method("deepfool"));
}

TEST(Settings, ValuesAndErrors) {
  const auto s = parse_attack_settings(AttackMethod::Pgd, {{"radius", 0.1}, {"norm", "L2"}, {"steps", 3}});
  EXPECT_EQ(s.pgd.epsilon, 0.1);
  EXPECT_EQ(s.pgd.norm, PgdNorm::L2);
  EXPECT_EQ(s.pgd.steps, 3);
  EXPECT_EQ(kind_of([] { parse_attack_settings(AttackMethod::TextFooler, {{"k", 4}}); }), ErrorKind::UnknownKey);
  EXPECT_EQ(kind_of([] { parse_attack_settings(AttackMethod::Pgd, {{"norm", "l1"}}); }), ErrorKind::InvalidConfig);
  EXPECT_EQ(kind_of([] { parse_attack_settings(AttackMethod::Pgd, {{"steps", "many"}}); }), ErrorKind::InvalidConfig);
  EXPECT_EQ(kind_of([] { parse_attack_settings(AttackMethod::Pgd, nlohmann::json::array()); }),
            ErrorKind::InvalidConfig);
}

TEST(Settings, DefenseDefaultsAndKeys) {
  const auto at = parse_defense_settings(DefenseMethod::AdversarialTraining, nlohmann::json::object());
  EXPECT_EQ(at.mix_ratio, 0.1);
  EXPECT_EQ(at.source, "on-the-fly");
  EXPECT_EQ(at.attack.method, AttackMethod::TextFooler);
  const TrainConfig desk = TrainConfig::desk_scale(ModelKind::EmbeddingMlp);
  EXPECT_EQ(at.model.train.learning_rate, desk.learning_rate);
  const auto fl = parse_defense_settings(DefenseMethod::FreeLb, {{"ascent_steps", 3}, {"model_kind", "kmer-logreg"}});
  EXPECT_EQ(fl.freelb.ascent_steps, 3);
  EXPECT_EQ(fl.freelb.base_lr, TrainConfig::desk_scale(ModelKind::KmerLogReg).learning_rate);
  EXPECT_EQ(kind_of([] { parse_defense_settings(DefenseMethod::FreeLb, {{"samples", 3}}); }), ErrorKind::UnknownKey);
  EXPECT_EQ(kind_of([] { parse_defense_settings(DefenseMethod::AdversarialTraining, {{"source", "records"}}); }),
            ErrorKind::InvalidConfig);
  EXPECT_EQ(kind_of([] {
              parse_defense_settings(DefenseMethod::AdversarialTraining, {{"attack_params", {{"bogus", 1}}}});
            }),
            ErrorKind::UnknownKey);
}

TEST(Prepared, CampaignLevelAttacks) {
  const Dataset d = tu::motif_dataset(41, 60);
  const auto& logreg = tu::motif_model(ModelKind::KmerLogReg);
  const auto fimba = prepare_attack(parse_attack_settings(AttackMethod::Fimba, nlohmann::json::object()), logreg, d, 1);
  const auto r = run_campaign(logreg, "fimba", fimba.fn, d, CampaignConfig{});
  EXPECT_GT(r.report.asr, 0.0);

  const auto& mlp = tu::motif_model(ModelKind::EmbeddingMlp);
  EXPECT_EQ(kind_of([&] {
              prepare_attack(parse_attack_settings(AttackMethod::Fimba, nlohmann::json::object()), mlp, d, 1);
            }),
            ErrorKind::NoFeatureView);
  const auto uni = prepare_attack(parse_attack_settings(AttackMethod::Universal, nlohmann::json::object()), mlp, d, 1);
  ASSERT_TRUE(uni.fooling_rate.has_value());
  EXPECT_NO_THROW(run_campaign(mlp, "universal", uni.fn, d, CampaignConfig{}));
  EXPECT_EQ(kind_of([] {
              make_example_attack(parse_attack_settings(AttackMethod::Universal, nlohmann::json::object()), {});
            }),
            ErrorKind::InvalidConfig);
}
