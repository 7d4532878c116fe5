#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <numeric>

#include "dfnet/errors.hpp"
#include "dfnet/model.hpp"
#include "dfnet/ops.hpp"
#include "support/gradient_cases.hpp"
#include "support/testing.hpp"

namespace dfnet {
namespace {

Tensor images_for(const ModelConfig& cfg, std::size_t n, std::uint64_t seed) {
  auto rng = seeded_rng(seed, 77);
  return testing::random_tensor({n, 3, cfg.input_h, cfg.input_w}, rng, 0.0, 1.0);
}

TEST(ModelTest, DefaultBuildsAndRunsWithinASecond) {
  const auto start = std::chrono::steady_clock::now();
  const Model model(ModelConfig{}, 1);
  const auto out = model.forward(images_for(model.config(), 1, 1));
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_LT(seconds, 1.0);
  EXPECT_EQ(out.probabilities.shape(), (Shape{1, 6, 96, 96}));
}

TEST(ModelTest, SameSeedSameChecksum) {
  EXPECT_EQ(Model(ModelConfig{}, 5).parameter_checksum(), Model(ModelConfig{}, 5).parameter_checksum());
  EXPECT_NE(Model(ModelConfig{}, 5).parameter_checksum(), Model(ModelConfig{}, 6).parameter_checksum());
}

TEST(ModelTest, RejectsInvalidConfigs) {
  ModelConfig cfg;
  cfg.input_h = cfg.input_w = 48;
  cfg.pyramid_bins = {1, 2, 3, 7};
  EXPECT_THROW(Model(cfg, 1), ConfigError);
  cfg.pyramid_bins = {1, 2, 3, 6};
  EXPECT_NO_THROW(Model(cfg, 1));
  cfg.input_h = 50;
  EXPECT_THROW(Model(cfg, 1), ConfigError);
  cfg = ModelConfig{};
  cfg.aux_weight = 1.5;
  EXPECT_THROW(Model(cfg, 1), ConfigError);
  cfg = ModelConfig{};
  cfg.classes = 1;
  EXPECT_THROW(Model(cfg, 1), ConfigError);
}

TEST(ModelTest, OutputMatchesInputSize) {
  for (std::size_t size : {96u, 48u}) {
    ModelConfig cfg;
    cfg.input_h = cfg.input_w = size;
    const Model model(cfg, 2);
    const auto out = model.forward(images_for(cfg, 2, 2));
    EXPECT_EQ(out.main_logits.shape(), (Shape{2, 6, size, size}));
    EXPECT_EQ(out.probabilities.shape(), (Shape{2, 6, size, size}));
    ASSERT_TRUE(out.aux_logits.has_value());
    EXPECT_EQ(out.aux_logits->shape(), (Shape{2, 6, size, size}));
  }
  const Model model(ModelConfig{}, 2);
  EXPECT_THROW(model.forward(Tensor::full({1, 3, 48, 48}, 0.0)), UsageError);
}

TEST(ModelTest, WithoutRfbProbabilitiesAreTheSoftmax) {
  ModelConfig cfg;
  cfg.input_h = cfg.input_w = 48;
  const Model model(cfg, 3);
  const auto out = model.forward(images_for(cfg, 1, 3));
  const Tensor expect = softmax_channels(out.main_logits);
  for (std::size_t i = 0; i < expect.numel(); ++i) ASSERT_EQ(out.probabilities.data()[i], expect.data()[i]);
}

TEST(ModelTest, ProbabilitiesSumToOne) {
  for (std::optional<RfbStructure> rfb : {std::optional<RfbStructure>{}, std::optional{RfbStructure::F},
                                          std::optional{RfbStructure::A}}) {
    ModelConfig cfg;
    cfg.input_h = cfg.input_w = 48;
    cfg.rfb = rfb;
    const Model model(cfg, 4);
    const auto p = model.forward(images_for(cfg, 2, 4)).probabilities;
    const Shape s = p.shape();
    for (std::size_t n = 0; n < s.n; ++n)
      for (std::size_t h = 0; h < s.h; ++h)
        for (std::size_t w = 0; w < s.w; ++w) {
          double total = 0.0;
          for (std::size_t c = 0; c < s.c; ++c) total += p.at(n, c, h, w);
          ASSERT_NEAR(total, 1.0, 1e-10);
        }
  }
}

TEST(ModelTest, ForwardIsRepeatable) {
  ModelConfig cfg;
  cfg.input_h = cfg.input_w = 48;
  cfg.rfb = RfbStructure::D;
  const Model model(cfg, 5);
  const Tensor x = images_for(cfg, 2, 5);
  const auto a = model.forward(x), b = model.forward(x);
  for (std::size_t i = 0; i < a.probabilities.numel(); ++i) ASSERT_EQ(a.probabilities.data()[i], b.probabilities.data()[i]);
}

TEST(ModelTest, TapExtents) {
  const Model model(ModelConfig{}, 1);
  EXPECT_EQ(model.tap_extent(AuxTap::after_layer2), (std::pair<std::size_t, std::size_t>{24, 24}));
  EXPECT_EQ(model.tap_extent(AuxTap::after_layer3), (std::pair<std::size_t, std::size_t>{12, 12}));
  EXPECT_GT(model.tap_extent(AuxTap::after_layer2).first, model.tap_extent(AuxTap::after_layer3).first);
}

TEST(ModelTest, ParameterNamesAreUniqueAndStable) {
  ModelConfig cfg;
  cfg.rfb = RfbStructure::F;
  const Model model(cfg, 1);
  const auto params = model.parameters();
  std::set<std::string> names;
  for (const auto& p : params) EXPECT_TRUE(names.insert(p.name).second) << p.name;
  EXPECT_EQ(params.front().name, "stem.weight");
  EXPECT_TRUE(names.count("layer4.1.weight"));
  EXPECT_TRUE(names.count("aux.bias"));
  EXPECT_TRUE(names.count("rfb.conv1.weight"));
  std::size_t total = 0;
  for (const auto& p : params) total += p.value.numel();
  EXPECT_EQ(model.parameter_count(), total);
}

TEST(TrainingLossTest, NoAuxTapIsMainLoss) {
  ModelConfig cfg = testing::tiny_model_config();
  cfg.aux_tap = AuxTap::none;
  const Model model(cfg, 1);
  auto rng = seeded_rng(1);
  const auto labels = testing::random_labels(2, 24, 24, 2, rng);
  const auto out = model.forward(images_for(cfg, 2, 1));
  EXPECT_FALSE(out.aux_logits.has_value());
  const WeightVector w{{0.7, 2.0}};
  EXPECT_EQ(training_loss(out, labels, w, cfg).item(), weighted_ce_loss(out.main_logits, labels, w).item());
}

TEST(TrainingLossTest, ZeroAuxWeightGivesZeroAuxGradient) {
  ModelConfig cfg = testing::tiny_model_config();
  cfg.aux_weight = 0.0;
  const Model model(cfg, 2);
  auto params = model.parameters();
  auto rng = seeded_rng(2);
  const auto labels = testing::random_labels(2, 24, 24, 2, rng);
  training_loss(model.forward(images_for(cfg, 2, 2)), labels, uniform_weights(2), cfg).backward();
  bool saw_aux = false;
  for (const auto& p : params) {
    if (!p.name.starts_with("aux.")) continue;
    saw_aux = true;
    for (double g : p.value.grad()) EXPECT_EQ(g, 0.0);
  }
  EXPECT_TRUE(saw_aux);
}

TEST(TrainingLossTest, OnePixelHandCase) {
  ModelConfig cfg = testing::tiny_model_config();
  ModelOutput out;
  out.main_logits = Tensor({1, 2, 1, 1}, {1.0, 0.0});
  out.aux_logits = Tensor({1, 2, 1, 1}, {0.0, 2.0});
  out.probabilities = softmax_channels(out.main_logits);
  const LabelBatch label(1, 1, 1, 0);
  const WeightVector w{{1.5, 1.0}};
  const double main = 1.5 * (std::log(std::exp(1.0) + 1.0) - 1.0);
  const double aux = 1.5 * std::log(1.0 + std::exp(2.0));
  EXPECT_NEAR(training_loss(out, label, w, cfg).item(), main + 0.4 * aux, 1e-14);

  // Squared error on the softmax: p0 = e/(e+1).
  const double p0 = std::exp(1.0) / (std::exp(1.0) + 1.0), q0 = 1.0 / (1.0 + std::exp(2.0));
  const double sq_main = 1.5 * (1.0 - p0) * (1.0 - p0) + 1.0 * (1.0 - p0) * (1.0 - p0);
  const double sq_aux = 1.5 * (1.0 - q0) * (1.0 - q0) + 1.0 * (1.0 - q0) * (1.0 - q0);
  EXPECT_NEAR(training_loss(out, label, w, cfg, LossKind::weighted_sq).item(), sq_main + 0.4 * sq_aux, 1e-14);
}

TEST(TrainingLossTest, RfbLossReadsRefinedProbabilities) {
  ModelConfig cfg = testing::tiny_model_config();
  cfg.rfb = RfbStructure::B;
  cfg.aux_tap = AuxTap::none;
  const Model model(cfg, 3);
  auto rng = seeded_rng(3);
  const auto labels = testing::random_labels(1, 24, 24, 2, rng);
  const auto out = model.forward(images_for(cfg, 1, 3));
  const WeightVector w{{1.0, 3.0}};
  EXPECT_EQ(training_loss(out, labels, w, cfg).item(),
            weighted_nll_loss(log_floor(out.probabilities), labels, w).item());
}

TEST(TrainingLossTest, ConsistentClassPermutationKeepsLoss) {
  ModelConfig cfg = testing::tiny_model_config();
  cfg.classes = 3;
  const Model model(cfg, 4);
  auto rng = seeded_rng(4);
  const Tensor images = images_for(cfg, 2, 4);
  const auto labels = testing::random_labels(2, 24, 24, 3, rng);
  const WeightVector w{{0.2, 1.0, 4.0}};
  const double before = training_loss(model.forward(images), labels, w, cfg).item();

  const std::vector<std::size_t> perm{2, 0, 1};  // new class i is old class perm[i]
  for (auto& p : model.parameters()) {
    if (!(p.name.starts_with("classifier.") || p.name.starts_with("aux."))) continue;
    Tensor t = p.value;
    const Shape s = t.shape();
    const std::size_t rows = p.name.ends_with(".weight") ? s.n : s.c;
    const std::size_t stride = t.numel() / rows;
    std::vector<double> old(t.data().begin(), t.data().end());
    auto v = t.mutable_data();
    for (std::size_t i = 0; i < rows; ++i)
      std::copy_n(old.begin() + static_cast<std::ptrdiff_t>(perm[i] * stride), stride,
                  v.begin() + static_cast<std::ptrdiff_t>(i * stride));
  }
  std::vector<std::size_t> inverse(3);
  for (std::size_t i = 0; i < 3; ++i) inverse[perm[i]] = i;
  LabelBatch relabelled = labels;
  for (auto& l : relabelled.data) l = static_cast<std::int32_t>(inverse[static_cast<std::size_t>(l)]);
  WeightVector pw;
  for (std::size_t i = 0; i < 3; ++i) pw.weights.push_back(w[perm[i]]);
  EXPECT_NEAR(training_loss(model.forward(images), relabelled, pw, cfg).item(), before, 1e-12);
}

TEST(SgdTest, PlainStep) {
  std::vector<NamedParameter> params{{"p", Tensor::scalar(1.0, true)}};
  params[0].value.grad_buffer()[0] = 2.0;
  SgdMomentum sgd(0.1, 0.0);
  sgd.step(params);
  EXPECT_DOUBLE_EQ(params[0].value.item(), 0.8);
}

TEST(SgdTest, MomentumAccumulates) {
  std::vector<NamedParameter> params{{"p", Tensor::scalar(0.0, true)}};
  params[0].value.grad_buffer()[0] = 2.0;
  SgdMomentum sgd(0.1, 0.9);
  sgd.step(params);
  const double first = params[0].value.item();
  sgd.step(params);
  const double second = params[0].value.item() - first;
  EXPECT_DOUBLE_EQ(first, -0.1 * 2.0);
  EXPECT_NEAR(second, -1.9 * 0.1 * 2.0, 1e-15);
}

TEST(SgdTest, ZeroGradientLeavesParameters) {
  std::vector<NamedParameter> params{{"a", Tensor::full({1, 1, 2, 2}, 0.3, true)},
                                     {"b", Tensor::scalar(-1.0, true)}};
  params[1].value.grad_buffer();
  SgdMomentum sgd(0.5, 0.9);
  sgd.step(params);
  sgd.step(params);
  for (double v : params[0].value.data()) EXPECT_EQ(v, 0.3);
  EXPECT_EQ(params[1].value.item(), -1.0);
  EXPECT_THROW(SgdMomentum(0.0, 0.9), ConfigError);
  EXPECT_THROW(SgdMomentum(-0.1, 0.9), ConfigError);
  EXPECT_THROW(SgdMomentum(0.1, 1.0), ConfigError);
}

}  // namespace
}  // namespace dfnet
