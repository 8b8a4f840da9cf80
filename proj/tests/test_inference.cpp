#include <gtest/gtest.h>

#include <cmath>
#include <json.hpp>

#include "fixtures.hpp"
#include "mtdeblur/error.hpp"
#include "mtdeblur/inference.hpp"
#include "mtdeblur/metrics.hpp"

using namespace mtdeblur;

namespace {

// Identity model with a random, non-zero body so that only the zero output
// layer produces the identity.
ModelParams<float> identity_model() { return init_model<float>(small_model(), 5); }

ModelParams<float> perturbed_model() {
  auto params = init_model<float>(small_model(), 5);
  std::mt19937 rng(8);
  std::uniform_real_distribution<float> u(-0.05f, 0.05f);
  for (auto& v : params.get("dec1.out.weight").data()) v = u(rng);
  return params;
}

}  // namespace

TEST(ProgressiveDeblur, IdentityModelReturnsInputEveryIteration) {
  auto scenes = synthesize_dataset(small_dataset_spec(0, 0, 2));
  const Image& input = scenes[0].ladder.blurred();
  auto out = progressive_deblur(identity_model(), input, {6, true});
  ASSERT_EQ(out.size(), 6u);
  for (const auto& img : out) EXPECT_EQ(img, input);
}

TEST(ProgressiveDeblur, OddSizedInputIsPaddedAndCropped) {
  Image input(3, 9, 14, 0.3f);
  auto out = progressive_deblur(identity_model(), input, {2, true});
  EXPECT_EQ(out[1], input);
  auto moved = progressive_deblur(perturbed_model(), input, {2, true});
  EXPECT_EQ(moved[0].height(), 9);
  EXPECT_EQ(moved[0].width(), 14);
}

TEST(ProgressiveDeblur, SingleIterationEqualsForward) {
  auto params = perturbed_model();
  auto scenes = synthesize_dataset(small_dataset_spec(0, 0, 1));
  const Image& input = scenes[0].ladder.blurred();
  auto out = progressive_deblur(params, input, {1, false});
  auto x = to_batch<float>(input);
  auto direct = forward(params, x, x, init_recurrent_state<float>(params.config, x.shape()));
  EXPECT_EQ(out[0], from_batch(direct.output));
}

TEST(ProgressiveDeblur, DeterministicAndPrefixConsistent) {
  auto params = perturbed_model();
  Image input(3, 16, 16, 0.5f);
  input.at(0, 3, 3) = 0.9f;
  auto a = progressive_deblur(params, input, {4, true});
  auto b = progressive_deblur(params, input, {6, true});
  for (int i = 0; i < 4; ++i) EXPECT_EQ(a[i], b[i]);
  EXPECT_THROW(progressive_deblur(params, input, {0, true}), ArgumentError);
  EXPECT_THROW(progressive_deblur(params, Image(1, 16, 16), {1, true}), DimensionError);
}

TEST(Evaluate, IdentityModelReproducesIntrinsicPsnr) {
  auto scenes = synthesize_dataset(small_dataset_spec(0, 0, 4));
  EvalConfig config{1, 1, std::nullopt, true};
  auto report = evaluate(identity_model(), scenes, config);
  ASSERT_EQ(report.per_image.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(report.per_image[i].psnr[0],
              psnr(scenes[i].ladder.blurred(), scenes[i].ladder.sharp()));
    EXPECT_EQ(report.per_image[i].psnr[0], report.per_image[i].input_psnr);
  }
  EXPECT_EQ(report.psnr, report.input_psnr);
}

TEST(Evaluate, IdentityPsnrDecreasesWithTemporalLevel) {
  // Same scenes read at increasing input levels: blurrier inputs lie
  // further from the sharp frame.
  auto spec = small_dataset_spec(0, 0, 8);
  spec.scene.height = 32;
  spec.scene.width = 32;
  spec.native_tls = {13};
  auto scenes = synthesize_dataset(spec);
  double previous = INFINITY;
  for (int tl = 3; tl <= 13; tl += 2) {
    auto report = evaluate(identity_model(), scenes, {1, 1, tl, true});
    ASSERT_EQ(report.per_tl.size(), 1u);
    EXPECT_EQ(report.per_tl[0].tl, tl);
    EXPECT_LT(report.per_tl[0].psnr, previous) << "tl " << tl;
    previous = report.per_tl[0].psnr;
  }
}

TEST(Evaluate, ReportLayoutAndJson) {
  auto scenes = synthesize_dataset(small_dataset_spec(0, 0, 4));
  int emitted = 0;
  auto report = evaluate(perturbed_model(), scenes, {3, 2, std::nullopt, true},
                         [&](const Scene&, int, const Image&) { ++emitted; });
  EXPECT_EQ(emitted, 12);
  EXPECT_EQ(report.per_iteration.size(), 3u);
  EXPECT_EQ(report.per_tl.size(), 3u * 4u);  // four native levels
  double sum = 0;
  for (const auto& e : report.per_image) sum += e.psnr[1];
  EXPECT_NEAR(report.psnr, sum / 4, 1e-12);
  EXPECT_EQ(report.psnr_at(2), report.psnr);

  auto j = nlohmann::json::parse(report.to_json());
  for (const char* key : {"meta", "per_image", "per_tl", "per_iteration", "aggregate"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_EQ(j["per_tl"].size(), 12u);
  EXPECT_EQ(j["meta"]["param_count"], param_count(perturbed_model()));
}

TEST(Evaluate, InfinitePsnrSerializedAsString) {
  auto scenes = synthesize_dataset(small_dataset_spec(0, 0, 1));
  scenes[0].ladder.images[scenes[0].ladder.native_tl] = scenes[0].ladder.sharp();
  auto report = evaluate(identity_model(), scenes, {1, 1, std::nullopt, true});
  auto j = nlohmann::json::parse(report.to_json());
  EXPECT_EQ(j["aggregate"]["psnr"], "inf");
  EXPECT_EQ(j["per_image"][0]["psnr_per_iter"][0], "inf");
}

TEST(Evaluate, EmptySplitGivesEmptyReport) {
  auto report = evaluate(identity_model(), {}, {});
  EXPECT_TRUE(report.per_image.empty());
  EXPECT_TRUE(report.per_iteration.empty());
  EXPECT_NO_THROW(nlohmann::json::parse(report.to_json()));
}

TEST(Evaluate, FixedInputLevel) {
  auto scenes = synthesize_dataset(small_dataset_spec(0, 0, 4));
  auto report = evaluate(identity_model(), scenes, {1, 1, 3, true});
  for (const auto& e : report.per_image) EXPECT_EQ(e.tl, 3);
  ASSERT_EQ(report.per_tl.size(), 1u);
}

TEST(Stats, MeanAndMedian) {
  EXPECT_EQ(median({3, 1, 2}), 2);
  EXPECT_EQ(median({4, 1, 2, 3}), 2.5);
  EXPECT_EQ(mean({1, 2, 3, 6}), 3);
}
