#include "segrun/equivalence/equivalence.hpp"
#include "segrun/error.hpp"
#include "segrun/fixtures/models.hpp"
#include "segrun/fixtures/subjects.hpp"
#include "segrun/quantize/quantizer.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace segrun;
using segrun::testing::TempDir;

namespace {

struct Setup {
  TempDir dir;
  std::vector<SubjectRecord> subjects;
  ModelManifest f32, f16;
  PipelineConfig config;

  explicit Setup(int n) {
    fixtures::SubjectSpec spec;
    spec.shape = {24, 24, 20};
    subjects = fixtures::write_cohort(dir / "ds", n, 31, spec);
    auto model = fixtures::unet_model({2, 2, 8, 16, 31});
    fixtures::calibrate_head(model, fixtures::calibration_patches(spec, 4, 16, true, 77), 0.1, 1);
    f32 = segrun::testing::save_fixture_model(dir / "models", model, "f32", {"T1w", "FLAIR"}, {16, 16, 16});
    auto half = model;
    quantize_model(half);
    f16 = segrun::testing::save_fixture_model(dir / "models", half, "f16", {"T1w", "FLAIR"}, {16, 16, 16});
    f16.precision = Precision::Float16;
    config.cache_dir = dir / "cache";
    config.log_dir = dir / "logs";
    config.inference.prefer_gpu = false;
  }
};

}  // namespace

TEST_CASE("a model compared with itself agrees exactly") {
  Setup s(2);
  const auto r = validate_equivalence(s.subjects, s.f32, s.f32, s.config);
  CHECK(r.mean_dice_diff == 0.0);
  CHECK(r.min_agreement_dice == 1.0);
  for (const auto& p : r.per_subject) {
    CHECK(p.dice_f32_vs_f16 == 1.0);
    CHECK(p.max_probability_diff == 0.0);
    CHECK(p.lesion_voxels_f32 > 0);
  }
  CHECK(r.pass);
}

TEST_CASE("float16 conversion agrees on a small cohort") {
  Setup s(3);
  const auto r = validate_equivalence(s.subjects, s.f32, s.f16, s.config);
  MESSAGE(format_report(r));
  CHECK(r.n_subjects == 3);
  CHECK(r.mean_dice_diff < 1e-3);
  double sum = 0;
  for (const auto& p : r.per_subject) sum += 1.0 - p.dice_f32_vs_f16;
  CHECK(r.mean_dice_diff == doctest::Approx(sum / 3));
  const nlohmann::json j = r;
  CHECK(j["per_subject"].size() == 3);
}

TEST_CASE("a perturbed head bias fails the check") {
  Setup s(2);
  auto model = onnx_io::load(s.f32.onnx_path);
  fixtures::perturb_initializer(model, fixtures::kHeadBias, 1, 0.5f);
  const auto bad = segrun::testing::save_fixture_model(s.dir / "models", model, "bad", {"T1w", "FLAIR"}, {16, 16, 16});
  const auto r = validate_equivalence(s.subjects, s.f32, bad, s.config);
  CHECK_FALSE(r.pass);
  CHECK(r.mean_dice_diff > 1e-3);
  for (const auto& p : r.per_subject) CHECK(p.lesion_voxels_f16 > p.lesion_voxels_f32);
}

TEST_CASE("geometry must match") {
  Setup s(1);
  auto other = s.f16;
  other.patch_size = {8, 8, 8};
  try {
    validate_equivalence(s.subjects, s.f32, other, s.config);
    FAIL("expected ManifestMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::ManifestMismatch);
  }
}
