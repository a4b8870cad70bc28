#include "segrun/config.hpp"
#include "segrun/error.hpp"
#include "segrun/nifti.hpp"
#include "segrun/preprocess/bids.hpp"
#include "segrun/preprocess/cache.hpp"
#include "segrun/preprocess/external_step.hpp"
#include "segrun/preprocess/normalize.hpp"
#include "segrun/preprocess/resample.hpp"
#include "oracles.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>

using namespace segrun;
using segrun::testing::TempDir;

namespace {

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return Errc::InvalidArgument;
}

Affine spacing_affine(double sx, double sy, double sz) {
  Affine a = Affine::Identity();
  a(0, 0) = sx;
  a(1, 1) = sy;
  a(2, 2) = sz;
  a(0, 3) = -10;
  a(1, 3) = 5;
  a(2, 3) = 2.5;
  return a;
}

}  // namespace

TEST_CASE("z-score of a ramp has zero mean and unit deviation") {
  std::vector<float> data(60);
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<float>(i + 1);
  const auto r = zscore_normalize(Volume({3, 4, 5}, data, Affine::Identity()));
  double mean = 0, sq = 0;
  for (float v : r.volume.data()) mean += v;
  mean /= 60;
  for (float v : r.volume.data()) sq += (v - mean) * (v - mean);
  CHECK(std::abs(mean) < 1e-6);
  CHECK(std::abs(std::sqrt(sq / 60) - 1.0) < 1e-6);
  CHECK_FALSE(r.degenerate);
}

TEST_CASE("constant image normalises to zeros with the degenerate flag") {
  const auto r = zscore_normalize(Volume::filled({4, 4, 4}, 7.5f));
  CHECK(r.degenerate);
  for (float v : r.volume.data()) CHECK(v == 0.0f);
}

TEST_CASE("masked z-score matches a direct computation") {
  segrun::testing::Rng rng(41);
  const Volume v = segrun::testing::random_volume(rng, {3, 3, 3}, 0.0f, 50.0f);
  std::vector<float> mask(27, 0.0f);
  for (std::size_t i = 0; i < 14; ++i) mask[(i * 5) % 27] = 1.0f;  // 14 distinct voxels
  REQUIRE(std::count(mask.begin(), mask.end(), 1.0f) == 14);
  const Volume m({3, 3, 3}, mask, v.affine());
  const auto r = zscore_normalize(v, m);
  double mu = 0;
  for (std::size_t i = 0; i < 27; ++i) mu += mask[i] * v.data()[i];
  mu /= 14;
  double var = 0;
  for (std::size_t i = 0; i < 27; ++i) var += mask[i] * (v.data()[i] - mu) * (v.data()[i] - mu);
  const double sd = std::sqrt(var / 14);
  for (std::size_t i = 0; i < 27; ++i) {
    const double want = mask[i] ? (v.data()[i] - mu) / sd : 0.0;
    CHECK(r.volume.data()[i] == doctest::Approx(want).epsilon(1e-6));
  }
  CHECK(code_of([&] { zscore_normalize(v, Volume::filled({2, 2, 2}, 1.0f)); }) == Errc::ShapeMismatch);
}

Volume random_on(segrun::testing::Rng& rng, Shape3 shape, const Affine& a) {
  const Volume r = segrun::testing::random_volume(rng, shape);
  return Volume(shape, {r.data().begin(), r.data().end()}, a);
}

TEST_CASE("resampling to the same spacing is the identity") {
  segrun::testing::Rng rng(43);
  const Volume v = random_on(rng, {5, 6, 7}, spacing_affine(1.5, 2, 0.75));
  const auto r = resample(v, {1.5, 2.0, 0.75});
  CHECK(r.volume.shape() == v.shape());
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::abs(r.volume.data()[i] - v.data()[i]) <= 1e-6);
  CHECK(r.inverse.is_identity());
}

TEST_CASE("downsampling 1 mm to 2 mm matches direct trilinear interpolation") {
  segrun::testing::Rng rng(47);
  const Volume v = random_on(rng, {4, 4, 4}, spacing_affine(1, 1, 1));
  const auto r = resample(v, {2.0, 2.0, 2.0});
  REQUIRE(r.volume.shape() == Shape3{2, 2, 2});
  for (std::size_t z = 0; z < 2; ++z)
    for (std::size_t y = 0; y < 2; ++y)
      for (std::size_t x = 0; x < 2; ++x)
        CHECK(r.volume.at(x, y, z) == doctest::Approx(oracle::trilinear(v, 2.0 * x, 2.0 * y, 2.0 * z)).epsilon(1e-6));
  CHECK(r.volume.spacing().isApprox(Eigen::Vector3d(2, 2, 2)));
  CHECK(r.volume.affine().col(3).isApprox(v.affine().col(3)));
}

TEST_CASE("fractional resampling agrees with the oracle inside the grid") {
  segrun::testing::Rng rng(53);
  const Volume v = random_on(rng, {9, 7, 8}, spacing_affine(1.0, 1.2, 0.9));
  const std::array<double, 3> target{1.3, 0.7, 1.1};
  const auto r = resample(v, target);
  const Eigen::Vector3d sp = v.spacing();
  CHECK(r.volume.shape() == Shape3{static_cast<std::size_t>(std::llround(9 * 1.0 / 1.3)),
                                   static_cast<std::size_t>(std::llround(7 * 1.2 / 0.7)),
                                   static_cast<std::size_t>(std::llround(8 * 0.9 / 1.1))});
  const auto& s = r.volume.shape();
  for (std::size_t z = 0; z < s[2]; ++z)
    for (std::size_t y = 0; y < s[1]; ++y)
      for (std::size_t x = 0; x < s[0]; ++x) {
        const double q[3] = {x * target[0] / sp[0], y * target[1] / sp[1], z * target[2] / sp[2]};
        if (q[0] > 8 || q[1] > 6 || q[2] > 7) continue;  // edge clamp region
        CHECK(r.volume.at(x, y, z) == doctest::Approx(oracle::trilinear(v, q[0], q[1], q[2])).epsilon(1e-5));
      }
}

TEST_CASE("nearest-neighbour keeps a binary mask binary") {
  segrun::testing::Rng rng(59);
  const Volume mask = segrun::testing::random_mask(rng, {8, 6, 4}, 0.3);
  const auto down = resample(mask, {2, 2, 2}, Interpolation::Nearest);
  const auto up = resample(down.volume, {1, 1, 1}, Interpolation::Nearest);
  CHECK(down.volume.is_binary());
  CHECK(up.volume.is_binary());
  CHECK(up.volume.shape() == mask.shape());
}

TEST_CASE("resample then inverse preserves constants exactly") {
  segrun::testing::Rng rng(61);
  for (int trial = 0; trial < 20; ++trial) {
    const Shape3 shape = segrun::testing::random_shape(rng, 2, 12);
    std::uniform_real_distribution<double> sp(0.6, 2.5);
    const Volume v = Volume::filled(shape, 0.37f, spacing_affine(sp(rng), sp(rng), sp(rng)));
    const auto r = resample(v, {sp(rng), sp(rng), sp(rng)});
    const Volume back = apply_inverse(r.volume, r.inverse);
    CHECK(back.shape() == shape);
    CHECK(back.affine() == v.affine());
    for (float x : back.data()) REQUIRE(x == 0.37f);
  }
}

TEST_CASE("inverse record serialises") {
  const auto r = resample(Volume::filled({4, 4, 4}, 1.0f, spacing_affine(1, 1, 1)), {2, 2, 2});
  const nlohmann::json j = r.inverse;
  const auto back = j.get<InverseRecord>();
  CHECK(back.original_shape == r.inverse.original_shape);
  CHECK(back.resampled_affine == r.inverse.resampled_affine);
  CHECK(code_of([&] { resample(Volume::filled({2, 2, 2}, 1.0f), {0, 1, 1}); }) == Errc::InvalidArgument);
}

TEST_CASE("command splitting and placeholder counting") {
  CHECK(split_command(R"(cp "a b" 'c d' e\ f)") == std::vector<std::string>{"cp", "a b", "c d", "e f"});
  CHECK(split_command("  ") .empty());
  CHECK(output_count("tool {in0} {out0} --aux {out2}") == 3);
  CHECK(output_count("tool {in0}") == 0);
  CHECK(code_of([] { split_command("bad 'quote"); }) == Errc::InvalidArgument);
}

TEST_CASE("external step copies via a stub and logs output") {
  TempDir dir;
  { std::ofstream(dir / "in.nii.gz", std::ios::binary) << "payload\x01\x02"; }
  const auto step = external_step("copy", "cp {in0} {out0}");
  const auto outs = run_external_step(step, {dir / "in.nii.gz"}, dir / "out", dir / "logs");
  REQUIRE(outs.size() == 1);
  CHECK(outs[0] == dir / "out" / "copy_out0.nii.gz");
  CHECK(segrun::testing::file_bytes(outs[0]) == segrun::testing::file_bytes(dir / "in.nii.gz"));
  CHECK(std::distance(std::filesystem::directory_iterator(dir / "logs"), {}) == 2);
}

TEST_CASE("missing executable and failing tool") {
  TempDir dir;
  { std::ofstream(dir / "in.nii") << "x"; }
  try {
    run_external_step(external_step("bet", "no-such-tool-xyz {in0} {out0}"), {dir / "in.nii"}, dir / "o");
    FAIL("expected ExternalToolMissing");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::ExternalToolMissing);
    CHECK(std::string(e.what()).find("no-such-tool-xyz") != std::string::npos);
  }
  try {
    run_external_step(external_step("bad", "sh -c 'echo broken >&2; exit 3'"), {dir / "in.nii"}, dir / "o");
    FAIL("expected ExternalToolFailed");
  } catch (const ExternalToolError& e) {
    CHECK(e.code() == Errc::ExternalToolFailed);
    CHECK(e.exit_code() == 3);
    CHECK(e.stderr_tail() == "broken");
  }
  try {
    run_external_step(external_step("lazy", "true {in0} {out0}"), {dir / "in.nii"}, dir / "o");
    FAIL("expected missing output");
  } catch (const ExternalToolError& e) {
    CHECK(std::string(e.what()).find("did not produce") != std::string::npos);
  }
}

TEST_CASE("identity hook copies inputs") {
  TempDir dir;
  { std::ofstream(dir / "a.nii.gz") << "abc"; }
  const auto outs = run_hook(identity_step("brain_extraction"), {dir / "a.nii.gz"}, dir / "o");
  CHECK(segrun::testing::file_bytes(outs.at(0)) == "abc");
}

TEST_CASE("cache keys change with every field") {
  const CacheKeyInputs base{{"h1", "h2"}, "step", "1.0.0", {{"a", "1"}, {"b", "2"}}};
  const std::string k = cache_key(base);
  CHECK(k.size() == 64);
  CHECK(cache_key(base) == k);
  std::vector<CacheKeyInputs> variants;
  auto v = base;
  v.input_hashes[0] = "h1x";
  variants.push_back(v);
  v = base;
  v.input_hashes = {"h2", "h1"};
  variants.push_back(v);
  v = base;
  v.step_name = "step2";
  variants.push_back(v);
  v = base;
  v.step_version = "1.0.1";
  variants.push_back(v);
  v = base;
  v.params["a"] = "10";
  variants.push_back(v);
  v = base;
  v.params["c"] = "";
  variants.push_back(v);
  v = base;
  // Field boundaries cannot be shifted between entries.
  v.params = {{"a", "12"}, {"b", ""}};
  variants.push_back(v);
  for (const auto& var : variants) CHECK(cache_key(var) != k);
}

TEST_CASE("cache publish, hit and corruption recovery") {
  TempDir dir;
  { std::ofstream(dir / "f.nii.gz") << "data-1"; }
  StageCache cache(dir / "cache");
  const std::string key = std::string(64, 'a');
  CacheEntry e;
  CHECK(cache.lookup(key, e) == CacheLookup::Miss);
  const auto published = cache.publish(key, {dir / "f.nii.gz"});
  CHECK(published.dir == dir / "cache" / "objects" / "aa" / key);
  CHECK(cache.lookup(key, e) == CacheLookup::Hit);
  CHECK(segrun::testing::file_bytes(e.files.at(0)) == "data-1");
  // Publishing the same key again is harmless.
  CHECK_NOTHROW(cache.publish(key, {dir / "f.nii.gz"}));
  { std::ofstream(e.files.at(0)) << "tampered"; }
  CHECK(cache.lookup(key, e) == CacheLookup::Corrupt);
  CHECK(cache.lookup(key, e) == CacheLookup::Miss);
}

TEST_CASE("BIDS naming") {
  const SubjectRecord s{"01", "t1.nii.gz", std::nullopt, "/d/derivatives"};
  const auto p = bids::derivative_path(s, bids::Space::Orig, "lesion", "mask");
  CHECK(p == "/d/derivatives/segrun/sub-01/anat/sub-01_space-orig_desc-lesion_mask.nii.gz");
  CHECK(std::regex_match(p.filename().string(), bids::filename_grammar()));
  CHECK(std::regex_match(bids::sidecar_path(p).filename().string(), bids::filename_grammar()));
  CHECK(std::regex_match(bids::run_provenance_path(s).filename().string(), bids::filename_grammar()));
  CHECK_FALSE(std::regex_match(std::string("sub-01_space-native_desc-x_mask.nii.gz"), bids::filename_grammar()));
  CHECK(bids::subject_id_from_path("/x/sub-A12_T1w.nii.gz") == "A12");
  CHECK(bids::subject_id_from_path("/x/patient_7.nii.gz") == "patient7");
  CHECK(code_of([] { bids::file_name("a-b", bids::Space::Orig, "x", "y"); }) == Errc::InvalidArgument);
}

TEST_CASE("BIDS subject discovery") {
  TempDir dir;
  for (const char* id : {"02", "01"}) {
    const auto anat = dir.path() / (std::string("sub-") + id) / "anat";
    std::filesystem::create_directories(anat);
    nifti::write(Volume::filled({2, 2, 2}, 1.0f), anat / (std::string("sub-") + id + "_T1w.nii.gz"));
  }
  std::filesystem::create_directories(dir / "derivatives");
  const auto subs = bids::discover_subjects(dir.path(), dir / "derivatives", false);
  REQUIRE(subs.size() == 2);
  CHECK(subs[0].subject_id == "01");
  CHECK(code_of([&] { bids::discover_subjects(dir.path(), dir / "derivatives", true); }) == Errc::IoError);
}

TEST_CASE("TOML and JSON configuration") {
  TempDir dir;
  {
    std::ofstream(dir / "c.toml") << R"(
[hooks.brain_extraction]
command = "bet {in0} {out0}"
version = "2.1.0"

[inference]
step_fraction = 0.25
batch_size = 4
prefer_gpu = false

[postprocessing]
threshold = 0.3

[cache]
enabled = false
)";
  }
  PipelineConfig c;
  load_config_file(dir / "c.toml", c);
  CHECK(c.brain_extraction.kind == StepKind::ExternalCommand);
  CHECK(c.brain_extraction.command() == "bet {in0} {out0}");
  CHECK(c.brain_extraction.version == "2.1.0");
  CHECK(c.inference.step_fraction == 0.25);
  CHECK(c.inference.batch_size == 4);
  CHECK_FALSE(c.inference.prefer_gpu);
  CHECK(c.threshold == 0.3);
  CHECK_FALSE(c.use_cache);
  CHECK(c.registration.kind == StepKind::Internal);

  { std::ofstream(dir / "c.json") << R"({"postprocessing": {"threshold": 0.6}, "hooks": {"registration": {"builtin": "identity"}}})"; }
  PipelineConfig j;
  load_config_file(dir / "c.json", j);
  CHECK(j.threshold == 0.6);

  { std::ofstream(dir / "bad.toml") << "[inference\nstep = "; }
  CHECK(code_of([&] { PipelineConfig x; load_config_file(dir / "bad.toml", x); }) == Errc::ParseError);
  { std::ofstream(dir / "t.toml") << "[postprocessing]\nthreshold = 1.5\n"; }
  CHECK(code_of([&] { load_config(dir / "t.toml").validate(); }) == Errc::ThresholdOutOfRange);
}
