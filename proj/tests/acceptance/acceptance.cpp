// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include "segrun/bench/bench.hpp"
#include "segrun/equivalence/equivalence.hpp"
#include "segrun/fixtures/models.hpp"
#include "segrun/fixtures/subjects.hpp"
#include "segrun/inference/sliding_window.hpp"
#include "segrun/nifti.hpp"
#include "segrun/onnx/model.hpp"
#include "segrun/postprocess/postprocess.hpp"
#include "segrun/preprocess/external_step.hpp"
#include "segrun/quantize/quantizer.hpp"
#include "segrun/segment.hpp"
#include "segrun/sha256.hpp"
#include "oracles.hpp"
#include "support.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

using namespace segrun;
using segrun::testing::Rng;
using segrun::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects the first few failure messages of a criterion.
class Checker {
public:
  void expect(bool ok, const std::string& what) {
    ++checks_;
    if (ok) return;
    ++failures_;
    if (failures_ <= 3) messages_ += (messages_.empty() ? "" : "; ") + what;
  }
  Outcome outcome(const std::string& summary) const {
    if (failures_ == 0) return {true, summary + " (" + std::to_string(checks_) + " checks)"};
    return {false, std::to_string(failures_) + "/" + std::to_string(checks_) + " checks failed: " + messages_};
  }

private:
  std::size_t checks_ = 0, failures_ = 0;
  std::string messages_;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

ModelManifest manifest_for(int channels, int classes, const Shape3& patch) {
  ModelManifest m;
  m.model_id = "fixture";
  m.modalities = channels == 1 ? std::vector<std::string>{"T1w"} : std::vector<std::string>{"T1w", "FLAIR"};
  m.patch_size = {static_cast<int>(patch[0]), static_cast<int>(patch[1]), static_cast<int>(patch[2])};
  m.num_classes = classes;
  return m;
}

ProviderList cpu_only() { return {std::make_shared<CpuProvider>()}; }

// ---------------------------------------------------------------------------

Outcome fp16_equivalence() {
  TempDir dir("segrun-accept");
  const fixtures::SubjectSpec spec;  // 40 x 40 x 32 at 1 mm
  const auto subjects = fixtures::write_cohort(dir / "ds", 10, 2024, spec);
  auto model = fixtures::unet_model({2, 2, 16, 48, 7});
  fixtures::calibrate_head(model, fixtures::calibration_patches(spec, 4, 32, true, 99), 0.1, 1);

  int convs = 0;
  for (const auto& n : model.graph().node()) convs += n.op_type() == "Conv" || n.op_type() == "ConvTranspose";
  const auto params = fixtures::parameter_count(model);
  if (convs < 3 || params < 100000) {
    return {false, "fixture model too small: " + std::to_string(convs) + " conv layers, " + std::to_string(params) +
                       " parameters"};
  }
  ModelManifest f32 = segrun::testing::save_fixture_model(dir / "models", model, "unet-f32", {"T1w", "FLAIR"}, {32, 32, 32});
  quantize_fp16(f32.onnx_path, dir / "models" / "unet-f16.onnx");
  ModelManifest f16 = f32;
  f16.model_id = "unet-f16";
  f16.onnx_path = dir / "models" / "unet-f16.onnx";
  f16.sha256 = sha256_file(f16.onnx_path);
  f16.precision = Precision::Float16;

  PipelineConfig config;
  config.cache_dir = dir / "cache";
  config.log_dir = dir / "logs";
  config.inference.prefer_gpu = false;
  EquivalenceOptions eo;
  eo.providers = cpu_only();
  const auto t0 = std::chrono::steady_clock::now();
  const EquivalenceReport r = validate_equivalence(subjects, f32, f16, config, eo);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::size_t lesion = 0;
  for (const auto& s : r.per_subject) lesion += s.lesion_voxels_f32;
  const std::string detail = "mean_dice_diff=" + fmt("%.3e", r.mean_dice_diff) + " over " +
                             std::to_string(r.n_subjects) + " subjects, " + std::to_string(convs) + " conv layers, " +
                             std::to_string(params) + " parameters, " + std::to_string(lesion / r.per_subject.size()) +
                             " lesion voxels/subject, " + fmt("%.1f s", secs);
  return {r.n_subjects == 10 && lesion > 0 && r.mean_dice_diff < 1e-3, detail};
}

Outcome quantizer_size_reduction() {
  TempDir dir("segrun-accept");
  onnx_io::save(fixtures::wide_model(2, 2, 48, 5), dir / "wide.onnx");
  const SizeAudit audit = size_audit(dir / "wide.onnx");
  const double share = static_cast<double>(audit.initializer_bytes) / static_cast<double>(audit.total_bytes);
  const QuantisationReport r = quantize_fp16(dir / "wide.onnx", dir / "wide16.onnx");
  const double ratio = r.reduction_ratio;
  const double measured = 1.0 - static_cast<double>(fs::file_size(dir / "wide16.onnx")) /
                                    static_cast<double>(fs::file_size(dir / "wide.onnx"));
  return {share >= 0.95 && ratio >= 0.45 && ratio <= 0.52 && std::abs(measured - ratio) < 1e-9,
          "initializers " + fmt("%.1f%%", 100 * share) + " of file, reduction_ratio=" + fmt("%.4f", ratio)};
}

Outcome patch_plan_oracle() {
  Rng rng(1000);
  // Bounded so the 3D origin product stays small; tiny patches are covered per axis below.
  std::uniform_int_distribution<std::size_t> ext(1, 320), pat(16, 160), frac(25, 100);
  Checker c;
  for (int i = 0; i < 1000; ++i) {
    Shape3 shape, patch;
    for (int d = 0; d < 3; ++d) {
      shape[d] = ext(rng);
      patch[d] = pat(rng);
    }
    const std::size_t num = frac(rng);
    const double f = static_cast<double>(num) / 100.0;
    const PatchGrid g = plan_patches(shape, patch, f);
    std::size_t expected_count = 1;
    for (int d = 0; d < 3; ++d) {
      const auto want = oracle::plan_axis_exact(shape[d], patch[d], num, 100);
      const auto& got = g.axis_origins[d];
      expected_count *= want.origins.size();
      c.expect(got == want.origins, "origins differ from oracle");
      c.expect(g.padded_shape[d] == want.padded && g.pad_low[d] == want.pad_low, "padding differs from oracle");
      c.expect(got.front() == 0 && got.back() + patch[d] == g.padded_shape[d], "endpoints not pinned");
      // Coverage: every padded voxel lies in some patch, and gaps respect the step.
      std::vector<char> covered(g.padded_shape[d], 0);
      for (auto o : got)
        for (std::size_t k = 0; k < patch[d] && o + k < covered.size(); ++k) covered[o + k] = 1;
      c.expect(std::all_of(covered.begin(), covered.end(), [](char v) { return v != 0; }), "uncovered voxel");
      for (std::size_t k = 1; k < got.size(); ++k) {
        c.expect(got[k] > got[k - 1], "origins not increasing");
        c.expect(static_cast<double>(got[k] - got[k - 1]) <= f * static_cast<double>(patch[d]) + 1.0, "gap exceeds step");
      }
    }
    c.expect(g.origins.size() == expected_count, "origin product size");
  }
  std::uniform_int_distribution<std::size_t> tiny(1, 15), fine(1, 100);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t L = ext(rng), P = tiny(rng);
    const std::size_t num = fine(rng);
    const double f = static_cast<double>(num) / 100.0;
    c.expect(plan_axis(L, P, f) == oracle::plan_axis_exact(L, P, num, 100).origins, "small-patch axis differs from oracle");
  }
  return c.outcome("1000 random (shape, patch, step_fraction) triples plus 1000 small-patch axes match the brute-force oracle");
}

Outcome merge_invariants() {
  Rng rng(4242);
  Checker c;
  std::uniform_int_distribution<std::size_t> pd(2, 9);
  std::uniform_real_distribution<float> logit(-8.0f, 8.0f);
  std::normal_distribution<float> normal(0.0f, 2.0f);
  std::uniform_int_distribution<int> fr(1, 4);
  for (int trial = 0; trial < 100; ++trial) {
    const Shape3 shape = segrun::testing::random_shape(rng, 1, 20);
    const Shape3 patch{pd(rng), pd(rng), pd(rng)};
    const double step = 0.25 * fr(rng);
    InferenceOptions io;
    io.step_fraction = step;

    // Constant field: exact.
    const std::vector<float> consts{logit(rng), logit(rng)};
    InferenceEngine ce(manifest_for(1, 2, patch), fixtures::constant_model(1, consts), cpu_only());
    ChannelStack one(1, shape);
    for (auto& v : one.data) v = normal(rng);
    const auto rc = ce.infer(one, io);
    c.expect(rc.min_weight > 0.0, "non-positive weight sum");
    for (std::size_t k = 0; k < 2; ++k)
      for (float v : rc.logits.channel(k)) c.expect(v == consts[k], "constant field not exact");

    // Identity model returns its input.
    ChannelStack two(2, shape);
    for (auto& v : two.data) v = normal(rng);
    InferenceEngine ie(manifest_for(2, 2, patch), fixtures::identity_model(2), cpu_only());
    const auto ri = ie.infer(two, io);
    double worst = 0.0;
    for (std::size_t i = 0; i < two.data.size(); ++i) worst = std::max(worst, double(std::abs(ri.logits.data[i] - two.data[i])));
    c.expect(worst <= 1e-5, "identity merge off by " + fmt("%.2e", worst));

    // Arbitrary per-patch logits merged in two orders.
    const PatchGrid grid = plan_patches(shape, patch, step);
    const ImportanceMap imp = gaussian_importance(patch);
    std::vector<std::vector<float>> patches(grid.origins.size(), std::vector<float>(2 * voxel_count(patch)));
    for (auto& p : patches)
      for (auto& v : p) v = normal(rng);
    std::vector<std::size_t> order(patches.size());
    std::iota(order.begin(), order.end(), 0);
    PatchMerger a(2, grid.padded_shape, imp), b(2, grid.padded_shape, imp);
    for (auto i : order) a.add(grid.origins[i], patches[i]);
    std::shuffle(order.begin(), order.end(), rng);
    for (auto i : order) b.add(grid.origins[i], patches[i]);
    c.expect(a.min_weight() > 0.0 && b.min_weight() > 0.0, "weight accumulator not strictly positive");
    for (double w : a.weight_sum()) c.expect(w > 0.0, "zero weight in padded grid");
    const auto fa = a.finalize(grid.pad_low, shape), fb = b.finalize(grid.pad_low, shape);
    double perm = 0.0;
    for (std::size_t i = 0; i < fa.data.size(); ++i) perm = std::max(perm, double(std::abs(fa.data[i] - fb.data[i])));
    c.expect(perm <= 1e-5, "patch order changed output by " + fmt("%.2e", perm));
  }
  return c.outcome("100 randomised cases: constant exact, identity and permutation within 1e-5, weights > 0");
}

Outcome softmax_threshold_dice() {
  Rng rng(77);
  Checker c;
  std::normal_distribution<float> wide(0.0f, 10.0f);
  std::uniform_int_distribution<std::size_t> kd(2, 5);
  for (int t = 0; t < 50; ++t) {
    ChannelStack logits(kd(rng), segrun::testing::random_shape(rng, 1, 12));
    for (auto& v : logits.data) v = wide(rng);
    const ChannelStack p = softmax(logits);
    for (std::size_t i = 0; i < p.channel_size(); ++i) {
      double sum = 0.0;
      for (std::size_t k = 0; k < p.channels; ++k) sum += p.channel(k)[i];
      c.expect(std::abs(sum - 1.0) <= 1e-6, "channel sum " + fmt("%.9f", sum));
    }
  }
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    const Volume prob = segrun::testing::random_volume(rng, segrun::testing::random_shape(rng, 1, 16), 0.0f, 1.0f);
    double t1 = ud(rng), t2 = ud(rng);
    if (t1 > t2) std::swap(t1, t2);
    t1 = std::clamp(t1, 1e-6, 1 - 1e-6);
    t2 = std::clamp(t2, 1e-6, 1 - 1e-6);
    const Volume lo = threshold_mask(prob, t1), hi = threshold_mask(prob, t2);
    bool subset = true;
    for (std::size_t i = 0; i < lo.size(); ++i) subset = subset && !(hi.data()[i] != 0.0f && lo.data()[i] == 0.0f);
    c.expect(subset, "mask at higher threshold not a subset");
  }
  const Shape3 s{8, 8, 8};
  std::vector<float> a(512, 0.0f), b(512, 0.0f), half(512, 0.0f);
  for (std::size_t i = 0; i < 256; ++i) a[i] = 1.0f;
  for (std::size_t i = 256; i < 512; ++i) b[i] = 1.0f;
  for (std::size_t i = 128; i < 384; ++i) half[i] = 1.0f;  // half of a, half of b
  const Affine id = Affine::Identity();
  const Volume va(s, a, id), vb(s, b, id), vh(s, half, id);
  c.expect(dice(va, va) == 1.0, "dice(identical) != 1");
  c.expect(dice(va, vb) == 0.0, "dice(disjoint) != 0");
  c.expect(dice(va, vh) == 0.5, "dice(half overlap) != 0.5");
  return c.outcome("softmax sums, 100 threshold-monotonicity volumes, exact dice examples");
}

Outcome nifti_roundtrip() {
  TempDir dir("segrun-accept");
  Rng rng(50);
  Checker c;
  for (int i = 0; i < 50; ++i) {
    const Shape3 shape = segrun::testing::random_shape(rng, 1, 24);
    const Volume v0 = segrun::testing::random_volume(rng, shape, -1000.0f, 1000.0f);
    const Volume v(shape, {v0.data().begin(), v0.data().end()}, segrun::testing::random_affine(rng));
    const fs::path path = dir / ("v" + std::to_string(i) + (i % 2 ? ".nii.gz" : ".nii"));
    nifti::write(v, path);
    const Volume back = nifti::read(path);
    c.expect(back.shape() == v.shape(), "shape changed");
    c.expect(std::equal(back.data().begin(), back.data().end(), v.data().begin(), v.data().end()), "data changed");
    c.expect((back.affine() - v.affine()).cwiseAbs().maxCoeff() <= 1e-6, "affine drifted");
    // Other encoding decodes identically.
    const fs::path other = dir / ("w" + std::to_string(i) + (i % 2 ? ".nii" : ".nii.gz"));
    nifti::write(v, other);
    const Volume alt = nifti::read(other);
    c.expect(std::equal(alt.data().begin(), alt.data().end(), back.data().begin(), back.data().end()),
             "compressed and plain encodings differ");
  }
  return c.outcome("50 random volumes, .nii and .nii.gz, exact data, affine within 1e-6");
}

Outcome cache_idempotence() {
  TempDir dir("segrun-accept");
  fixtures::SubjectSpec spec;
  spec.shape = {18, 16, 14};
  const auto subjects = fixtures::write_cohort(dir / "ds", 1, 606, spec);
  const fs::path counter = dir / "invocations.log";
  auto counted = [&](const std::string& name, const std::string& extra = "") {
    return external_step(name, "sh -c 'echo " + name + " >> " + counter.string() + " && cp " + extra +
                                   "\"$0\" \"$1\"' {in0} {out0}");
  };
  auto invocations = [&] {
    if (!fs::exists(counter)) return std::size_t{0};
    const std::string text = segrun::testing::file_bytes(counter);
    return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
  };
  PipelineConfig base;
  base.brain_extraction = counted("brain_extraction");
  base.registration = counted("registration");
  base.cache_dir = dir / "cache";
  base.log_dir = dir / "logs";
  base.inference.prefer_gpu = false;
  const ModelManifest manifest = segrun::testing::save_fixture_model(
      dir / "models", fixtures::identity_model(2), "id", {"T1w", "FLAIR"}, {8, 8, 8}, {1.5, 1.5, 1.5});
  SegmentOptions so;
  so.providers = cpu_only();
  so.save_probability = true;

  Checker c;
  const auto first = segment_subject(subjects[0], manifest, base, so);
  c.expect(invocations() == 2, "first run should invoke both hooks");
  std::map<fs::path, std::string> bytes;
  for (const auto& f : first.outputs) bytes[f] = segrun::testing::file_bytes(f);
  const auto second = segment_subject(subjects[0], manifest, base, so);
  c.expect(invocations() == 2, "second run invoked a hook");
  for (const auto& s : second.steps) {
    if (s.stage != Stage::Inference && s.stage != Stage::Postprocessing) c.expect(s.cache_hit, s.step + " missed the cache");
  }
  c.expect(second.outputs.size() == first.outputs.size(), "output list changed");
  for (const auto& [f, b] : bytes) c.expect(segrun::testing::file_bytes(f) == b, f.filename().string() + " not byte-identical");

  auto misses = [&](const PipelineConfig& cfg, const ModelManifest& m) {
    std::vector<StepRecord> log;
    run_pipeline(subjects[0], cfg, m, {}, log);
    std::set<std::string> missed;
    for (const auto& r : log)
      if (!r.cache_hit) missed.insert(r.step);
    return missed;
  };
  {
    auto cfg = base;
    cfg.brain_extraction = counted("brain_extraction", "-p ");
    c.expect(misses(cfg, manifest).count("brain_extraction") == 1, "command change hit the cache");
  }
  {
    auto cfg = base;
    cfg.registration.version = "2.0.0";
    c.expect(misses(cfg, manifest).count("registration") == 1, "version change hit the cache");
  }
  {
    auto cfg = base;
    cfg.interpolation = Interpolation::Nearest;
    c.expect(misses(cfg, manifest).count("normalize_T1w") == 1, "interpolation change hit the cache");
  }
  {
    auto m = manifest;
    m.target_spacing = {1.25, 1.5, 1.5};
    c.expect(misses(base, m).count("normalize_FLAIR") == 1, "spacing change hit the cache");
  }
  {
    const Volume t1 = nifti::read(subjects[0].t1w_path);
    std::vector<float> d(t1.data().begin(), t1.data().end());
    d[d.size() / 2] += 1.0f;
    nifti::write(t1.with_data(d), subjects[0].t1w_path);
    c.expect(misses(base, manifest).count("brain_extraction") == 1, "input change hit the cache");
  }
  return c.outcome("rerun: 0 hook invocations, byte-identical outputs; 5 single-parameter mutations miss");
}

Outcome cpu_fallback() {
  TempDir dir("segrun-accept");
  fixtures::SubjectSpec spec;
  spec.shape = {16, 16, 12};
  const auto subjects = fixtures::write_cohort(dir / "ds", 1, 808, spec);
  PipelineConfig config;
  config.cache_dir = dir / "cache";
  config.log_dir = dir / "logs";
  const ModelManifest manifest =
      segrun::testing::save_fixture_model(dir / "models", fixtures::identity_model(2), "id", {"T1w", "FLAIR"}, {8, 8, 8});
  SegmentOptions so;
  so.providers = {std::make_shared<segrun::testing::BrokenGpuProvider>(), std::make_shared<CpuProvider>()};
  const auto out = segment_subject(subjects[0], manifest, config, so);
  const auto prov = nlohmann::json::parse(segrun::testing::file_bytes(out.provenance_path));
  const std::string reason = prov["backend"].value("selected_reason", "");
  Checker c;
  c.expect(out.result.has_value(), "no result");
  c.expect(prov["status"] == "ok", "run did not succeed");
  c.expect(prov["backend"]["kind"] == "cpu", "backend is not cpu");
  c.expect(reason.find("test-gpu") != std::string::npos && reason.find("fell back") != std::string::npos,
           "fallback reason missing: " + reason);
  return c.outcome("GPU init failure -> CPU; provenance reason: \"" + reason + "\"");
}

struct Row {
  std::string task;
  double seconds;
  std::string backend;
  int n;
  bool operator==(const Row&) const = default;
};

std::vector<Row> rows_from_delimited(const std::string& text, bool csv) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line.rfind("partial", 0) == 0) continue;
    if (csv) std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream f(line);
    Row r;
    f >> r.task >> r.seconds >> r.backend >> r.n;
    rows.push_back(r);
  }
  return rows;
}

Outcome bench_harness() {
  TempDir dir("segrun-accept");
  fixtures::SubjectSpec spec;
  spec.shape = {12, 12, 10};
  const auto subjects = fixtures::write_cohort(dir / "ds", 3, 909, spec);
  const double brain_s = 0.2, reg_s = 0.1;
  PipelineConfig config;
  config.brain_extraction =
      external_step("brain_extraction", "sh -c 'sleep " + std::to_string(brain_s) + " && cp \"$0\" \"$1\"' {in0} {out0}");
  config.registration =
      external_step("registration", "sh -c 'sleep " + std::to_string(reg_s) + " && cp \"$0\" \"$1\"' {in0} {out0}");
  config.cache_dir = dir / "cache";
  config.log_dir = dir / "logs";
  const ModelManifest manifest = segrun::testing::save_fixture_model(
      dir / "models", fixtures::constant_model(2, {0.0f, 1.0f}), "c", {"T1w", "FLAIR"}, {8, 8, 8});
  BenchOptions bo;
  bo.providers = cpu_only();
  const BenchReport report = bench_pipeline(subjects, manifest, config, bo);
  Checker c;
  c.expect(!report.partial, "partial report: " + report.error);
  std::map<std::string, double> mean;
  for (const auto& t : report.stages) mean[t.task] = t.seconds_per_volume;
  c.expect(mean["brain_extraction"] >= brain_s && mean["brain_extraction"] <= brain_s + 0.05,
           "brain_extraction mean " + fmt("%.4f", mean["brain_extraction"]));
  c.expect(mean["registration"] >= reg_s && mean["registration"] <= reg_s + 0.05,
           "registration mean " + fmt("%.4f", mean["registration"]));

  const auto text = rows_from_delimited(report_table(report, ReportFormat::Text), false);
  const auto csv = rows_from_delimited(report_table(report, ReportFormat::Csv), true);
  std::vector<Row> json_rows;
  const auto j = nlohmann::json::parse(report_table(report, ReportFormat::Json));
  for (const auto& r : j["stages"]) json_rows.push_back({r["task"], r["seconds_per_volume"], r["backend"], r["n"]});
  json_rows.push_back({j["end_to_end"]["task"], j["end_to_end"]["seconds_per_volume"], j["end_to_end"]["backend"],
                       j["end_to_end"]["n"]});
  c.expect(!text.empty() && text == csv, "text and csv disagree");
  c.expect(csv == json_rows, "csv and json disagree");
  return c.outcome("brain_extraction " + fmt("%.4f s", mean["brain_extraction"]) + " (sleep 0.2), registration " +
                   fmt("%.4f s", mean["registration"]) + " (sleep 0.1); text/csv/json agree");
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::warn);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"fp16-equivalence", fp16_equivalence},
      {"quantizer-size-reduction", quantizer_size_reduction},
      {"patch-plan-oracle", patch_plan_oracle},
      {"merge-invariants", merge_invariants},
      {"softmax-threshold-dice", softmax_threshold_dice},
      {"nifti-roundtrip", nifti_roundtrip},
      {"cache-idempotence", cache_idempotence},
      {"cpu-fallback", cpu_fallback},
      {"bench-harness", bench_harness},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s  %-26s %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
