#include "segrun/error.hpp"
#include "segrun/fixtures/models.hpp"
#include "segrun/fp16.hpp"
#include "segrun/onnx/executor.hpp"
#include "segrun/quantize/quantizer.hpp"
#include "oracles.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>

using namespace segrun;
using segrun::testing::TempDir;
namespace fs = std::filesystem;

namespace {

std::vector<std::uint16_t> half_bits(const onnx::TensorProto& t) {
  REQUIRE(t.data_type() == onnx_io::kFloat16);
  std::vector<std::uint16_t> bits(t.raw_data().size() / 2);
  std::memcpy(bits.data(), t.raw_data().data(), bits.size() * 2);
  return bits;
}

const onnx::TensorProto& initializer(const onnx::ModelProto& m, const std::string& name) {
  for (const auto& t : m.graph().initializer())
    if (t.name() == name) return t;
  FAIL("no initializer " << name);
  throw std::logic_error("unreachable");
}

onnx::ModelProto single_tensor_model(const std::vector<float>& values, std::vector<std::int64_t> dims) {
  fixtures::GraphBuilder g("single");
  g.input("input", onnx_io::kFloat, 1).output("logits", onnx_io::kFloat, 1);
  g.initializer("w", std::move(dims), values);
  g.initializer("scale", {1, 1, 1, 1, 1}, {1.0f});
  g.node("Mul", {"input", "scale"}, {"logits"});
  return g.build();
}

onnx_io::Tensor random_patch(segrun::testing::Rng& rng, std::int64_t c, std::int64_t p) {
  onnx_io::Tensor t({1, c, p, p, p});
  std::normal_distribution<float> n(0.0f, 1.0f);
  for (auto& v : t.data) v = n(rng);
  return t;
}

std::vector<float> lesion_probability(const onnx_io::Tensor& logits) {
  const std::size_t spatial = logits.numel() / 2;
  std::vector<float> p(spatial);
  for (std::size_t i = 0; i < spatial; ++i) {
    const double a = logits.data[i], b = logits.data[spatial + i];
    p[i] = static_cast<float>(1.0 / (1.0 + std::exp(a - b)));
  }
  return p;
}

}  // namespace

TEST_CASE("a model without float32 initializers converts vacuously") {
  auto m = fixtures::identity_model(2);
  const auto r = quantize_model(m);
  CHECK(r.tensors_converted == 0);
  CHECK(r.clamped_values == 0);
  CHECK(m.graph().initializer_size() == 0);
  CHECK(m.graph().input(0).type().tensor_type().elem_type() == onnx_io::kFloat16);
  CHECK(onnx_io::validate(m).empty());
}

TEST_CASE("size audit counts initializer payloads") {
  TempDir dir;
  std::vector<float> w(100);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.01f * static_cast<float>(i);
  onnx_io::save(single_tensor_model(w, {10, 10}), dir / "m.onnx");
  const auto before = size_audit(dir / "m.onnx");
  CHECK(before.tensors.front().name == "w");
  CHECK(before.tensors.front().bytes == 400);
  CHECK(before.initializer_bytes == 404);
  CHECK(before.total_bytes == static_cast<std::int64_t>(fs::file_size(dir / "m.onnx")));

  quantize_fp16(dir / "m.onnx", dir / "h.onnx");
  const auto after = size_audit(dir / "h.onnx");
  CHECK(after.tensors.front().bytes == 200);
  CHECK(after.tensors.front().data_type == "float16");
  std::int64_t sum = 0;
  for (const auto& t : after.tensors) sum += t.bytes;
  CHECK(sum == after.initializer_bytes);
}

TEST_CASE("audit rows are sorted and sum to the total") {
  TempDir dir;
  onnx_io::save(fixtures::unet_model({2, 2, 8, 16, 3}), dir / "u.onnx");
  const auto a = size_audit(dir / "u.onnx");
  std::int64_t sum = 0;
  for (std::size_t i = 0; i < a.tensors.size(); ++i) {
    sum += a.tensors[i].bytes;
    if (i > 0) CHECK(a.tensors[i - 1].bytes >= a.tensors[i].bytes);
  }
  CHECK(sum == a.initializer_bytes);
  const nlohmann::json j = a;
  CHECK(j["tensors"].size() == a.tensors.size());
  CHECK(format_audit(a, 3).find("more") != std::string::npos);
}

TEST_CASE("overflowing weights clamp to the largest half") {
  auto m = single_tensor_model({70000.0f, -1e9f, 1.0f, 65504.0f}, {4});
  const auto r = quantize_model(m);
  CHECK(r.clamped_values == 2);
  const auto bits = half_bits(initializer(m, "w"));
  CHECK(oracle::decode_half(bits[0]) == 65504.0);
  CHECK(oracle::decode_half(bits[1]) == -65504.0);
  CHECK(oracle::decode_half(bits[2]) == 1.0);
  CHECK(oracle::decode_half(bits[3]) == 65504.0);
}

TEST_CASE("converted weights equal the nearest half and respect the ulp bound") {
  segrun::testing::Rng rng(97);
  std::vector<float> w(400);
  std::uniform_real_distribution<float> mag(-20.0f, 12.0f);
  std::bernoulli_distribution neg(0.5);
  for (auto& v : w) v = (neg(rng) ? -1.0f : 1.0f) * std::exp2(mag(rng));
  w[0] = 1e-9f;   // flushes to zero
  w[1] = 3e-8f;   // rounds to the smallest subnormal
  auto m = single_tensor_model(w, {20, 20});
  quantize_model(m);
  const auto bits = half_bits(initializer(m, "w"));
  for (std::size_t i = 0; i < w.size(); ++i) {
    REQUIRE(oracle::decode_half(bits[i]) == oracle::decode_half(oracle::nearest_half(w[i])));
    const double err = std::abs(oracle::decode_half(bits[i]) - static_cast<double>(w[i]));
    REQUIRE(err <= std::max(std::ldexp(std::abs(static_cast<double>(w[i])), -11), std::ldexp(1.0, -24)));
  }
  CHECK(oracle::decode_half(bits[0]) == 0.0);
  CHECK(oracle::decode_half(bits[1]) == std::ldexp(1.0, -24));
}

TEST_CASE("quantising twice is a no-op") {
  auto m = fixtures::unet_model({1, 2, 8, 16, 5});
  quantize_model(m);
  const auto once = m.graph().SerializeAsString();
  std::vector<std::string> payloads;
  for (const auto& t : m.graph().initializer()) payloads.push_back(t.raw_data());
  const auto r = quantize_model(m);
  CHECK(r.tensors_converted == 0);
  CHECK(r.casts_inserted == 0);
  CHECK(m.graph().SerializeAsString() == once);
  for (int i = 0; i < m.graph().initializer_size(); ++i) CHECK(m.graph().initializer(i).raw_data() == payloads[i]);
}

TEST_CASE("report invariants") {
  TempDir dir;
  onnx_io::save(fixtures::unet_model({1, 2, 8, 16, 7}), dir / "u.onnx");
  const auto r = quantize_fp16(dir / "u.onnx", dir / "out" / "u16.onnx");
  CHECK(r.reduction_ratio == doctest::Approx(1.0 - double(r.size_after_bytes) / double(r.size_before_bytes)));
  CHECK(r.reduction_ratio >= 0.0);
  CHECK(r.reduction_ratio < 1.0);
  CHECK(r.initializer_bytes_after * 2 == r.initializer_bytes_before);
  CHECK(r.size_after_bytes == static_cast<std::int64_t>(fs::file_size(dir / "out" / "u16.onnx")));
  const nlohmann::json j = r;
  for (const char* key : {"tensors_converted", "tensors_excluded", "clamped_values", "size_before_bytes",
                          "size_after_bytes", "reduction_ratio"})
    CHECK(j.contains(key));
  CHECK(onnx_io::validate(onnx_io::load(dir / "out" / "u16.onnx")).empty());
}

TEST_CASE("weight-dominated model shrinks by about half") {
  TempDir dir;
  onnx_io::save(fixtures::wide_model(2, 2, 48, 5), dir / "w.onnx");
  const auto audit = size_audit(dir / "w.onnx");
  CHECK(double(audit.initializer_bytes) / double(audit.total_bytes) >= 0.95);
  const auto r = quantize_fp16(dir / "w.onnx", dir / "w16.onnx");
  CHECK(r.reduction_ratio >= 0.45);
  CHECK(r.reduction_ratio <= 0.52);
}

TEST_CASE("excluded tensors stay float32 behind casts") {
  auto m = fixtures::unet_model({2, 2, 8, 16, 11});
  const auto reference = m;
  QuantizeOptions opts;
  opts.exclude = {"*.norm.*"};
  const auto r = quantize_model(m, opts);
  CHECK(r.tensors_excluded > 0);
  CHECK(r.casts_inserted > 0);
  for (const auto& t : m.graph().initializer()) {
    const bool norm = t.name().find(".norm.") != std::string::npos;
    CHECK(t.data_type() == (norm ? onnx_io::kFloat : onnx_io::kFloat16));
  }
  CHECK(onnx_io::validate(m).empty());

  segrun::testing::Rng rng(101);
  const auto x = random_patch(rng, 2, 8);
  const auto y32 = onnx_io::GraphExecutor(reference).run({x}).front();
  const auto y16 = onnx_io::GraphExecutor(m).run({x.cast(onnx_io::ElemType::Float16)}).front();
  CHECK(y16.type == onnx_io::ElemType::Float16);
  const auto p32 = lesion_probability(y32), p16 = lesion_probability(y16);
  for (std::size_t i = 0; i < p32.size(); ++i) REQUIRE(std::abs(p32[i] - p16[i]) < 5e-3);
}

TEST_CASE("operators without float16 kernels need --force") {
  auto m = fixtures::identity_model(1);
  m.mutable_graph()->mutable_node(0)->set_op_type("NonMaxSuppression");
  auto copy = m;
  try {
    quantize_model(m);
    FAIL("expected UnsupportedOperator");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::UnsupportedOperator);
    CHECK(std::string(e.what()).find("NonMaxSuppression") != std::string::npos);
  }
  QuantizeOptions force;
  force.force = true;
  const auto r = quantize_model(copy, force);
  CHECK(r.unsupported_operators == std::vector<std::string>{"NonMaxSuppression"});
  CHECK(has_float16_kernel("Conv"));
}

TEST_CASE("unreadable inputs") {
  TempDir dir;
  { std::ofstream(dir / "junk.onnx") << "\x01\x02not a model"; }
  try {
    quantize_fp16(dir / "junk.onnx", dir / "o.onnx");
    FAIL("expected ParseError");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::ParseError);
  }
  try {
    quantize_fp16(dir / "missing.onnx", dir / "o.onnx");
    FAIL("expected IoError");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::IoError);
  }
}

TEST_CASE("float16 U-Net agrees with float32 per voxel") {
  segrun::testing::Rng rng(103);
  const auto f32 = fixtures::unet_model({2, 2, 16, 48, 13});
  auto f16 = f32;
  quantize_model(f16);
  const onnx_io::GraphExecutor e32(f32), e16(f16);
  double max_diff = 0.0;
  std::size_t disagree = 0, total = 0;
  for (int trial = 0; trial < 3; ++trial) {
    const auto x = random_patch(rng, 2, 16);
    const auto p32 = lesion_probability(e32.run({x}).front());
    const auto p16 = lesion_probability(e16.run({x.cast(onnx_io::ElemType::Float16)}).front());
    for (std::size_t i = 0; i < p32.size(); ++i) {
      max_diff = std::max(max_diff, static_cast<double>(std::abs(p32[i] - p16[i])));
      disagree += (p32[i] >= 0.5f) != (p16[i] >= 0.5f);
      ++total;
    }
  }
  MESSAGE("max probability difference " << max_diff << ", flipped voxels " << disagree << "/" << total);
  CHECK(max_diff < 5e-3);
}
