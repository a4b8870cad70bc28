#include "segrun/error.hpp"
#include "segrun/fixtures/models.hpp"
#include "segrun/onnx/executor.hpp"
#include "segrun/onnx/model.hpp"
#include "segrun/onnx/probe.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

using namespace segrun;
using namespace segrun::onnx_io;
using segrun::fixtures::GraphBuilder;
using segrun::fixtures::set_attr;

namespace {

std::vector<float> random_values(std::size_t n, std::uint64_t seed, float lo = -1.0f, float hi = 1.0f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(lo, hi);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// Direct 3D convolution, NCDHW, symmetric padding.
std::vector<float> naive_conv(const std::vector<float>& x, int cin, int n, const std::vector<float>& w,
                              const std::vector<float>& b, int cout, int k, int pad, int stride, int& out_n) {
  out_n = (n + 2 * pad - k) / stride + 1;
  std::vector<float> y(static_cast<std::size_t>(cout) * out_n * out_n * out_n);
  for (int o = 0; o < cout; ++o)
    for (int i = 0; i < out_n; ++i)
      for (int j = 0; j < out_n; ++j)
        for (int l = 0; l < out_n; ++l) {
          double acc = b[o];
          for (int c = 0; c < cin; ++c)
            for (int a = 0; a < k; ++a)
              for (int bb = 0; bb < k; ++bb)
                for (int cc = 0; cc < k; ++cc) {
                  const int xi = i * stride - pad + a, xj = j * stride - pad + bb, xl = l * stride - pad + cc;
                  if (xi < 0 || xj < 0 || xl < 0 || xi >= n || xj >= n || xl >= n) continue;
                  acc += static_cast<double>(w[(((o * cin + c) * k + a) * k + bb) * k + cc]) *
                         x[((c * n + xi) * n + xj) * n + xl];
                }
          y[((o * out_n + i) * out_n + j) * out_n + l] = static_cast<float>(acc);
        }
  return y;
}

}  // namespace

TEST_CASE("Conv matches a direct convolution") {
  for (int stride : {1, 2}) {
    const int cin = 3, cout = 4, k = 3, n = 6;
    const auto w = random_values(cout * cin * k * k * k, 1);
    const auto b = random_values(cout, 2);
    const auto x = random_values(cin * n * n * n, 3);
    GraphBuilder g("conv");
    g.input("x", kFloat, cin).output("y", kFloat, cout);
    g.initializer("w", {cout, cin, k, k, k}, w).initializer("b", {cout}, b);
    auto& node = g.node("Conv", {"x", "w", "b"}, {"y"});
    set_attr(node, "kernel_shape", std::vector<std::int64_t>{k, k, k});
    set_attr(node, "pads", std::vector<std::int64_t>{1, 1, 1, 1, 1, 1});
    set_attr(node, "strides", std::vector<std::int64_t>{stride, stride, stride});
    GraphExecutor exec(g.build());
    const auto out = exec.run({Tensor({1, cin, n, n, n}, x)});
    int out_n = 0;
    const auto want = naive_conv(x, cin, n, w, b, cout, k, 1, stride, out_n);
    REQUIRE(out[0].shape == std::vector<std::int64_t>{1, cout, out_n, out_n, out_n});
    for (std::size_t i = 0; i < want.size(); ++i) REQUIRE(out[0].data[i] == doctest::Approx(want[i]).epsilon(1e-5));
  }
}

TEST_CASE("ConvTranspose with kernel 2 stride 2 scatters each input voxel") {
  const int cin = 2, cout = 3, n = 2;
  const auto w = random_values(cin * cout * 8, 4);
  const auto b = random_values(cout, 5);
  const auto x = random_values(cin * n * n * n, 6);
  GraphBuilder g("deconv");
  g.input("x", kFloat, cin).output("y", kFloat, cout);
  g.initializer("w", {cin, cout, 2, 2, 2}, w).initializer("b", {cout}, b);
  auto& node = g.node("ConvTranspose", {"x", "w", "b"}, {"y"});
  set_attr(node, "kernel_shape", std::vector<std::int64_t>{2, 2, 2});
  set_attr(node, "strides", std::vector<std::int64_t>{2, 2, 2});
  const auto out = GraphExecutor(g.build()).run({Tensor({1, cin, n, n, n}, x)});
  REQUIRE(out[0].shape == std::vector<std::int64_t>{1, cout, 4, 4, 4});
  for (int o = 0; o < cout; ++o)
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        for (int l = 0; l < 4; ++l) {
          double acc = b[o];
          for (int c = 0; c < cin; ++c)
            acc += static_cast<double>(x[((c * n + i / 2) * n + j / 2) * n + l / 2]) *
                   w[(((c * cout + o) * 2 + i % 2) * 2 + j % 2) * 2 + l % 2];
          CHECK(out[0].data[((o * 4 + i) * 4 + j) * 4 + l] == doctest::Approx(acc).epsilon(1e-5));
        }
}

TEST_CASE("InstanceNormalization and LeakyRelu follow their definitions") {
  const int c = 2, n = 3;
  const auto x = random_values(c * n * n * n, 7, -5.0f, 5.0f);
  GraphBuilder g("norm");
  g.input("x", kFloat, c).output("y", kFloat, c);
  g.initializer("s", {c}, {2.0f, 0.5f}).initializer("b", {c}, {0.1f, -0.3f});
  auto& norm = g.node("InstanceNormalization", {"x", "s", "b"}, {"n"});
  set_attr(norm, "epsilon", 1e-5f);
  auto& act = g.node("LeakyRelu", {"n"}, {"y"});
  set_attr(act, "alpha", 0.01f);
  const auto out = GraphExecutor(g.build()).run({Tensor({1, c, n, n, n}, x)});
  const int m = n * n * n;
  const float scale[2] = {2.0f, 0.5f}, bias[2] = {0.1f, -0.3f};
  for (int ch = 0; ch < c; ++ch) {
    double mean = 0, var = 0;
    for (int i = 0; i < m; ++i) mean += x[ch * m + i];
    mean /= m;
    for (int i = 0; i < m; ++i) var += (x[ch * m + i] - mean) * (x[ch * m + i] - mean);
    var /= m;
    for (int i = 0; i < m; ++i) {
      double v = scale[ch] * (x[ch * m + i] - mean) / std::sqrt(var + 1e-5) + bias[ch];
      if (v < 0) v *= 0.01;
      CHECK(out[0].data[ch * m + i] == doctest::Approx(v).epsilon(1e-5));
    }
  }
}

TEST_CASE("broadcasting arithmetic, Concat and Softmax") {
  GraphBuilder g("misc");
  g.input("x", kFloat, 2).output("y", kFloat, 4);
  g.initializer("k", {1, 2, 1, 1, 1}, {10.0f, 20.0f});
  g.node("Add", {"x", "k"}, {"a"});
  g.node("Mul", {"a", "x"}, {"m"});
  set_attr(g.node("Concat", {"m", "x"}, {"c"}), "axis", std::int64_t{1});
  auto& sm = g.node("Softmax", {"c"}, {"y"});
  set_attr(sm, "axis", std::int64_t{1});
  const std::vector<float> x{0.5f, -1.0f};
  const auto out = GraphExecutor(g.build()).run({Tensor({1, 2, 1, 1, 1}, x)});
  const double logits[4] = {(0.5 + 10) * 0.5, (-1.0 + 20) * -1.0, 0.5, -1.0};
  double mx = *std::max_element(logits, logits + 4), z = 0;
  for (double l : logits) z += std::exp(l - mx);
  for (int i = 0; i < 4; ++i) CHECK(out[0].data[i] == doctest::Approx(std::exp(logits[i] - mx) / z));
}

TEST_CASE("unsupported operators are reported by name") {
  GraphBuilder g("bad");
  g.input("x", kFloat, 1).output("y", kFloat, 1);
  g.node("Einsum", {"x"}, {"y"});
  try {
    GraphExecutor exec(g.build());
    FAIL("expected UnsupportedOperator");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::UnsupportedOperator);
    CHECK(std::string(e.what()).find("Einsum") != std::string::npos);
  }
}

TEST_CASE("input type and channel count are checked") {
  GraphExecutor exec(fixtures::identity_model(2));
  CHECK_THROWS_AS(exec.run({Tensor({1, 3, 2, 2, 2})}), Error);
  CHECK_THROWS_AS(exec.run({Tensor({1, 2, 2, 2, 2}, ElemType::Float16)}), Error);
}

TEST_CASE("probe reads I/O signatures without decoding weights") {
  const auto model = fixtures::unet_model({.in_channels = 2, .num_classes = 3});
  const auto sig = probe_bytes(model.SerializeAsString());
  REQUIRE(sig.inputs.size() == 1);
  REQUIRE(sig.outputs.size() == 1);
  CHECK(sig.inputs[0].elem_type == kFloat);
  CHECK(std::get<std::int64_t>(sig.inputs[0].dims[1]) == 2);
  CHECK(std::get<std::string>(sig.inputs[0].dims[0]) == "batch");
  CHECK(std::get<std::int64_t>(sig.outputs[0].dims[1]) == 3);
  CHECK(sig.opset == 17);
  CHECK(std::find(sig.op_types.begin(), sig.op_types.end(), "ConvTranspose") != sig.op_types.end());
  CHECK_THROWS_AS(probe_bytes("\x0a\xff\xff\xff\xff\x0f"), Error);
}

TEST_CASE("fixture U-Net is large enough and structurally valid") {
  const auto model = fixtures::unet_model({});
  CHECK(fixtures::parameter_count(model) >= 100000);
  CHECK(validate(model).empty());
  GraphExecutor exec(model);
  const auto out = exec.run({Tensor({1, 1, 8, 8, 8}, random_values(512, 9))});
  CHECK(out[0].shape == std::vector<std::int64_t>{1, 2, 8, 8, 8});
  for (float v : out[0].data) CHECK(std::isfinite(v));
}

TEST_CASE("save and load preserve the model") {
  segrun::testing::TempDir dir;
  const auto model = fixtures::constant_model(1, {0.0f, 3.0f});
  save(model, dir / "m.onnx");
  const auto back = load(dir / "m.onnx");
  CHECK(back.SerializeAsString() == model.SerializeAsString());
  { std::ofstream(dir / "junk.onnx") << "not a model at all"; }
  try {
    load(dir / "junk.onnx");
    FAIL("expected ParseError");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::ParseError);
  }
}
