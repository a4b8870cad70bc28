#include "segrun/fixtures/models.hpp"

#include "segrun/error.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace segrun::fixtures {

namespace {

void set_type(onnx::ValueInfoProto& vi, int elem_type, std::int64_t channels, const char* channel_param = nullptr) {
  auto* tt = vi.mutable_type()->mutable_tensor_type();
  tt->set_elem_type(elem_type);
  auto* shape = tt->mutable_shape();
  shape->add_dim()->set_dim_param("batch");
  if (channel_param) shape->add_dim()->set_dim_param(channel_param);
  else shape->add_dim()->set_dim_value(channels);
  shape->add_dim()->set_dim_param("x");
  shape->add_dim()->set_dim_param("y");
  shape->add_dim()->set_dim_param("z");
}

class WeightSource {
public:
  explicit WeightSource(std::uint64_t seed) : rng_(seed) {}

  // He-uniform initialisation for a layer with the given fan-in.
  std::vector<float> he(std::size_t count, std::size_t fan_in) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<float> w(count);
    for (auto& v : w) v = static_cast<float>(dist(rng_));
    return w;
  }
  std::vector<float> around(std::size_t count, double centre, double spread) {
    std::uniform_real_distribution<double> dist(centre - spread, centre + spread);
    std::vector<float> w(count);
    for (auto& v : w) v = static_cast<float>(dist(rng_));
    return w;
  }

private:
  std::mt19937_64 rng_;
};

std::string conv_block(GraphBuilder& g, WeightSource& ws, const std::string& prefix, const std::string& in,
                       std::int64_t cin, std::int64_t cout, std::int64_t stride, bool norm_act) {
  const auto k = 3;
  g.initializer(prefix + ".weight", {cout, cin, k, k, k}, ws.he(cout * cin * k * k * k, cin * k * k * k));
  g.initializer(prefix + ".bias", {cout}, ws.around(cout, 0.0, 0.05));
  auto& conv = g.node("Conv", {in, prefix + ".weight", prefix + ".bias"}, {prefix + ".conv"});
  set_attr(conv, "kernel_shape", std::vector<std::int64_t>{k, k, k});
  set_attr(conv, "pads", std::vector<std::int64_t>{1, 1, 1, 1, 1, 1});
  set_attr(conv, "strides", std::vector<std::int64_t>{stride, stride, stride});
  if (!norm_act) return prefix + ".conv";
  g.initializer(prefix + ".norm.scale", {cout}, ws.around(cout, 1.0, 0.2));
  g.initializer(prefix + ".norm.bias", {cout}, ws.around(cout, 0.0, 0.1));
  auto& norm = g.node("InstanceNormalization", {prefix + ".conv", prefix + ".norm.scale", prefix + ".norm.bias"},
                      {prefix + ".norm"});
  set_attr(norm, "epsilon", 1e-5f);
  auto& act = g.node("LeakyRelu", {prefix + ".norm"}, {prefix + ".act"});
  set_attr(act, "alpha", 0.01f);
  return prefix + ".act";
}

void head(GraphBuilder& g, WeightSource& ws, const std::string& in, std::int64_t cin, std::int64_t classes,
          const std::string& out) {
  g.initializer("head.weight", {classes, cin, 1, 1, 1}, ws.he(classes * cin, cin));
  g.initializer(kHeadBias, {classes}, std::vector<float>(classes, 0.0f));
  auto& conv = g.node("Conv", {in, "head.weight", kHeadBias}, {out});
  set_attr(conv, "kernel_shape", std::vector<std::int64_t>{1, 1, 1});
}

onnx::TensorProto* find_initializer(onnx::ModelProto& model, const std::string& name) {
  for (auto& t : *model.mutable_graph()->mutable_initializer()) {
    if (t.name() == name) return &t;
  }
  throw Error(Errc::NotFound, "initializer '" + name + "' not found");
}

}  // namespace

GraphBuilder::GraphBuilder(std::string graph_name, std::int64_t opset) {
  model_.set_ir_version(8);
  model_.set_producer_name("segrun-fixtures");
  auto* op = model_.add_opset_import();
  op->set_domain("");
  op->set_version(opset);
  model_.mutable_graph()->set_name(std::move(graph_name));
}

GraphBuilder& GraphBuilder::input(const std::string& name, int elem_type, std::int64_t channels) {
  auto* vi = model_.mutable_graph()->add_input();
  vi->set_name(name);
  set_type(*vi, elem_type, channels);
  return *this;
}

GraphBuilder& GraphBuilder::output(const std::string& name, int elem_type, std::int64_t channels) {
  auto* vi = model_.mutable_graph()->add_output();
  vi->set_name(name);
  set_type(*vi, elem_type, channels);
  return *this;
}

GraphBuilder& GraphBuilder::initializer(const std::string& name, std::vector<std::int64_t> dims,
                                        const std::vector<float>& values, int elem_type) {
  auto* t = model_.mutable_graph()->add_initializer();
  t->set_name(name);
  for (auto d : dims) t->add_dims(d);
  onnx_io::set_floats(*t, values, elem_type);
  return *this;
}

onnx::NodeProto& GraphBuilder::node(const std::string& op_type, std::vector<std::string> inputs,
                                    std::vector<std::string> outputs) {
  auto* n = model_.mutable_graph()->add_node();
  n->set_op_type(op_type);
  n->set_name(op_type + "_" + std::to_string(node_counter_++));
  for (auto& i : inputs) n->add_input(i);
  for (auto& o : outputs) n->add_output(o);
  return *n;
}

void set_attr(onnx::NodeProto& node, const std::string& name, std::int64_t value) {
  auto* a = node.add_attribute();
  a->set_name(name);
  a->set_type(onnx::AttributeProto::INT);
  a->set_i(value);
}

void set_attr(onnx::NodeProto& node, const std::string& name, float value) {
  auto* a = node.add_attribute();
  a->set_name(name);
  a->set_type(onnx::AttributeProto::FLOAT);
  a->set_f(value);
}

void set_attr(onnx::NodeProto& node, const std::string& name, std::vector<std::int64_t> values) {
  auto* a = node.add_attribute();
  a->set_name(name);
  a->set_type(onnx::AttributeProto::INTS);
  for (auto v : values) a->add_ints(v);
}

onnx::ModelProto identity_model(int channels) {
  GraphBuilder g("identity");
  g.input("input", onnx_io::kFloat, channels).output("logits", onnx_io::kFloat, channels);
  g.node("Identity", {"input"}, {"logits"});
  return g.build();
}

onnx::ModelProto constant_model(int in_channels, const std::vector<float>& class_logits) {
  const auto classes = static_cast<std::int64_t>(class_logits.size());
  GraphBuilder g("constant");
  g.input("input", onnx_io::kFloat, in_channels).output("logits", onnx_io::kFloat, classes);
  g.initializer("head.weight", {classes, in_channels, 1, 1, 1},
                std::vector<float>(static_cast<std::size_t>(classes * in_channels), 0.0f));
  g.initializer(kHeadBias, {classes}, class_logits);
  auto& conv = g.node("Conv", {"input", "head.weight", kHeadBias}, {"logits"});
  set_attr(conv, "kernel_shape", std::vector<std::int64_t>{1, 1, 1});
  return g.build();
}

onnx::ModelProto unet_model(const UnetSpec& spec) {
  WeightSource ws(spec.seed);
  GraphBuilder g("unet3d");
  const std::int64_t w = spec.width, b = spec.bottleneck;
  g.input("input", onnx_io::kFloat, spec.in_channels).output("logits", onnx_io::kFloat, spec.num_classes);

  auto x = conv_block(g, ws, "enc1a", "input", spec.in_channels, w, 1, true);
  const auto skip = conv_block(g, ws, "enc1b", x, w, w, 1, true);
  x = conv_block(g, ws, "down", skip, w, b, 2, true);
  x = conv_block(g, ws, "bottleneck", x, b, b, 1, true);

  g.initializer("up.weight", {b, w, 2, 2, 2}, ws.he(static_cast<std::size_t>(b * w * 8), static_cast<std::size_t>(b)));
  g.initializer("up.bias", {w}, ws.around(static_cast<std::size_t>(w), 0.0, 0.05));
  auto& up = g.node("ConvTranspose", {x, "up.weight", "up.bias"}, {"up"});
  set_attr(up, "kernel_shape", std::vector<std::int64_t>{2, 2, 2});
  set_attr(up, "strides", std::vector<std::int64_t>{2, 2, 2});
  auto& cat = g.node("Concat", {"up", skip}, {"cat"});
  set_attr(cat, "axis", std::int64_t{1});

  x = conv_block(g, ws, "dec1", "cat", 2 * w, w, 1, true);
  head(g, ws, x, w, spec.num_classes, "logits");
  return g.build();
}

onnx::ModelProto wide_model(int in_channels, int num_classes, int width, std::uint64_t seed) {
  WeightSource ws(seed);
  GraphBuilder g("wide3d");
  g.input("input", onnx_io::kFloat, in_channels).output("logits", onnx_io::kFloat, num_classes);
  auto x = conv_block(g, ws, "conv1", "input", in_channels, width, 1, false);
  x = conv_block(g, ws, "conv2", x, width, width, 1, false);
  x = conv_block(g, ws, "conv3", x, width, width, 1, false);
  head(g, ws, x, width, num_classes, "logits");
  return g.build();
}

void calibrate_head(onnx::ModelProto& model, const std::vector<onnx_io::Tensor>& samples, double foreground_fraction,
                    int lesion_channel) {
  onnx_io::GraphExecutor exec(model);
  std::vector<float> margins;  // lesion logit minus best competing logit
  for (const auto& sample : samples) {
    const auto out = exec.run({sample});
    const auto& logits = out.front();
    const auto classes = static_cast<std::size_t>(logits.shape[1]);
    const std::size_t spatial = logits.numel() / (static_cast<std::size_t>(logits.shape[0]) * classes);
    for (std::int64_t n = 0; n < logits.shape[0]; ++n) {
      const float* base = logits.data.data() + static_cast<std::size_t>(n) * classes * spatial;
      for (std::size_t i = 0; i < spatial; ++i) {
        float best_other = -INFINITY;
        for (std::size_t k = 0; k < classes; ++k) {
          if (static_cast<int>(k) != lesion_channel) best_other = std::max(best_other, base[k * spatial + i]);
        }
        margins.push_back(base[lesion_channel * spatial + i] - best_other);
      }
    }
  }
  if (margins.empty()) return;
  const auto rank = static_cast<std::size_t>((1.0 - foreground_fraction) * static_cast<double>(margins.size() - 1));
  std::nth_element(margins.begin(), margins.begin() + static_cast<std::ptrdiff_t>(rank), margins.end());
  perturb_initializer(model, kHeadBias, static_cast<std::size_t>(lesion_channel), -margins[rank]);
}

void perturb_initializer(onnx::ModelProto& model, const std::string& name, std::size_t index, float delta) {
  auto* t = find_initializer(model, name);
  auto values = onnx_io::to_floats(*t);
  if (index >= values.size()) throw Error(Errc::InvalidArgument, "initializer index out of range");
  values[index] += delta;
  onnx_io::set_floats(*t, values, t->data_type());
}

std::int64_t parameter_count(const onnx::ModelProto& model) {
  std::int64_t n = 0;
  for (const auto& t : model.graph().initializer()) n += onnx_io::element_count(t);
  return n;
}

}  // namespace segrun::fixtures
