#include "segrun/quantize/quantizer.hpp"

#include "segrun/error.hpp"
#include "segrun/fp16.hpp"
#include "segrun/fsutil.hpp"

#include <fnmatch.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace segrun {

namespace fs = std::filesystem;

namespace {

const std::set<std::string>& float16_ops() {
  static const std::set<std::string> ops{
      "Abs",         "Add",           "AveragePool",  "BatchNormalization", "Cast",      "Ceil",
      "Clip",        "Concat",        "Constant",     "Conv",               "ConvTranspose", "Div",
      "Dropout",     "Elu",           "Equal",        "Erf",                "Exp",       "Expand",
      "Flatten",     "Floor",         "Gather",       "Gemm",               "GlobalAveragePool", "GlobalMaxPool",
      "Greater",     "HardSigmoid",   "Identity",     "InstanceNormalization", "LeakyRelu", "Less",
      "Log",         "LogSoftmax",    "MatMul",       "Max",                "MaxPool",   "Mean",
      "Min",         "Mul",           "Neg",          "Pad",                "Pow",       "PRelu",
      "Reciprocal",  "ReduceMax",     "ReduceMean",   "ReduceMin",          "ReduceSum", "Relu",
      "Reshape",     "Resize",        "Selu",         "Shape",              "Sigmoid",   "Slice",
      "Softmax",     "Softplus",      "Split",        "Sqrt",               "Squeeze",   "Sub",
      "Sum",         "Tanh",          "Tile",         "Transpose",          "Unsqueeze", "Where"};
  return ops;
}

// Ops whose float inputs and outputs share one element type.
const std::set<std::string>& same_type_ops() {
  static const std::set<std::string> ops{
      "Abs", "Add", "AveragePool", "BatchNormalization", "Clip", "Concat", "Conv", "ConvTranspose", "Div",
      "Dropout", "Elu", "Erf", "Exp", "Expand", "Flatten", "Gemm", "GlobalAveragePool", "GlobalMaxPool",
      "HardSigmoid", "Identity", "InstanceNormalization", "LeakyRelu", "Log", "LogSoftmax", "MatMul", "Max",
      "MaxPool", "Mean", "Min", "Mul", "Neg", "Pad", "Pow", "PRelu", "Reciprocal", "ReduceMax", "ReduceMean",
      "ReduceMin", "ReduceSum", "Relu", "Reshape", "Resize", "Selu", "Sigmoid", "Slice", "Softmax", "Softplus",
      "Split", "Sqrt", "Squeeze", "Sub", "Sum", "Tanh", "Tile", "Transpose", "Unsqueeze"};
  return ops;
}

bool matches_any(const std::string& name, const std::vector<std::string>& patterns) {
  return std::any_of(patterns.begin(), patterns.end(),
                     [&](const std::string& p) { return ::fnmatch(p.c_str(), name.c_str(), 0) == 0; });
}

int declared_type(const onnx::ValueInfoProto& vi) {
  return vi.type().has_tensor_type() ? vi.type().tensor_type().elem_type() : 0;
}

void retype(onnx::ValueInfoProto& vi) {
  if (vi.type().has_tensor_type() && vi.type().tensor_type().elem_type() == onnx_io::kFloat) {
    vi.mutable_type()->mutable_tensor_type()->set_elem_type(onnx_io::kFloat16);
  }
}

std::int64_t initializer_bytes(const onnx::GraphProto& g) {
  std::int64_t total = 0;
  for (const auto& t : g.initializer()) total += static_cast<std::int64_t>(onnx_io::payload_bytes(t));
  return total;
}

// Element type of every value in the original graph (0 when unknown).
std::unordered_map<std::string, int> infer_types(const onnx::GraphProto& g) {
  std::unordered_map<std::string, int> types;
  for (const auto& t : g.initializer()) types[t.name()] = t.data_type();
  for (const auto& in : g.input()) types.try_emplace(in.name(), declared_type(in));
  std::unordered_map<std::string, int> declared;
  for (const auto& vi : g.value_info()) declared[vi.name()] = declared_type(vi);
  for (const auto& vi : g.output()) declared[vi.name()] = declared_type(vi);
  for (const auto& node : g.node()) {
    int out = 0;
    if (node.op_type() == "Cast") {
      for (const auto& a : node.attribute())
        if (a.name() == "to") out = static_cast<int>(a.i());
    } else if (node.op_type() == "Constant") {
      for (const auto& a : node.attribute()) {
        if (a.name() == "value") out = a.t().data_type();
        if (a.name() == "value_float" || a.name() == "value_floats") out = onnx_io::kFloat;
      }
    } else if (same_type_ops().count(node.op_type())) {
      for (const auto& in : node.input()) {
        const auto it = types.find(in);
        if (it != types.end() && (it->second == onnx_io::kFloat || it->second == onnx_io::kFloat16)) {
          out = it->second;
          break;
        }
      }
    }
    for (const auto& name : node.output()) {
      const auto it = declared.find(name);
      types[name] = out != 0 ? out : (it != declared.end() ? it->second : 0);
    }
  }
  return types;
}

onnx::NodeProto make_cast(const std::string& in, const std::string& out, int to) {
  onnx::NodeProto n;
  n.set_op_type("Cast");
  n.set_name(out + "/cast");
  n.add_input(in);
  n.add_output(out);
  auto* a = n.add_attribute();
  a->set_name("to");
  a->set_type(onnx::AttributeProto::INT);
  a->set_i(to);
  return n;
}

// Converts one float32 tensor to float16, returning the number of clamped values.
int convert_tensor(onnx::TensorProto& t) {
  const std::vector<float> values = onnx_io::to_floats(t);
  int clamped = 0;
  for (float v : values) clamped += fp16::overflows(v) ? 1 : 0;
  onnx_io::set_floats(t, values, onnx_io::kFloat16);
  return clamped;
}

}  // namespace

bool has_float16_kernel(const std::string& op_type) { return float16_ops().count(op_type) > 0; }

void to_json(nlohmann::json& j, const QuantisationReport& r) {
  j = {{"tensors_converted", r.tensors_converted},
       {"tensors_excluded", r.tensors_excluded},
       {"clamped_values", r.clamped_values},
       {"size_before_bytes", r.size_before_bytes},
       {"size_after_bytes", r.size_after_bytes},
       {"reduction_ratio", r.reduction_ratio},
       {"initializer_bytes_before", r.initializer_bytes_before},
       {"initializer_bytes_after", r.initializer_bytes_after},
       {"casts_inserted", r.casts_inserted},
       {"unsupported_operators", r.unsupported_operators}};
}

std::string format_report(const QuantisationReport& r) {
  std::ostringstream s;
  s << "tensors converted   " << r.tensors_converted << "\n"
    << "tensors excluded    " << r.tensors_excluded << "\n"
    << "clamped values      " << r.clamped_values << "\n"
    << "casts inserted      " << r.casts_inserted << "\n"
    << "initializer bytes   " << r.initializer_bytes_before << " -> " << r.initializer_bytes_after << "\n"
    << "file bytes          " << r.size_before_bytes << " -> " << r.size_after_bytes << "\n"
    << "reduction           " << std::fixed << std::setprecision(1) << 100.0 * r.reduction_ratio << "%\n";
  if (!r.unsupported_operators.empty()) {
    s << "forced past         ";
    for (const auto& op : r.unsupported_operators) s << op << " ";
    s << "\n";
  }
  return s.str();
}

QuantisationReport quantize_model(onnx::ModelProto& model, const QuantizeOptions& options) {
  QuantisationReport report;
  auto* g = model.mutable_graph();
  report.size_before_bytes = static_cast<std::int64_t>(model.ByteSizeLong());
  report.initializer_bytes_before = initializer_bytes(*g);

  std::set<std::string> unsupported;
  for (const auto& node : g->node()) {
    const bool default_domain = node.domain().empty() || node.domain() == "ai.onnx";
    if (!default_domain || !has_float16_kernel(node.op_type())) {
      unsupported.insert(node.domain().empty() ? node.op_type() : node.domain() + "." + node.op_type());
    }
  }
  report.unsupported_operators.assign(unsupported.begin(), unsupported.end());
  if (!unsupported.empty() && !options.force) {
    std::string list;
    for (const auto& op : unsupported) list += (list.empty() ? "" : ", ") + op;
    throw Error(Errc::UnsupportedOperator, "no float16 kernel for: " + list + " (use --force to convert anyway)");
  }

  const auto types = infer_types(*g);

  // Float32 values that stay float32: excluded initializers and constants.
  std::unordered_set<std::string> kept;
  for (auto& t : *g->mutable_initializer()) {
    if (t.data_type() != onnx_io::kFloat) continue;
    if (matches_any(t.name(), options.exclude)) {
      kept.insert(t.name());
      ++report.tensors_excluded;
    } else {
      report.clamped_values += convert_tensor(t);
      ++report.tensors_converted;
    }
  }
  for (auto& node : *g->mutable_node()) {
    if (node.op_type() != "Constant" || node.output_size() != 1) continue;
    for (auto& a : *node.mutable_attribute()) {
      if (a.name() != "value" || a.t().data_type() != onnx_io::kFloat) continue;
      if (matches_any(node.output(0), options.exclude)) {
        kept.insert(node.output(0));
        ++report.tensors_excluded;
      } else {
        report.clamped_values += convert_tensor(*a.mutable_t());
        ++report.tensors_converted;
      }
    }
  }

  // Nodes touching a kept tensor run in float32 between Casts.
  google::protobuf::RepeatedPtrField<onnx::NodeProto> rebuilt;
  std::unordered_map<std::string, std::string> f32_alias;  // fp16 value -> float32 copy
  for (const auto& name : kept) f32_alias[name] = name;
  for (const auto& original : g->node()) {
    onnx::NodeProto node = original;
    if (node.op_type() == "Cast") {
      for (auto& a : *node.mutable_attribute())
        if (a.name() == "to" && a.i() == onnx_io::kFloat) a.set_i(onnx_io::kFloat16);
    }
    const bool touches_kept = std::any_of(node.input().begin(), node.input().end(),
                                          [&](const std::string& n) { return kept.count(n) > 0; });
    const bool is_kept_constant = node.op_type() == "Constant" && node.output_size() == 1 && kept.count(node.output(0));
    if (is_kept_constant || !touches_kept || !same_type_ops().count(node.op_type())) {
      *rebuilt.Add() = std::move(node);
      continue;
    }
    for (auto& in : *node.mutable_input()) {
      if (in.empty()) continue;
      const auto t = types.find(in);
      if (t == types.end() || t->second != onnx_io::kFloat) continue;
      auto alias = f32_alias.find(in);
      if (alias == f32_alias.end()) {
        const std::string up = in + "/f32";
        *rebuilt.Add() = make_cast(in, up, onnx_io::kFloat);
        ++report.casts_inserted;
        alias = f32_alias.emplace(in, up).first;
      }
      in = alias->second;
    }
    std::vector<std::pair<std::string, std::string>> downcasts;
    for (auto& out : *node.mutable_output()) {
      if (out.empty()) continue;
      const std::string wide = out + "/f32";
      downcasts.emplace_back(wide, out);
      f32_alias[out] = wide;
      out = wide;
    }
    *rebuilt.Add() = std::move(node);
    for (const auto& [wide, narrow] : downcasts) {
      *rebuilt.Add() = make_cast(wide, narrow, onnx_io::kFloat16);
      ++report.casts_inserted;
    }
  }
  g->mutable_node()->Swap(&rebuilt);

  for (auto& vi : *g->mutable_input()) {
    if (!kept.count(vi.name())) retype(vi);
  }
  for (auto& vi : *g->mutable_output()) retype(vi);
  for (auto& vi : *g->mutable_value_info()) {
    if (!kept.count(vi.name())) retype(vi);
  }

  const auto problems = onnx_io::validate(model);
  if (!problems.empty()) {
    throw std::logic_error("quantised graph failed validation: " + problems.front());
  }
  report.initializer_bytes_after = initializer_bytes(*g);
  report.size_after_bytes = static_cast<std::int64_t>(model.ByteSizeLong());
  report.reduction_ratio =
      report.size_before_bytes > 0
          ? 1.0 - static_cast<double>(report.size_after_bytes) / static_cast<double>(report.size_before_bytes)
          : 0.0;
  return report;
}

QuantisationReport quantize_fp16(const fs::path& model_in, const fs::path& model_out, const QuantizeOptions& options) {
  onnx::ModelProto model = onnx_io::load(model_in);
  if (const auto problems = onnx_io::validate(model); !problems.empty()) {
    throw Error(Errc::ParseError, model_in.string() + ": " + problems.front());
  }
  QuantisationReport report = quantize_model(model, options);
  if (!model_out.parent_path().empty()) fs::create_directories(model_out.parent_path());
  const fs::path staging = fsutil::temp_sibling(model_out);
  onnx_io::save(model, staging);
  fs::rename(staging, model_out);
  report.size_before_bytes = static_cast<std::int64_t>(fs::file_size(model_in));
  report.size_after_bytes = static_cast<std::int64_t>(fs::file_size(model_out));
  report.reduction_ratio =
      1.0 - static_cast<double>(report.size_after_bytes) / static_cast<double>(report.size_before_bytes);
  spdlog::info("quantised {} -> {} ({} tensors, {:.1f}% smaller)", model_in.string(), model_out.string(),
               report.tensors_converted, 100.0 * report.reduction_ratio);
  return report;
}

namespace {

std::string type_name(int t) {
  switch (t) {
    case onnx_io::kFloat: return "float32";
    case onnx_io::kFloat16: return "float16";
    case onnx_io::kDouble: return "float64";
    case onnx_io::kInt64: return "int64";
    case onnx_io::kInt32: return "int32";
    case onnx_io::kInt8: return "int8";
    case onnx_io::kUInt8: return "uint8";
    case onnx_io::kBool: return "bool";
    default: return "type" + std::to_string(t);
  }
}

}  // namespace

void to_json(nlohmann::json& j, const SizeAudit& a) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& t : a.tensors) {
    rows.push_back({{"name", t.name}, {"data_type", t.data_type}, {"dims", t.dims}, {"bytes", t.bytes}});
  }
  j = {{"total_bytes", a.total_bytes}, {"initializer_bytes", a.initializer_bytes}, {"tensors", rows}};
}

std::string format_audit(const SizeAudit& a, std::size_t max_rows) {
  std::ostringstream s;
  s << "file bytes         " << a.total_bytes << "\n"
    << "initializer bytes  " << a.initializer_bytes << " (" << std::fixed << std::setprecision(1)
    << (a.total_bytes ? 100.0 * static_cast<double>(a.initializer_bytes) / static_cast<double>(a.total_bytes) : 0.0)
    << "%)\n\n";
  std::size_t width = 6;
  for (std::size_t i = 0; i < std::min(max_rows, a.tensors.size()); ++i) width = std::max(width, a.tensors[i].name.size());
  s << std::left << std::setw(static_cast<int>(width)) << "tensor" << "  " << std::setw(8) << "type" << "  "
    << std::right << std::setw(12) << "bytes" << "\n";
  for (std::size_t i = 0; i < std::min(max_rows, a.tensors.size()); ++i) {
    const auto& t = a.tensors[i];
    s << std::left << std::setw(static_cast<int>(width)) << t.name << "  " << std::setw(8) << t.data_type << "  "
      << std::right << std::setw(12) << t.bytes << "\n";
  }
  if (a.tensors.size() > max_rows) s << "... " << a.tensors.size() - max_rows << " more\n";
  return s.str();
}

SizeAudit size_audit(const fs::path& model_path) {
  const onnx::ModelProto model = onnx_io::load(model_path);
  SizeAudit audit;
  audit.total_bytes = static_cast<std::int64_t>(fs::file_size(model_path));
  for (const auto& t : model.graph().initializer()) {
    TensorSize row{t.name(), type_name(t.data_type()), {t.dims().begin(), t.dims().end()},
                   static_cast<std::int64_t>(onnx_io::payload_bytes(t))};
    audit.initializer_bytes += row.bytes;
    audit.tensors.push_back(std::move(row));
  }
  std::stable_sort(audit.tensors.begin(), audit.tensors.end(), [](const TensorSize& a, const TensorSize& b) {
    return a.bytes != b.bytes ? a.bytes > b.bytes : a.name < b.name;
  });
  return audit;
}

std::int64_t directory_size(const fs::path& dir) {
  std::int64_t total = 0;
  std::error_code ec;
  for (auto it = fs::recursive_directory_iterator(dir, ec); !ec && it != fs::recursive_directory_iterator();
       it.increment(ec)) {
    if (it->is_regular_file(ec)) total += static_cast<std::int64_t>(it->file_size(ec));
  }
  return total;
}

}  // namespace segrun
