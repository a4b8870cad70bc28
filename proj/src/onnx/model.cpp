#include "segrun/onnx/model.hpp"

#include "segrun/error.hpp"
#include "segrun/fp16.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace segrun::onnx_io {
namespace fs = std::filesystem;

onnx::ModelProto load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open model " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  onnx::ModelProto model;
  if (!model.ParseFromString(buffer.str())) {
    throw Error(Errc::ParseError, path.string() + " is not a valid ONNX protobuf");
  }
  if (!model.has_graph()) throw Error(Errc::ParseError, path.string() + " has no graph");
  return model;
}

void save(const onnx::ModelProto& model, const fs::path& path) {
  std::string bytes;
  if (!model.SerializeToString(&bytes)) throw Error(Errc::IoError, "failed to serialise ONNX model");
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::IoError, "short write to " + path.string());
}

std::size_t element_size(int data_type) {
  switch (data_type) {
    case kFloat: return 4;
    case kUInt8: return 1;
    case kInt8: return 1;
    case kUInt16: return 2;
    case kInt16: return 2;
    case kInt32: return 4;
    case kInt64: return 8;
    case kBool: return 1;
    case kFloat16: return 2;
    case kDouble: return 8;
    case 12: return 4;   // uint32
    case 13: return 8;   // uint64
    case 16: return 2;   // bfloat16
    default: return 0;
  }
}

std::int64_t element_count(const onnx::TensorProto& tensor) {
  std::int64_t n = 1;
  for (auto d : tensor.dims()) n *= d;
  return n;
}

std::size_t payload_bytes(const onnx::TensorProto& tensor) {
  return static_cast<std::size_t>(element_count(tensor)) * element_size(tensor.data_type());
}

std::vector<float> to_floats(const onnx::TensorProto& tensor) {
  const auto n = static_cast<std::size_t>(element_count(tensor));
  std::vector<float> out(n);
  const bool raw = tensor.has_raw_data();
  switch (tensor.data_type()) {
    case kFloat:
      if (raw) {
        if (tensor.raw_data().size() != n * 4) throw Error(Errc::ParseError, "tensor " + tensor.name() + ": raw_data size mismatch");
        std::memcpy(out.data(), tensor.raw_data().data(), n * 4);
      } else {
        if (static_cast<std::size_t>(tensor.float_data_size()) != n) throw Error(Errc::ParseError, "tensor " + tensor.name() + ": float_data size mismatch");
        std::copy(tensor.float_data().begin(), tensor.float_data().end(), out.begin());
      }
      break;
    case kFloat16:
      if (raw) {
        if (tensor.raw_data().size() != n * 2) throw Error(Errc::ParseError, "tensor " + tensor.name() + ": raw_data size mismatch");
        for (std::size_t i = 0; i < n; ++i) {
          std::uint16_t h;
          std::memcpy(&h, tensor.raw_data().data() + 2 * i, 2);
          out[i] = fp16::to_float(h);
        }
      } else {
        if (static_cast<std::size_t>(tensor.int32_data_size()) != n) throw Error(Errc::ParseError, "tensor " + tensor.name() + ": int32_data size mismatch");
        for (std::size_t i = 0; i < n; ++i) out[i] = fp16::to_float(static_cast<std::uint16_t>(tensor.int32_data(static_cast<int>(i))));
      }
      break;
    case kDouble:
      if (raw) {
        if (tensor.raw_data().size() != n * 8) throw Error(Errc::ParseError, "tensor " + tensor.name() + ": raw_data size mismatch");
        for (std::size_t i = 0; i < n; ++i) {
          double v;
          std::memcpy(&v, tensor.raw_data().data() + 8 * i, 8);
          out[i] = static_cast<float>(v);
        }
      } else {
        if (static_cast<std::size_t>(tensor.double_data_size()) != n) throw Error(Errc::ParseError, "tensor " + tensor.name() + ": double_data size mismatch");
        for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>(tensor.double_data(static_cast<int>(i)));
      }
      break;
    default:
      throw Error(Errc::UnsupportedDatatype,
                  "tensor " + tensor.name() + ": element type " + std::to_string(tensor.data_type()) + " is not floating point");
  }
  return out;
}

std::vector<std::int64_t> to_int64s(const onnx::TensorProto& tensor) {
  const auto n = static_cast<std::size_t>(element_count(tensor));
  std::vector<std::int64_t> out(n);
  if (tensor.data_type() != kInt64) throw Error(Errc::UnsupportedDatatype, "tensor " + tensor.name() + " is not int64");
  if (tensor.has_raw_data()) {
    if (tensor.raw_data().size() != n * 8) throw Error(Errc::ParseError, "tensor " + tensor.name() + ": raw_data size mismatch");
    std::memcpy(out.data(), tensor.raw_data().data(), n * 8);
  } else {
    std::copy(tensor.int64_data().begin(), tensor.int64_data().end(), out.begin());
  }
  return out;
}

void set_floats(onnx::TensorProto& tensor, std::span<const float> values, int data_type) {
  tensor.clear_float_data();
  tensor.clear_int32_data();
  tensor.clear_double_data();
  tensor.set_data_type(data_type);
  std::string raw;
  if (data_type == kFloat) {
    raw.resize(values.size() * 4);
    std::memcpy(raw.data(), values.data(), raw.size());
  } else if (data_type == kFloat16) {
    raw.resize(values.size() * 2);
    for (std::size_t i = 0; i < values.size(); ++i) {
      const std::uint16_t h = fp16::from_float(values[i]);
      std::memcpy(raw.data() + 2 * i, &h, 2);
    }
  } else {
    throw Error(Errc::InvalidArgument, "set_floats supports float32/float16 only");
  }
  tensor.set_raw_data(std::move(raw));
}

std::int64_t default_domain_opset(const onnx::ModelProto& model) {
  for (const auto& op : model.opset_import()) {
    if (op.domain().empty() || op.domain() == "ai.onnx") return op.version();
  }
  return 0;
}

namespace {

const std::set<std::string>& same_type_ops() {
  static const std::set<std::string> ops = {
      "Conv", "ConvTranspose", "InstanceNormalization", "BatchNormalization", "Add", "Sub", "Mul",
      "Div", "Relu", "LeakyRelu", "Sigmoid", "Tanh", "Concat", "Identity", "Softmax", "MaxPool",
      "AveragePool", "Sum", "Max", "Min", "Pow"};
  return ops;
}

bool is_float_type(int t) { return t == kFloat || t == kFloat16 || t == kDouble || t == 16; }

int declared_elem_type(const onnx::ValueInfoProto& vi) {
  if (vi.has_type() && vi.type().has_tensor_type()) return vi.type().tensor_type().elem_type();
  return 0;
}

}  // namespace

std::vector<std::string> validate(const onnx::ModelProto& model) {
  std::vector<std::string> problems;
  if (!model.has_graph()) {
    problems.push_back("model has no graph");
    return problems;
  }
  const auto& g = model.graph();
  std::unordered_map<std::string, int> types;  // name -> elem type (0 = unknown)
  std::unordered_set<std::string> defined;

  for (const auto& init : g.initializer()) {
    if (!defined.insert(init.name()).second) problems.push_back("duplicate initializer " + init.name());
    types[init.name()] = init.data_type();
    const std::size_t esize = element_size(init.data_type());
    const auto n = static_cast<std::size_t>(element_count(init));
    if (init.has_raw_data() && esize != 0 && init.raw_data().size() != n * esize) {
      problems.push_back("initializer " + init.name() + " raw_data size does not match dims");
    }
    if (init.data_type() == kFloat && !init.has_raw_data() && static_cast<std::size_t>(init.float_data_size()) != n) {
      problems.push_back("initializer " + init.name() + " float_data size does not match dims");
    }
  }
  for (const auto& in : g.input()) {
    if (defined.count(in.name())) continue;  // initializer also listed as input (IR < 4)
    defined.insert(in.name());
    types[in.name()] = declared_elem_type(in);
  }
  std::unordered_map<std::string, int> declared;
  for (const auto& vi : g.value_info()) declared[vi.name()] = declared_elem_type(vi);
  for (const auto& vi : g.output()) declared[vi.name()] = declared_elem_type(vi);

  for (int i = 0; i < g.node_size(); ++i) {
    const auto& node = g.node(i);
    const std::string where = "node " + std::to_string(i) + " (" + node.op_type() + " " + node.name() + ")";
    int common = 0;
    bool type_conflict = false;
    for (const auto& name : node.input()) {
      if (name.empty()) continue;
      if (!defined.count(name)) {
        problems.push_back(where + " consumes undefined value '" + name + "'");
        continue;
      }
      const int t = types[name];
      if (!is_float_type(t)) continue;
      if (common == 0) common = t;
      else if (t != common) type_conflict = true;
    }
    const bool same_type = same_type_ops().count(node.op_type()) > 0;
    if (same_type && type_conflict) problems.push_back(where + " mixes floating-point element types");

    int out_type = 0;
    if (node.op_type() == "Cast") {
      for (const auto& a : node.attribute()) {
        if (a.name() == "to") out_type = static_cast<int>(a.i());
      }
    } else if (node.op_type() == "Constant") {
      for (const auto& a : node.attribute()) {
        if (a.name() == "value") out_type = a.t().data_type();
        if (a.name() == "value_float" || a.name() == "value_floats") out_type = kFloat;
      }
    } else if (same_type) {
      out_type = common;
    }
    for (const auto& name : node.output()) {
      if (name.empty()) continue;
      if (!defined.insert(name).second) problems.push_back(where + " redefines '" + name + "'");
      int t = out_type;
      auto it = declared.find(name);
      if (it != declared.end() && it->second != 0) {
        if (t != 0 && it->second != t) {
          problems.push_back(where + " output '" + name + "' declared as type " + std::to_string(it->second) +
                             " but computes type " + std::to_string(t));
        }
        if (t == 0) t = it->second;
      }
      types[name] = t;
    }
  }
  for (const auto& out : g.output()) {
    if (!defined.count(out.name())) problems.push_back("graph output '" + out.name() + "' is never produced");
  }
  return problems;
}

}  // namespace segrun::onnx_io
