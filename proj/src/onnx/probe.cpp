#include "segrun/onnx/probe.hpp"

#include "segrun/error.hpp"

#include <fstream>
#include <iterator>
#include <set>

namespace segrun::onnx_io {
namespace {

enum WireType : int { kVarint = 0, kFixed64 = 1, kLengthDelimited = 2, kFixed32 = 5 };

class WireReader {
public:
  explicit WireReader(std::string_view bytes) : bytes_(bytes) {}

  bool done() const { return pos_ >= bytes_.size(); }

  std::uint64_t varint() {
    std::uint64_t value = 0;
    for (int shift = 0; shift < 64; shift += 7) {
      if (pos_ >= bytes_.size()) fail("truncated varint");
      const auto byte = static_cast<unsigned char>(bytes_[pos_++]);
      value |= static_cast<std::uint64_t>(byte & 0x7f) << shift;
      if (!(byte & 0x80)) return value;
    }
    fail("varint too long");
  }

  // Returns {field number, wire type}.
  std::pair<std::uint32_t, int> tag() {
    const auto t = varint();
    return {static_cast<std::uint32_t>(t >> 3), static_cast<int>(t & 7)};
  }

  std::string_view bytes() {
    const auto len = varint();
    if (len > bytes_.size() - pos_) fail("length-delimited field overruns buffer");
    auto view = bytes_.substr(pos_, len);
    pos_ += len;
    return view;
  }

  void skip(int wire_type) {
    switch (wire_type) {
      case kVarint: varint(); break;
      case kFixed64: advance(8); break;
      case kLengthDelimited: bytes(); break;
      case kFixed32: advance(4); break;
      default: fail("unsupported wire type " + std::to_string(wire_type));
    }
  }

private:
  void advance(std::size_t n) {
    if (n > bytes_.size() - pos_) fail("truncated fixed-width field");
    pos_ += n;
  }
  [[noreturn]] static void fail(const std::string& what) {
    throw Error(Errc::ParseError, "malformed ONNX protobuf: " + what);
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

Dim parse_dimension(std::string_view msg) {
  WireReader r(msg);
  Dim dim = std::string{};
  while (!r.done()) {
    auto [field, wt] = r.tag();
    if (field == 1 && wt == kVarint) dim = static_cast<std::int64_t>(r.varint());
    else if (field == 2 && wt == kLengthDelimited) dim = std::string(r.bytes());
    else r.skip(wt);
  }
  return dim;
}

void parse_tensor_type(std::string_view msg, TensorSignature& sig) {
  WireReader r(msg);
  while (!r.done()) {
    auto [field, wt] = r.tag();
    if (field == 1 && wt == kVarint) {
      sig.elem_type = static_cast<int>(r.varint());
    } else if (field == 2 && wt == kLengthDelimited) {
      sig.has_shape = true;
      WireReader shape(r.bytes());
      while (!shape.done()) {
        auto [f, w] = shape.tag();
        if (f == 1 && w == kLengthDelimited) sig.dims.push_back(parse_dimension(shape.bytes()));
        else shape.skip(w);
      }
    } else {
      r.skip(wt);
    }
  }
}

TensorSignature parse_value_info(std::string_view msg) {
  TensorSignature sig;
  WireReader r(msg);
  while (!r.done()) {
    auto [field, wt] = r.tag();
    if (field == 1 && wt == kLengthDelimited) {
      sig.name = std::string(r.bytes());
    } else if (field == 2 && wt == kLengthDelimited) {
      WireReader type(r.bytes());
      while (!type.done()) {
        auto [f, w] = type.tag();
        if (f == 1 && w == kLengthDelimited) parse_tensor_type(type.bytes(), sig);
        else type.skip(w);
      }
    } else {
      r.skip(wt);
    }
  }
  return sig;
}

std::string field_string(std::string_view msg, std::uint32_t wanted) {
  WireReader r(msg);
  std::string out;
  while (!r.done()) {
    auto [field, wt] = r.tag();
    if (field == wanted && wt == kLengthDelimited) out = std::string(r.bytes());
    else r.skip(wt);
  }
  return out;
}

void parse_graph(std::string_view msg, GraphSignature& sig) {
  WireReader r(msg);
  std::set<std::string> initializers;
  std::vector<TensorSignature> inputs;
  while (!r.done()) {
    auto [field, wt] = r.tag();
    if (wt != kLengthDelimited) {
      r.skip(wt);
      continue;
    }
    const auto body = r.bytes();
    switch (field) {
      case 1: sig.op_types.push_back(field_string(body, 4)); break;   // NodeProto.op_type
      case 5: initializers.insert(field_string(body, 8)); break;      // TensorProto.name
      case 11: inputs.push_back(parse_value_info(body)); break;
      case 12: sig.outputs.push_back(parse_value_info(body)); break;
      default: break;
    }
  }
  for (auto& in : inputs) {
    if (!initializers.count(in.name)) sig.inputs.push_back(std::move(in));
  }
}

}  // namespace

GraphSignature probe_bytes(std::string_view bytes) {
  GraphSignature sig;
  WireReader r(bytes);
  bool have_graph = false;
  while (!r.done()) {
    auto [field, wt] = r.tag();
    if (field == 1 && wt == kVarint) {
      sig.ir_version = static_cast<std::int64_t>(r.varint());
    } else if (field == 7 && wt == kLengthDelimited) {
      parse_graph(r.bytes(), sig);
      have_graph = true;
    } else if (field == 8 && wt == kLengthDelimited) {
      WireReader op(r.bytes());
      std::string domain;
      std::int64_t version = 0;
      while (!op.done()) {
        auto [f, w] = op.tag();
        if (f == 1 && w == kLengthDelimited) domain = std::string(op.bytes());
        else if (f == 2 && w == kVarint) version = static_cast<std::int64_t>(op.varint());
        else op.skip(w);
      }
      if (domain.empty() || domain == "ai.onnx") sig.opset = version;
    } else {
      r.skip(wt);
    }
  }
  if (!have_graph) throw Error(Errc::ParseError, "ONNX model has no graph");
  return sig;
}

GraphSignature probe(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open model " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return probe_bytes(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

}  // namespace segrun::onnx_io
