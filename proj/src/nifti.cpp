#include "segrun/nifti.hpp"

#include "segrun/error.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>
#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <regex>
#include <string>
#include <vector>

static_assert(std::endian::native == std::endian::little, "little-endian host required");

namespace segrun::nifti {
namespace fs = std::filesystem;

namespace {

std::vector<unsigned char> slurp(const fs::path& path) {
  // gzread passes uncompressed files through untouched.
  gzFile file = gzopen(path.c_str(), "rb");
  if (!file) throw Error(Errc::IoError, "cannot open " + path.string());
  std::vector<unsigned char> bytes;
  unsigned char buffer[1 << 16];
  int n = 0;
  while ((n = gzread(file, buffer, sizeof(buffer))) > 0) {
    bytes.insert(bytes.end(), buffer, buffer + n);
  }
  int errnum = 0;
  const char* msg = gzerror(file, &errnum);
  const bool failed = n < 0 || (errnum != Z_OK && errnum != Z_BUF_ERROR);
  std::string reason = failed && msg ? msg : "";
  gzclose(file);
  if (failed) throw Error(Errc::IoError, "failed reading " + path.string() + ": " + reason);
  return bytes;
}

template <typename T>
void swap_bytes(T& value) {
  auto* p = reinterpret_cast<unsigned char*>(&value);
  std::reverse(p, p + sizeof(T));
}

template <typename T, std::size_t N>
void swap_array(T (&values)[N]) {
  for (auto& v : values) swap_bytes(v);
}

void swap_header(Header& h) {
  swap_bytes(h.sizeof_hdr);
  swap_bytes(h.extents);
  swap_bytes(h.session_error);
  swap_array(h.dim);
  swap_bytes(h.intent_p1);
  swap_bytes(h.intent_p2);
  swap_bytes(h.intent_p3);
  swap_bytes(h.intent_code);
  swap_bytes(h.datatype);
  swap_bytes(h.bitpix);
  swap_bytes(h.slice_start);
  swap_array(h.pixdim);
  swap_bytes(h.vox_offset);
  swap_bytes(h.scl_slope);
  swap_bytes(h.scl_inter);
  swap_bytes(h.slice_end);
  swap_bytes(h.cal_max);
  swap_bytes(h.cal_min);
  swap_bytes(h.slice_duration);
  swap_bytes(h.toffset);
  swap_bytes(h.glmax);
  swap_bytes(h.glmin);
  swap_bytes(h.qform_code);
  swap_bytes(h.sform_code);
  swap_bytes(h.quatern_b);
  swap_bytes(h.quatern_c);
  swap_bytes(h.quatern_d);
  swap_bytes(h.qoffset_x);
  swap_bytes(h.qoffset_y);
  swap_bytes(h.qoffset_z);
  swap_array(h.srow_x);
  swap_array(h.srow_y);
  swap_array(h.srow_z);
}

// Returns true when the payload needs byte swapping.
bool decode_header(const std::vector<unsigned char>& bytes, Header& header, const fs::path& path) {
  if (bytes.size() < sizeof(Header)) {
    throw Error(Errc::CorruptHeader, path.string() + ": file shorter than a NIfTI-1 header");
  }
  std::memcpy(&header, bytes.data(), sizeof(Header));
  bool swapped = false;
  if (header.sizeof_hdr != 348) {
    Header probe = header;
    swap_bytes(probe.sizeof_hdr);
    if (probe.sizeof_hdr != 348) {
      throw Error(Errc::CorruptHeader, path.string() + ": sizeof_hdr is not 348");
    }
    swap_header(header);
    swapped = true;
  }
  const bool single = std::memcmp(header.magic, "n+1", 4) == 0;
  const bool pair = std::memcmp(header.magic, "ni1", 4) == 0;
  if (!single && !pair) {
    throw Error(Errc::CorruptHeader, path.string() + ": magic is neither \"n+1\" nor \"ni1\"");
  }
  return swapped;
}

Shape3 checked_shape(const Header& h, const fs::path& path) {
  const int ndim = h.dim[0];
  if (ndim < 3 || ndim > 7) {
    throw Error(Errc::DimensionError, path.string() + ": unsupported dimensionality " + std::to_string(ndim));
  }
  for (int d = 4; d <= ndim; ++d) {
    if (h.dim[d] != 1) {
      throw Error(Errc::DimensionError,
                  path.string() + ": only 3D volumes (or 4D with a singleton trailing dimension) are supported");
    }
  }
  if (ndim > 4) {
    throw Error(Errc::DimensionError, path.string() + ": dimensionality " + std::to_string(ndim) + " rejected");
  }
  Shape3 shape{};
  for (int d = 0; d < 3; ++d) {
    if (h.dim[d + 1] < 1) throw Error(Errc::DimensionError, path.string() + ": non-positive dimension");
    shape[d] = static_cast<std::size_t>(h.dim[d + 1]);
  }
  return shape;
}

template <typename T>
void decode_payload(const unsigned char* src, std::size_t count, bool swapped, std::vector<float>& out) {
  out.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    T v;
    std::memcpy(&v, src + i * sizeof(T), sizeof(T));
    if (swapped) swap_bytes(v);
    out[i] = static_cast<float>(v);
  }
}

std::size_t element_size(std::int16_t datatype, const fs::path& path) {
  switch (static_cast<Datatype>(datatype)) {
    case Datatype::UInt8: return 1;
    case Datatype::Int16: return 2;
    case Datatype::Int32: return 4;
    case Datatype::Float32: return 4;
    case Datatype::Float64: return 8;
  }
  throw Error(Errc::UnsupportedDatatype,
              path.string() + ": unsupported NIfTI datatype code " + std::to_string(datatype));
}

fs::path image_file_for(const fs::path& header_path) {
  std::string name = header_path.string();
  for (const char* ext : {".hdr.gz", ".hdr"}) {
    const std::string e(ext);
    if (name.size() > e.size() && name.compare(name.size() - e.size(), e.size(), e) == 0) {
      std::string stem = name.substr(0, name.size() - e.size());
      fs::path plain = stem + ".img";
      if (fs::exists(plain)) return plain;
      return stem + ".img.gz";
    }
  }
  throw Error(Errc::CorruptHeader, header_path.string() + ": \"ni1\" header without .hdr extension");
}

void fill_string(char* dst, std::size_t n, const std::string& s) {
  std::memset(dst, 0, n);
  std::memcpy(dst, s.data(), std::min(n - 1, s.size()));
}

}  // namespace

bool has_gzip_suffix(const fs::path& path) { return path.extension() == ".gz"; }

std::string bids_suffix(const fs::path& path) {
  static const std::regex pattern(R"(_([A-Za-z0-9]+)\.(nii|hdr)(\.gz)?$)");
  std::smatch m;
  const std::string name = path.filename().string();
  if (std::regex_search(name, m, pattern)) return m[1].str();
  return {};
}

Affine qform_to_affine(float qb, float qc, float qd, float qx, float qy, float qz, const float pixdim[8]) {
  double b = qb, c = qc, d = qd;
  double a = 1.0 - (b * b + c * c + d * d);
  if (a < 1e-7) {
    a = 1.0 / std::sqrt(b * b + c * c + d * d);
    b *= a;
    c *= a;
    d *= a;
    a = 0.0;
  } else {
    a = std::sqrt(a);
  }
  const double xd = pixdim[1] > 0 ? pixdim[1] : 1.0;
  const double yd = pixdim[2] > 0 ? pixdim[2] : 1.0;
  double zd = pixdim[3] > 0 ? pixdim[3] : 1.0;
  if (pixdim[0] < 0) zd = -zd;

  Affine m = Affine::Identity();
  m(0, 0) = (a * a + b * b - c * c - d * d) * xd;
  m(0, 1) = 2.0 * (b * c - a * d) * yd;
  m(0, 2) = 2.0 * (b * d + a * c) * zd;
  m(1, 0) = 2.0 * (b * c + a * d) * xd;
  m(1, 1) = (a * a + c * c - b * b - d * d) * yd;
  m(1, 2) = 2.0 * (c * d - a * b) * zd;
  m(2, 0) = 2.0 * (b * d - a * c) * xd;
  m(2, 1) = 2.0 * (c * d + a * b) * yd;
  m(2, 2) = (a * a + d * d - c * c - b * b) * zd;
  m(0, 3) = qx;
  m(1, 3) = qy;
  m(2, 3) = qz;
  return m;
}

Quatern affine_to_qform(const Affine& affine) {
  Quatern q{};
  q.qx = static_cast<float>(affine(0, 3));
  q.qy = static_cast<float>(affine(1, 3));
  q.qz = static_cast<float>(affine(2, 3));

  Eigen::Matrix3d linear = affine.topLeftCorner<3, 3>();
  Eigen::Vector3d lengths = linear.colwise().norm();
  for (int i = 0; i < 3; ++i) {
    if (lengths[i] == 0.0) lengths[i] = 1.0;
    linear.col(i) /= lengths[i];
  }
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(linear, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d r = svd.matrixU() * svd.matrixV().transpose();
  q.qfac = 1.0f;
  if (r.determinant() < 0) {
    r.col(2) = -r.col(2);
    q.qfac = -1.0f;
  }
  double a = r.trace() + 1.0;
  double b = 0, c = 0, d = 0;
  if (a > 0.5) {
    a = 0.5 * std::sqrt(a);
    b = 0.25 * (r(2, 1) - r(1, 2)) / a;
    c = 0.25 * (r(0, 2) - r(2, 0)) / a;
    d = 0.25 * (r(1, 0) - r(0, 1)) / a;
  } else {
    const double xd = 1.0 + r(0, 0) - (r(1, 1) + r(2, 2));
    const double yd = 1.0 + r(1, 1) - (r(0, 0) + r(2, 2));
    const double zd = 1.0 + r(2, 2) - (r(0, 0) + r(1, 1));
    if (xd > 1.0) {
      b = 0.5 * std::sqrt(xd);
      c = 0.25 * (r(0, 1) + r(1, 0)) / b;
      d = 0.25 * (r(0, 2) + r(2, 0)) / b;
      a = 0.25 * (r(2, 1) - r(1, 2)) / b;
    } else if (yd > 1.0) {
      c = 0.5 * std::sqrt(yd);
      b = 0.25 * (r(0, 1) + r(1, 0)) / c;
      d = 0.25 * (r(1, 2) + r(2, 1)) / c;
      a = 0.25 * (r(0, 2) - r(2, 0)) / c;
    } else {
      d = 0.5 * std::sqrt(zd);
      b = 0.25 * (r(0, 2) + r(2, 0)) / d;
      c = 0.25 * (r(1, 2) + r(2, 1)) / d;
      a = 0.25 * (r(1, 0) - r(0, 1)) / d;
    }
    if (a < 0.0) {
      b = -b;
      c = -c;
      d = -d;
    }
  }
  q.b = static_cast<float>(b);
  q.c = static_cast<float>(c);
  q.d = static_cast<float>(d);
  q.dx = static_cast<float>(lengths[0]);
  q.dy = static_cast<float>(lengths[1]);
  q.dz = static_cast<float>(lengths[2]);
  return q;
}

Affine header_affine(const Header& h) {
  if (h.sform_code > 0) {
    Affine m = Affine::Identity();
    for (int j = 0; j < 4; ++j) {
      m(0, j) = h.srow_x[j];
      m(1, j) = h.srow_y[j];
      m(2, j) = h.srow_z[j];
    }
    return m;
  }
  if (h.qform_code > 0) {
    return qform_to_affine(h.quatern_b, h.quatern_c, h.quatern_d, h.qoffset_x, h.qoffset_y, h.qoffset_z,
                           h.pixdim);
  }
  Affine m = Affine::Identity();
  for (int d = 0; d < 3; ++d) m(d, d) = h.pixdim[d + 1] > 0 ? h.pixdim[d + 1] : 1.0;
  return m;
}

Header read_header(const fs::path& path) {
  gzFile file = gzopen(path.c_str(), "rb");
  if (!file) throw Error(Errc::IoError, "cannot open " + path.string());
  std::vector<unsigned char> bytes(sizeof(Header));
  const int n = gzread(file, bytes.data(), static_cast<unsigned>(bytes.size()));
  gzclose(file);
  bytes.resize(n > 0 ? static_cast<std::size_t>(n) : 0);
  Header header{};
  decode_header(bytes, header, path);
  return header;
}

Volume read(const fs::path& path, const ReadOptions& options) {
  if (!fs::exists(path)) throw Error(Errc::IoError, "no such file: " + path.string());
  const auto bytes = slurp(path);
  Header h{};
  const bool swapped = decode_header(bytes, h, path);
  const Shape3 shape = checked_shape(h, path);
  const std::size_t esize = element_size(h.datatype, path);
  const std::size_t count = voxel_count(shape);

  const unsigned char* payload = nullptr;
  std::vector<unsigned char> image_bytes;
  std::size_t offset = static_cast<std::size_t>(std::max(0.0f, h.vox_offset));
  if (std::memcmp(h.magic, "ni1", 4) == 0) {
    image_bytes = slurp(image_file_for(path));
    if (image_bytes.size() < offset + count * esize) {
      throw Error(Errc::CorruptHeader, path.string() + ": image file shorter than declared payload");
    }
    payload = image_bytes.data() + offset;
  } else {
    if (offset < sizeof(Header)) offset = 352;
    if (bytes.size() < offset + count * esize) {
      throw Error(Errc::CorruptHeader, path.string() + ": file shorter than declared payload");
    }
    payload = bytes.data() + offset;
  }

  std::vector<float> data;
  switch (static_cast<Datatype>(h.datatype)) {
    case Datatype::UInt8: decode_payload<std::uint8_t>(payload, count, swapped, data); break;
    case Datatype::Int16: decode_payload<std::int16_t>(payload, count, swapped, data); break;
    case Datatype::Int32: decode_payload<std::int32_t>(payload, count, swapped, data); break;
    case Datatype::Float32: decode_payload<float>(payload, count, swapped, data); break;
    case Datatype::Float64: decode_payload<double>(payload, count, swapped, data); break;
  }

  const float slope = h.scl_slope;
  const float inter = h.scl_inter;
  if (std::isfinite(slope) && slope != 0.0f && !(slope == 1.0f && inter == 0.0f)) {
    const float b = std::isfinite(inter) ? inter : 0.0f;
    for (auto& v : data) v = v * slope + b;
  }

  for (auto& v : data) {
    if (std::isnan(v)) {
      if (!options.nan_fill) {
        throw Error(Errc::NanInData, path.string() + ": volume contains NaN voxels (use --allow-nan-fill)");
      }
      v = *options.nan_fill;
    }
  }

  return Volume(shape, std::move(data), header_affine(h), bids_suffix(path));
}

void write(const Volume& volume, const fs::path& path, OutputType type) {
  if (type == OutputType::UInt8 && !volume.is_binary()) {
    throw Error(Errc::NonBinaryMaskAsUint8, "refusing to store non-binary data as uint8: " + path.string());
  }
  Header h{};
  h.sizeof_hdr = 348;
  h.regular = 'r';
  h.dim[0] = 3;
  for (int d = 0; d < 3; ++d) {
    if (volume.shape()[d] > 32767) throw Error(Errc::DimensionError, "dimension exceeds NIfTI-1 limit");
    h.dim[d + 1] = static_cast<std::int16_t>(volume.shape()[d]);
  }
  for (int d = 4; d < 8; ++d) h.dim[d] = 1;
  if (type == OutputType::UInt8) {
    h.datatype = static_cast<std::int16_t>(Datatype::UInt8);
    h.bitpix = 8;
  } else {
    h.datatype = static_cast<std::int16_t>(Datatype::Float32);
    h.bitpix = 32;
  }
  const Affine& a = volume.affine();
  const Quatern q = affine_to_qform(a);
  h.pixdim[0] = q.qfac;
  h.pixdim[1] = q.dx;
  h.pixdim[2] = q.dy;
  h.pixdim[3] = q.dz;
  for (int d = 4; d < 8; ++d) h.pixdim[d] = 1.0f;
  h.vox_offset = 352.0f;
  h.scl_slope = 1.0f;
  h.scl_inter = 0.0f;
  h.xyzt_units = 2 | 8;  // mm, s
  h.qform_code = 1;
  h.sform_code = 1;
  h.quatern_b = q.b;
  h.quatern_c = q.c;
  h.quatern_d = q.d;
  h.qoffset_x = q.qx;
  h.qoffset_y = q.qy;
  h.qoffset_z = q.qz;
  for (int j = 0; j < 4; ++j) {
    h.srow_x[j] = static_cast<float>(a(0, j));
    h.srow_y[j] = static_cast<float>(a(1, j));
    h.srow_z[j] = static_cast<float>(a(2, j));
  }
  fill_string(h.descrip, sizeof(h.descrip), volume.modality().empty() ? "segrun" : "segrun " + volume.modality());
  std::memcpy(h.magic, "n+1\0", 4);

  std::vector<unsigned char> bytes(352, 0);
  std::memcpy(bytes.data(), &h, sizeof(Header));
  const auto data = volume.data();
  if (type == OutputType::UInt8) {
    for (float v : data) bytes.push_back(v != 0.0f ? 1 : 0);
  } else {
    const auto* raw = reinterpret_cast<const unsigned char*>(data.data());
    bytes.insert(bytes.end(), raw, raw + data.size_bytes());
  }

  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  const char* mode = has_gzip_suffix(path) ? "wb6" : "wbT";
  gzFile file = gzopen(path.c_str(), mode);
  if (!file) throw Error(Errc::IoError, "cannot open for writing: " + path.string());
  std::size_t written = 0;
  while (written < bytes.size()) {
    const auto chunk = static_cast<unsigned>(std::min<std::size_t>(bytes.size() - written, 1u << 30));
    const int n = gzwrite(file, bytes.data() + written, chunk);
    if (n <= 0) {
      gzclose(file);
      throw Error(Errc::IoError, "write failed: " + path.string());
    }
    written += static_cast<std::size_t>(n);
  }
  if (gzclose(file) != Z_OK) throw Error(Errc::IoError, "close failed: " + path.string());
}

}  // namespace segrun::nifti
