#pragma once

#include "segrun/volume.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>

namespace segrun::nifti {

/// On-disk NIfTI-1 header, 348 bytes, field offsets per the NIfTI-1 standard.
struct Header {
  std::int32_t sizeof_hdr;
  char data_type[10];
  char db_name[18];
  std::int32_t extents;
  std::int16_t session_error;
  char regular;
  char dim_info;
  std::int16_t dim[8];
  float intent_p1;
  float intent_p2;
  float intent_p3;
  std::int16_t intent_code;
  std::int16_t datatype;
  std::int16_t bitpix;
  std::int16_t slice_start;
  float pixdim[8];
  float vox_offset;
  float scl_slope;
  float scl_inter;
  std::int16_t slice_end;
  char slice_code;
  char xyzt_units;
  float cal_max;
  float cal_min;
  float slice_duration;
  float toffset;
  std::int32_t glmax;
  std::int32_t glmin;
  char descrip[80];
  char aux_file[24];
  std::int16_t qform_code;
  std::int16_t sform_code;
  float quatern_b;
  float quatern_c;
  float quatern_d;
  float qoffset_x;
  float qoffset_y;
  float qoffset_z;
  float srow_x[4];
  float srow_y[4];
  float srow_z[4];
  char intent_name[16];
  char magic[4];
};
static_assert(sizeof(Header) == 348, "NIfTI-1 header must be 348 bytes");

enum class Datatype : std::int16_t {
  UInt8 = 2,
  Int16 = 4,
  Int32 = 8,
  Float32 = 16,
  Float64 = 64,
};

enum class OutputType { Float32, UInt8 };

struct ReadOptions {
  /// When set, NaN voxels are replaced by this value instead of rejecting the file.
  std::optional<float> nan_fill;
};

Volume read(const std::filesystem::path& path, const ReadOptions& options = {});
void write(const Volume& volume, const std::filesystem::path& path,
           OutputType type = OutputType::Float32);

/// Header-only inspection (no payload decode).
Header read_header(const std::filesystem::path& path);

/// Affine resolution order: sform (code > 0), then qform, then diag(pixdim).
Affine header_affine(const Header& header);

Affine qform_to_affine(float qb, float qc, float qd, float qx, float qy, float qz,
                       const float pixdim[8]);

struct Quatern {
  float b, c, d;
  float qx, qy, qz;
  float dx, dy, dz;
  float qfac;
};
/// Nearest rotation + scaling representation of an affine (polar decomposition).
Quatern affine_to_qform(const Affine& affine);

bool has_gzip_suffix(const std::filesystem::path& path);
/// BIDS suffix of a filename, e.g. "T1w" for "sub-01_T1w.nii.gz"; empty if none.
std::string bids_suffix(const std::filesystem::path& path);

}  // namespace segrun::nifti
