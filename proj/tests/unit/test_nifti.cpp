#include "segrun/error.hpp"
#include "segrun/nifti.hpp"
#include "support.hpp"

#include <doctest.h>
#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>

using namespace segrun;
using segrun::testing::TempDir;

namespace {

// Raw NIfTI-1 bytes assembled field by field from the standard's byte offsets.
struct RawHeader {
  std::vector<char> bytes = std::vector<char>(352, 0);

  template <class T>
  void put(std::size_t offset, T value) { std::memcpy(bytes.data() + offset, &value, sizeof(T)); }

  RawHeader(std::int16_t datatype, std::int16_t bitpix, std::array<std::int16_t, 3> dims) {
    put<std::int32_t>(0, 348);
    put<std::int16_t>(40, 3);
    for (int i = 0; i < 3; ++i) put<std::int16_t>(42 + 2 * i, dims[i]);
    for (int i = 3; i < 8; ++i) put<std::int16_t>(42 + 2 * i, 1);
    put<std::int16_t>(70, datatype);
    put<std::int16_t>(72, bitpix);
    for (int i = 0; i < 8; ++i) put<float>(76 + 4 * i, 1.0f);
    put<float>(108, 352.0f);
    std::memcpy(bytes.data() + 344, "n+1\0", 4);
  }
  void slope(float s, float i) {
    put<float>(112, s);
    put<float>(116, i);
  }
};

template <class T>
void write_raw(const std::filesystem::path& p, RawHeader h, const std::vector<T>& payload) {
  std::ofstream out(p, std::ios::binary);
  out.write(h.bytes.data(), static_cast<std::streamsize>(h.bytes.size()));
  out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size() * sizeof(T)));
}

}  // namespace

TEST_CASE("int16 payload is rescaled by slope and intercept") {
  TempDir dir;
  RawHeader h(4, 16, {2, 2, 2});
  h.slope(2.0f, 1.0f);
  std::vector<std::int16_t> payload{0, 1, 2, 3, 4, 5, 6, 7};
  write_raw(dir / "s.nii", h, payload);
  const Volume v = nifti::read(dir / "s.nii");
  REQUIRE(v.size() == 8);
  for (std::size_t i = 0; i < 8; ++i) CHECK(v.data()[i] == doctest::Approx(2.0 * payload[i] + 1.0));
}

TEST_CASE("zero slope leaves stored values untouched") {
  TempDir dir;
  RawHeader h(2, 8, {2, 1, 1});
  write_raw(dir / "u.nii", h, std::vector<std::uint8_t>{7, 200});
  const Volume v = nifti::read(dir / "u.nii");
  CHECK(v.data()[0] == 7.0f);
  CHECK(v.data()[1] == 200.0f);
  CHECK(v.affine().isApprox(Affine::Identity()));
}

TEST_CASE("every supported datatype decodes") {
  TempDir dir;
  write_raw(dir / "i32.nii", RawHeader(8, 32, {3, 1, 1}), std::vector<std::int32_t>{-5, 0, 100000});
  write_raw(dir / "f64.nii", RawHeader(64, 64, {2, 1, 1}), std::vector<double>{0.25, -1.5});
  CHECK(nifti::read(dir / "i32.nii").data()[2] == 100000.0f);
  CHECK(nifti::read(dir / "f64.nii").data()[1] == -1.5f);
}

TEST_CASE("unsupported datatype, bad magic and bad dimensionality are rejected") {
  TempDir dir;
  write_raw(dir / "c64.nii", RawHeader(32, 64, {1, 1, 1}), std::vector<float>{0, 0});
  CHECK_THROWS_WITH_AS(nifti::read(dir / "c64.nii"), doctest::Contains("datatype"), Error);
  try {
    nifti::read(dir / "c64.nii");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::UnsupportedDatatype);
  }

  RawHeader bad(16, 32, {1, 1, 1});
  std::memcpy(bad.bytes.data() + 344, "xyz\0", 4);
  write_raw(dir / "magic.nii", bad, std::vector<float>{0});
  try {
    nifti::read(dir / "magic.nii");
    FAIL("expected CorruptHeader");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::CorruptHeader);
  }

  RawHeader four(16, 32, {2, 1, 1});
  four.put<std::int16_t>(40, 4);
  four.put<std::int16_t>(48, 2);
  write_raw(dir / "4d.nii", four, std::vector<float>(4, 0.0f));
  try {
    nifti::read(dir / "4d.nii");
    FAIL("expected DimensionError");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::DimensionError);
  }

  four.put<std::int16_t>(48, 1);
  write_raw(dir / "4d1.nii", four, std::vector<float>(2, 3.0f));
  CHECK(nifti::read(dir / "4d1.nii").shape() == Shape3{2, 1, 1});
}

TEST_CASE("NaN voxels are rejected unless a fill value is given") {
  TempDir dir;
  write_raw(dir / "nan.nii", RawHeader(16, 32, {2, 1, 1}), std::vector<float>{1.0f, std::nanf("")});
  try {
    nifti::read(dir / "nan.nii");
    FAIL("expected NanInData");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NanInData);
  }
  const Volume v = nifti::read(dir / "nan.nii", {.nan_fill = 0.0f});
  CHECK(v.data()[1] == 0.0f);
}

TEST_CASE("plain and gzip encodings decode identically") {
  TempDir dir;
  segrun::testing::Rng rng(7);
  const Volume v = segrun::testing::random_volume(rng, {5, 4, 3});
  nifti::write(v, dir / "a.nii");
  nifti::write(v, dir / "a.nii.gz");
  const Volume a = nifti::read(dir / "a.nii");
  const Volume b = nifti::read(dir / "a.nii.gz");
  CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
  CHECK(a.affine() == b.affine());
  // The gzip file really is gzip.
  const auto bytes = segrun::testing::file_bytes(dir / "a.nii.gz");
  CHECK(static_cast<unsigned char>(bytes[0]) == 0x1f);
  CHECK(static_cast<unsigned char>(bytes[1]) == 0x8b);
}

TEST_CASE("written header carries both sform and qform") {
  TempDir dir;
  segrun::testing::Rng rng(11);
  const Volume v = segrun::testing::random_volume(rng, {3, 3, 3});
  nifti::write(v, dir / "h.nii");
  const nifti::Header h = nifti::read_header(dir / "h.nii");
  CHECK(h.sform_code == 1);
  CHECK(h.qform_code == 1);
  CHECK(h.datatype == 16);
  CHECK(std::string(h.magic, 3) == "n+1");
  // The qform alone reproduces the rigid+scale affine.
  const Affine q = nifti::qform_to_affine(h.quatern_b, h.quatern_c, h.quatern_d, h.qoffset_x, h.qoffset_y,
                                          h.qoffset_z, h.pixdim);
  CHECK((q - v.affine()).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("qform is used when no sform is present") {
  TempDir dir;
  RawHeader h(16, 32, {2, 2, 2});
  h.put<std::int16_t>(252, 1);  // qform_code
  h.put<float>(256, 0.0f);      // b
  h.put<float>(260, 0.0f);      // c
  h.put<float>(264, 1.0f);      // d: 180 degrees about z
  h.put<float>(268, 10.0f);
  h.put<float>(272, 20.0f);
  h.put<float>(276, 30.0f);
  h.put<float>(80, 2.0f);  // pixdim[1]
  write_raw(dir / "q.nii", h, std::vector<float>(8, 1.0f));
  const Affine a = nifti::read(dir / "q.nii").affine();
  Affine expected = Affine::Identity();
  expected(0, 0) = -2.0;
  expected(1, 1) = -1.0;
  expected(0, 3) = 10.0;
  expected(1, 3) = 20.0;
  expected(2, 3) = 30.0;
  CHECK((a - expected).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("uint8 output requires a binary volume") {
  TempDir dir;
  const Volume mask({2, 2, 1}, {0, 1, 1, 0}, Affine::Identity());
  nifti::write(mask, dir / "m.nii.gz", nifti::OutputType::UInt8);
  const Volume back = nifti::read(dir / "m.nii.gz");
  CHECK(std::vector<float>(back.data().begin(), back.data().end()) == std::vector<float>{0, 1, 1, 0});
  CHECK(nifti::read_header(dir / "m.nii.gz").datatype == 2);

  const Volume soft({2, 1, 1}, {0.0f, 0.5f}, Affine::Identity());
  try {
    nifti::write(soft, dir / "s.nii", nifti::OutputType::UInt8);
    FAIL("expected NonBinaryMaskAsUint8");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NonBinaryMaskAsUint8);
  }
}

TEST_CASE("writing to a read-only location raises IoError") {
  TempDir dir;
  std::filesystem::create_directories(dir / "ro");
  std::filesystem::permissions(dir / "ro", std::filesystem::perms::owner_read | std::filesystem::perms::owner_exec);
  const Volume v = Volume::filled({2, 2, 2}, 1.0f);
  if (::geteuid() == 0) return;  // root ignores directory permissions
  try {
    nifti::write(v, dir / "ro" / "x.nii");
    FAIL("expected IoError");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::IoError);
  }
}

TEST_CASE("writing into a path whose parent is a file raises IoError") {
  TempDir dir;
  { std::ofstream(dir / "file") << "x"; }
  try {
    nifti::write(Volume::filled({1, 1, 1}, 0.0f), dir / "file" / "x.nii");
    FAIL("expected IoError");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::IoError);
  }
}

TEST_CASE("analyze-style header and image pair") {
  TempDir dir;
  RawHeader h(16, 32, {2, 1, 1});
  std::memcpy(h.bytes.data() + 344, "ni1\0", 4);
  h.put<float>(108, 0.0f);
  {
    std::ofstream hdr(dir / "p.hdr", std::ios::binary);
    hdr.write(h.bytes.data(), 348);
    std::ofstream img(dir / "p.img", std::ios::binary);
    const float vals[2] = {4.0f, 5.0f};
    img.write(reinterpret_cast<const char*>(vals), sizeof vals);
  }
  const Volume v = nifti::read(dir / "p.hdr");
  CHECK(v.data()[1] == 5.0f);
}

TEST_CASE("byte-swapped header is read") {
  TempDir dir;
  RawHeader h(16, 32, {2, 1, 1});
  auto swap_at = [&](std::size_t off, std::size_t n) { std::reverse(h.bytes.begin() + off, h.bytes.begin() + off + n); };
  swap_at(0, 4);
  swap_at(40, 2);
  for (int i = 1; i < 8; ++i) swap_at(40 + 2 * i, 2);
  swap_at(70, 2);
  swap_at(72, 2);
  for (int i = 0; i < 8; ++i) swap_at(76 + 4 * i, 4);
  swap_at(108, 4);
  std::vector<float> payload{1.5f, -2.0f};
  std::vector<char> raw(8);
  std::memcpy(raw.data(), payload.data(), 8);
  std::reverse(raw.begin(), raw.begin() + 4);
  std::reverse(raw.begin() + 4, raw.end());
  {
    std::ofstream out(dir / "be.nii", std::ios::binary);
    out.write(h.bytes.data(), 352);
    out.write(raw.data(), 8);
  }
  const Volume v = nifti::read(dir / "be.nii");
  CHECK(v.data()[0] == 1.5f);
  CHECK(v.data()[1] == -2.0f);
}

TEST_CASE("modality comes from the BIDS suffix") {
  CHECK(nifti::bids_suffix("sub-01_T1w.nii.gz") == "T1w");
  CHECK(nifti::bids_suffix("/a/b/sub-01_ses-1_FLAIR.nii") == "FLAIR");
  CHECK(nifti::bids_suffix("brain.nii.gz") == "");
}
