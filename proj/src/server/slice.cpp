#include "segrun/server/slice.hpp"

#include "segrun/error.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace segrun {

SliceAxis slice_axis_from_string(const std::string& s) {
  if (s == "x") return SliceAxis::X;
  if (s == "y") return SliceAxis::Y;
  if (s == "z") return SliceAxis::Z;
  throw Error(Errc::InvalidArgument, "axis must be x, y or z");
}

std::size_t axis_length(const Shape3& shape, SliceAxis axis) { return shape[static_cast<int>(axis)]; }

IntensityWindow robust_window(const Volume& anatomy) {
  std::vector<float> v;
  for (float x : anatomy.data())
    if (x != 0.0f && std::isfinite(x)) v.push_back(x);
  if (v.empty()) return {};
  auto at = [&](double q) {
    const auto k = static_cast<std::size_t>(q * static_cast<double>(v.size() - 1));
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
    return v[k];
  };
  IntensityWindow w{at(0.01), at(0.99)};
  if (!(w.high > w.low)) w.high = w.low + 1.0f;
  return w;
}

SliceImage render_slice(const Volume& anatomy, const Volume& probability, SliceAxis axis, std::size_t index,
                        double threshold, const IntensityWindow& window, double opacity) {
  if (anatomy.shape() != probability.shape()) throw Error(Errc::ShapeMismatch, "anatomy and probability grids differ");
  const Shape3& s = anatomy.shape();
  if (index >= axis_length(s, axis)) throw Error(Errc::NotFound, "slice index out of range");
  // (column axis, row axis) in volume dimensions.
  const int col_dim = axis == SliceAxis::X ? 1 : 0;
  const int row_dim = axis == SliceAxis::Z ? 1 : 2;
  SliceImage img;
  img.width = static_cast<int>(s[col_dim]);
  img.height = static_cast<int>(s[row_dim]);
  img.rgb.resize(static_cast<std::size_t>(img.width) * img.height * 3);
  const double span = static_cast<double>(window.high) - window.low;
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      std::size_t idx[3];
      idx[static_cast<int>(axis)] = index;
      idx[col_dim] = static_cast<std::size_t>(c);
      idx[row_dim] = static_cast<std::size_t>(img.height - 1 - r);
      const std::size_t i = anatomy.index(idx[0], idx[1], idx[2]);
      const double g = std::clamp((anatomy.data()[i] - window.low) / span, 0.0, 1.0) * 255.0;
      double rgb[3] = {g, g, g};
      if (static_cast<double>(probability.data()[i]) >= threshold) {
        ++img.overlay_voxels;
        rgb[0] = (1.0 - opacity) * g + opacity * 255.0;
        rgb[1] = (1.0 - opacity) * g;
        rgb[2] = (1.0 - opacity) * g;
      }
      std::uint8_t* px = &img.rgb[(static_cast<std::size_t>(r) * img.width + c) * 3];
      for (int k = 0; k < 3; ++k) px[k] = static_cast<std::uint8_t>(std::lround(rgb[k]));
    }
  }
  return img;
}

namespace {

void append_bytes(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::string*>(png_get_io_ptr(png));
  out->append(reinterpret_cast<const char*>(data), length);
}

struct ReadCursor {
  const std::string* bytes;
  std::size_t pos;
};

void read_bytes(png_structp png, png_bytep data, png_size_t length) {
  auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (cur->pos + length > cur->bytes->size()) png_error(png, "truncated PNG");
  std::memcpy(data, cur->bytes->data() + cur->pos, length);
  cur->pos += length;
}

}  // namespace

std::string encode_png(const SliceImage& image) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error(Errc::IoError, "libpng initialisation failed");
  }
  std::string out;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(Errc::IoError, "PNG encoding failed");
  }
  png_set_write_fn(png, &out, append_bytes, nullptr);
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int r = 0; r < image.height; ++r) {
    png_write_row(png, const_cast<png_bytep>(&image.rgb[static_cast<std::size_t>(r) * image.width * 3]));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

SliceImage decode_png(const std::string& bytes) {
  if (bytes.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) != 0) {
    throw Error(Errc::ParseError, "not a PNG stream");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(Errc::IoError, "libpng initialisation failed");
  }
  SliceImage img;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(Errc::ParseError, "PNG decoding failed");
  }
  ReadCursor cur{&bytes, 0};
  png_set_read_fn(png, &cur, read_bytes);
  png_read_info(png, info);
  if (png_get_color_type(png, info) != PNG_COLOR_TYPE_RGB || png_get_bit_depth(png, info) != 8) {
    png_error(png, "expected 8-bit RGB");
  }
  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.rgb.resize(static_cast<std::size_t>(img.width) * img.height * 3);
  for (int r = 0; r < img.height; ++r) png_read_row(png, &img.rgb[static_cast<std::size_t>(r) * img.width * 3], nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

}  // namespace segrun
