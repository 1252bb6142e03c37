#pragma once

// Grayscale images in [0, 1]: PNG / binary PGM I/O, cropping, degradation and
// quality metrics.

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <numeric>
#include <string>
#include <vector>

#include "pdc/rng.hpp"
#include "pdc/tvl1.hpp"

namespace pdc {

struct ImageGrid {
  Index rows = 0;
  Index cols = 0;
  Vec pixels;  // row-major

  static ImageGrid constant(Index rows, Index cols, double v) {
    return {rows, cols, Vec::Constant(rows * cols, v)};
  }
  double& at(Index i, Index j) { return pixels[i * cols + j]; }
  double at(Index i, Index j) const { return pixels[i * cols + j]; }

  void validate() const {
    require(rows > 0 && cols > 0, ErrorCode::contract_violation, "empty image");
    require_dim(pixels.size(), rows * cols, "ImageGrid");
    require(pixels.minCoeff() >= -1e-9 && pixels.maxCoeff() <= 1.0 + 1e-9,
            ErrorCode::contract_violation, "pixels outside [0, 1]");
  }
};

inline constexpr double kLumaR = 0.299;
inline constexpr double kLumaG = 0.587;
inline constexpr double kLumaB = 0.114;

namespace detail {

inline std::string lower_extension(const std::string& path) {
  const auto dot = path.find_last_of('.');
  std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

inline std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5));
}

inline ImageGrid read_pgm(const std::vector<unsigned char>& bytes, const std::string& path) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&]() -> long {
    skip_space();
    long v = 0;
    bool any = false;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      any = true;
    }
    if (!any) throw Error(ErrorCode::format, path + ": malformed PGM header");
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5')
    throw Error(ErrorCode::format, path + ": only binary PGM (P5) is supported");
  pos = 2;
  const long cols = read_int(), rows = read_int(), maxval = read_int();
  if (maxval <= 0 || maxval > 255)
    throw Error(ErrorCode::format, path + ": unsupported PGM bit depth", double(maxval));
  if (cols <= 0 || rows <= 0) throw Error(ErrorCode::format, path + ": empty PGM");
  ++pos;  // single whitespace before the raster
  if (bytes.size() < pos + std::size_t(rows * cols))
    throw Error(ErrorCode::format, path + ": truncated PGM raster");
  ImageGrid img{rows, cols, Vec(rows * cols)};
  for (long i = 0; i < rows * cols; ++i) img.pixels[i] = bytes[pos + std::size_t(i)] / double(maxval);
  return img;
}

inline ImageGrid read_png(const std::string& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw Error(ErrorCode::format, path + ": " + image.message);
  if (image.format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&image);
    throw Error(ErrorCode::format, path + ": unsupported PNG bit depth (16-bit)");
  }
  const bool color = image.format & PNG_FORMAT_FLAG_COLORMAP
                         ? true
                         : (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw Error(ErrorCode::format, path + ": " + msg);
  }
  ImageGrid img{Index(image.height), Index(image.width), Vec(Index(image.height) * image.width)};
  for (Index p = 0; p < img.pixels.size(); ++p) {
    if (color) {
      const png_byte* c = &buf[std::size_t(3 * p)];
      img.pixels[p] = (kLumaR * c[0] + kLumaG * c[1] + kLumaB * c[2]) / 255.0;
    } else {
      img.pixels[p] = buf[std::size_t(p)] / 255.0;
    }
  }
  return img;
}

}  // namespace detail

/// Loads an 8-bit PNG (gray or RGB, converted by luminance) or binary PGM.
inline ImageGrid load_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot read " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  static const unsigned char png_sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() >= 8 && std::equal(png_sig, png_sig + 8, bytes.begin()))
    return detail::read_png(path);
  if (bytes.size() >= 2 && bytes[0] == 'P') return detail::read_pgm(bytes, path);
  throw Error(ErrorCode::format, path + ": neither PNG nor PGM");
}

/// Writes 8-bit grayscale; the format follows the extension (.png or .pgm).
inline void save_image(const ImageGrid& img, const std::string& path) {
  require(img.rows > 0 && img.cols > 0, ErrorCode::contract_violation, "empty image");
  std::vector<std::uint8_t> raw(std::size_t(img.pixels.size()));
  for (Index p = 0; p < img.pixels.size(); ++p) raw[std::size_t(p)] = detail::quantize(img.pixels[p]);
  const std::string ext = detail::lower_extension(path);
  if (ext == "png") {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = png_uint_32(img.cols);
    image.height = png_uint_32(img.rows);
    image.format = PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&image, path.c_str(), 0, raw.data(), 0, nullptr))
      throw Error(ErrorCode::io, path + ": " + image.message);
    return;
  }
  if (ext == "pgm") {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::io, "cannot write " + path);
    out << "P5\n" << img.cols << ' ' << img.rows << "\n255\n";
    out.write(reinterpret_cast<const char*>(raw.data()), std::streamsize(raw.size()));
    if (!out) throw Error(ErrorCode::io, "write failed: " + path);
    return;
  }
  throw Error(ErrorCode::format, path + ": unknown image extension '" + ext + "'");
}

/// Central n x n window (the whole image when n == 0).
inline ImageGrid center_crop(const ImageGrid& img, Index n) {
  if (n == 0) return img;
  if (n < 0 || n > img.rows || n > img.cols)
    throw Error(ErrorCode::configuration, "crop larger than the image", double(n));
  const Index r0 = (img.rows - n) / 2, c0 = (img.cols - n) / 2;
  ImageGrid out{n, n, Vec(n * n)};
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) out.at(i, j) = img.at(r0 + i, c0 + j);
  return out;
}

/// Sets floor(density * pixels) distinct pixels, chosen by a partial
/// Fisher-Yates shuffle, to 0 or 1 with a fair coin each.
inline ImageGrid add_salt_pepper(const ImageGrid& img, double density, std::uint64_t seed) {
  require(density >= 0.0 && density <= 1.0, ErrorCode::configuration,
          "noise density must lie in [0, 1]");
  ImageGrid out = img;
  const auto n = std::uint64_t(img.pixels.size());
  const auto count = std::uint64_t(std::floor(density * double(n)));
  std::vector<std::uint64_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  for (std::uint64_t k = 0; k < count; ++k) {
    const std::uint64_t j = k + rng.below(n - k);
    std::swap(idx[k], idx[j]);
    out.pixels[Index(idx[k])] = rng.coin() ? 1.0 : 0.0;
  }
  return out;
}

/// Blur with the hsize average, then salt-and-pepper noise.
inline ImageGrid degrade(const ImageGrid& img, Index hsize, double density, std::uint64_t seed,
                         Boundary bc = Boundary::periodic) {
  ImageGrid blurred = img;
  blurred.pixels = clamp(make_blur(img.rows, img.cols, hsize, bc).apply(img.pixels), 0.0, 1.0);
  return add_salt_pepper(blurred, density, seed);
}

inline double relative_objective_error(const TvL1Problem& p, const Vec& x, double f_star) {
  if (!(f_star > 0.0)) throw Error(ErrorCode::invalid_reference, "F* must be positive", f_star);
  return (objective(p, x) - f_star) / f_star;
}

/// Peak signal-to-noise ratio in dB for unit peak.
inline double psnr(const Vec& a, const Vec& b) {
  require_dim(a.size(), b.size(), "psnr");
  const double mse = (a - b).squaredNorm() / double(a.size());
  return mse == 0.0 ? kInf : 10.0 * std::log10(1.0 / mse);
}

}  // namespace pdc
