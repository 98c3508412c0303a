#include "mga/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "mga/errors.hpp"

namespace mga::data {
namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& in) {
  std::string tok;
  char ch = 0;
  while (in.get(ch)) {
    if (ch == '#') {
      std::string discard;
      std::getline(in, discard);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(ch);
  }
  return tok;
}

std::size_t header_number(std::istream& in, const std::filesystem::path& path) {
  const std::string tok = header_token(in);
  try {
    std::size_t used = 0;
    const auto v = std::stoul(tok, &used);
    if (used != tok.size() || v == 0) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw DataError("unreadable image header in " + path.string());
  }
}

double sample_bilinear(const Image& img, std::size_t c, double x, double y, double fill, bool clamp = false) {
  // (x, y) in continuous coordinates; pixel centres at +0.5.
  if (clamp) {
    x = std::clamp(x, 0.5, img.width - 0.5);
    y = std::clamp(y, 0.5, img.height - 0.5);
  }
  const double fx = x - 0.5;
  const double fy = y - 0.5;
  const double x0 = std::floor(fx);
  const double y0 = std::floor(fy);
  const double ax = fx - x0;
  const double ay = fy - y0;
  auto px = [&](double xi, double yi) {
    if (xi < 0 || yi < 0 || xi >= static_cast<double>(img.width) || yi >= static_cast<double>(img.height)) return fill;
    return img.at(c, static_cast<std::size_t>(yi), static_cast<std::size_t>(xi));
  };
  return (1 - ay) * ((1 - ax) * px(x0, y0) + ax * px(x0 + 1, y0)) + ay * ((1 - ax) * px(x0, y0 + 1) + ax * px(x0 + 1, y0 + 1));
}

}  // namespace

Image read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("unreadable image: " + path.string());
  const std::string magic = header_token(in);
  std::size_t channels = 0;
  if (magic == "P5") {
    channels = 1;
  } else if (magic == "P6") {
    channels = 3;
  } else {
    throw DataError("unsupported image format in " + path.string() + " (expected binary P5/P6)");
  }
  const std::size_t width = header_number(in, path);
  const std::size_t height = header_number(in, path);
  const std::size_t maxval = header_number(in, path);
  if (maxval != 255) throw DataError("only 8-bit images are supported: " + path.string());
  std::vector<unsigned char> raw(width * height * channels);
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
    throw DataError("truncated image data in " + path.string());
  }
  Image img(channels, height, width);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      for (std::size_t c = 0; c < channels; ++c) {
        img.at(c, y, x) = raw[(y * width + x) * channels + c] / 255.0;
      }
    }
  }
  return img;
}

void write_pnm(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) throw DataError("PNM output needs 1 or 3 channels");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write image: " + path.string());
  out << (image.channels == 1 ? "P5" : "P6") << '\n' << image.width << ' ' << image.height << "\n255\n";
  std::vector<unsigned char> raw(image.pixels.size());
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      for (std::size_t c = 0; c < image.channels; ++c) {
        const double v = std::clamp(image.at(c, y, x), 0.0, 1.0);
        raw[(y * image.width + x) * image.channels + c] = static_cast<unsigned char>(std::lround(v * 255.0));
      }
    }
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

void quantize8(Image& image) {
  for (auto& v : image.pixels) v = static_cast<double>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)) / 255.0;
}

Image flip_horizontal(const Image& image) {
  Image out(image.channels, image.height, image.width);
  for (std::size_t c = 0; c < image.channels; ++c) {
    for (std::size_t y = 0; y < image.height; ++y) {
      for (std::size_t x = 0; x < image.width; ++x) out.at(c, y, x) = image.at(c, y, image.width - 1 - x);
    }
  }
  return out;
}

Image rotate(const Image& image, double radians, double cx, double cy, Border border, double fill) {
  if (radians == 0.0) return image;
  Image out(image.channels, image.height, image.width);
  const double c = std::cos(radians);
  const double s = std::sin(radians);
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      // Inverse map the output pixel centre into the source.
      const double dx = x + 0.5 - cx;
      const double dy = y + 0.5 - cy;
      const double sx = cx + c * dx + s * dy;
      const double sy = cy - s * dx + c * dy;
      for (std::size_t ch = 0; ch < image.channels; ++ch) out.at(ch, y, x) = sample_bilinear(image, ch, sx, sy, fill, border == Border::Clamp);
    }
  }
  return out;
}

Image resize_bilinear(const Image& image, std::size_t height, std::size_t width) {
  Image out(image.channels, height, width);
  const double sx = static_cast<double>(image.width) / static_cast<double>(width);
  const double sy = static_cast<double>(image.height) / static_cast<double>(height);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const double px = (x + 0.5) * sx;
      const double py = (y + 0.5) * sy;
      for (std::size_t c = 0; c < image.channels; ++c) out.at(c, y, x) = sample_bilinear(image, c, px, py, 0.0, true);
    }
  }
  return out;
}

}  // namespace mga::data
