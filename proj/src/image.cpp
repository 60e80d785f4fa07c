#include "pda/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include "pda/error.hpp"
#include "pda/rng.hpp"

namespace pda {

namespace {

void check_shape(int width, int height, int channels) {
  if (width < 0 || height < 0) {
    throw Error(ErrorCode::invalid_argument, "image dimensions must be non-negative");
  }
  if (channels != 1 && channels != 3) {
    throw Error(ErrorCode::invalid_argument,
                "image must have 1 or 3 channels, got " + std::to_string(channels));
  }
}

// Exact at t = 0, exact for a == b, and never leaves [min(a,b), max(a,b)].
double lerp(double a, double b, double t) {
  const double v = a + (b - a) * t;
  return std::clamp(v, std::min(a, b), std::max(a, b));
}

// Corner-aligned source coordinate for output index i.
double source_coord(int i, int in_n, int out_n) {
  if (out_n == 1 || in_n == 1) return 0.0;
  return static_cast<double>(i) * (in_n - 1) / (out_n - 1);
}

}  // namespace

Image::Image(int width, int height, int channels, double fill)
    : width_(width), height_(height), channels_(channels) {
  check_shape(width, height, channels);
  pixels_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

Image::Image(int width, int height, int channels, std::vector<double> pixels)
    : width_(width), height_(height), channels_(channels), pixels_(std::move(pixels)) {
  check_shape(width, height, channels);
  if (pixels_.size() != static_cast<std::size_t>(width) * height * channels) {
    throw Error(ErrorCode::dimension_mismatch, "pixel buffer length does not match width*height*channels");
  }
}

Patch extract_patch(const Image& image, const Rect& rect) {
  if (!rect.inside(image.width(), image.height())) {
    throw Error(ErrorCode::out_of_bounds, "patch rect escapes image bounds");
  }
  if (rect.w != rect.h) {
    throw Error(ErrorCode::invalid_argument, "patch rect must be square");
  }
  Patch patch;
  patch.edge = rect.w;
  patch.channels = image.channels();
  patch.values.reserve(static_cast<std::size_t>(rect.w) * rect.h * image.channels());
  for (int y = rect.y; y < rect.y + rect.h; ++y) {
    const auto row = image.pixels().subspan(image.index(rect.x, y), static_cast<std::size_t>(rect.w) * image.channels());
    patch.values.insert(patch.values.end(), row.begin(), row.end());
  }
  return patch;
}

double sample_bilinear(const Image& image, double x, double y, int c) {
  x = std::clamp(x, 0.0, static_cast<double>(image.width() - 1));
  y = std::clamp(y, 0.0, static_cast<double>(image.height() - 1));
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, image.width() - 1);
  const int y1 = std::min(y0 + 1, image.height() - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  const double top = lerp(image.at(x0, y0, c), image.at(x1, y0, c), fx);
  const double bottom = lerp(image.at(x0, y1, c), image.at(x1, y1, c), fx);
  return lerp(top, bottom, fy);
}

Image resize_bilinear(const Image& image, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1) {
    throw Error(ErrorCode::invalid_argument, "resize target must be at least 1x1");
  }
  if (image.empty()) {
    throw Error(ErrorCode::invalid_argument, "cannot resize an empty image");
  }
  Image out(out_w, out_h, image.channels());
  for (int y = 0; y < out_h; ++y) {
    const double sy = source_coord(y, image.height(), out_h);
    for (int x = 0; x < out_w; ++x) {
      const double sx = source_coord(x, image.width(), out_w);
      for (int c = 0; c < image.channels(); ++c) {
        out.at(x, y, c) = sample_bilinear(image, sx, sy, c);
      }
    }
  }
  return out;
}

Image flip_horizontal(const Image& image) {
  Image out(image.width(), image.height(), image.channels());
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x)
      for (int c = 0; c < image.channels(); ++c)
        out.at(image.width() - 1 - x, y, c) = image.at(x, y, c);
  return out;
}

Image flip_vertical(const Image& image) {
  Image out(image.width(), image.height(), image.channels());
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x)
      for (int c = 0; c < image.channels(); ++c)
        out.at(x, image.height() - 1 - y, c) = image.at(x, y, c);
  return out;
}

Image rotate(const Image& image, double degrees) {
  if (degrees == 0.0) return image;
  const double rad = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(rad);
  const double sn = std::sin(rad);
  const double cx = 0.5 * (image.width() - 1);
  const double cy = 0.5 * (image.height() - 1);
  Image out(image.width(), image.height(), image.channels());
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      // Inverse map; y grows downward, so this turns the picture counter-clockwise.
      const double dx = x - cx;
      const double dy = y - cy;
      const double sx = cx + cs * dx - sn * dy;
      const double sy = cy + sn * dx + cs * dy;
      for (int c = 0; c < image.channels(); ++c) out.at(x, y, c) = sample_bilinear(image, sx, sy, c);
    }
  }
  return out;
}

Image zoom_crop(const Image& image, double ratio, double offset_x, double offset_y) {
  if (!(ratio > 0.0 && ratio <= 1.0)) {
    throw Error(ErrorCode::invalid_argument, "zoom ratio must lie in (0,1]");
  }
  const int cw = std::max(1, static_cast<int>(std::lround(ratio * image.width())));
  const int ch = std::max(1, static_cast<int>(std::lround(ratio * image.height())));
  const int x0 = static_cast<int>(std::lround(std::clamp(offset_x, 0.0, 1.0) * (image.width() - cw)));
  const int y0 = static_cast<int>(std::lround(std::clamp(offset_y, 0.0, 1.0) * (image.height() - ch)));
  Image crop(cw, ch, image.channels());
  for (int y = 0; y < ch; ++y)
    for (int x = 0; x < cw; ++x)
      for (int c = 0; c < image.channels(); ++c) crop.at(x, y, c) = image.at(x0 + x, y0 + y, c);
  return resize_bilinear(crop, image.width(), image.height());
}

std::string ResolvedAugmentation::to_string() const {
  char buf[160];
  std::snprintf(buf, sizeof buf, "rot=%.17g;hflip=%d;vflip=%d;zoom=%.17g;zx=%.17g;zy=%.17g", rotate_degrees,
                hflip ? 1 : 0, vflip ? 1 : 0, zoom_ratio.value_or(1.0), zoom_offset_x, zoom_offset_y);
  std::string s = buf;
  if (!zoom_ratio) s += ";nozoom";
  return s;
}

ResolvedAugmentation ResolvedAugmentation::parse(const std::string& text) {
  ResolvedAugmentation aug;
  double zoom = 1.0;
  bool has_zoom = true;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ';')) {
    if (item == "nozoom") {
      has_zoom = false;
      continue;
    }
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::parse_error, "bad augmentation descriptor: " + text);
    const std::string key = item.substr(0, eq);
    const double value = std::stod(item.substr(eq + 1));
    if (key == "rot") aug.rotate_degrees = value;
    else if (key == "hflip") aug.hflip = value != 0.0;
    else if (key == "vflip") aug.vflip = value != 0.0;
    else if (key == "zoom") zoom = value;
    else if (key == "zx") aug.zoom_offset_x = value;
    else if (key == "zy") aug.zoom_offset_y = value;
    else throw Error(ErrorCode::parse_error, "unknown augmentation key: " + key);
  }
  if (has_zoom) aug.zoom_ratio = zoom;
  return aug;
}

ResolvedAugmentation resolve_augmentation(const AugmentationSpec& spec, std::uint64_t seed) {
  if (spec.zoom != Toggle::off && !(spec.zoom_ratio > 0.0 && spec.zoom_ratio <= 1.0)) {
    throw Error(ErrorCode::invalid_argument, "zoom ratio must lie in (0,1]");
  }
  if (std::abs(spec.rotate_degrees) > 25.0 || spec.max_rotate_degrees < 0.0 || spec.max_rotate_degrees > 25.0) {
    throw Error(ErrorCode::invalid_argument, "rotation is limited to [-25, 25] degrees");
  }
  Rng rng(derive_seed(seed, streams::augment));
  auto coin = [&rng](Toggle t) {
    const bool flip = uniform01(rng) < 0.5;  // drawn unconditionally to keep the stream layout fixed
    return t == Toggle::on || (t == Toggle::random && flip);
  };
  ResolvedAugmentation aug;
  const double u = uniform01(rng);
  if (spec.rotate == Toggle::on) aug.rotate_degrees = spec.rotate_degrees;
  else if (spec.rotate == Toggle::random) aug.rotate_degrees = (2.0 * u - 1.0) * spec.max_rotate_degrees;
  aug.hflip = coin(spec.hflip);
  aug.vflip = coin(spec.vflip);
  const bool zoom = coin(spec.zoom);
  const double ox = uniform01(rng);
  const double oy = uniform01(rng);
  if (zoom) {
    aug.zoom_ratio = spec.zoom_ratio;
    if (spec.random_zoom_offset) {
      aug.zoom_offset_x = ox;
      aug.zoom_offset_y = oy;
    }
  }
  return aug;
}

Image apply_augmentation(const Image& image, const ResolvedAugmentation& aug) {
  Image out = rotate(image, aug.rotate_degrees);
  if (aug.hflip) out = flip_horizontal(out);
  if (aug.vflip) out = flip_vertical(out);
  if (aug.zoom_ratio) out = zoom_crop(out, *aug.zoom_ratio, aug.zoom_offset_x, aug.zoom_offset_y);
  return out;
}

Image apply_augmentation(const Image& image, const AugmentationSpec& spec, std::uint64_t seed) {
  return apply_augmentation(image, resolve_augmentation(spec, seed));
}

}  // namespace pda
