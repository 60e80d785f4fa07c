#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pda {

/// Dense pixel grid with 1 (gray) or 3 (RGB) channels.
///
/// Samples are stored row-major and channel-interleaved as reals in [0,1];
/// quantization only happens when an image is encoded to a file format.
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels, double fill = 0.0);
  Image(int width, int height, int channels, std::vector<double> pixels);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  std::size_t size() const noexcept { return pixels_.size(); }
  bool empty() const noexcept { return pixels_.empty(); }

  std::size_t index(int x, int y, int c = 0) const noexcept {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }
  double at(int x, int y, int c = 0) const noexcept { return pixels_[index(x, y, c)]; }
  double& at(int x, int y, int c = 0) noexcept { return pixels_[index(x, y, c)]; }

  std::span<const double> pixels() const noexcept { return pixels_; }
  std::span<double> pixels() noexcept { return pixels_; }

  bool same_shape(const Image& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<double> pixels_;
};

struct Rect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  bool contains(int px, int py) const noexcept {
    return px >= x && px < x + w && py >= y && py < y + h;
  }
  bool inside(int width, int height) const noexcept {
    return x >= 0 && y >= 0 && w >= 0 && h >= 0 && x + w <= width && y + h <= height;
  }
  friend bool operator==(const Rect&, const Rect&) = default;
};

/// Square region copied out of an image, flattened like Image pixels.
struct Patch {
  int edge = 0;
  int channels = 0;
  std::vector<double> values;
};

Patch extract_patch(const Image& image, const Rect& rect);

/// Bilinear resampling with corner alignment: output corners land exactly on
/// input corners, so resizing to the same shape is the identity.
Image resize_bilinear(const Image& image, int out_w, int out_h);

/// Bilinear sample at real coordinates; coordinates are clamped to the image,
/// which gives nearest-edge fill outside the grid.
double sample_bilinear(const Image& image, double x, double y, int c);

Image flip_horizontal(const Image& image);
Image flip_vertical(const Image& image);

/// Rotation about the image center by `degrees` (counter-clockwise in the
/// displayed image), bilinear, nearest-edge fill.
Image rotate(const Image& image, double degrees);

/// Crops a ratio-scaled sub-rectangle and resizes it back to the input size.
/// `offset_x`/`offset_y` in [0,1] place the crop within the slack; 0.5 centers.
Image zoom_crop(const Image& image, double ratio, double offset_x = 0.5, double offset_y = 0.5);

enum class Toggle { off, on, random };

/// Which transforms to apply. Random parts are resolved from a seed.
struct AugmentationSpec {
  Toggle rotate = Toggle::off;
  double rotate_degrees = 0.0;      // used when rotate == on
  double max_rotate_degrees = 25.0; // bound for rotate == random
  Toggle hflip = Toggle::off;
  Toggle vflip = Toggle::off;
  Toggle zoom = Toggle::off;
  double zoom_ratio = 0.8;
  bool random_zoom_offset = false;
};

/// A fully determined transform; this is what gets recorded for augmented
/// dataset records so the pixels can be regenerated on demand.
struct ResolvedAugmentation {
  double rotate_degrees = 0.0;
  bool hflip = false;
  bool vflip = false;
  std::optional<double> zoom_ratio;
  double zoom_offset_x = 0.5;
  double zoom_offset_y = 0.5;

  std::string to_string() const;
  static ResolvedAugmentation parse(const std::string& text);
  friend bool operator==(const ResolvedAugmentation&, const ResolvedAugmentation&) = default;
};

ResolvedAugmentation resolve_augmentation(const AugmentationSpec& spec, std::uint64_t seed);

/// Applies rotation, then flips, then zoom-crop.
Image apply_augmentation(const Image& image, const ResolvedAugmentation& aug);
Image apply_augmentation(const Image& image, const AugmentationSpec& spec, std::uint64_t seed);

}  // namespace pda
