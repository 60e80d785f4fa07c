#include "pda/codec.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "pda/error.hpp"

namespace pda {

namespace {

std::uint8_t quantize8(double v) {
  const double q = std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
  return static_cast<std::uint8_t>(q);
}

// ---------------------------------------------------------------------------
// PPM family

class PnmReader {
 public:
  explicit PnmReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const auto ch = bytes_[pos_];
      if (ch == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(ch)) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  // Returns false at end of data; throws on a non-digit token.
  bool read_uint(long& out, ErrorCode on_garbage) {
    skip_space_and_comments();
    if (pos_ >= bytes_.size()) return false;
    if (!std::isdigit(bytes_[pos_])) throw Error(on_garbage, "expected an unsigned integer in PNM data");
    long v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > 1'000'000'000L) throw Error(on_garbage, "integer too large in PNM data");
      ++pos_;
    }
    out = v;
    return true;
  }

  std::size_t pos() const { return pos_; }
  void advance(std::size_t n) { pos_ += n; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::uint8_t byte(std::size_t offset) const { return bytes_[pos_ + offset]; }
  bool at_space() const { return pos_ < bytes_.size() && std::isspace(bytes_[pos_]); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

Image decode_pnm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P') throw Error(ErrorCode::malformed_header, "missing PNM magic number");
  const char kind = static_cast<char>(bytes[1]);
  int channels = 0;
  bool ascii = false;
  switch (kind) {
    case '2': channels = 1; ascii = true; break;
    case '3': channels = 3; ascii = true; break;
    case '5': channels = 1; break;
    case '6': channels = 3; break;
    case '1':
    case '4':
    case '7':
      throw Error(ErrorCode::unsupported_format, std::string("unsupported PNM variant P") + kind);
    default:
      throw Error(ErrorCode::malformed_header, "unknown PNM magic number");
  }
  PnmReader reader(bytes);
  reader.advance(2);
  long width = 0, height = 0, maxval = 0;
  if (!reader.read_uint(width, ErrorCode::malformed_header) || !reader.read_uint(height, ErrorCode::malformed_header) ||
      !reader.read_uint(maxval, ErrorCode::malformed_header)) {
    throw Error(ErrorCode::malformed_header, "incomplete PNM header");
  }
  if (width < 1 || height < 1) throw Error(ErrorCode::malformed_header, "PNM dimensions must be positive");
  if (maxval < 1 || maxval > 65535) throw Error(ErrorCode::unsupported_format, "PNM maxval must be in [1, 65535]");

  const std::size_t count = static_cast<std::size_t>(width) * height * channels;
  std::vector<double> pixels(count);
  const double scale = 1.0 / static_cast<double>(maxval);
  auto store = [&](std::size_t i, long sample) {
    if (sample > maxval) throw Error(ErrorCode::parse_error, "PNM sample exceeds maxval");
    pixels[i] = static_cast<double>(sample) * scale;
  };

  if (ascii) {
    for (std::size_t i = 0; i < count; ++i) {
      long sample = 0;
      if (!reader.read_uint(sample, ErrorCode::parse_error)) {
        throw Error(ErrorCode::truncated_payload, "PNM payload ends after " + std::to_string(i) + " of " +
                                                      std::to_string(count) + " samples");
      }
      store(i, sample);
    }
  } else {
    if (!reader.at_space()) throw Error(ErrorCode::malformed_header, "missing whitespace after PNM maxval");
    reader.advance(1);
    const std::size_t bytes_per_sample = maxval < 256 ? 1 : 2;
    if (reader.remaining() < count * bytes_per_sample) {
      throw Error(ErrorCode::truncated_payload, "PNM payload has " + std::to_string(reader.remaining()) +
                                                    " bytes, expected " + std::to_string(count * bytes_per_sample));
    }
    for (std::size_t i = 0; i < count; ++i) {
      long sample = bytes_per_sample == 1
                        ? reader.byte(i)
                        : (static_cast<long>(reader.byte(2 * i)) << 8) | reader.byte(2 * i + 1);
      store(i, sample);
    }
  }
  return Image(static_cast<int>(width), static_cast<int>(height), channels, std::move(pixels));
}

std::vector<std::uint8_t> encode_pnm(const Image& image) {
  const std::string header = std::string(image.channels() == 1 ? "P5" : "P6") + "\n" +
                             std::to_string(image.width()) + " " + std::to_string(image.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + image.size());
  for (double v : image.pixels()) out.push_back(quantize8(v));
  return out;
}

// ---------------------------------------------------------------------------
// PNG via libpng; errors leave through longjmp, never through C frames.

struct PngReadState {
  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;
  bool truncated = false;
  char message[256] = {};
};

void png_read_from_span(png_structp png, png_bytep out, png_size_t n) {
  auto* st = static_cast<PngReadState*>(png_get_io_ptr(png));
  if (st->bytes.size() - st->pos < n) {
    st->truncated = true;
    png_error(png, "unexpected end of PNG data");
  }
  std::memcpy(out, st->bytes.data() + st->pos, n);
  st->pos += n;
}

void png_on_error(png_structp png, png_const_charp msg) {
  auto* st = static_cast<PngReadState*>(png_get_error_ptr(png));
  if (st) std::snprintf(st->message, sizeof st->message, "%s", msg);
  png_longjmp(png, 1);
}

void png_on_warning(png_structp, png_const_charp) {}

Image decode_png(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    throw Error(ErrorCode::malformed_header, "missing PNG signature");
  }
  PngReadState st;
  st.bytes = bytes;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &st, png_on_error, png_on_warning);
  if (!png) throw Error(ErrorCode::io, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw Error(ErrorCode::io, "png_create_info_struct failed");
  }

  // Everything touched after setjmp lives outside this frame or is volatile-free POD.
  int width = 0, height = 0, channels = 0, depth = 0;
  std::vector<std::uint8_t> raw;
  std::vector<png_bytep> rows;
  enum { ok, unsupported } status = ok;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    if (st.truncated) throw Error(ErrorCode::truncated_payload, st.message);
    throw Error(ErrorCode::malformed_header, std::string("PNG decode failed: ") + st.message);
  }
  png_set_read_fn(png, &st, png_read_from_span);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_GRAY) {
    channels = 1;
    if (depth < 8) {
      png_set_expand_gray_1_2_4_to_8(png);
      depth = 8;
    }
  } else if (color == PNG_COLOR_TYPE_RGB) {
    channels = 3;
  } else {
    status = unsupported;
  }
  if (status == ok && png_get_valid(png, info, PNG_INFO_tRNS)) status = unsupported;
  if (status == unsupported) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::unsupported_format, "PNG color mode must be 8/16-bit gray or RGB without alpha");
  }
  png_set_interlace_handling(png);
  png_read_update_info(png, info);
  width = static_cast<int>(png_get_image_width(png, info));
  height = static_cast<int>(png_get_image_height(png, info));
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  raw.resize(rowbytes * height);
  rows.resize(height);
  for (int y = 0; y < height; ++y) rows[y] = raw.data() + rowbytes * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const std::size_t count = static_cast<std::size_t>(width) * height * channels;
  std::vector<double> pixels(count);
  if (depth == 16) {
    for (std::size_t i = 0; i < count; ++i) pixels[i] = ((raw[2 * i] << 8) | raw[2 * i + 1]) / 65535.0;
  } else {
    for (std::size_t i = 0; i < count; ++i) pixels[i] = raw[i] / 255.0;
  }
  return Image(width, height, channels, std::move(pixels));
}

void png_write_to_vector(png_structp png, png_bytep data, png_size_t n) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + n);
}

void png_flush_noop(png_structp) {}

std::vector<std::uint8_t> encode_png(const Image& image) {
  std::vector<std::uint8_t> out;
  std::vector<std::uint8_t> raw(image.size());
  std::transform(image.pixels().begin(), image.pixels().end(), raw.begin(), quantize8);
  std::vector<png_bytep> rows(image.height());
  const std::size_t stride = static_cast<std::size_t>(image.width()) * image.channels();
  for (int y = 0; y < image.height(); ++y) rows[y] = raw.data() + stride * y;

  PngReadState err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_on_error, png_on_warning);
  if (!png) throw Error(ErrorCode::io, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::io, std::string("PNG encode failed: ") + err.message);
  }
  png_set_write_fn(png, &out, png_write_to_vector, png_flush_noop);
  png_set_compression_level(png, 6);
  png_set_IHDR(png, info, image.width(), image.height(), 8,
               image.channels() == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

}  // namespace

Image decode_image(std::span<const std::uint8_t> bytes, ImageFormat format) {
  return format == ImageFormat::png ? decode_png(bytes) : decode_pnm(bytes);
}

std::vector<std::uint8_t> encode_image(const Image& image, ImageFormat format) {
  if (image.empty()) throw Error(ErrorCode::invalid_argument, "cannot encode an empty image");
  return format == ImageFormat::png ? encode_png(image) : encode_pnm(image);
}

ImageFormat format_for_path(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".png") return ImageFormat::png;
  if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") return ImageFormat::ppm;
  throw Error(ErrorCode::unsupported_format, "unrecognized image extension: " + path.string());
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::missing_file, "cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::io, "write failed for " + path.string());
}

Image read_image(const std::filesystem::path& path) {
  const auto format = format_for_path(path);
  return decode_image(read_file_bytes(path), format);
}

void write_image(const Image& image, const std::filesystem::path& path) {
  write_file_bytes(path, encode_image(image, format_for_path(path)));
}

}  // namespace pda
