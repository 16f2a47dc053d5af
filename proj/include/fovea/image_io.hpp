#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fovea/common.hpp"

namespace fovea {

namespace detail {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError(path.string(), "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Reads the next whitespace-delimited header token, skipping '#' comments.
inline std::string next_token(const std::string& buf, std::size_t& pos) {
  for (;;) {
    while (pos < buf.size() && std::isspace(static_cast<unsigned char>(buf[pos]))) ++pos;
    if (pos < buf.size() && buf[pos] == '#') {
      while (pos < buf.size() && buf[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  const std::size_t start = pos;
  while (pos < buf.size() && !std::isspace(static_cast<unsigned char>(buf[pos]))) ++pos;
  return buf.substr(start, pos - start);
}

inline int parse_positive(const std::string& tok, const std::string& path, const char* what) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used != tok.size() || v <= 0) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw IngestionError(path, std::string("bad ") + what + " '" + tok + "'");
  }
}

}  // namespace detail

/// Decodes a netpbm grayscale (P2/P5) or colour (P3/P6) image to luma in [0,1].
inline Image decode_netpbm(const std::string& buf, const std::string& path = "<memory>") {
  std::size_t pos = 0;
  const std::string magic = detail::next_token(buf, pos);
  if (magic != "P2" && magic != "P5" && magic != "P3" && magic != "P6")
    throw IngestionError(path, "unsupported image format (expected PGM/PPM), magic '" + magic + "'");
  const bool color = magic == "P3" || magic == "P6";
  const bool binary = magic == "P5" || magic == "P6";
  const int w = detail::parse_positive(detail::next_token(buf, pos), path, "width");
  const int h = detail::parse_positive(detail::next_token(buf, pos), path, "height");
  const int maxval = detail::parse_positive(detail::next_token(buf, pos), path, "maxval");
  if (maxval > 65535) throw IngestionError(path, "maxval exceeds 65535");
  const int channels = color ? 3 : 1;
  const std::size_t samples = static_cast<std::size_t>(w) * h * channels;
  std::vector<double> raw(samples);
  if (binary) {
    ++pos;  // single whitespace byte after maxval
    const std::size_t bytes = maxval > 255 ? 2 : 1;
    if (buf.size() < pos + samples * bytes) throw IngestionError(path, "truncated pixel data");
    for (std::size_t i = 0; i < samples; ++i) {
      const auto* p = reinterpret_cast<const unsigned char*>(buf.data() + pos + i * bytes);
      raw[i] = bytes == 2 ? static_cast<double>((p[0] << 8) | p[1]) : static_cast<double>(p[0]);
    }
  } else {
    for (std::size_t i = 0; i < samples; ++i) {
      const std::string tok = detail::next_token(buf, pos);
      if (tok.empty()) throw IngestionError(path, "truncated pixel data");
      try {
        raw[i] = std::stod(tok);
      } catch (const std::exception&) {
        throw IngestionError(path, "bad sample '" + tok + "'");
      }
    }
  }
  Image img(w, h);
  for (std::size_t i = 0; i < img.size(); ++i) {
    double v;
    if (color) {
      // Rec. 601 luma
      v = 0.299 * raw[3 * i] + 0.587 * raw[3 * i + 1] + 0.114 * raw[3 * i + 2];
    } else {
      v = raw[i];
    }
    img.data[i] = std::clamp(v / maxval, 0.0, 1.0);
  }
  return img;
}

inline Image read_netpbm(const std::filesystem::path& path) { return decode_netpbm(detail::read_file(path), path.string()); }

/// Box-filter (area-average) resample; exact for integer up/down factors.
inline Image resample_area(const Image& src, int width, int height) {
  require(width > 0 && height > 0, "resample target must be positive");
  require(src.width > 0 && src.height > 0, "resample source is empty");
  Image out(width, height);
  const double sx = static_cast<double>(src.width) / width;
  const double sy = static_cast<double>(src.height) / height;
  for (int y = 0; y < height; ++y) {
    const double y0 = y * sy;
    const double y1 = (y + 1) * sy;
    for (int x = 0; x < width; ++x) {
      const double x0 = x * sx;
      const double x1 = (x + 1) * sx;
      double acc = 0.0;
      double wsum = 0.0;
      for (int j = static_cast<int>(std::floor(y0)); j < static_cast<int>(std::ceil(y1)) && j < src.height; ++j) {
        const double wy = std::min(y1, j + 1.0) - std::max(y0, static_cast<double>(j));
        if (wy <= 0) continue;
        for (int i = static_cast<int>(std::floor(x0)); i < static_cast<int>(std::ceil(x1)) && i < src.width; ++i) {
          const double wx = std::min(x1, i + 1.0) - std::max(x0, static_cast<double>(i));
          if (wx <= 0) continue;
          acc += wx * wy * src.at(i, j);
          wsum += wx * wy;
        }
      }
      out.at(x, y) = acc / wsum;
    }
  }
  return out;
}

/// Grayscale ingestion: luma, area-averaged resample, normalized to [0,1].
inline Image load_image(const std::filesystem::path& path, int target_width, int target_height) {
  return resample_area(read_netpbm(path), target_width, target_height);
}

inline std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

/// Binary 8-bit PGM (P5) of values in [0,1] (clamped).
inline std::string encode_pgm(const Image& img) {
  std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.reserve(out.size() + img.size());
  for (double v : img.data) out.push_back(static_cast<char>(to_byte(v)));
  return out;
}

/// Binary PPM (P6) from three [0,1] planes.
inline std::string encode_ppm(const Image& r, const Image& g, const Image& b) {
  require(r.width == g.width && r.width == b.width && r.height == g.height && r.height == b.height,
          "encode_ppm: plane size mismatch");
  std::string out = "P6\n" + std::to_string(r.width) + " " + std::to_string(r.height) + "\n255\n";
  for (std::size_t i = 0; i < r.size(); ++i) {
    out.push_back(static_cast<char>(to_byte(r.data[i])));
    out.push_back(static_cast<char>(to_byte(g.data[i])));
    out.push_back(static_cast<char>(to_byte(b.data[i])));
  }
  return out;
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace fovea
