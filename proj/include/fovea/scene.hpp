#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "fovea/common.hpp"
#include "fovea/image_io.hpp"
#include "json.hpp"

namespace fovea {

/// Position of a sprite's top-left corner at time t (hr-pixels, seconds).
struct Waypoint {
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;
};

struct Sprite {
  Image image;
  std::vector<Waypoint> path;  ///< linearly interpolated, clamped at both ends
  int z = 0;
  double start = -std::numeric_limits<double>::infinity();
  double stop = std::numeric_limits<double>::infinity();
};

/// Ground-truth scene: static background with opaque sprites composited in
/// painter's order (z, then declaration order). Immutable after construction.
class DynamicScene {
 public:
  explicit DynamicScene(Image background, std::vector<Sprite> sprites = {})
      : background_(std::move(background)), sprites_(std::move(sprites)) {
    require(background_.width > 0 && background_.height > 0, "scene background is empty");
    for (auto& v : background_.data) v = std::clamp(v, 0.0, 1.0);
    for (std::size_t i = 0; i < sprites_.size(); ++i) {
      auto& s = sprites_[i];
      require(!s.path.empty(), "sprite " + std::to_string(i) + " has an empty path");
      require(s.image.width > 0 && s.image.height > 0, "sprite " + std::to_string(i) + " has an empty image");
      for (std::size_t k = 1; k < s.path.size(); ++k)
        require(s.path[k].t >= s.path[k - 1].t, "sprite " + std::to_string(i) + " path times must be non-decreasing");
      for (auto& v : s.image.data) v = std::clamp(v, 0.0, 1.0);
    }
    order_.resize(sprites_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::stable_sort(order_.begin(), order_.end(),
                     [&](std::size_t a, std::size_t b) { return sprites_[a].z < sprites_[b].z; });
  }

  int width() const noexcept { return background_.width; }
  int height() const noexcept { return background_.height; }
  std::size_t pixel_count() const noexcept { return background_.size(); }
  const Image& background() const noexcept { return background_; }
  const std::vector<Sprite>& sprites() const noexcept { return sprites_; }
  bool is_static() const noexcept { return sprites_.empty(); }

  /// Continuous trajectory position (top-left corner) of sprite i at time t.
  std::array<double, 2> trajectory(std::size_t i, double t) const {
    const auto& p = sprites_.at(i).path;
    if (t <= p.front().t) return {p.front().x, p.front().y};
    if (t >= p.back().t) return {p.back().x, p.back().y};
    const auto it = std::upper_bound(p.begin(), p.end(), t, [](double v, const Waypoint& w) { return v < w.t; });
    const auto& b = *it;
    const auto& a = *(it - 1);
    const double u = b.t > a.t ? (t - a.t) / (b.t - a.t) : 1.0;
    return {a.x + u * (b.x - a.x), a.y + u * (b.y - a.y)};
  }

  /// Snapped placement of sprite i at t, or nothing when it is not shown.
  std::optional<Pixel> placement(std::size_t i, double t) const {
    const auto& s = sprites_.at(i);
    if (t < s.start || t >= s.stop) return std::nullopt;
    const auto pos = trajectory(i, t);
    return Pixel{static_cast<int>(std::lround(pos[0])), static_cast<int>(std::lround(pos[1]))};
  }

  /// Compact key that changes exactly when evaluate(t) may change.
  std::vector<std::int64_t> state_key(double t) const {
    std::vector<std::int64_t> key;
    key.reserve(sprites_.size() * 3);
    for (std::size_t i = 0; i < sprites_.size(); ++i) {
      const auto p = placement(i, t);
      key.push_back(p.has_value());
      key.push_back(p ? p->x : 0);
      key.push_back(p ? p->y : 0);
    }
    return key;
  }

  Image evaluate(double t) const {
    Image out = background_;
    for (auto i : order_) {
      const auto p = placement(i, t);
      if (!p) continue;
      const auto& img = sprites_[i].image;
      for (int y = 0; y < img.height; ++y) {
        const int fy = p->y + y;
        if (fy < 0 || fy >= out.height) continue;
        for (int x = 0; x < img.width; ++x) {
          const int fx = p->x + x;
          if (fx < 0 || fx >= out.width) continue;
          out.at(fx, fy) = img.at(x, y);
        }
      }
    }
    return out;
  }

  /// Centre of sprite i's footprint at time t (continuous trajectory).
  std::array<double, 2> sprite_center(std::size_t i, double t) const {
    const auto pos = trajectory(i, t);
    const auto& img = sprites_.at(i).image;
    return {pos[0] + 0.5 * img.width, pos[1] + 0.5 * img.height};
  }

 private:
  Image background_;
  std::vector<Sprite> sprites_;
  std::vector<std::size_t> order_;
};

// ---------------------------------------------------------------------------
// Built-in test imagery

/// Resolution-target style background: bar groups of several periods,
/// checkerboards and a radial pattern, values in [0.1, 0.9].
inline Image make_resolution_target(int width, int height) {
  Image img(width, height, 0.5);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double u = static_cast<double>(x) / width;
      const double v = static_cast<double>(y) / height;
      double val;
      if (v < 0.5 && u < 0.5) {
        const int period = u < 0.17 ? 2 : (u < 0.34 ? 4 : 8);
        val = ((v < 0.25 ? x : y) / (period / 2)) % 2 ? 0.85 : 0.15;
      } else if (v < 0.5) {
        const int period = v < 0.25 ? 2 : 3;
        val = ((x / period) + (y / period)) % 2 ? 0.8 : 0.2;
      } else if (u < 0.5) {
        const double cx = width * 0.25;
        const double cy = height * 0.75;
        const double r = std::hypot(x + 0.5 - cx, y + 0.5 - cy);
        val = 0.5 + 0.4 * std::cos(r * r * 0.02);
      } else {
        val = 0.3 + 0.4 * ((x * 7 + y * 13) % 11) / 10.0;
        if ((x / 6 + y / 6) % 3 == 0) val = 0.9 - 0.5 * (x % 2);
      }
      img.at(x, y) = std::clamp(val, 0.1, 0.9);
    }
  }
  return img;
}

inline Image make_filled(int width, int height, double value) { return Image(width, height, value); }

/// Bright sign carrying the letters "UoG" in dark strokes.
inline Image make_sign(int width, int height) {
  static constexpr std::array<const char*, 7> glyph_u = {"X...X", "X...X", "X...X", "X...X", "X...X", "X...X", ".XXX."};
  static constexpr std::array<const char*, 7> glyph_o = {".....", ".....", ".XXX.", "X...X", "X...X", "X...X", ".XXX."};
  static constexpr std::array<const char*, 7> glyph_g = {".XXX.", "X...X", "X....", "X.XXX", "X...X", "X...X", ".XXX."};
  const std::array<const std::array<const char*, 7>*, 3> glyphs = {&glyph_u, &glyph_o, &glyph_g};
  Image img(width, height, 0.95);
  const int scale = std::max(1, std::min(width / 19, height / 9));
  const int ox = (width - 17 * scale) / 2;
  const int oy = (height - 7 * scale) / 2;
  for (int g = 0; g < 3; ++g)
    for (int r = 0; r < 7; ++r)
      for (int c = 0; c < 5; ++c)
        if ((*glyphs[g])[r][c] == 'X')
          for (int dy = 0; dy < scale; ++dy)
            for (int dx = 0; dx < scale; ++dx) {
              const int x = ox + (g * 6 + c) * scale + dx;
              const int y = oy + r * scale + dy;
              if (x >= 0 && y >= 0 && x < width && y < height) img.at(x, y) = 0.05;
            }
  return img;
}

/// Single-hr-pixel impulses of value 1 on a regular lattice over a dark field.
inline Image make_impulse_grid(int width, int height, int spacing, int offset) {
  require(spacing > 0, "impulse spacing must be positive");
  Image img(width, height, 0.0);
  for (int y = offset; y < height; y += spacing)
    for (int x = offset; x < width; x += spacing) img.at(x, y) = 1.0;
  return img;
}

/// White square of side `size` moving horizontally at `speed` hr-pixels/s
/// across a resolution-target background, reversing at the field margins.
inline DynamicScene make_moving_square_scene(int width = 128, int height = 128, int size = 16, double speed = 8.0,
                                             double duration = 60.0, double row = 40.0) {
  Sprite s;
  s.image = make_filled(size, size, 1.0);
  const double x_min = 8.0;
  const double x_max = width - 8.0 - size;
  const double leg = (x_max - x_min) / speed;
  double t = 0.0;
  bool forward = true;
  s.path.push_back({0.0, x_min, row});
  while (t < duration) {
    t += leg;
    s.path.push_back({t, forward ? x_max : x_min, row});
    forward = !forward;
  }
  return DynamicScene(make_resolution_target(width, height), {std::move(s)});
}

/// Sign with lettering swept across a static background.
inline DynamicScene make_moving_sign_scene(int width = 128, int height = 128, double duration = 15.0) {
  Sprite s;
  s.image = make_sign(40, 20);
  s.path = {{0.0, 4.0, 70.0}, {duration * 0.5, width - 44.0, 50.0}, {duration, 20.0, 30.0}};
  return DynamicScene(make_resolution_target(width, height), {std::move(s)});
}

// ---------------------------------------------------------------------------
// Declarative scene scripts

namespace detail {

inline Image image_from_json(const nlohmann::json& j, int width, int height, const std::filesystem::path& base) {
  if (j.is_number()) return make_filled(width, height, j.get<double>());
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "builtin:target") return make_resolution_target(width, height);
    if (s == "builtin:sign") return make_sign(width, height);
    const std::filesystem::path p = std::filesystem::path(s).is_absolute() ? std::filesystem::path(s) : base / s;
    return load_image(p, width, height);
  }
  if (j.is_object()) {
    const int w = j.value("width", width);
    const int h = j.value("height", height);
    if (j.contains("value")) return make_filled(w, h, j.at("value").get<double>());
    if (j.contains("image")) return image_from_json(j.at("image"), w, h, base);
  }
  throw InvalidArgument("unrecognised image description: " + j.dump());
}

}  // namespace detail

/// Scene script: {width, height, background, sprites:[{image, path:[{t,x,y}], z, start, stop}]}.
/// Images are a constant, "builtin:target", "builtin:sign", a PGM/PPM path
/// (relative to `base`), or {width, height, value|image}.
inline DynamicScene scene_from_json(const nlohmann::json& j, const std::filesystem::path& base = ".") {
  const int width = j.value("width", 128);
  const int height = j.value("height", 128);
  Image background = detail::image_from_json(j.value("background", nlohmann::json(0.0)), width, height, base);
  std::vector<Sprite> sprites;
  if (j.contains("sprites")) {
    for (const auto& js : j.at("sprites")) {
      Sprite s;
      const auto& im = js.at("image");
      const int w = im.is_object() ? im.value("width", 16) : js.value("width", 16);
      const int h = im.is_object() ? im.value("height", 16) : js.value("height", 16);
      s.image = detail::image_from_json(im, w, h, base);
      for (const auto& wp : js.at("path")) s.path.push_back({wp.at("t").get<double>(), wp.at("x").get<double>(), wp.at("y").get<double>()});
      s.z = js.value("z", 0);
      if (js.contains("start")) s.start = js.at("start").get<double>();
      if (js.contains("stop")) s.stop = js.at("stop").get<double>();
      sprites.push_back(std::move(s));
    }
  }
  return DynamicScene(std::move(background), std::move(sprites));
}

inline DynamicScene load_scene(const std::filesystem::path& path) {
  const std::string text = detail::read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IngestionError(path.string(), std::string("invalid scene JSON: ") + e.what());
  }
  return scene_from_json(j, path.parent_path());
}

/// Resolves a scene argument: "builtin:moving-square", "builtin:moving-sign",
/// "builtin:target", a scene-script .json, or a plain image file.
inline DynamicScene resolve_scene(const std::string& spec, int width = 128, int height = 128) {
  if (spec == "builtin:moving-square") return make_moving_square_scene(width, height);
  if (spec == "builtin:moving-sign") return make_moving_sign_scene(width, height);
  if (spec == "builtin:target") return DynamicScene(make_resolution_target(width, height));
  const std::filesystem::path p(spec);
  if (p.extension() == ".json") return load_scene(p);
  return DynamicScene(load_image(p, width, height));
}

}  // namespace fovea
