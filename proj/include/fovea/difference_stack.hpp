#pragma once

#include <cstdint>
#include <deque>
#include <limits>
#include <vector>

#include "fovea/common.hpp"

namespace fovea {

/// Row-major boolean map over the blip lattice.
struct BinaryMap {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  BinaryMap() = default;
  BinaryMap(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h, 0) {}

  bool at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v = true) { data[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto v : data) n += v != 0;
    return n;
  }
  bool any() const { return count() > 0; }

  friend bool operator==(const BinaryMap&, const BinaryMap&) = default;
};

/// Per-blip-pixel time of the last detected change, plus a bounded history
/// of recent difference maps.
class DifferenceMapStack {
 public:
  static constexpr double never = -std::numeric_limits<double>::infinity();

  DifferenceMapStack(int blip_width, int blip_height, std::size_t capacity = 64)
      : width_(blip_width),
        height_(blip_height),
        capacity_(capacity),
        last_change_(static_cast<std::size_t>(blip_width) * blip_height, never) {
    require(blip_width > 0 && blip_height > 0, "difference stack dimensions must be positive");
    require(capacity > 0, "difference stack capacity must be positive");
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t capacity() const noexcept { return capacity_; }

  /// Records a difference map detected at `time` (typically the end of the newer blip).
  void push(const BinaryMap& map, double time) {
    require(map.width == width_ && map.height == height_, "difference map size mismatch");
    require(history_.empty() || time >= history_.back().time, "difference maps must arrive in time order");
    for (std::size_t i = 0; i < map.data.size(); ++i)
      if (map.data[i]) last_change_[i] = time;
    history_.push_back({time, map});
    if (history_.size() > capacity_) history_.pop_front();
  }

  double last_change(int bx, int by) const { return last_change_[static_cast<std::size_t>(by) * width_ + bx]; }
  const std::vector<double>& last_change() const noexcept { return last_change_; }

  struct Entry {
    double time;
    BinaryMap map;
  };
  const std::deque<Entry>& history() const noexcept { return history_; }

 private:
  int width_;
  int height_;
  std::size_t capacity_;
  std::vector<double> last_change_;
  std::deque<Entry> history_;
};

}  // namespace fovea
