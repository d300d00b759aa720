#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <type_traits>
#include <utility>
#include <vector>

#include "ilioseg/error.hpp"

namespace ilio {

// Physical voxel edge lengths in millimetres.
struct Spacing {
  double dx = 1.0;
  double dy = 1.0;
  double dz = 1.0;

  bool valid() const {
    return std::isfinite(dx) && std::isfinite(dy) && std::isfinite(dz) && dx > 0 && dy > 0 &&
           dz > 0;
  }
  double voxel_mm3() const { return dx * dy * dz; }
  bool operator==(const Spacing&) const = default;
};

struct Dims {
  std::size_t nx = 0;
  std::size_t ny = 0;
  std::size_t nz = 0;

  std::size_t count() const { return nx * ny * nz; }
  bool valid() const { return nx > 0 && ny > 0 && nz > 0; }
  bool operator==(const Dims&) const = default;
};

struct Voxel {
  long x = 0;
  long y = 0;
  long z = 0;
  bool operator==(const Voxel&) const = default;
};

// Mask label values. The orientation convention is fixed: +x is subject-left,
// so the right muscle sits at smaller x than the left one.
enum class Side : std::uint8_t { right = 1, left = 2 };

inline constexpr std::uint8_t kBackground = 0;
inline constexpr std::uint8_t kRightLabel = 1;
inline constexpr std::uint8_t kLeftLabel = 2;

inline constexpr std::uint8_t label_of(Side side) { return static_cast<std::uint8_t>(side); }
inline constexpr Side other_side(Side side) { return side == Side::right ? Side::left : Side::right; }
inline constexpr const char* side_name(Side side) { return side == Side::right ? "right" : "left"; }

// Dense 3D grid, x-fastest ordering. Float grids hold images and must stay
// finite; byte grids hold labels from {0,1,2}.
template <typename T>
class Grid {
 public:
  using value_type = T;
  static constexpr bool is_mask = std::is_same_v<T, std::uint8_t>;

  Grid() = default;

  Grid(Dims dims, Spacing spacing, T fill = T{})
      : dims_(dims), spacing_(spacing), voxels_(dims.count(), fill) {
    check_header();
    check_value(fill);
  }

  Grid(Dims dims, Spacing spacing, std::vector<T> voxels)
      : dims_(dims), spacing_(spacing), voxels_(std::move(voxels)) {
    check_header();
    if (voxels_.size() != dims_.count()) {
      throw ArgumentError("grid voxel count does not match dims");
    }
    for (const T& v : voxels_) check_value(v);
  }

  const Dims& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  std::size_t size() const { return voxels_.size(); }
  bool empty() const { return voxels_.empty(); }

  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const {
    return x + dims_.nx * (y + dims_.ny * z);
  }

  bool contains(const Voxel& v) const {
    return v.x >= 0 && v.y >= 0 && v.z >= 0 && static_cast<std::size_t>(v.x) < dims_.nx &&
           static_cast<std::size_t>(v.y) < dims_.ny && static_cast<std::size_t>(v.z) < dims_.nz;
  }

  const T& operator()(std::size_t x, std::size_t y, std::size_t z) const {
    return voxels_[index(x, y, z)];
  }

  void set(std::size_t x, std::size_t y, std::size_t z, T value) {
    check_value(value);
    voxels_[index(x, y, z)] = value;
  }

  std::span<const T> voxels() const { return voxels_; }

  // Bulk write access for images only; masks go through set() so labels stay valid.
  std::span<T> mutable_voxels()
    requires(!is_mask)
  {
    return voxels_;
  }

  bool operator==(const Grid&) const = default;

 private:
  void check_header() const {
    if (!dims_.valid()) throw ArgumentError("grid dims must be positive");
    if (!spacing_.valid()) throw ArgumentError("grid spacing must be positive and finite");
  }

  static void check_value(const T& v) {
    if constexpr (is_mask) {
      if (v > kLeftLabel) throw ArgumentError("mask label outside {0,1,2}");
    } else {
      if (!std::isfinite(v)) throw ArgumentError("image voxel is not finite");
    }
  }

  Dims dims_;
  Spacing spacing_;
  std::vector<T> voxels_;
};

using Volume3D = Grid<float>;
using Mask3D = Grid<std::uint8_t>;

struct LandmarkPair {
  Voxel right;
  Voxel left;

  const Voxel& of(Side side) const { return side == Side::right ? right : left; }
  // Both inside the grid and right.x < left.x.
  bool valid_for(const Dims& dims) const;
  bool operator==(const LandmarkPair&) const = default;
};

// Physical volume of voxels carrying `label` (1 or 2), in millilitres.
double mask_volume_ml(const Mask3D& mask, int label);

// Dice overlap for one label: 2TP / (FP + 2TP + FN). Two empty masks score 1.
double dsc(const Mask3D& a, const Mask3D& b, int label);

// Mirror along x: (x,y,z) -> (nx-1-x, y, z).
template <typename T>
Grid<T> flip_x(const Grid<T>& grid) {
  const Dims& d = grid.dims();
  std::vector<T> out(grid.size());
  auto src = grid.voxels();
  for (std::size_t z = 0; z < d.nz; ++z) {
    for (std::size_t y = 0; y < d.ny; ++y) {
      const std::size_t row = d.nx * (y + d.ny * z);
      for (std::size_t x = 0; x < d.nx; ++x) out[row + (d.nx - 1 - x)] = src[row + x];
    }
  }
  return Grid<T>(d, grid.spacing(), std::move(out));
}

// Keep only the largest 26-connected component of `label`; other labels are
// untouched. Ties go to the component containing the smallest linear index.
Mask3D largest_component(const Mask3D& mask, int label);

}  // namespace ilio
