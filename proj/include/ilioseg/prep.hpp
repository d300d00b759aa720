#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ilioseg/rng.hpp"
#include "ilioseg/voxgrid.hpp"

namespace ilio {

// Fixed-size crop; the landmark lands on (cx/2, cy/2, cz/8) in canonical
// (right-muscle) orientation.
struct CropSpec {
  std::array<std::size_t, 3> dims{96, 96, 192};

  static CropSpec paper() { return {}; }
  static CropSpec desk() { return {{32, 32, 64}}; }

  std::size_t z_anchor() const { return dims[2] / 8; }
  // Source voxel that lands on crop voxel (0,0,0) for the given side.
  Voxel origin(const Voxel& landmark, Side side) const;
  // Throws ArgumentError unless every dim is a positive multiple of 16.
  void validate() const;
};

// Image crop plus a binary {0,1} target for one side.
struct Crop {
  Volume3D image;
  Mask3D mask;
};

// Image-only crop with the same placement as crop_about_landmark.
Volume3D crop_image(const Volume3D& volume, const Voxel& landmark, const CropSpec& spec, Side side);

// Out-of-grid regions are zero. For the left side the anchor is placed at
// x = cx-1-cx/2 so that mirroring puts the landmark on cx/2.
Crop crop_about_landmark(const Volume3D& volume, const Mask3D& mask, const Voxel& landmark,
                         const CropSpec& spec, Side side);

// Zero mean, unit population SD; a constant image maps to zeros.
Volume3D normalize_zscore(const Volume3D& image);

// Left crops are flipped along x; right crops pass through.
Crop mirror_to_canonical(const Crop& crop, Side side);

// Translations in voxels, scales as factors, both about the crop centre.
struct AffineParams {
  double tx = 0.0, ty = 0.0, tz = 0.0;
  double sx = 1.0, sy = 1.0, sz = 1.0;

  static constexpr double kMaxInPlaneShift = 6.0;
  static constexpr double kMaxOutOfPlaneShift = 24.0;
  static constexpr double kInPlaneScale[2] = {0.75, 1.25};
  static constexpr double kOutOfPlaneScale[2] = {0.5, 1.5};

  // Throws ArgumentError when a parameter is out of range.
  static AffineParams make(double tx, double ty, double tz, double sx, double sy, double sz);
  static AffineParams identity() { return {}; }
  static AffineParams sample(Rng& rng);
  bool is_identity() const;
};

// Image trilinear, mask nearest neighbour, zero outside the crop.
Crop apply_affine(const Crop& crop, const AffineParams& params);

struct AffineResult {
  Crop crop;
  AffineParams params;
};
AffineResult random_affine(const Crop& crop, Rng& rng);

struct TrainingSample {
  Volume3D image;
  Mask3D mask;
  std::string subject_id;
  Side side = Side::right;
  bool mirrored = false;
  int transform_index = 0;  // 0 is the untransformed crop
};

struct SubjectVolumes {
  std::string id;
  Volume3D image;
  Mask3D mask;
  LandmarkPair landmarks;
};

inline std::size_t training_set_size(std::size_t subjects, int aug_count) {
  return subjects * 2 * 2 * (1 + static_cast<std::size_t>(aug_count));
}

// Per subject: 2 sides x {canonical, canonical flipped} x (1 + aug_count).
// Each sample: crop -> canonical mirror -> optional flip -> affine -> z-score.
// Sample RNGs derive from (seed, subject id, side, mirror flag, transform index).
std::vector<TrainingSample> build_training_set(const std::vector<SubjectVolumes>& subjects,
                                               const CropSpec& spec, int aug_count,
                                               std::uint64_t seed);

}  // namespace ilio
