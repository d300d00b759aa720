#include "ilioseg/prep.hpp"

#include <cmath>
#include <string>

namespace ilio {

namespace {

Dims crop_dims(const CropSpec& spec) { return {spec.dims[0], spec.dims[1], spec.dims[2]}; }

void check_range(const char* name, double v, double lo, double hi) {
  if (!std::isfinite(v) || v < lo || v > hi) {
    throw ArgumentError(std::string("affine ") + name + " = " + std::to_string(v) +
                        " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
}

}  // namespace

Voxel CropSpec::origin(const Voxel& landmark, Side side) const {
  const long ax = side == Side::right ? static_cast<long>(dims[0] / 2)
                                      : static_cast<long>(dims[0] - 1 - dims[0] / 2);
  return {landmark.x - ax, landmark.y - static_cast<long>(dims[1] / 2),
          landmark.z - static_cast<long>(z_anchor())};
}

void CropSpec::validate() const {
  for (std::size_t d : dims) {
    if (d == 0 || d % 16 != 0) {
      throw ArgumentError("crop dims must be positive multiples of 16, got " + std::to_string(d));
    }
  }
}

Volume3D crop_image(const Volume3D& volume, const Voxel& landmark, const CropSpec& spec,
                    Side side) {
  spec.validate();
  if (!volume.contains(landmark)) throw ArgumentError("landmark outside the volume");
  const Voxel o = spec.origin(landmark, side);
  const Dims cd = crop_dims(spec);
  std::vector<float> img(cd.count(), 0.0f);
  std::size_t i = 0;
  for (std::size_t z = 0; z < cd.nz; ++z) {
    for (std::size_t y = 0; y < cd.ny; ++y) {
      for (std::size_t x = 0; x < cd.nx; ++x, ++i) {
        const Voxel s{o.x + static_cast<long>(x), o.y + static_cast<long>(y),
                      o.z + static_cast<long>(z)};
        if (volume.contains(s)) img[i] = volume(s.x, s.y, s.z);
      }
    }
  }
  return Volume3D(cd, volume.spacing(), std::move(img));
}

Crop crop_about_landmark(const Volume3D& volume, const Mask3D& mask, const Voxel& landmark,
                         const CropSpec& spec, Side side) {
  spec.validate();
  if (!(volume.dims() == mask.dims())) throw ArgumentError("image and mask dims differ");
  if (!volume.contains(landmark)) throw ArgumentError("landmark outside the volume");
  const Voxel o = spec.origin(landmark, side);
  const Dims cd = crop_dims(spec);
  const std::uint8_t label = label_of(side);
  std::vector<float> img(cd.count(), 0.0f);
  std::vector<std::uint8_t> lab(cd.count(), 0);
  std::size_t i = 0;
  for (std::size_t z = 0; z < cd.nz; ++z) {
    for (std::size_t y = 0; y < cd.ny; ++y) {
      for (std::size_t x = 0; x < cd.nx; ++x, ++i) {
        const Voxel s{o.x + static_cast<long>(x), o.y + static_cast<long>(y),
                      o.z + static_cast<long>(z)};
        if (!volume.contains(s)) continue;
        img[i] = volume(s.x, s.y, s.z);
        lab[i] = mask(s.x, s.y, s.z) == label ? 1 : 0;
      }
    }
  }
  return {Volume3D(cd, volume.spacing(), std::move(img)),
          Mask3D(cd, mask.spacing(), std::move(lab))};
}

Volume3D normalize_zscore(const Volume3D& image) {
  auto v = image.voxels();
  double mean = 0.0;
  for (float x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (float x : v) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(v.size()));
  std::vector<float> out(v.size(), 0.0f);
  if (sd > 0.0) {
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>((v[i] - mean) / sd);
  }
  return Volume3D(image.dims(), image.spacing(), std::move(out));
}

Crop mirror_to_canonical(const Crop& crop, Side side) {
  if (side == Side::right) return crop;
  return {flip_x(crop.image), flip_x(crop.mask)};
}

AffineParams AffineParams::make(double tx, double ty, double tz, double sx, double sy,
                                double sz) {
  check_range("tx", tx, -kMaxInPlaneShift, kMaxInPlaneShift);
  check_range("ty", ty, -kMaxInPlaneShift, kMaxInPlaneShift);
  check_range("tz", tz, -kMaxOutOfPlaneShift, kMaxOutOfPlaneShift);
  check_range("sx", sx, kInPlaneScale[0], kInPlaneScale[1]);
  check_range("sy", sy, kInPlaneScale[0], kInPlaneScale[1]);
  check_range("sz", sz, kOutOfPlaneScale[0], kOutOfPlaneScale[1]);
  AffineParams p;
  p.tx = tx;
  p.ty = ty;
  p.tz = tz;
  p.sx = sx;
  p.sy = sy;
  p.sz = sz;
  return p;
}

AffineParams AffineParams::sample(Rng& rng) {
  std::uniform_real_distribution<double> shift_xy(-kMaxInPlaneShift, kMaxInPlaneShift);
  std::uniform_real_distribution<double> shift_z(-kMaxOutOfPlaneShift, kMaxOutOfPlaneShift);
  std::uniform_real_distribution<double> scale_xy(kInPlaneScale[0], kInPlaneScale[1]);
  std::uniform_real_distribution<double> scale_z(kOutOfPlaneScale[0], kOutOfPlaneScale[1]);
  const double tx = shift_xy(rng);
  const double ty = shift_xy(rng);
  const double tz = shift_z(rng);
  const double sx = scale_xy(rng);
  const double sy = scale_xy(rng);
  const double sz = scale_z(rng);
  return make(tx, ty, tz, sx, sy, sz);
}

bool AffineParams::is_identity() const {
  return tx == 0.0 && ty == 0.0 && tz == 0.0 && sx == 1.0 && sy == 1.0 && sz == 1.0;
}

Crop apply_affine(const Crop& crop, const AffineParams& p) {
  if (!(crop.image.dims() == crop.mask.dims())) throw ArgumentError("image and mask dims differ");
  if (p.is_identity()) return crop;
  const Dims d = crop.image.dims();
  const double cx = (static_cast<double>(d.nx) - 1.0) / 2.0;
  const double cy = (static_cast<double>(d.ny) - 1.0) / 2.0;
  const double cz = (static_cast<double>(d.nz) - 1.0) / 2.0;
  auto src = crop.image.voxels();
  auto msrc = crop.mask.voxels();
  const long nx = static_cast<long>(d.nx), ny = static_cast<long>(d.ny), nz = static_cast<long>(d.nz);
  auto at = [&](long x, long y, long z) -> double {
    if (x < 0 || y < 0 || z < 0 || x >= nx || y >= ny || z >= nz) return 0.0;
    return src[static_cast<std::size_t>(x + nx * (y + ny * z))];
  };

  std::vector<float> img(d.count());
  std::vector<std::uint8_t> lab(d.count());
#pragma omp parallel for schedule(static)
  for (long z = 0; z < nz; ++z) {
    const double qz = cz + (static_cast<double>(z) - cz - p.tz) / p.sz;
    const double fz = std::floor(qz);
    const double wz = qz - fz;
    const long z0 = static_cast<long>(fz);
    const long mz = std::lround(qz);
    for (long y = 0; y < ny; ++y) {
      const double qy = cy + (static_cast<double>(y) - cy - p.ty) / p.sy;
      const double fy = std::floor(qy);
      const double wy = qy - fy;
      const long y0 = static_cast<long>(fy);
      const long my = std::lround(qy);
      for (long x = 0; x < nx; ++x) {
        const double qx = cx + (static_cast<double>(x) - cx - p.tx) / p.sx;
        const double fx = std::floor(qx);
        const double wx = qx - fx;
        const long x0 = static_cast<long>(fx);
        const long mx = std::lround(qx);
        const double c00 = at(x0, y0, z0) * (1 - wx) + at(x0 + 1, y0, z0) * wx;
        const double c10 = at(x0, y0 + 1, z0) * (1 - wx) + at(x0 + 1, y0 + 1, z0) * wx;
        const double c01 = at(x0, y0, z0 + 1) * (1 - wx) + at(x0 + 1, y0, z0 + 1) * wx;
        const double c11 = at(x0, y0 + 1, z0 + 1) * (1 - wx) + at(x0 + 1, y0 + 1, z0 + 1) * wx;
        const double c0 = c00 * (1 - wy) + c10 * wy;
        const double c1 = c01 * (1 - wy) + c11 * wy;
        const std::size_t i = static_cast<std::size_t>(x + nx * (y + ny * z));
        img[i] = static_cast<float>(c0 * (1 - wz) + c1 * wz);
        const bool inside = mx >= 0 && my >= 0 && mz >= 0 && mx < nx && my < ny && mz < nz;
        lab[i] = inside ? msrc[static_cast<std::size_t>(mx + nx * (my + ny * mz))] : 0;
      }
    }
  }
  return {Volume3D(d, crop.image.spacing(), std::move(img)),
          Mask3D(d, crop.mask.spacing(), std::move(lab))};
}

AffineResult random_affine(const Crop& crop, Rng& rng) {
  const AffineParams p = AffineParams::sample(rng);
  return {apply_affine(crop, p), p};
}

std::vector<TrainingSample> build_training_set(const std::vector<SubjectVolumes>& subjects,
                                               const CropSpec& spec, int aug_count,
                                               std::uint64_t seed) {
  spec.validate();
  if (aug_count < 0) throw ArgumentError("aug_count must be non-negative");
  for (const auto& s : subjects) {
    if (!s.landmarks.valid_for(s.image.dims())) {
      throw ArgumentError("subject " + s.id + " has invalid landmarks");
    }
  }
  const std::size_t per_view = 1 + static_cast<std::size_t>(aug_count);
  const std::size_t per_subject = 4 * per_view;
  const std::size_t total = training_set_size(subjects.size(), aug_count);
  std::vector<TrainingSample> out(total);

#pragma omp parallel for schedule(dynamic)
  for (std::size_t k = 0; k < total; ++k) {
    const auto& subj = subjects[k / per_subject];
    const std::size_t r = k % per_subject;
    const Side side = r / (2 * per_view) == 0 ? Side::right : Side::left;
    const bool mirrored = (r / per_view) % 2 == 1;
    const int t = static_cast<int>(r % per_view);

    Crop c = mirror_to_canonical(
        crop_about_landmark(subj.image, subj.mask, subj.landmarks.of(side), spec, side), side);
    if (mirrored) c = {flip_x(c.image), flip_x(c.mask)};
    if (t > 0) {
      Rng rng(derive_seed(seed, {hash_string(subj.id), static_cast<std::uint64_t>(side),
                                 mirrored ? 1u : 0u, static_cast<std::uint64_t>(t)}));
      c = random_affine(c, rng).crop;
    }
    TrainingSample& s = out[k];
    s.image = normalize_zscore(c.image);
    s.mask = std::move(c.mask);
    s.subject_id = subj.id;
    s.side = side;
    s.mirrored = mirrored;
    s.transform_index = t;
  }
  return out;
}

}  // namespace ilio
