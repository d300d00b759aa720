#include <algorithm>
#include <cmath>
#include <numbers>

#include "ilioseg/phantom.hpp"

namespace ilio {

namespace {

// Lagrange cubic through values at t = 0, 1/3, 2/3, 1.
double cubic_through(const std::array<double, 4>& v, double t) {
  constexpr double n[4] = {0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0};
  double s = 0.0;
  for (int i = 0; i < 4; ++i) {
    double l = 1.0;
    for (int j = 0; j < 4; ++j) {
      if (j != i) l *= (t - n[j]) / (n[i] - n[j]);
    }
    s += v[i] * l;
  }
  return s;
}

struct Centerline {
  std::array<double, 4> x, y;
  double z0, z1;

  explicit Centerline(const TubeShape& t) {
    for (int i = 0; i < 4; ++i) {
      x[i] = t.control[i].x;
      y[i] = t.control[i].y;
    }
    z0 = t.control[0].z;
    z1 = t.control[3].z;
  }
};

double radius_at(const TubeShape& t, double scale, double u) {
  return scale * (t.taper_inferior + (t.taper_superior - t.taper_inferior) * u);
}

// Largest excursion of the tube outside [0, extent] in x or y, in mm (<= 0 when inside).
double overflow_mm(const TubeShape& tube, const PhantomGeometry& g, double scale) {
  const Centerline c(tube);
  const double ex = (g.dims.nx - 1) * g.spacing.dx, ey = (g.dims.ny - 1) * g.spacing.dy;
  double worst = -1e300;
  for (int k = 0; k <= 200; ++k) {
    const double u = k / 200.0;
    const double r = radius_at(tube, scale, u);
    const double cx = cubic_through(c.x, u), cy = cubic_through(c.y, u);
    worst = std::max({worst, r - cx, cx + r - ex, r - cy, cy + r - ey});
  }
  return worst;
}

TubeShape mirrored(const TubeShape& t, const PhantomGeometry& g) {
  TubeShape m = t;
  const double ex = (g.dims.nx - 1) * g.spacing.dx;
  for (auto& p : m.control) p.x = ex - p.x;
  return m;
}

TubeShape jittered(const TubeShape& t, Rng& rng) {
  TubeShape j = t;
  std::normal_distribution<double> d(0.0, t.jitter_mm);
  for (auto& p : j.control) {
    p.x += d(rng);
    p.y += d(rng);
  }
  return j;
}

// Radius scale whose rasterised volume matches `target_ml`.
double fit_scale(const TubeShape& tube, const PhantomGeometry& g, double target_ml) {
  const double voxel_ml = g.spacing.voxel_mm3() / 1000.0;
  auto raster_ml = [&](double s) { return rasterize_tube(tube, g, s).voxels.size() * voxel_ml; };
  const double s0 = std::sqrt(target_ml / analytic_tube_ml(tube, 1.0));
  double lo = 0.5 * s0, hi = 1.5 * s0;
  while (raster_ml(lo) > target_ml && lo > 1e-6) lo *= 0.5;
  while (raster_ml(hi) < target_ml) {
    hi *= 1.5;
    if (overflow_mm(tube, g, hi) > 0.0) break;
  }
  double best = s0, best_err = std::abs(raster_ml(s0) - target_ml);
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double v = raster_ml(mid);
    const double err = std::abs(v - target_ml);
    if (err < best_err) {
      best = mid;
      best_err = err;
    }
    if (err <= 0.001 * target_ml) break;
    (v < target_ml ? lo : hi) = mid;
  }
  return best;
}

}  // namespace

double analytic_tube_ml(const TubeShape& tube, double scale) {
  const double a = tube.taper_inferior, b = tube.taper_superior;
  const double len = tube.control[3].z - tube.control[0].z;
  return std::numbers::pi * scale * scale * len * (a * a + a * b + b * b) / 3.0 / 1000.0;
}

TubeRaster rasterize_tube(const TubeShape& tube, const PhantomGeometry& g, double scale) {
  const Centerline c(tube);
  TubeRaster out;
  bool first = true;
  const auto& sp = g.spacing;
  for (std::size_t k = 0; k < g.dims.nz; ++k) {
    const double z = k * sp.dz;
    if (z < c.z0 || z > c.z1) continue;
    const double u = (z - c.z0) / (c.z1 - c.z0);
    const double cx = cubic_through(c.x, u), cy = cubic_through(c.y, u);
    const double r = radius_at(tube, scale, u);
    if (first) {
      out.inferior_end = {std::lround(cx / sp.dx), std::lround(cy / sp.dy), static_cast<long>(k)};
      first = false;
    }
    const long x0 = std::max(0L, static_cast<long>(std::floor((cx - r) / sp.dx)));
    const long x1 = std::min(static_cast<long>(g.dims.nx) - 1, static_cast<long>(std::ceil((cx + r) / sp.dx)));
    const long y0 = std::max(0L, static_cast<long>(std::floor((cy - r) / sp.dy)));
    const long y1 = std::min(static_cast<long>(g.dims.ny) - 1, static_cast<long>(std::ceil((cy + r) / sp.dy)));
    for (long y = y0; y <= y1; ++y) {
      const double dy = y * sp.dy - cy;
      for (long x = x0; x <= x1; ++x) {
        const double dx = x * sp.dx - cx;
        if (dx * dx + dy * dy <= r * r) out.voxels.push_back({x, y, static_cast<long>(k)});
      }
    }
  }
  if (first) throw GeometryError("tube does not intersect any slice of the grid");
  return out;
}

PhantomGeometry PhantomGeometry::desk() {
  PhantomGeometry g;
  g.dims = {96, 48, 72};
  g.spacing = {4.0, 4.0, 5.0};
  const double z0 = 9.5 * 5.0, z1 = 57.5 * 5.0;
  const double dz = (z1 - z0) / 3.0;
  g.right_tube.control = {{{112.0, 96.0, z0}, {118.0, 90.0, z0 + dz}, {122.0, 92.0, z0 + 2 * dz}, {116.0, 100.0, z1}}};
  g.body_center = {(g.dims.nx - 1) * 4.0 / 2.0, (g.dims.ny - 1) * 4.0 / 2.0, (g.dims.nz - 1) * 5.0 / 2.0};
  g.body_radii = {180.0, 84.0, 400.0};
  return g;
}

PhantomGeometry PhantomGeometry::paper() {
  PhantomGeometry g;
  g.dims = {192, 96, 144};
  g.spacing = {2.0, 2.0, 2.5};
  const double z0 = 19.5 * 2.5, z1 = 115.5 * 2.5;
  const double dz = (z1 - z0) / 3.0;
  g.right_tube.control = {{{112.0, 96.0, z0}, {118.0, 90.0, z0 + dz}, {122.0, 92.0, z0 + 2 * dz}, {116.0, 100.0, z1}}};
  g.body_center = {(g.dims.nx - 1) * 2.0 / 2.0, (g.dims.ny - 1) * 2.0 / 2.0, (g.dims.nz - 1) * 2.5 / 2.0};
  g.body_radii = {180.0, 84.0, 400.0};
  return g;
}

void PhantomGeometry::validate() const {
  if (!dims.valid() || !spacing.valid()) throw GeometryError("phantom grid is invalid");
  if (dims.nx % 2 != 0) throw GeometryError("phantom grid needs an even x extent");
  const auto& c = right_tube.control;
  if (!(c[0].z < c[3].z) || c[0].z < 0.0 || c[3].z > (dims.nz - 1) * spacing.dz) {
    throw GeometryError("tube z range lies outside the grid");
  }
  if (!(right_tube.taper_inferior > 0.0 && right_tube.taper_superior > 0.0)) {
    throw GeometryError("tube radii must be positive");
  }
  const double mid = (dims.nx - 1) * spacing.dx / 2.0;
  for (const auto& p : c) {
    if (p.x >= mid) throw GeometryError("right tube must lie in the image-left half (x below centre)");
  }
  if (overflow_mm(right_tube, *this, 1.0) > 0.0) throw GeometryError("tube centerline leaves the grid");
}

SyntheticSubject synthesize_subject(const SubjectRecord& subject, const PhantomGeometry& g,
                                    std::uint64_t seed, bool symmetric) {
  g.validate();
  if (!(subject.true_right_ml > 0.0) || !(subject.true_left_ml > 0.0)) {
    throw GeometryError("subject " + subject.id + " has non-positive planted volume");
  }
  Rng rng(splitmix64(seed));
  const double mid = (g.dims.nx - 1) * g.spacing.dx / 2.0;

  auto place = [&](const TubeShape& tube, double ml, Side side) {
    const double s = fit_scale(tube, g, ml);
    if (overflow_mm(tube, g, s) > 0.0) {
      throw GeometryError("subject " + subject.id + ": " + std::to_string(ml) + " ml " + side_name(side) +
                          " tube does not fit inside the grid");
    }
    for (int k = 0; k <= 200; ++k) {
      const double u = k / 200.0;
      const double cx = cubic_through(Centerline(tube).x, u);
      const double r = radius_at(tube, s, u);
      if (side == Side::right ? cx + r >= mid : cx - r <= mid) {
        throw GeometryError("subject " + subject.id + ": " + side_name(side) + " tube crosses the midline");
      }
    }
    return rasterize_tube(tube, g, s);
  };

  const TubeShape right_shape = jittered(g.right_tube, rng);
  const TubeShape left_shape = symmetric ? mirrored(right_shape, g) : mirrored(jittered(g.right_tube, rng), g);
  std::uniform_real_distribution<double> contrast(g.tube_intensity - g.tube_intensity_spread,
                                                  g.tube_intensity + g.tube_intensity_spread);
  const double right_level = contrast(rng);
  const double left_level = symmetric ? right_level : contrast(rng);

  const TubeRaster right = place(right_shape, subject.true_right_ml, Side::right);
  const TubeRaster left = symmetric ? TubeRaster{} : place(left_shape, subject.true_left_ml, Side::left);

  const Dims& d = g.dims;
  std::vector<float> img(d.count());
  std::vector<std::uint8_t> lab(d.count(), kBackground);
  auto idx = [&](const Voxel& v) { return v.x + d.nx * (v.y + d.ny * v.z); };

  const auto& bc = g.body_center;
  const auto& br = g.body_radii;
  for (std::size_t z = 0; z < d.nz; ++z) {
    for (std::size_t y = 0; y < d.ny; ++y) {
      for (std::size_t x = 0; x < d.nx; ++x) {
        const double ux = (x * g.spacing.dx - bc.x) / br.x;
        const double uy = (y * g.spacing.dy - bc.y) / br.y;
        const double uz = (z * g.spacing.dz - bc.z) / br.z;
        img[x + d.nx * (y + d.ny * z)] = ux * ux + uy * uy + uz * uz <= 1.0 ? static_cast<float>(g.body_intensity) : 0.0f;
      }
    }
  }
  for (const auto& v : right.voxels) {
    img[idx(v)] = static_cast<float>(right_level);
    lab[idx(v)] = kRightLabel;
  }
  for (const auto& v : left.voxels) {
    img[idx(v)] = static_cast<float>(left_level);
    lab[idx(v)] = kLeftLabel;
  }
  std::normal_distribution<double> noise(0.0, g.noise_sd);
  for (auto& v : img) v += static_cast<float>(noise(rng));

  LandmarkPair lm;
  lm.right = right.inferior_end;
  if (symmetric) {
    for (std::size_t z = 0; z < d.nz; ++z) {
      for (std::size_t y = 0; y < d.ny; ++y) {
        const std::size_t row = d.nx * (y + d.ny * z);
        for (std::size_t x = d.nx / 2; x < d.nx; ++x) {
          img[row + x] = img[row + d.nx - 1 - x];
          lab[row + x] = lab[row + d.nx - 1 - x] == kRightLabel ? kLeftLabel : kBackground;
        }
      }
    }
    lm.left = {static_cast<long>(d.nx) - 1 - lm.right.x, lm.right.y, lm.right.z};
  } else {
    lm.left = left.inferior_end;
  }

  SyntheticSubject out{Volume3D(d, g.spacing, std::move(img)), Mask3D(d, g.spacing, std::move(lab)), lm};
  if (!out.landmarks.valid_for(d)) throw GeometryError("subject " + subject.id + ": landmarks fall outside the grid");
  return out;
}

}  // namespace ilio
