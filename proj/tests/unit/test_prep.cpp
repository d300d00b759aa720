#include <doctest.h>

#include <cmath>

#include "ilioseg/phantom.hpp"
#include "ilioseg/prep.hpp"
#include "oracles.hpp"

using namespace ilio;

namespace {

Volume3D random_volume(oracle::Rng& rng, Dims d) {
  std::vector<float> v(d.count());
  for (auto& x : v) x = static_cast<float>(oracle::normal(rng));
  return Volume3D(d, Spacing{1.5, 1.5, 3.0}, std::move(v));
}

Mask3D random_mask(oracle::Rng& rng, Dims d) {
  std::vector<std::uint8_t> v(d.count());
  for (auto& x : v) x = static_cast<std::uint8_t>(rng() % 3);
  return Mask3D(d, Spacing{1.5, 1.5, 3.0}, std::move(v));
}

void check_zscore(std::span<const float> v) {
  double s = 0, ss = 0;
  for (float x : v) s += x;
  const double m = s / v.size();
  for (float x : v) ss += (x - m) * (x - m);
  CHECK(std::fabs(m) < 1e-5);
  CHECK(std::fabs(std::sqrt(ss / v.size()) - 1.0) < 1e-5);
}

std::vector<SubjectVolumes> phantom_subjects(std::size_t n, std::uint64_t seed, bool symmetric = false) {
  const auto g = PhantomGeometry::desk();
  std::vector<SubjectVolumes> out;
  for (const auto& r : sample_cohort(CohortSpec::calibrated(n, seed))) {
    auto s = synthesize_subject(r, g, seed + out.size(), symmetric);
    out.push_back({r.id, std::move(s.image), std::move(s.mask), s.landmarks});
  }
  return out;
}

}  // namespace

TEST_CASE("crop spec") {
  CHECK(CropSpec::paper().dims == std::array<std::size_t, 3>{96, 96, 192});
  CHECK(CropSpec::paper().z_anchor() == 24);
  CHECK_NOTHROW(CropSpec::desk().validate());
  CHECK_THROWS_AS((CropSpec{{24, 32, 32}}).validate(), ArgumentError);
  CHECK_THROWS_AS((CropSpec{{0, 32, 32}}).validate(), ArgumentError);
}

TEST_CASE("crop dims, anchor and zero fill") {
  oracle::Rng rng(1);
  const Dims d{40, 36, 50};
  const auto vol = random_volume(rng, d);
  const auto mask = random_mask(rng, d);
  const CropSpec paper = CropSpec::paper();
  const auto big = crop_about_landmark(vol, mask, {20, 18, 25}, paper, Side::right);
  CHECK(big.image.dims() == Dims{96, 96, 192});
  CHECK(big.mask.dims() == Dims{96, 96, 192});

  const CropSpec spec{{16, 16, 32}};
  const auto corner = crop_about_landmark(vol, mask, {0, 0, 0}, spec, Side::right);
  CHECK(corner.image(0, 0, 0) == 0.0f);
  CHECK(corner.image(7, 7, 3) == 0.0f);
  CHECK(corner.image(8, 8, 4) == vol(0, 0, 0));
  for (std::size_t z = 0; z < 32; ++z)
    for (std::size_t y = 0; y < 16; ++y)
      for (std::size_t x = 0; x < 16; ++x)
        if (x < 8 || y < 8 || z < 4) CHECK(corner.mask(x, y, z) == 0);
}

TEST_CASE("interior crops copy their source voxels") {
  oracle::Rng rng(2);
  const Dims d{48, 44, 80};
  const auto vol = random_volume(rng, d);
  const auto mask = random_mask(rng, d);
  const CropSpec spec{{16, 16, 32}};
  for (int trial = 0; trial < 30; ++trial) {
    const Side side = trial % 2 ? Side::left : Side::right;
    const Voxel lm{static_cast<long>(oracle::pick(rng, 9, 39)), static_cast<long>(oracle::pick(rng, 8, 36)),
                   static_cast<long>(oracle::pick(rng, 4, 52))};
    const auto c = crop_about_landmark(vol, mask, lm, spec, side);
    // independent index map: landmark lands on (8 or 7, 8, 4)
    const long ax = side == Side::right ? 8 : 7;
    bool ok = true;
    for (long z = 0; z < 32; ++z)
      for (long y = 0; y < 16; ++y)
        for (long x = 0; x < 16; ++x) {
          const long sx = lm.x - ax + x, sy = lm.y - 8 + y, sz = lm.z - 4 + z;
          ok = ok && c.image(x, y, z) == vol(sx, sy, sz);
          ok = ok && c.mask(x, y, z) == (mask(sx, sy, sz) == label_of(side) ? 1 : 0);
        }
    CHECK(ok);
    CHECK(crop_image(vol, lm, spec, side) == c.image);
  }
}

TEST_CASE("z-score normalisation") {
  oracle::Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Dims d{oracle::pick(rng, 2, 12), oracle::pick(rng, 2, 12), oracle::pick(rng, 2, 12)};
    const auto v = random_volume(rng, d);
    const auto n = normalize_zscore(v);
    check_zscore(n.voxels());
    const double a = oracle::uniform(rng, 0.1, 10), b = oracle::uniform(rng, -5, 5);
    std::vector<float> t(v.voxels().begin(), v.voxels().end());
    for (auto& x : t) x = static_cast<float>(a * x + b);
    const auto nt = normalize_zscore(Volume3D(d, v.spacing(), t));
    double err = 0;
    for (std::size_t i = 0; i < t.size(); ++i) err = std::max(err, double(std::fabs(nt.voxels()[i] - n.voxels()[i])));
    CHECK(err < 1e-4);
  }
  const auto c = normalize_zscore(Volume3D(Dims{4, 4, 4}, Spacing{}, 3.5f));
  CHECK(std::all_of(c.voxels().begin(), c.voxels().end(), [](float x) { return x == 0.0f; }));
}

TEST_CASE("mirroring") {
  oracle::Rng rng(4);
  const Dims d{16, 8, 8};
  Crop c{random_volume(rng, d), Mask3D(d, Spacing{}, 0)};
  CHECK(mirror_to_canonical(c, Side::right).image == c.image);
  const auto once = mirror_to_canonical(c, Side::left);
  CHECK(once.image(0, 3, 2) == c.image(15, 3, 2));
  CHECK(mirror_to_canonical(once, Side::left).image == c.image);
}

TEST_CASE("affine parameter ranges") {
  CHECK_THROWS_AS(AffineParams::make(6.5, 0, 0, 1, 1, 1), ArgumentError);
  CHECK_THROWS_AS(AffineParams::make(0, 0, -25, 1, 1, 1), ArgumentError);
  CHECK_THROWS_AS(AffineParams::make(0, 0, 0, 0.7, 1, 1), ArgumentError);
  CHECK_THROWS_AS(AffineParams::make(0, 0, 0, 1, 1, 1.6), ArgumentError);
  CHECK_NOTHROW(AffineParams::make(-6, 6, 24, 0.75, 1.25, 0.5));
  CHECK(AffineParams::identity().is_identity());

  Rng rng(5);
  double lo_tz = 1e9, hi_tz = -1e9, lo_sz = 1e9, hi_sz = -1e9;
  bool ok = true;
  for (int i = 0; i < 10000; ++i) {
    const auto p = AffineParams::sample(rng);
    ok = ok && std::fabs(p.tx) <= 6 && std::fabs(p.ty) <= 6 && std::fabs(p.tz) <= 24;
    ok = ok && p.sx >= 0.75 && p.sx <= 1.25 && p.sy >= 0.75 && p.sy <= 1.25 && p.sz >= 0.5 && p.sz <= 1.5;
    lo_tz = std::min(lo_tz, p.tz), hi_tz = std::max(hi_tz, p.tz);
    lo_sz = std::min(lo_sz, p.sz), hi_sz = std::max(hi_sz, p.sz);
  }
  CHECK(ok);
  CHECK(lo_tz < -23.5);
  CHECK(hi_tz > 23.5);
  CHECK(lo_sz < 0.52);
  CHECK(hi_sz > 1.48);
}

TEST_CASE("affine resampling") {
  oracle::Rng orng(6);
  const Dims d{16, 16, 32};
  Crop c{random_volume(orng, d), Mask3D(d, Spacing{}, 0)};
  {
    std::vector<std::uint8_t> m(d.count());
    for (auto& x : m) x = orng() % 2;
    c.mask = Mask3D(d, Spacing{}, std::move(m));
  }
  const auto id = apply_affine(c, AffineParams::identity());
  CHECK(id.image == c.image);
  CHECK(id.mask == c.mask);

  // integer translation is an exact shift with zero fill
  const auto sh = apply_affine(c, AffineParams::make(2, -1, 3, 1, 1, 1));
  bool ok = true;
  for (long z = 0; z < 32; ++z)
    for (long y = 0; y < 16; ++y)
      for (long x = 0; x < 16; ++x) {
        const long sx = x - 2, sy = y + 1, sz = z - 3;
        const bool in = sx >= 0 && sx < 16 && sy >= 0 && sy < 16 && sz >= 0 && sz < 32;
        ok = ok && sh.image(x, y, z) == (in ? c.image(sx, sy, sz) : 0.0f);
        ok = ok && sh.mask(x, y, z) == (in ? c.mask(sx, sy, sz) : 0);
      }
  CHECK(ok);

  // half-voxel shift of a linear ramp is exact under trilinear interpolation
  std::vector<float> ramp(d.count());
  for (std::size_t z = 0; z < 32; ++z)
    for (std::size_t y = 0; y < 16; ++y)
      for (std::size_t x = 0; x < 16; ++x) ramp[x + 16 * (y + 16 * z)] = static_cast<float>(x + 2 * y + 0.5 * z);
  Crop rc{Volume3D(d, Spacing{}, ramp), Mask3D(d, Spacing{}, 0)};
  const auto half = apply_affine(rc, AffineParams::make(0.5, 0, 0, 1, 1, 1));
  CHECK(half.image(5, 4, 10) == doctest::Approx(4.5 + 8 + 5));

  Rng rng(7), rng2(7);
  for (int i = 0; i < 20; ++i) {
    const auto a = random_affine(c, rng);
    const auto b = random_affine(c, rng2);
    CHECK(a.crop.image == b.crop.image);
    CHECK(std::all_of(a.crop.mask.voxels().begin(), a.crop.mask.voxels().end(), [](auto v) { return v <= 1; }));
  }
}

TEST_CASE("training set sizes") {
  CHECK(training_set_size(1, 7) == 32);
  CHECK(training_set_size(90, 7) == 2880);
  CHECK(training_set_size(0, 7) == 0);
  CHECK(build_training_set({}, CropSpec::desk(), 7, 1).empty());
  const auto subjects = phantom_subjects(1, 21);
  const auto set = build_training_set(subjects, CropSpec::desk(), 7, 1);
  CHECK(set.size() == 32);
  for (int aug : {0, 2}) CHECK(build_training_set(subjects, CropSpec::desk(), aug, 1).size() == training_set_size(1, aug));
}

TEST_CASE("training set contents") {
  const auto subjects = phantom_subjects(2, 22);
  const auto set = build_training_set(subjects, CropSpec::desk(), 2, 5);
  REQUIRE(set.size() == 24);
  std::size_t i = 0;
  for (const auto& s : subjects)
    for (Side side : {Side::right, Side::left})
      for (bool mirrored : {false, true})
        for (int t = 0; t <= 2; ++t, ++i) {
          const auto& x = set[i];
          CHECK(x.subject_id == s.id);
          CHECK(x.side == side);
          CHECK(x.mirrored == mirrored);
          CHECK(x.transform_index == t);
          CHECK(x.image.dims() == Dims{32, 32, 64});
          CHECK(std::all_of(x.mask.voxels().begin(), x.mask.voxels().end(), [](auto v) { return v <= 1; }));
          check_zscore(x.image.voxels());
        }
  // untransformed canonical sample equals the hand-built pipeline
  const auto& s0 = subjects[0];
  const auto c = mirror_to_canonical(
      crop_about_landmark(s0.image, s0.mask, s0.landmarks.left, CropSpec::desk(), Side::left), Side::left);
  CHECK(set[6].image == normalize_zscore(c.image));
  CHECK(set[6].mask == c.mask);
  CHECK(set[9].mask == flip_x(c.mask));

  const auto again = build_training_set(subjects, CropSpec::desk(), 2, 5);
  const auto other = build_training_set(subjects, CropSpec::desk(), 2, 6);
  bool same = true, differs = false;
  for (std::size_t k = 0; k < set.size(); ++k) {
    same = same && set[k].image == again[k].image && set[k].mask == again[k].mask;
    if (set[k].transform_index > 0) differs = differs || !(set[k].image == other[k].image);
  }
  CHECK(same);
  CHECK(differs);

  // a subject's samples do not depend on which other subjects are present
  const auto alone = build_training_set({subjects[1]}, CropSpec::desk(), 2, 5);
  for (std::size_t k = 0; k < alone.size(); ++k) CHECK(alone[k].image == set[12 + k].image);
}

TEST_CASE("canonical crops of a symmetric phantom agree") {
  const auto subjects = phantom_subjects(3, 23, true);
  for (const auto& s : subjects) {
    const auto r = mirror_to_canonical(
        crop_about_landmark(s.image, s.mask, s.landmarks.right, CropSpec::desk(), Side::right), Side::right);
    const auto l = mirror_to_canonical(
        crop_about_landmark(s.image, s.mask, s.landmarks.left, CropSpec::desk(), Side::left), Side::left);
    CHECK(r.mask == l.mask);
    double err = 0;
    for (std::size_t i = 0; i < r.image.size(); ++i)
      err = std::max(err, double(std::fabs(r.image.voxels()[i] - l.image.voxels()[i])));
    CHECK(err < 1e-6);
  }
}

TEST_CASE("landmarks outside the volume are rejected") {
  auto subjects = phantom_subjects(1, 24);
  subjects[0].landmarks.right.x = -5;
  CHECK_THROWS(build_training_set(subjects, CropSpec::desk(), 1, 1));
}
