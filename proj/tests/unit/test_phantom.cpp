#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "ilioseg/phantom.hpp"
#include "oracles.hpp"

using namespace ilio;
namespace fs = std::filesystem;

namespace {


std::vector<double> column(const std::vector<SubjectRecord>& c, Sex s, auto f) {
  std::vector<double> out;
  for (const auto& r : c)
    if (r.sex == s) out.push_back(f(r));
  return out;
}

double total(const SubjectRecord& r) { return r.true_left_ml + r.true_right_ml; }

}  // namespace

TEST_CASE("cohort size and validation") {
  CHECK_THROWS_AS(sample_cohort(CohortSpec::calibrated(0, 1)), ArgumentError);
  auto bad = CohortSpec::calibrated(10, 1);
  bad.male.noise_sd = -1;
  CHECK_THROWS_AS(sample_cohort(bad), ArgumentError);
  const auto c = sample_cohort(CohortSpec::calibrated(12, 1));
  REQUIRE(c.size() == 12);
  CHECK(c.front().id == "S0001");
  CHECK(c.back().id == "S0012");
}

TEST_CASE("record invariants hold for every subject") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    for (const auto& r : sample_cohort(CohortSpec::calibrated(2000, seed))) {
      const double h = r.height_cm / 100.0;
      CHECK(std::fabs(r.weight_kg / (h * h) - r.bmi) <= 1e-6 * r.bmi);
      CHECK(r.age >= kMinAge);
      CHECK(r.age <= kMaxAge);
      CHECK(r.true_left_ml > 0);
      CHECK(r.true_right_ml > 0);
    }
  }
}

TEST_CASE("same seed, same cohort; different seed, different cohort") {
  const auto a = sample_cohort(CohortSpec::calibrated(300, 9));
  CHECK(a == sample_cohort(CohortSpec::calibrated(300, 9)));
  CHECK(a != sample_cohort(CohortSpec::calibrated(300, 10)));
}

TEST_CASE("n=5000 covariate distribution") {
  const auto c = sample_cohort(CohortSpec::calibrated(5000, 2024));
  const auto fh = column(c, Sex::female, [](auto& r) { return r.height_cm; });
  const auto mh = column(c, Sex::male, [](auto& r) { return r.height_cm; });
  const double female_fraction = static_cast<double>(fh.size()) / c.size();
  CHECK(std::fabs(female_fraction - 0.499) < 0.015);
  CHECK(std::fabs(oracle::mean(mh) - 176.2) < 0.3);
  CHECK(std::fabs(oracle::mean(fh) - 162.5) < 0.3);
  CHECK(std::fabs(std::sqrt(oracle::sample_var(mh)) - 6.8) < 0.3);

  std::array<int, 4> per_group{};
  std::size_t right = 0;
  for (const auto& r : c) {
    for (std::size_t g = 0; g < kAgeGroups.size(); ++g)
      if (r.age >= kAgeGroups[g].first && r.age <= kAgeGroups[g].second) ++per_group[g];
    right += r.handedness == Handedness::right;
  }
  for (int n : per_group) CHECK(std::fabs(n / 5000.0 - 0.25) < 0.025);
  CHECK(std::fabs(right / 5000.0 - 0.9) < 0.015);
}

TEST_CASE("n=5000 planted volume structure") {
  const auto c = sample_cohort(CohortSpec::calibrated(5000, 77));
  const auto mt = column(c, Sex::male, total);
  const auto ft = column(c, Sex::female, total);
  CHECK(std::fabs(oracle::mean(mt) - 814.5) < 10);
  CHECK(std::fabs(oracle::mean(ft) - 542.3) < 10);
  CHECK(std::fabs(oracle::pearson_r(mt, column(c, Sex::male, [](auto& r) { return r.height_cm; })) - 0.52) < 0.05);
  CHECK(std::fabs(oracle::pearson_r(ft, column(c, Sex::female, [](auto& r) { return r.height_cm; })) - 0.56) < 0.05);

  std::vector<double> diff, hand;
  for (const auto& r : c) {
    diff.push_back(r.true_right_ml - r.true_left_ml);
    hand.push_back(r.handedness == Handedness::right ? 1.0 : 0.0);
  }
  CHECK(std::fabs(oracle::mean(diff) - 6.9) < 1.0);
  CHECK(std::fabs(oracle::pearson_r(hand, diff)) < 0.05);
}

TEST_CASE("without noise, total volume increases with height") {
  auto spec = CohortSpec::calibrated(1, 3);
  for (SexModel* m : {&spec.female, &spec.male}) {
    m->noise_sd = 0;
    m->asym_sd = 0;
  }
  for (Sex s : {Sex::female, Sex::male}) {
    SubjectRecord r;
    r.sex = s;
    r.age = 70;
    r.bmi = 26;
    double last = -1e9;
    for (double h = 150; h <= 200; h += 2.5) {
      r.height_cm = h;
      r.weight_kg = r.bmi * (h / 100) * (h / 100);
      Rng rng(5);
      const auto [l, rt] = plant_volumes(r, spec, rng);
      CHECK(l + rt > last);
      CHECK(rt - l == doctest::Approx(spec.asym_mean));
      last = l + rt;
    }
  }
}

TEST_CASE("standard error of the sex means shrinks as 1/sqrt(n)") {
  auto se = [](std::size_t n) {
    std::vector<double> means;
    for (std::uint64_t rep = 0; rep < 300; ++rep) {
      const auto c = sample_cohort(CohortSpec::calibrated(n, 1000 + rep * 7919));
      means.push_back(oracle::mean(column(c, Sex::male, total)));
    }
    return std::sqrt(oracle::sample_var(means));
  };
  const double s1 = se(100), s4 = se(400);
  CHECK(s1 / s4 == doctest::Approx(2.0).epsilon(0.2));
}

TEST_CASE("cohort CSV round trip") {
  const auto dir = fs::temp_directory_path() / "ilioseg_unit";
  fs::create_directories(dir);
  const auto c = sample_cohort(CohortSpec::calibrated(40, 4));
  write_cohort_csv(c, dir / "cohort.csv");
  const auto back = read_cohort_csv(dir / "cohort.csv");
  REQUIRE(back.size() == c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    CHECK(back[i].id == c[i].id);
    CHECK(back[i].sex == c[i].sex);
    CHECK(back[i].age == c[i].age);
    CHECK(back[i].handedness == c[i].handedness);
    CHECK(back[i].bmi == doctest::Approx(c[i].bmi).epsilon(1e-9));
    CHECK(back[i].true_left_ml == doctest::Approx(c[i].true_left_ml).epsilon(1e-9));
  }
  std::ofstream(dir / "bad.csv") << "id,sex,age\nS0001,female,50\n";
  CHECK_THROWS_AS(read_cohort_csv(dir / "bad.csv"), FormatError);
}

TEST_CASE("synthesised subjects") {
  const auto g = PhantomGeometry::desk();
  const auto c = sample_cohort(CohortSpec::calibrated(6, 11));
  for (std::size_t i = 0; i < c.size(); ++i) {
    const auto s = synthesize_subject(c[i], g, 100 + i);
    CHECK(mask_volume_ml(s.mask, kRightLabel) == doctest::Approx(c[i].true_right_ml).epsilon(0.02));
    CHECK(mask_volume_ml(s.mask, kLeftLabel) == doctest::Approx(c[i].true_left_ml).epsilon(0.02));
    CHECK(std::all_of(s.mask.voxels().begin(), s.mask.voxels().end(), [](auto v) { return v <= 2; }));
    CHECK(s.landmarks.valid_for(g.dims));
    CHECK(s.landmarks.right.x < static_cast<long>(g.dims.nx / 2));
    CHECK(s.landmarks.left.x >= static_cast<long>(g.dims.nx / 2));
    // landmark sits on the lowest slice the tube occupies
    long lowest = -1;
    for (std::size_t z = 0; z < g.dims.nz && lowest < 0; ++z)
      for (std::size_t y = 0; y < g.dims.ny && lowest < 0; ++y)
        for (std::size_t x = 0; x < g.dims.nx; ++x)
          if (s.mask(x, y, z) == kRightLabel) {
            lowest = static_cast<long>(z);
            break;
          }
    CHECK(s.landmarks.right.z == lowest);

    double in = 0, out = 0;
    std::size_t ni = 0, no = 0;
    for (std::size_t v = 0; v < s.mask.size(); ++v) {
      if (s.mask.voxels()[v]) in += s.image.voxels()[v], ++ni;
      else out += s.image.voxels()[v], ++no;
    }
    CHECK(in / ni - out / no > 0.6);
  }
  const auto a = synthesize_subject(c[0], g, 5), b = synthesize_subject(c[0], g, 5);
  CHECK(a.image == b.image);
  CHECK(a.mask == b.mask);
  CHECK(a.landmarks == b.landmarks);
  CHECK(!(a.image == synthesize_subject(c[0], g, 6).image));
}

TEST_CASE("symmetric subjects mirror exactly") {
  const auto g = PhantomGeometry::desk();
  const auto r = sample_cohort(CohortSpec::calibrated(1, 12)).front();
  const auto s = synthesize_subject(r, g, 3, true);
  CHECK(s.image == flip_x(s.image));
  CHECK(mask_volume_ml(s.mask, kLeftLabel) == mask_volume_ml(s.mask, kRightLabel));
}

TEST_CASE("geometry errors") {
  auto g = PhantomGeometry::desk();
  auto r = sample_cohort(CohortSpec::calibrated(1, 13)).front();
  r.true_right_ml = 50000;
  CHECK_THROWS_AS(synthesize_subject(r, g, 1), GeometryError);
  r.true_right_ml = -1;
  CHECK_THROWS_AS(synthesize_subject(r, g, 1), GeometryError);
  g.right_tube.control[3].z = 1e4;
  CHECK_THROWS_AS(g.validate(), GeometryError);
  g = PhantomGeometry::desk();
  g.right_tube.control[0].x = 1e4;
  CHECK_THROWS_AS(g.validate(), GeometryError);
  CHECK_NOTHROW(PhantomGeometry::desk().validate());
  CHECK_NOTHROW(PhantomGeometry::paper().validate());
}

TEST_CASE("rasterised tube volume tracks the analytic volume") {
  const auto g = PhantomGeometry::desk();
  for (double scale : {4.0, 6.0, 8.0}) {
    const auto t = rasterize_tube(g.right_tube, g, scale);
    const double ml = t.voxels.size() * g.spacing.voxel_mm3() / 1000.0;
    CHECK(ml == doctest::Approx(analytic_tube_ml(g.right_tube, scale)).epsilon(0.05));
  }
}
