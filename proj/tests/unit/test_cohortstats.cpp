#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ilioseg/cohortstats.hpp"
#include "oracles.hpp"

using namespace ilio;

namespace {

std::vector<CohortRow> true_rows(std::size_t n, std::uint64_t seed) {
  std::vector<CohortRow> rows;
  for (const auto& r : sample_cohort(CohortSpec::calibrated(n, seed)))
    rows.push_back(CohortRow::make(r, r.true_left_ml, r.true_right_ml));
  return rows;
}

const NamedTest* find(const std::vector<NamedTest>& tests, const std::string& name) {
  for (const auto& t : tests)
    if (t.name == name) return &t;
  return nullptr;
}

}  // namespace

TEST_CASE("t tail probability") {
  CHECK(t_two_sided_p(0, 5) == doctest::Approx(1.0));
  CHECK(t_two_sided_p(1.0, 1) == doctest::Approx(0.5));
  CHECK(t_two_sided_p(1.959964, 1e7) == doctest::Approx(0.05).epsilon(1e-4));
  oracle::Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const double df = oracle::uniform(rng, 1.5, 60), t = oracle::uniform(rng, -6, 6);
    CHECK(t_two_sided_p(t, df) == doctest::Approx(oracle::t_tail_simpson(t, df)).epsilon(1e-6).scale(1));
    CHECK(t_two_sided_p(t, df) == t_two_sided_p(-t, df));
  }
  CHECK(format_p(1e-20) == "<1e-15");
  CHECK(format_p(0.0123) == "0.0123");
}

TEST_CASE("pearson examples") {
  const auto r = pearson_test({1, 2, 3, 4}, {1, 3, 2, 4});
  CHECK(r.estimate == doctest::Approx(0.8));
  CHECK(r.df == 2);
  CHECK(r.p == doctest::Approx(0.2));
  const auto perfect = pearson_test({1, 2, 3}, {2, 4, 6});
  CHECK(perfect.estimate == doctest::Approx(1.0));
  CHECK(perfect.p == 0.0);
  CHECK_THROWS_AS(pearson_test({1, 2}, {1, 2}), ArgumentError);
  CHECK_THROWS_AS(pearson_test({1, 2, 3}, {1, 2}), ArgumentError);
  CHECK_THROWS_AS(pearson_test({1, 1, 1}, {1, 2, 3}), DegenerateInputError);
}

TEST_CASE("pearson invariants") {
  oracle::Rng rng(2);
  for (int i = 0; i < 50; ++i) {
    const std::size_t n = oracle::pick(rng, 3, 40);
    auto x = oracle::random_values(rng, n, -3, 3), y = oracle::random_values(rng, n, -3, 3);
    const auto r = pearson_test(x, y);
    CHECK(r.estimate == doctest::Approx(oracle::pearson_r(x, y)).epsilon(1e-12));
    CHECK(pearson_test(y, x).estimate == doctest::Approx(r.estimate).epsilon(1e-12));
    std::vector<double> ys(y);
    for (auto& v : ys) v = 3.5 * v - 2;
    CHECK(pearson_test(x, ys).estimate == doctest::Approx(r.estimate).epsilon(1e-10));
    for (auto& v : ys) v = -v;
    CHECK(pearson_test(x, ys).estimate == doctest::Approx(-r.estimate).epsilon(1e-10));
    CHECK(r.p >= 0);
    CHECK(r.p <= 1);
  }
}

TEST_CASE("welch examples and invariants") {
  const auto w = t_test_two_sample({1, 2, 3, 4, 5}, {2, 4, 6, 8, 10});
  CHECK(w.statistic == doctest::Approx(-3.0 / std::sqrt(2.5)));
  CHECK(w.df == doctest::Approx(6.25 / 1.0625));
  CHECK(w.estimate == doctest::Approx(-3));
  CHECK(w.p == doctest::Approx(oracle::t_tail_simpson(w.statistic, w.df)).epsilon(1e-6));
  CHECK(t_test_two_sample({2, 2}, {2, 2}).p == 1.0);
  CHECK_THROWS_AS(t_test_two_sample({1}, {1, 2}), ArgumentError);

  oracle::Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    auto a = oracle::random_values(rng, oracle::pick(rng, 2, 30), 0, 5);
    auto b = oracle::random_values(rng, oracle::pick(rng, 2, 30), 1, 4);
    const auto ab = t_test_two_sample(a, b), ba = t_test_two_sample(b, a);
    CHECK(ab.statistic == doctest::Approx(oracle::welch_t(a, b)).epsilon(1e-12));
    CHECK(ba.statistic == doctest::Approx(-ab.statistic).epsilon(1e-12));
    CHECK(ba.p == doctest::Approx(ab.p).epsilon(1e-12));
    CHECK(ab.df >= std::min(a.size(), b.size()) - 1.0 - 1e-9);
    CHECK(ab.df <= a.size() + b.size() - 2.0 + 1e-9);
  }
}

TEST_CASE("one-sample and paired tests") {
  const auto t = t_test_one_sample({1, 2, 3, 4, 5});
  CHECK(t.statistic == doctest::Approx(4.242641).epsilon(1e-6));
  CHECK(t.df == 4);
  CHECK(t.p == doctest::Approx(0.013236).epsilon(1e-4));
  CHECK(t_test_one_sample({1, 2, 3, 4, 5}, 3).statistic == doctest::Approx(0.0).scale(1));
  CHECK_THROWS_AS(t_test_one_sample({2, 2, 2}, 2), DegenerateInputError);
  const auto inf = t_test_one_sample({2, 2, 2}, 0);
  CHECK(std::isinf(inf.statistic));
  CHECK(inf.p == 0.0);

  const std::vector<double> a{5, 7, 9, 4}, b{3, 6, 10, 1};
  const auto p = t_test_paired(a, b);
  const auto o = t_test_one_sample({2, 1, -1, 3});
  CHECK(p.statistic == o.statistic);
  CHECK(p.p == o.p);
  CHECK(p.estimate == doctest::Approx(1.25));
}

TEST_CASE("bland-altman") {
  const auto r = bland_altman({10, 20}, {4, 18});
  CHECK(r.bias == doctest::Approx(-4));
  CHECK(r.sd_diff == doctest::Approx(std::sqrt(8.0)));
  CHECK(r.loa_low == doctest::Approx(-4 - 1.96 * std::sqrt(8.0)));
  CHECK(r.loa_high == doctest::Approx(-4 + 1.96 * std::sqrt(8.0)));
  REQUIRE(r.points.size() == 2);
  CHECK(r.points[0].mean == 7);
  CHECK(r.points[0].diff == -6);
  CHECK_THROWS_AS(bland_altman({1}, {1}), ArgumentError);
  CHECK_THROWS_AS(bland_altman({1, 2}, {1}), ArgumentError);

  oracle::Rng rng(4);
  for (int i = 0; i < 30; ++i) {
    const std::size_t n = oracle::pick(rng, 2, 50);
    auto m = oracle::random_values(rng, n, 200, 500), a = m;
    for (auto& v : a) v += oracle::normal(rng) * 10 + 3;
    const auto ba = bland_altman(m, a);
    std::vector<double> d(n);
    for (std::size_t k = 0; k < n; ++k) d[k] = a[k] - m[k];
    CHECK(ba.bias == doctest::Approx(oracle::mean(d)).epsilon(1e-12));
    CHECK(ba.loa_high - ba.bias == doctest::Approx(ba.bias - ba.loa_low).epsilon(1e-12));
    CHECK(ba.sd_diff == doctest::Approx(std::sqrt(oracle::sample_var(d))).epsilon(1e-12));
    auto shifted = a;
    for (auto& v : shifted) v += 5;
    CHECK(bland_altman(m, shifted).sd_diff == doctest::Approx(ba.sd_diff).epsilon(1e-9));
  }
}

TEST_CASE("muscle index") {
  CHECK(imi(542.3, 162.5) == doctest::Approx(205.37).epsilon(1e-4));
  CHECK(imi(814.5, 176.2) == doctest::Approx(262.35).epsilon(1e-4));
  CHECK(imi(100, 100) == 100);
}

TEST_CASE("penalised spline") {
  const auto grid = gam_lambda_grid();
  REQUIRE(grid.size() == 25);
  CHECK(grid.front() == doctest::Approx(1e-6));
  CHECK(grid.back() == doctest::Approx(1e6));

  oracle::Rng rng(5);
  std::vector<double> x(150), y(150);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = oracle::uniform(rng, -3, 7);
    y[i] = 2.5 * x[i] - 1;
  }
  const auto lin = gam_fit(x, y);
  double worst = 0;
  const double lo = *std::min_element(x.begin(), x.end()), hi = *std::max_element(x.begin(), x.end());
  CHECK(lin.knots.front() == lo);
  CHECK(lin.knots.back() == hi);
  for (double t = lo; t <= hi; t += 0.01) worst = std::max(worst, std::fabs(lin(t) - (2.5 * t - 1)));
  CHECK(worst <= 1e-6);

  std::vector<double> sx(300), sy(300);
  for (std::size_t i = 0; i < sx.size(); ++i) {
    sx[i] = oracle::uniform(rng, 0, 2 * std::numbers::pi);
    sy[i] = std::sin(sx[i]) + 0.1 * oracle::normal(rng);
  }
  const auto fit = gam_fit(sx, sy);
  double se = 0;
  for (int k = 0; k <= 200; ++k) {
    const double t = fit.knots.front() + (fit.knots.back() - fit.knots.front()) * k / 200.0;
    se += std::pow(fit(t) - std::sin(t), 2);
  }
  CHECK(std::sqrt(se / 201) < 0.05);
  CHECK(fit.edf > 2);
  CHECK(fit.edf < 14);
  const auto again = gam_fit(sx, sy);
  CHECK(again.lambda == fit.lambda);
  CHECK(again.coef == fit.coef);
  CHECK(fit(-100) == fit(fit.knots.front()));

  // integer ages repeat; duplicate knots collapse
  std::vector<double> ax, ay;
  for (int i = 0; i < 200; ++i) {
    ax.push_back(44 + i % 5);
    ay.push_back(i % 7);
  }
  CHECK_NOTHROW(gam_fit(ax, ay));
  CHECK_THROWS_AS(gam_fit({1, 2, 3}, {1, 2, 3}), ArgumentError);
  CHECK_THROWS_AS(gam_fit(std::vector<double>(50, 1.0), std::vector<double>(50, 1.0)), ArgumentError);
}

TEST_CASE("summaries") {
  const auto s = summarize({1, 2, 3, 4});
  CHECK(s.n == 4);
  CHECK(s.mean == 2.5);
  CHECK(*s.sd == doctest::Approx(std::sqrt(5.0 / 3)));
  CHECK(s.min == 1);
  CHECK(s.max == 4);
  CHECK(!summarize({7}).sd);
  const auto row = CohortRow::make(SubjectRecord{.height_cm = 170}, 300, 310);
  CHECK(row.total_ml == 610);
  CHECK(row.average_ml == 305);
  CHECK(row.lr_diff_ml == -10);
  CHECK(row.imi == doctest::Approx(610 / 2.89));
}

TEST_CASE("cohort report on planted volumes") {
  const auto rows = true_rows(5000, 99);
  const auto rep = cohort_summary(rows);
  REQUIRE(rep.groups.size() == 2);
  CHECK(rep.groups[0].group == "female");
  CHECK(rep.groups[1].group == "male");
  CHECK(rep.groups[0].n + rep.groups[1].n == 5000);
  CHECK(rep.between.size() == demographic_measures().size() + volume_measures().size());
  for (const auto& g : rep.groups) {
    for (const char* name : {"total_vs_height", "imi_vs_bmi", "imi_vs_age", "lr_diff_one_sample",
                             "lr_diff_by_handedness"})
      CHECK(find(g.tests, name) != nullptr);
    const auto* lr = find(g.tests, "lr_diff_one_sample");
    CHECK(lr->result.estimate < 0);
    CHECK(lr->result.p < 0.001);
  }
  const auto& male = rep.groups[1];
  std::vector<CohortRow> men;
  for (const auto& r : rows)
    if (r.subject.sex == Sex::male) men.push_back(r);
  CHECK(find(male.tests, "total_vs_height")->result.estimate ==
        doctest::Approx(oracle::pearson_r(measure_column(men, "total_ml"), measure_column(men, "height_cm"))));
  CHECK(std::fabs(find(male.tests, "imi_vs_age")->result.estimate + 0.31) < 0.06);
  CHECK(find(rep.between, "total_ml")->result.estimate > 200);

  std::vector<CohortRow> few(men.begin(), men.begin() + 4);
  for (auto& r : few) r.subject.handedness = Handedness::right;
  const auto small = cohort_summary(few);
  REQUIRE(small.groups.size() == 1);
  CHECK(find(small.groups[0].tests, "lr_diff_by_handedness") == nullptr);
  CHECK(small.between.empty());
  CHECK_THROWS_AS(measure_column(rows, "shoe_size"), ArgumentError);
}

TEST_CASE("further examples") {
  CHECK(pearson_test({1, 2, 3, 4, 5}, {3, 5, 7, 9, 11}).estimate == doctest::Approx(1.0));
  CHECK(pearson_test({1, 2, 3, 4, 5}, {-1, -2, -3, -4, -5}).estimate == doctest::Approx(-1.0));
  CHECK(t_test_two_sample({1, 2, 3}, {1001, 1002, 1003}).p < 1e-6);
  const auto same = t_test_two_sample({1, 2, 4}, {1, 2, 4});
  CHECK(same.statistic == 0.0);
  CHECK(same.p == doctest::Approx(1.0));
  const auto sym = t_test_one_sample({-1, 0, 1});
  CHECK(sym.statistic == 0.0);
  CHECK(sym.p == doctest::Approx(1.0));
  CHECK_THROWS_AS(t_test_one_sample({0, 0, 0}), DegenerateInputError);
  CHECK_THROWS_AS(imi(500, 0), ArgumentError);
  CHECK_THROWS_AS(imi(500, -170), ArgumentError);
}

TEST_CASE("bland-altman hand cases") {
  const auto r = bland_altman({100, 200, 300}, {96, 198, 294});
  CHECK(r.bias == doctest::Approx(-4));
  CHECK(r.sd_diff == doctest::Approx(2));
  CHECK(r.loa_low == doctest::Approx(-7.92));
  CHECK(r.loa_high == doctest::Approx(-0.08));
  const auto flat = bland_altman({10, 20, 30}, {6, 16, 26});
  CHECK(flat.loa_low == doctest::Approx(-4));
  CHECK(flat.loa_high == doctest::Approx(-4));
  const auto swapped = bland_altman({96, 198, 294}, {100, 200, 300});
  CHECK(swapped.bias == doctest::Approx(-r.bias));
  CHECK(swapped.loa_low == doctest::Approx(-r.loa_high));
  CHECK(swapped.loa_high == doctest::Approx(-r.loa_low));
  const auto again = bland_altman_from_points(r.points);
  CHECK(again.bias == r.bias);
  CHECK(again.loa_low == r.loa_low);
  CHECK(again.loa_high == r.loa_high);
}

TEST_CASE("one-sample p against exact sign-flip enumeration") {
  oracle::Rng rng(8);
  int within = 0, cases = 100;
  double worst = 0;
  for (int c = 0; c < cases; ++c) {
    std::vector<double> d(12);
    const double shift = oracle::uniform(rng, 0, 1);
    for (auto& v : d) v = oracle::normal(rng) + shift;
    const double diff = std::fabs(t_test_one_sample(d).p - oracle::sign_flip_p(d));
    within += diff <= 0.02;
    worst = std::max(worst, diff);
  }
  // the enumeration conditions on |d|, so a few cases sit a little further out
  CHECK(within >= 95);
  CHECK(worst <= 0.1);
  MESSAGE("within 0.02: " << within << "/" << cases << ", worst " << worst);
}

TEST_CASE("two-sample and correlation p against permutation") {
  oracle::Rng rng(9);
  std::vector<double> a(20), b(20), x(20), y(20);
  for (std::size_t i = 0; i < 20; ++i) {
    a[i] = oracle::normal(rng) + 0.6;
    b[i] = oracle::normal(rng);
    x[i] = oracle::normal(rng);
    y[i] = 0.4 * x[i] + oracle::normal(rng);
  }
  CHECK(std::fabs(t_test_two_sample(a, b).p - oracle::welch_permutation_p(a, b, 40000, rng)) < 0.02);
  CHECK(std::fabs(pearson_test(x, y).p - oracle::pearson_permutation_p(x, y, 40000, rng)) < 0.02);
}

TEST_CASE("spline shifts with y and is twice continuously differentiable") {
  oracle::Rng rng(10);
  std::vector<double> x(120), y(120);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = oracle::uniform(rng, 44, 82);
    y[i] = 200 - 0.02 * std::pow(x[i] - 50, 2) + 5 * oracle::normal(rng);
  }
  const auto fit = gam_fit(x, y);
  auto shifted = y;
  for (auto& v : shifted) v += 37.5;
  const auto fs = gam_fit(x, shifted);
  for (double v : x) CHECK(fs(v) == doctest::Approx(fit(v) + 37.5).epsilon(1e-9));

  const auto flat = gam_fit(x, std::vector<double>(x.size(), 4.25));
  for (double v : x) CHECK(flat(v) == doctest::Approx(4.25).epsilon(1e-9));

  const double h = 1e-3;
  for (std::size_t k = 1; k + 1 < fit.knots.size(); ++k) {
    const double t = fit.knots[k];
    auto d1 = [&](double p) { return (fit(p + h) - fit(p - h)) / (2 * h); };
    auto d2 = [&](double p) { return (fit(p + h) - 2 * fit(p) + fit(p - h)) / (h * h); };
    CHECK(std::fabs(fit(t - 1e-9) - fit(t + 1e-9)) < 1e-6);
    CHECK(std::fabs(d1(t - 3 * h) - d1(t + 3 * h)) < 0.05);
    CHECK(std::fabs(d2(t - 3 * h) - d2(t + 3 * h)) < 0.05);
  }
}

TEST_CASE("degenerate groups and the p band") {
  auto rows = true_rows(60, 98);
  std::vector<CohortRow> one_each;
  for (Sex s : {Sex::female, Sex::male})
    for (const auto& r : rows)
      if (r.subject.sex == s) {
        one_each.push_back(r);
        break;
      }
  const auto rep = cohort_summary(one_each);
  REQUIRE(rep.groups.size() == 2);
  for (const auto& g : rep.groups) {
    CHECK(g.tests.empty());
    for (const auto& [name, s] : g.summaries) CHECK(!s.sd);
  }
  CHECK(rep.between.empty());

  const auto big = cohort_summary(true_rows(5000, 97));
  CHECK(format_p(find(big.between, "total_ml")->result.p) == "<1e-15");
}
