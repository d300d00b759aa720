#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ilioseg/phantom.hpp"

namespace ilio {

struct TestResult {
  double statistic = 0.0;
  double df = 0.0;
  double p = 1.0;         // two-sided
  double estimate = 0.0;  // r, mean difference or mean
};

// Two-sided Student-t tail probability P(|T| >= |t|), via the regularised
// incomplete beta function.
double t_two_sided_p(double t, double df);

// Reports "<1e-15" below that band, otherwise a short decimal.
std::string format_p(double p);

// Throws ArgumentError for n < 3 or unequal lengths, DegenerateInputError
// for zero variance.
TestResult pearson_test(const std::vector<double>& x, const std::vector<double>& y);

// Welch statistic with Welch-Satterthwaite df; estimate is mean(a) - mean(b).
// Throws ArgumentError when a group has fewer than 2 values.
TestResult t_test_two_sample(const std::vector<double>& a, const std::vector<double>& b);

// Throws DegenerateInputError when the sample has zero variance and its mean
// equals mu0.
TestResult t_test_one_sample(const std::vector<double>& d, double mu0 = 0.0);

// One-sample test on a - b.
TestResult t_test_paired(const std::vector<double>& a, const std::vector<double>& b);

struct BlandAltmanPoint {
  double mean = 0.0;
  double diff = 0.0;  // auto - manual
};

struct BlandAltmanResult {
  double bias = 0.0;
  double sd_diff = 0.0;
  double loa_low = 0.0;
  double loa_high = 0.0;
  std::vector<BlandAltmanPoint> points;
};

inline constexpr double kLoaZ = 1.96;

BlandAltmanResult bland_altman(const std::vector<double>& manual_ml,
                               const std::vector<double>& auto_ml);
BlandAltmanResult bland_altman_from_points(std::vector<BlandAltmanPoint> points);

// Total volume over squared height in metres (ml/m^2).
double imi(double total_ml, double height_cm);

// Penalised cubic B-spline smooth of y on x.
struct GamFit {
  std::vector<double> knots;  // distinct knots, boundary included
  std::vector<double> coef;
  double lambda = 0.0;
  double gcv = 0.0;
  double edf = 0.0;

  double operator()(double x) const;  // clamped to the knot range
  std::vector<double> evaluate(const std::vector<double>& x) const;
};

// Knots at evenly spaced x-quantiles; the penalty is the squared second
// divided difference of the coefficients over their Greville abscissae, so
// straight lines are unpenalised. lambda is chosen by GCV over 25 log-spaced
// values in [1e-6, 1e6], relative to trace(B'B)/trace(P).
// Throws ArgumentError unless n > num_knots + 2 and x has spread.
GamFit gam_fit(const std::vector<double>& x, const std::vector<double>& y, int num_knots = 10);

std::vector<double> gam_lambda_grid();

struct CohortRow {
  SubjectRecord subject;
  double left_ml = 0.0;
  double right_ml = 0.0;
  double total_ml = 0.0;
  double average_ml = 0.0;
  double lr_diff_ml = 0.0;  // left - right
  double imi = 0.0;

  static CohortRow make(const SubjectRecord& subject, double left_ml, double right_ml);
};

struct Summary {
  std::size_t n = 0;
  double mean = 0.0;
  std::optional<double> sd;  // undefined for n < 2
  double min = 0.0;
  double max = 0.0;
};

Summary summarize(const std::vector<double>& v);

inline const std::vector<std::string>& demographic_measures() {
  static const std::vector<std::string> m{"age", "height_cm", "weight_kg", "bmi"};
  return m;
}
inline const std::vector<std::string>& volume_measures() {
  static const std::vector<std::string> m{"total_ml", "average_ml", "left_ml",
                                          "right_ml", "lr_diff_ml", "imi"};
  return m;
}

// Column of a row set by measure name (demographic or volume measure).
std::vector<double> measure_column(const std::vector<CohortRow>& rows, const std::string& measure);

struct NamedTest {
  std::string name;
  TestResult result;
};

struct GroupReport {
  std::string group;
  std::size_t n = 0;
  std::vector<std::pair<std::string, Summary>> summaries;
  // Pearson: total_vs_height, imi_vs_bmi, imi_vs_age; t: lr_diff_one_sample,
  // lr_diff_by_handedness. Tests that are undefined for the group are omitted.
  std::vector<NamedTest> tests;
};

struct StatsReport {
  std::vector<GroupReport> groups;  // female, male (groups without rows omitted)
  std::vector<NamedTest> between;   // Welch male vs female per volume measure
};

StatsReport cohort_summary(const std::vector<CohortRow>& rows);

}  // namespace ilio
