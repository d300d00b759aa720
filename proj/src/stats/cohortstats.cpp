#include "ilioseg/cohortstats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include <Eigen/Dense>
#include <boost/math/special_functions/beta.hpp>

namespace ilio {

namespace {

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Sample variance (n - 1).
double var_of(const std::vector<double>& v, double m) {
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

void check_finite(const std::vector<double>& v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw ArgumentError(std::string(what) + " contains a non-finite value");
  }
}

}  // namespace

double t_two_sided_p(double t, double df) {
  if (!(df > 0.0)) throw ArgumentError("t distribution needs positive df");
  if (std::isnan(t)) throw ArgumentError("t statistic is NaN");
  if (std::isinf(t)) return 0.0;
  const double x = df / (df + t * t);
  return std::clamp(boost::math::ibeta(df / 2.0, 0.5, x), 0.0, 1.0);
}

std::string format_p(double p) {
  if (p < 1e-15) return "<1e-15";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", p);
  return buf;
}

TestResult pearson_test(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ArgumentError("pearson_test: lengths differ");
  if (x.size() < 3) throw ArgumentError("pearson_test needs at least 3 pairs");
  check_finite(x, "x");
  check_finite(y, "y");
  const double mx = mean_of(x), my = mean_of(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw DegenerateInputError("pearson_test: zero variance");
  const double r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double df = static_cast<double>(x.size()) - 2.0;
  TestResult out;
  out.estimate = r;
  out.df = df;
  if (1.0 - r * r <= 0.0) {
    out.statistic = std::copysign(std::numeric_limits<double>::infinity(), r);
    out.p = 0.0;
  } else {
    out.statistic = r * std::sqrt(df / (1.0 - r * r));
    out.p = t_two_sided_p(out.statistic, df);
  }
  return out;
}

TestResult t_test_two_sample(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() < 2 || b.size() < 2) throw ArgumentError("two-sample t-test needs 2 values per group");
  check_finite(a, "a");
  check_finite(b, "b");
  const double ma = mean_of(a), mb = mean_of(b);
  const double va = var_of(a, ma) / static_cast<double>(a.size());
  const double vb = var_of(b, mb) / static_cast<double>(b.size());
  const double se2 = va + vb;
  TestResult out;
  out.estimate = ma - mb;
  if (se2 == 0.0) {
    if (ma == mb) {
      out.statistic = 0.0;
      out.df = static_cast<double>(a.size() + b.size() - 2);
      out.p = 1.0;
      return out;
    }
    throw DegenerateInputError("two-sample t-test: both groups have zero variance");
  }
  out.statistic = (ma - mb) / std::sqrt(se2);
  out.df = se2 * se2 /
           (va * va / static_cast<double>(a.size() - 1) + vb * vb / static_cast<double>(b.size() - 1));
  out.p = t_two_sided_p(out.statistic, out.df);
  return out;
}

TestResult t_test_one_sample(const std::vector<double>& d, double mu0) {
  if (d.size() < 2) throw ArgumentError("one-sample t-test needs at least 2 values");
  check_finite(d, "d");
  const double m = mean_of(d);
  const double v = var_of(d, m);
  TestResult out;
  out.estimate = m;
  out.df = static_cast<double>(d.size() - 1);
  if (v == 0.0) {
    if (m == mu0) throw DegenerateInputError("one-sample t-test: zero variance at the null mean");
    out.statistic = std::copysign(std::numeric_limits<double>::infinity(), m - mu0);
    out.p = 0.0;
    return out;
  }
  out.statistic = (m - mu0) / std::sqrt(v / static_cast<double>(d.size()));
  out.p = t_two_sided_p(out.statistic, out.df);
  return out;
}

TestResult t_test_paired(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ArgumentError("paired t-test: lengths differ");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return t_test_one_sample(d);
}

BlandAltmanResult bland_altman_from_points(std::vector<BlandAltmanPoint> points) {
  if (points.size() < 2) throw ArgumentError("Bland-Altman needs at least 2 pairs");
  std::vector<double> d(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) d[i] = points[i].diff;
  check_finite(d, "differences");
  BlandAltmanResult out;
  out.bias = mean_of(d);
  out.sd_diff = std::sqrt(var_of(d, out.bias));
  out.loa_low = out.bias - kLoaZ * out.sd_diff;
  out.loa_high = out.bias + kLoaZ * out.sd_diff;
  out.points = std::move(points);
  return out;
}

BlandAltmanResult bland_altman(const std::vector<double>& manual_ml,
                               const std::vector<double>& auto_ml) {
  if (manual_ml.size() != auto_ml.size()) throw ArgumentError("Bland-Altman: lengths differ");
  std::vector<BlandAltmanPoint> pts(manual_ml.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    pts[i].mean = 0.5 * (manual_ml[i] + auto_ml[i]);
    pts[i].diff = auto_ml[i] - manual_ml[i];
  }
  return bland_altman_from_points(std::move(pts));
}

double imi(double total_ml, double height_cm) {
  if (!(height_cm > 0.0) || !std::isfinite(height_cm)) throw ArgumentError("height must be positive");
  const double h = height_cm / 100.0;
  return total_ml / (h * h);
}

// --- penalised spline -------------------------------------------------------

namespace {

constexpr int kDegree = 3;

// Clamped knot vector: boundary knots repeated degree + 1 times.
std::vector<double> full_knots(const std::vector<double>& knots) {
  std::vector<double> t;
  for (int i = 0; i < kDegree; ++i) t.push_back(knots.front());
  t.insert(t.end(), knots.begin(), knots.end());
  for (int i = 0; i < kDegree; ++i) t.push_back(knots.back());
  return t;
}

// Values of the degree+1 non-zero basis functions at x and the index of the first.
std::size_t basis_at(const std::vector<double>& t, double x, double out[kDegree + 1]) {
  const std::size_t m = t.size() - kDegree - 1;  // number of basis functions
  std::size_t span = kDegree;
  if (x >= t[m]) {
    span = m - 1;
  } else {
    span = static_cast<std::size_t>(std::upper_bound(t.begin(), t.end(), x) - t.begin()) - 1;
    span = std::clamp<std::size_t>(span, kDegree, m - 1);
  }
  double left[kDegree + 1], right[kDegree + 1];
  out[0] = 1.0;
  for (int j = 1; j <= kDegree; ++j) {
    left[j] = x - t[span + 1 - j];
    right[j] = t[span + j] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double denom = right[r + 1] + left[j - r];
      const double tmp = denom == 0.0 ? 0.0 : out[r] / denom;
      out[r] = saved + right[r + 1] * tmp;
      saved = left[j - r] * tmp;
    }
    out[j] = saved;
  }
  return span - kDegree;
}

}  // namespace

double GamFit::operator()(double x) const {
  const double xc = std::clamp(x, knots.front(), knots.back());
  const auto t = full_knots(knots);
  double b[kDegree + 1];
  const std::size_t first = basis_at(t, xc, b);
  double s = 0.0;
  for (int k = 0; k <= kDegree; ++k) s += b[k] * coef[first + k];
  return s;
}

std::vector<double> GamFit::evaluate(const std::vector<double>& x) const {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (*this)(x[i]);
  return out;
}

std::vector<double> gam_lambda_grid() {
  std::vector<double> g(25);
  for (int i = 0; i < 25; ++i) g[i] = std::pow(10.0, -6.0 + 0.5 * i);
  return g;
}

GamFit gam_fit(const std::vector<double>& x, const std::vector<double>& y, int num_knots) {
  if (x.size() != y.size()) throw ArgumentError("gam_fit: lengths differ");
  if (num_knots < 2) throw ArgumentError("gam_fit needs at least 2 knots");
  const std::size_t n = x.size();
  if (n <= static_cast<std::size_t>(num_knots) + 2) {
    throw ArgumentError("gam_fit needs more than num_knots + 2 observations");
  }
  check_finite(x, "x");
  check_finite(y, "y");

  std::vector<double> sorted = x;
  std::sort(sorted.begin(), sorted.end());
  if (sorted.front() == sorted.back()) throw ArgumentError("gam_fit: x has no spread");
  std::vector<double> knots;
  for (int k = 0; k < num_knots; ++k) {
    const double pos = static_cast<double>(k) * static_cast<double>(n - 1) / (num_knots - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, n - 1);
    const double q = sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
    if (knots.empty() || q > knots.back()) knots.push_back(q);
  }
  knots.back() = sorted.back();

  const auto t = full_knots(knots);
  const std::size_t m = t.size() - kDegree - 1;

  Eigen::MatrixXd btb = Eigen::MatrixXd::Zero(m, m);
  Eigen::VectorXd bty = Eigen::VectorXd::Zero(m);
  double yy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double b[kDegree + 1];
    const std::size_t f = basis_at(t, x[i], b);
    for (int a = 0; a <= kDegree; ++a) {
      bty(f + a) += b[a] * y[i];
      for (int c = 0; c <= kDegree; ++c) btb(f + a, f + c) += b[a] * b[c];
    }
    yy += y[i] * y[i];
  }

  // Second divided differences over the Greville abscissae.
  std::vector<double> grev(m);
  for (std::size_t j = 0; j < m; ++j) grev[j] = (t[j + 1] + t[j + 2] + t[j + 3]) / 3.0;
  Eigen::MatrixXd dmat = Eigen::MatrixXd::Zero(m - 2, m);
  for (std::size_t j = 0; j + 2 < m; ++j) {
    const double h0 = grev[j + 1] - grev[j];
    const double h1 = grev[j + 2] - grev[j + 1];
    dmat(j, j) = 1.0 / h0;
    dmat(j, j + 1) = -1.0 / h0 - 1.0 / h1;
    dmat(j, j + 2) = 1.0 / h1;
  }
  const Eigen::MatrixXd pen = dmat.transpose() * dmat;
  const double scale = btb.trace() / pen.trace();

  GamFit best;
  best.knots = knots;
  best.gcv = std::numeric_limits<double>::infinity();
  for (double lambda : gam_lambda_grid()) {
    const Eigen::MatrixXd a = btb + (lambda * scale) * pen;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
    const Eigen::VectorXd c = ldlt.solve(bty);
    const double edf = ldlt.solve(btb).trace();
    // RSS = y'y - 2 c'B'y + c'B'Bc
    const double rss = std::max(0.0, yy - 2.0 * c.dot(bty) + c.dot(btb * c));
    const double denom = static_cast<double>(n) - edf;
    const double gcv = static_cast<double>(n) * rss / (denom * denom);
    if (gcv < best.gcv) {
      best.gcv = gcv;
      best.lambda = lambda;
      best.edf = edf;
      best.coef.assign(c.data(), c.data() + c.size());
    }
  }
  return best;
}

// --- cohort summary ---------------------------------------------------------

CohortRow CohortRow::make(const SubjectRecord& subject, double left_ml, double right_ml) {
  CohortRow r;
  r.subject = subject;
  r.left_ml = left_ml;
  r.right_ml = right_ml;
  r.total_ml = left_ml + right_ml;
  r.average_ml = r.total_ml / 2.0;
  r.lr_diff_ml = left_ml - right_ml;
  r.imi = ilio::imi(r.total_ml, subject.height_cm);
  return r;
}

Summary summarize(const std::vector<double>& v) {
  if (v.empty()) throw ArgumentError("summary of an empty sample");
  Summary s;
  s.n = v.size();
  s.mean = mean_of(v);
  s.min = *std::min_element(v.begin(), v.end());
  s.max = *std::max_element(v.begin(), v.end());
  if (v.size() >= 2) s.sd = std::sqrt(var_of(v, s.mean));
  return s;
}

std::vector<double> measure_column(const std::vector<CohortRow>& rows, const std::string& measure) {
  double CohortRow::*field = nullptr;
  if (measure == "total_ml") field = &CohortRow::total_ml;
  if (measure == "average_ml") field = &CohortRow::average_ml;
  if (measure == "left_ml") field = &CohortRow::left_ml;
  if (measure == "right_ml") field = &CohortRow::right_ml;
  if (measure == "lr_diff_ml") field = &CohortRow::lr_diff_ml;
  if (measure == "imi") field = &CohortRow::imi;
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    if (field) {
      out.push_back(r.*field);
    } else if (measure == "age") {
      out.push_back(r.subject.age);
    } else if (measure == "height_cm") {
      out.push_back(r.subject.height_cm);
    } else if (measure == "weight_kg") {
      out.push_back(r.subject.weight_kg);
    } else if (measure == "bmi") {
      out.push_back(r.subject.bmi);
    } else {
      throw ArgumentError("unknown measure '" + measure + "'");
    }
  }
  return out;
}

namespace {

template <typename F>
void try_test(std::vector<NamedTest>& out, const std::string& name, F&& f) {
  try {
    out.push_back({name, f()});
  } catch (const ArgumentError&) {
  } catch (const DegenerateInputError&) {
  }
}

GroupReport group_report(const std::string& name, const std::vector<CohortRow>& rows) {
  GroupReport g;
  g.group = name;
  g.n = rows.size();
  for (const auto& m : demographic_measures()) g.summaries.emplace_back(m, summarize(measure_column(rows, m)));
  for (const auto& m : volume_measures()) g.summaries.emplace_back(m, summarize(measure_column(rows, m)));

  const auto total = measure_column(rows, "total_ml");
  const auto index = measure_column(rows, "imi");
  const auto diff = measure_column(rows, "lr_diff_ml");
  try_test(g.tests, "total_vs_height", [&] { return pearson_test(measure_column(rows, "height_cm"), total); });
  try_test(g.tests, "imi_vs_bmi", [&] { return pearson_test(measure_column(rows, "bmi"), index); });
  try_test(g.tests, "imi_vs_age", [&] { return pearson_test(measure_column(rows, "age"), index); });
  try_test(g.tests, "lr_diff_one_sample", [&] { return t_test_one_sample(diff); });
  try_test(g.tests, "lr_diff_by_handedness", [&] {
    std::vector<double> right, left;
    for (const auto& r : rows) {
      (r.subject.handedness == Handedness::right ? right : left).push_back(r.lr_diff_ml);
    }
    return t_test_two_sample(right, left);
  });
  return g;
}

}  // namespace

StatsReport cohort_summary(const std::vector<CohortRow>& rows) {
  if (rows.empty()) throw ArgumentError("cohort summary of an empty cohort");
  std::vector<CohortRow> female, male;
  for (const auto& r : rows) (r.subject.sex == Sex::male ? male : female).push_back(r);
  StatsReport rep;
  if (!female.empty()) rep.groups.push_back(group_report("female", female));
  if (!male.empty()) rep.groups.push_back(group_report("male", male));
  if (!female.empty() && !male.empty()) {
    std::vector<std::string> measures = demographic_measures();
    for (const auto& m : volume_measures()) measures.push_back(m);
    for (const auto& m : measures) {
      try_test(rep.between, m, [&] {
        return t_test_two_sample(measure_column(male, m), measure_column(female, m));
      });
    }
  }
  return rep;
}

}  // namespace ilio
