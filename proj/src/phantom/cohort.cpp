#include <Eigen/Dense>

#include <cmath>
#include <cstdio>

#include "ilioseg/cohort_constants.hpp"
#include "ilioseg/csv.hpp"
#include "ilioseg/phantom.hpp"

namespace ilio {

const char* sex_name(Sex s) { return s == Sex::male ? "male" : "female"; }
const char* handedness_name(Handedness h) { return h == Handedness::right ? "right" : "left"; }

Sex parse_sex(const std::string& s) {
  if (s == "male") return Sex::male;
  if (s == "female") return Sex::female;
  throw FormatError("unknown sex '" + s + "'");
}

Handedness parse_handedness(const std::string& s) {
  if (s == "right") return Handedness::right;
  if (s == "left") return Handedness::left;
  throw FormatError("unknown handedness '" + s + "'");
}

SexModel covariate_model(Sex s) {
  SexModel m;
  if (s == Sex::male) {
    m.height_mean = 176.2;
    m.height_sd = 6.8;
    m.bmi_mean = 27.0;
    m.bmi_sd = 3.9;
    m.bmi_min = 17.6;
    m.bmi_max = 50.9;
  } else {
    m.height_mean = 162.5;
    m.height_sd = 6.1;
    m.bmi_mean = 26.2;
    m.bmi_sd = 4.7;
    m.bmi_min = 16.1;
    m.bmi_max = 55.2;
  }
  m.age_hinge = s == Sex::male ? 62.0 : 44.0;
  return m;
}

namespace {

SexModel frozen_model(Sex s) {
  namespace c = cohort_calibration;
  SexModel m = covariate_model(s);
  const auto& f = s == Sex::male ? c::kMale : c::kFemale;
  m.intercept = f.intercept;
  m.beta_height = f.beta_height;
  m.beta_bmi = f.beta_bmi;
  m.beta_age = f.beta_age;
  m.age_hinge = f.age_hinge;
  m.noise_sd = f.noise_sd;
  m.asym_sd = f.asym_sd;
  return m;
}

struct Covariates {
  int age;
  double height;
  double bmi;
};

Covariates draw_covariates(const SexModel& m, Rng& rng) {
  std::uniform_int_distribution<int> group(0, static_cast<int>(kAgeGroups.size()) - 1);
  const auto [lo, hi] = kAgeGroups[group(rng)];
  Covariates c{};
  c.age = std::uniform_int_distribution<int>(lo, hi)(rng);
  c.height = std::normal_distribution<double>(m.height_mean, m.height_sd)(rng);
  std::normal_distribution<double> bmi(m.bmi_mean, m.bmi_sd);
  do {
    c.bmi = bmi(rng);
  } while (c.bmi < m.bmi_min || c.bmi > m.bmi_max);
  return c;
}

double linear_part(const SexModel& m, double height, double bmi, int age) {
  const double hm = height / 100.0;
  return m.beta_height * height + m.beta_bmi * bmi * hm * hm +
         m.beta_age * std::max(0.0, age - m.age_hinge);
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double corr(const std::vector<double>& a, const std::vector<double>& b) {
  const double ma = mean(a), mb = mean(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

CohortSpec CohortSpec::calibrated(std::size_t n, std::uint64_t seed) {
  CohortSpec s;
  s.n = n;
  s.seed = seed;
  s.asym_mean = cohort_calibration::kAsymMean;
  s.female = frozen_model(Sex::female);
  s.male = frozen_model(Sex::male);
  return s;
}

void CohortSpec::validate() const {
  if (n == 0) throw ArgumentError("cohort size must be at least 1");
  if (!(female_fraction >= 0.0 && female_fraction <= 1.0) ||
      !(right_handed_fraction >= 0.0 && right_handed_fraction <= 1.0)) {
    throw ArgumentError("cohort fractions must lie in [0, 1]");
  }
  for (const SexModel* m : {&female, &male}) {
    if (m->noise_sd < 0.0 || m->asym_sd < 0.0 || m->height_sd < 0.0 || m->bmi_sd < 0.0) {
      throw ArgumentError("cohort noise scales must be non-negative");
    }
    if (!(m->bmi_min < m->bmi_max) || m->height_mean <= 0.0) {
      throw ArgumentError("cohort covariate model is invalid");
    }
  }
}

SubjectRecord sample_covariates(const CohortSpec& spec, Rng& rng) {
  SubjectRecord r;
  r.sex = std::bernoulli_distribution(spec.female_fraction)(rng) ? Sex::female : Sex::male;
  const Covariates c = draw_covariates(spec.model(r.sex), rng);
  r.age = c.age;
  r.height_cm = c.height;
  r.bmi = c.bmi;
  const double hm = c.height / 100.0;
  r.weight_kg = c.bmi * hm * hm;
  r.handedness =
      std::bernoulli_distribution(spec.right_handed_fraction)(rng) ? Handedness::right : Handedness::left;
  return r;
}

std::pair<double, double> plant_volumes(const SubjectRecord& subject, const CohortSpec& spec, Rng& rng) {
  const SexModel& m = spec.model(subject.sex);
  std::normal_distribution<double> unit(0.0, 1.0);
  // Redraw in the (practically unreachable) case of a non-positive side.
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const double total = m.intercept + linear_part(m, subject.height_cm, subject.bmi, subject.age) +
                         m.noise_sd * unit(rng);
    const double delta = spec.asym_mean + m.asym_sd * unit(rng);
    const double right = total / 2.0 + delta / 2.0;
    const double left = total / 2.0 - delta / 2.0;
    if (left > 0.0 && right > 0.0) return {left, right};
  }
  throw ArgumentError("plant_volumes: covariates yield no positive volumes");
}

std::string subject_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "S%04zu", index + 1);
  return buf;
}

std::vector<SubjectRecord> sample_cohort(const CohortSpec& spec) {
  spec.validate();
  std::vector<SubjectRecord> out(spec.n);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < spec.n; ++i) {
    Rng rng = subject_rng(spec.seed, i);
    SubjectRecord r = sample_covariates(spec, rng);
    r.id = subject_id(i);
    std::tie(r.true_left_ml, r.true_right_ml) = plant_volumes(r, spec, rng);
    out[i] = std::move(r);
  }
  return out;
}

void write_cohort_csv(const std::vector<SubjectRecord>& cohort, const std::filesystem::path& path) {
  CsvTable t;
  t.header = {"id", "sex", "age", "height_cm", "weight_kg", "bmi", "handedness", "true_left_ml", "true_right_ml"};
  for (const auto& r : cohort) {
    t.rows.push_back({r.id, sex_name(r.sex), std::to_string(r.age), format_double(r.height_cm),
                      format_double(r.weight_kg), format_double(r.bmi), handedness_name(r.handedness),
                      format_double(r.true_left_ml), format_double(r.true_right_ml)});
  }
  write_csv(t, path);
}

std::vector<SubjectRecord> read_cohort_csv(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  const std::size_t c_id = t.require_column("id"), c_sex = t.require_column("sex"),
                    c_age = t.require_column("age"), c_h = t.require_column("height_cm"),
                    c_w = t.require_column("weight_kg"), c_b = t.require_column("bmi"),
                    c_hand = t.require_column("handedness"), c_l = t.require_column("true_left_ml"),
                    c_r = t.require_column("true_right_ml");
  std::vector<SubjectRecord> out;
  for (const auto& row : t.rows) {
    SubjectRecord r;
    r.id = row[c_id];
    r.sex = parse_sex(row[c_sex]);
    r.age = static_cast<int>(parse_double(row[c_age]));
    r.height_cm = parse_double(row[c_h]);
    r.weight_kg = parse_double(row[c_w]);
    r.bmi = parse_double(row[c_b]);
    r.handedness = parse_handedness(row[c_hand]);
    r.true_left_ml = parse_double(row[c_l]);
    r.true_right_ml = parse_double(row[c_r]);
    out.push_back(std::move(r));
  }
  return out;
}

CalibrationTargets paper_targets(Sex s) {
  if (s == Sex::male) return {814.5, 125.4, 0.52, 0.49, -0.31};
  return {542.3, 72.1, 0.56, 0.49, -0.12};
}

CalibrationReport calibrate_sex_model(Sex s, SexModel start, const CalibrationTargets& targets,
                                      std::size_t pilot_n, std::uint64_t seed) {
  if (pilot_n < 10) throw ArgumentError("calibration pilot is too small");
  Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(s)}));
  std::vector<double> h(pilot_n), b(pilot_n), bh2(pilot_n), hinge(pilot_n), age(pilot_n), z(pilot_n);
  std::normal_distribution<double> unit(0.0, 1.0);
  for (std::size_t i = 0; i < pilot_n; ++i) {
    const Covariates c = draw_covariates(start, rng);
    h[i] = c.height;
    b[i] = c.bmi;
    bh2[i] = c.bmi * (c.height / 100.0) * (c.height / 100.0);
    age[i] = c.age;
    hinge[i] = std::max(0.0, c.age - start.age_hinge);
    z[i] = unit(rng);
  }

  // p = (beta_height, beta_bmi, beta_age, noise_sd); the intercept then fixes the mean.
  auto stats = [&](const Eigen::Vector4d& p, double* intercept) {
    std::vector<double> total(pilot_n), imi(pilot_n);
    for (std::size_t i = 0; i < pilot_n; ++i) total[i] = p[0] * h[i] + p[1] * bh2[i] + p[2] * hinge[i] + std::abs(p[3]) * z[i];
    const double shift = targets.mean_total - mean(total);
    double ss = 0.0;
    for (std::size_t i = 0; i < pilot_n; ++i) {
      total[i] += shift;
      ss += (total[i] - targets.mean_total) * (total[i] - targets.mean_total);
      imi[i] = total[i] / ((h[i] / 100.0) * (h[i] / 100.0));
    }
    if (intercept) *intercept = shift;
    CalibrationTargets a;
    a.mean_total = targets.mean_total;
    a.sd_total = std::sqrt(ss / static_cast<double>(pilot_n - 1));
    a.r_total_height = corr(total, h);
    a.r_imi_bmi = corr(imi, b);
    a.r_imi_age = corr(imi, age);
    return a;
  };
  auto residual = [&](const Eigen::Vector4d& p) {
    const CalibrationTargets a = stats(p, nullptr);
    return Eigen::Vector4d((a.sd_total - targets.sd_total) / 10.0,
                           (a.r_total_height - targets.r_total_height) / 0.01,
                           (a.r_imi_bmi - targets.r_imi_bmi) / 0.01,
                           (a.r_imi_age - targets.r_imi_age) / 0.01);
  };

  Eigen::Vector4d p(start.beta_height, start.beta_bmi, start.beta_age, start.noise_sd);
  double mu = 1e-3;
  Eigen::Vector4d r = residual(p);
  int it = 0;
  for (; it < 200 && r.squaredNorm() > 1e-20; ++it) {
    Eigen::Matrix4d J;
    for (int k = 0; k < 4; ++k) {
      const double step = 1e-6 * std::max(1.0, std::abs(p[k]));
      Eigen::Vector4d q = p;
      q[k] += step;
      J.col(k) = (residual(q) - r) / step;
    }
    const Eigen::Matrix4d A = J.transpose() * J;
    const Eigen::Vector4d g = J.transpose() * r;
    bool improved = false;
    for (int tries = 0; tries < 30 && !improved; ++tries) {
      Eigen::Matrix4d D = A;
      D.diagonal() += mu * A.diagonal().cwiseMax(1e-12);
      const Eigen::Vector4d cand = p - D.ldlt().solve(g);
      const Eigen::Vector4d rc = residual(cand);
      if (rc.squaredNorm() < r.squaredNorm()) {
        p = cand;
        r = rc;
        mu = std::max(mu / 3.0, 1e-12);
        improved = true;
      } else {
        mu *= 4.0;
      }
    }
    if (!improved) break;
  }

  CalibrationReport rep;
  rep.model = start;
  rep.model.beta_height = p[0];
  rep.model.beta_bmi = p[1];
  rep.model.beta_age = p[2];
  rep.model.noise_sd = std::abs(p[3]);
  rep.achieved = stats(p, &rep.model.intercept);
  rep.iterations = it;
  return rep;
}

}  // namespace ilio
