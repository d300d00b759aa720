#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ilioseg/rng.hpp"
#include "ilioseg/voxgrid.hpp"

namespace ilio {

enum class Sex { female, male };
enum class Handedness { left, right };

const char* sex_name(Sex s);
const char* handedness_name(Handedness h);
Sex parse_sex(const std::string& s);
Handedness parse_handedness(const std::string& s);

struct SubjectRecord {
  std::string id;
  Sex sex = Sex::female;
  int age = 44;
  double height_cm = 0.0;
  double weight_kg = 0.0;
  double bmi = 0.0;
  Handedness handedness = Handedness::right;
  double true_left_ml = 0.0;
  double true_right_ml = 0.0;

  bool operator==(const SubjectRecord&) const = default;
};

// Covariate distribution and planted volume model for one sex.
//   total = intercept + beta_height*h + beta_bmi*bmi*(h/100)^2
//         + beta_age*max(0, age - age_hinge) + noise_sd*N(0,1)
//   right - left ~ N(asym_mean, asym_sd)
struct SexModel {
  double height_mean = 0.0;
  double height_sd = 0.0;
  double bmi_mean = 0.0;
  double bmi_sd = 0.0;
  double bmi_min = 0.0;
  double bmi_max = 0.0;

  double intercept = 0.0;
  double beta_height = 0.0;
  double beta_bmi = 0.0;
  double beta_age = 0.0;
  double age_hinge = 44.0;
  double noise_sd = 0.0;
  double asym_sd = 0.0;
};

struct CohortSpec {
  std::size_t n = 0;
  std::uint64_t seed = 0;
  double female_fraction = 0.5;
  double right_handed_fraction = 0.9;
  double asym_mean = 6.9;
  SexModel female;
  SexModel male;

  // Coefficients from the frozen calibration.
  static CohortSpec calibrated(std::size_t n, std::uint64_t seed);
  const SexModel& model(Sex s) const { return s == Sex::male ? male : female; }
  // Throws ArgumentError.
  void validate() const;
};

inline constexpr int kMinAge = 44;
inline constexpr int kMaxAge = 82;
// Four age groups, each drawn with equal weight.
inline constexpr std::array<std::pair<int, int>, 4> kAgeGroups{{{44, 53}, {54, 63}, {64, 72}, {73, 82}}};

// Covariates only (sex, age, height, BMI, weight, handedness) from `rng`.
SubjectRecord sample_covariates(const CohortSpec& spec, Rng& rng);

// Returns (true_left_ml, true_right_ml).
std::pair<double, double> plant_volumes(const SubjectRecord& subject, const CohortSpec& spec, Rng& rng);

// Subject i uses subject_rng(spec.seed, i); ids are "S0001", "S0002", ...
std::vector<SubjectRecord> sample_cohort(const CohortSpec& spec);

std::string subject_id(std::size_t index);

// CSV columns: id, sex, age, height_cm, weight_kg, bmi, handedness, true_left_ml, true_right_ml
void write_cohort_csv(const std::vector<SubjectRecord>& cohort, const std::filesystem::path& path);
std::vector<SubjectRecord> read_cohort_csv(const std::filesystem::path& path);

// --- image synthesis -------------------------------------------------------

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

// Tube for the right muscle, in millimetres. The left tube mirrors it in x.
// The centerline is the cubic through the four control points (equally spaced
// in z, inferior first); the radius tapers linearly from inferior to superior.
struct TubeShape {
  std::array<Point3, 4> control;
  double taper_inferior = 1.25;
  double taper_superior = 0.75;
  double jitter_mm = 2.0;  // per-subject control point perturbation (SD)
};

struct PhantomGeometry {
  Dims dims;
  Spacing spacing;
  TubeShape right_tube;
  Point3 body_center;  // mm
  Point3 body_radii;   // mm, ellipsoid semi-axes
  double body_intensity = 0.3;
  double tube_intensity = 1.0;
  double tube_intensity_spread = 0.1;  // uniform +- around tube_intensity
  double noise_sd = 0.1;

  static PhantomGeometry desk();
  static PhantomGeometry paper();
  // Throws GeometryError when the nominal tubes or body leave the grid.
  void validate() const;
};

struct SyntheticSubject {
  Volume3D image;
  Mask3D mask;
  LandmarkPair landmarks;
};

struct TubeRaster {
  std::vector<Voxel> voxels;
  Voxel inferior_end;
};

// Rasterises one tube at voxel centres with radius scale `scale` (mm).
TubeRaster rasterize_tube(const TubeShape& tube, const PhantomGeometry& g, double scale);
// Closed-form volume of the continuous tube (ml).
double analytic_tube_ml(const TubeShape& tube, double scale);

// Two tubes whose rasterised volumes match the planted ones (within 0.5%).
// With `symmetric`, the left half is an exact mirror of the right half
// (tube, body and noise), using the right volume for both sides.
SyntheticSubject synthesize_subject(const SubjectRecord& subject, const PhantomGeometry& geometry,
                                    std::uint64_t seed, bool symmetric = false);

// --- calibration ------------------------------------------------------------

struct CalibrationTargets {
  double mean_total = 0.0;
  double sd_total = 0.0;
  double r_total_height = 0.0;
  double r_imi_bmi = 0.0;
  double r_imi_age = 0.0;
};

struct CalibrationReport {
  SexModel model;
  CalibrationTargets achieved;
  int iterations = 0;
};

CalibrationTargets paper_targets(Sex s);

// Covariate distribution of one sex with zero volume coefficients; the age
// hinge is 62 for men and 44 (linear over the whole range) for women.
SexModel covariate_model(Sex s);

// Fits intercept, beta_height, beta_bmi, beta_age and noise_sd of `start` so
// that a pilot sample of `pilot_n` draws reproduces `targets`.
CalibrationReport calibrate_sex_model(Sex s, SexModel start, const CalibrationTargets& targets,
                                      std::size_t pilot_n, std::uint64_t seed);

}  // namespace ilio
