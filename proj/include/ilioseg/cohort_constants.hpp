#pragma once

// Generated by tools/calibrate_cohort. Do not edit by hand.
// calibration version 1: pilot n=50000, seed 20240101
//   female: sd 72.100000000008222, r(total,height) 0.56000000000000405, r(imi,bmi) 0.48999999999999622, r(imi,age) -0.11999999999999941 after 6 iterations
//   male: sd 125.40000000002583, r(total,height) 0.5200000000000029, r(imi,bmi) 0.48999999999999766, r(imi,age) -0.31000000000000333 after 5 iterations

namespace ilio::cohort_calibration {

struct Coefficients {
  double intercept;
  double beta_height;
  double beta_bmi;
  double beta_age;
  double age_hinge;
  double noise_sd;
  double asym_sd;
};

inline constexpr int kVersion = 1;
inline constexpr double kAsymMean = 6.9;

inline constexpr Coefficients kFemale{-349.72623891176318, 4.4976434279480619, 2.4936914428283519, -0.6601217500517117, 44, 51.539667133226367, 16.100000000000001};
inline constexpr Coefficients kMale{-478.34014822903737, 5.3795517249352054, 4.4630224682973818, -5.6388736130645842, 62, 85.827893836084527, 22.800000000000001};

}  // namespace ilio::cohort_calibration
