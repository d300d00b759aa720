#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ilioseg/prep.hpp"
#include "ilioseg/vnet.hpp"

namespace ilio {

struct TrainConfig {
  int epochs = 100;
  std::size_t batch_size = 3;
  double lr = 1e-4;
  std::uint64_t seed = 0;
  ArchitectureSpec arch = ArchitectureSpec::paper();
  CropSpec crop = CropSpec::paper();
  int aug_count = 7;

  static TrainConfig paper() { return {}; }
  static TrainConfig desk();

  // Throws ArgumentError.
  void validate() const;
  // Canonical "key=value" text; its FNV-1a hash is stored in checkpoints.
  std::string canonical() const;
  std::string digest() const;
};

struct TrainHistory {
  std::vector<double> loss;     // mean training loss per epoch
  std::vector<double> val_dsc;  // mean validation DSC per epoch, empty without validation
};

struct TrainResult {
  VNet<float> model;
  TrainHistory history;
};

struct EpochReport {
  int epoch = 0;  // 1-based
  double loss = 0.0;
  double val_dsc = -1.0;  // negative without validation
};

struct TrainOptions {
  const std::vector<SubjectVolumes>* validation = nullptr;
  std::function<void(const EpochReport&)> on_epoch;
};

// Mini-batch Adam on the soft Dice loss. Batches follow a per-epoch shuffle
// derived from the seed. Throws NumericError naming the epoch and step when
// the loss or a gradient is not finite.
TrainResult train(const TrainConfig& config, const std::vector<TrainingSample>& samples,
                  const TrainOptions& options = {});

// Fisher-Yates order of 0..n-1 for the given epoch.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch);

struct Segmentation {
  Mask3D mask;
  double left_ml = 0.0;
  double right_ml = 0.0;
};

// Both sides through the network (left mirrored to canonical and back),
// thresholded at 0.5; a voxel claimed by both sides goes to the higher
// probability. Throws ArgumentError when the crop does not match the model.
Segmentation segment_subject(const VNet<float>& model, const Volume3D& volume,
                             const LandmarkPair& landmarks, const CropSpec& crop,
                             bool keep_largest_component = false);

// Per subject: mean over both sides of the DSC against the ground-truth mask.
std::vector<double> evaluate_dsc(const VNet<float>& model,
                                 const std::vector<SubjectVolumes>& subjects, const CropSpec& crop);

}  // namespace ilio
