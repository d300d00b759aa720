#include "ilioseg/trainer.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "ilioseg/autograd/adam.hpp"

namespace ilio {

namespace {

std::string format_number(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

ag::Tensor<float> stack_images(const std::vector<TrainingSample>& samples,
                               const std::vector<std::size_t>& order, std::size_t begin,
                               std::size_t end, bool masks) {
  const Dims d = samples[order[begin]].image.dims();
  const std::size_t vox = d.count();
  std::vector<float> data((end - begin) * vox);
  for (std::size_t b = begin; b < end; ++b) {
    const TrainingSample& s = samples[order[b]];
    float* dst = data.data() + (b - begin) * vox;
    if (masks) {
      auto src = s.mask.voxels();
      for (std::size_t i = 0; i < vox; ++i) dst[i] = src[i] ? 1.0f : 0.0f;
    } else {
      auto src = s.image.voxels();
      std::copy(src.begin(), src.end(), dst);
    }
  }
  return ag::Tensor<float>::from({end - begin, 1, d.nx, d.ny, d.nz}, std::move(data));
}

// Pastes a canonical-orientation probability crop back into full-grid coordinates.
void paste(std::vector<float>& grid, const Dims& gd, const float* crop, const CropSpec& spec,
           const Voxel& origin, bool mirrored) {
  const long cx = static_cast<long>(spec.dims[0]);
  const long cy = static_cast<long>(spec.dims[1]);
  const long cz = static_cast<long>(spec.dims[2]);
  for (long z = 0; z < cz; ++z) {
    const long gz = origin.z + z;
    if (gz < 0 || gz >= static_cast<long>(gd.nz)) continue;
    for (long y = 0; y < cy; ++y) {
      const long gy = origin.y + y;
      if (gy < 0 || gy >= static_cast<long>(gd.ny)) continue;
      for (long x = 0; x < cx; ++x) {
        const long gx = origin.x + x;
        if (gx < 0 || gx >= static_cast<long>(gd.nx)) continue;
        const long sx = mirrored ? cx - 1 - x : x;
        grid[gx + gd.nx * (gy + gd.ny * gz)] = crop[sx + cx * (y + cy * z)];
      }
    }
  }
}

}  // namespace

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.epochs = 2;
  c.batch_size = 3;
  c.lr = 1e-3;
  c.arch = ArchitectureSpec::desk();
  c.crop = CropSpec::desk();
  c.aug_count = 7;
  return c;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ArgumentError("epochs must be at least 1");
  if (batch_size < 1) throw ArgumentError("batch size must be at least 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ArgumentError("learning rate must be positive");
  if (aug_count < 0) throw ArgumentError("aug_count must be non-negative");
  arch.validate();
  crop.validate();
  if (arch.input_dims != crop.dims) throw ArgumentError("crop dims differ from model input dims");
}

std::string TrainConfig::canonical() const {
  std::ostringstream os;
  os << "epochs=" << epochs << "\nbatch_size=" << batch_size << "\nlr=" << format_number(lr)
     << "\nseed=" << seed << "\nwidth=" << format_number(arch.width) << "\ncrop=" << crop.dims[0]
     << "x" << crop.dims[1] << "x" << crop.dims[2] << "\naug_count=" << aug_count << "\n";
  return os.str();
}

std::string TrainConfig::digest() const { return fnv1a64_hex(canonical()); }

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, {0x5348554646ULL, static_cast<std::uint64_t>(epoch)}));
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

TrainResult train(const TrainConfig& config, const std::vector<TrainingSample>& samples,
                  const TrainOptions& options) {
  config.validate();
  if (samples.empty()) throw ArgumentError("training set is empty");
  const Dims want{config.crop.dims[0], config.crop.dims[1], config.crop.dims[2]};
  for (const auto& s : samples) {
    if (!(s.image.dims() == want) || !(s.mask.dims() == want)) {
      throw ArgumentError("training sample " + s.subject_id + " does not match the crop dims");
    }
  }

  TrainResult result{VNet<float>::build(config.arch, derive_seed(config.seed, {1})), {}};
  VNet<float>& model = result.model;
  model.metadata().seed = config.seed;
  model.metadata().config_digest = config.digest();

  auto params = model.parameter_tensors();
  ag::AdamState adam;
  adam.config.lr = config.lr;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto order = epoch_order(samples.size(), config.seed, epoch);
    double loss_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      ++steps;
      const auto x = stack_images(samples, order, begin, end, false);
      const auto g = stack_images(samples, order, begin, end, true);
      model.zero_grad();
      auto loss = ag::soft_dice_loss(model.forward(x), g);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(steps));
      }
      loss.backward();
      try {
        ag::adam_step<float>(params, adam);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " at epoch " + std::to_string(epoch) +
                           ", step " + std::to_string(steps));
      }
      loss_sum += value;
    }
    EpochReport report;
    report.epoch = epoch;
    report.loss = loss_sum / static_cast<double>(steps);
    result.history.loss.push_back(report.loss);
    if (options.validation && !options.validation->empty()) {
      const auto d = evaluate_dsc(model, *options.validation, config.crop);
      report.val_dsc = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
      result.history.val_dsc.push_back(report.val_dsc);
    }
    if (options.on_epoch) options.on_epoch(report);
  }
  model.zero_grad();
  return result;
}

Segmentation segment_subject(const VNet<float>& model, const Volume3D& volume,
                             const LandmarkPair& landmarks, const CropSpec& crop,
                             bool keep_largest_component) {
  crop.validate();
  if (model.spec().input_dims != crop.dims) {
    throw ArgumentError("crop dims do not match the model input dims");
  }
  if (!landmarks.valid_for(volume.dims())) throw ArgumentError("landmarks outside the volume");

  const Dims cd{crop.dims[0], crop.dims[1], crop.dims[2]};
  const std::size_t vox = cd.count();
  std::vector<float> batch(2 * vox);
  for (int k = 0; k < 2; ++k) {
    const Side side = k == 0 ? Side::right : Side::left;
    Volume3D img = crop_image(volume, landmarks.of(side), crop, side);
    if (side == Side::left) img = flip_x(img);
    img = normalize_zscore(img);
    auto v = img.voxels();
    std::copy(v.begin(), v.end(), batch.begin() + static_cast<std::ptrdiff_t>(k * vox));
  }

  ag::Tensor<float> probs;
  {
    ag::NoGradGuard guard;
    probs = model.forward(
        ag::Tensor<float>::from({2, 1, cd.nx, cd.ny, cd.nz}, std::move(batch)));
  }

  const Dims gd = volume.dims();
  std::vector<float> pr(gd.count(), 0.0f), pl(gd.count(), 0.0f);
  paste(pr, gd, probs.values().data(), crop, crop.origin(landmarks.right, Side::right), false);
  paste(pl, gd, probs.values().data() + vox, crop, crop.origin(landmarks.left, Side::left), true);

  std::vector<std::uint8_t> labels(gd.count(), kBackground);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool r = pr[i] > 0.5f;
    const bool l = pl[i] > 0.5f;
    if (r && l) {
      labels[i] = pl[i] > pr[i] ? kLeftLabel : kRightLabel;
    } else if (r) {
      labels[i] = kRightLabel;
    } else if (l) {
      labels[i] = kLeftLabel;
    }
  }
  Segmentation out{Mask3D(gd, volume.spacing(), std::move(labels)), 0.0, 0.0};
  if (keep_largest_component) {
    out.mask = largest_component(largest_component(out.mask, kRightLabel), kLeftLabel);
  }
  out.right_ml = mask_volume_ml(out.mask, kRightLabel);
  out.left_ml = mask_volume_ml(out.mask, kLeftLabel);
  return out;
}

std::vector<double> evaluate_dsc(const VNet<float>& model,
                                 const std::vector<SubjectVolumes>& subjects,
                                 const CropSpec& crop) {
  std::vector<double> out(subjects.size());
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    const auto& s = subjects[i];
    const auto seg = segment_subject(model, s.image, s.landmarks, crop);
    out[i] = 0.5 * (dsc(seg.mask, s.mask, kRightLabel) + dsc(seg.mask, s.mask, kLeftLabel));
  }
  return out;
}

}  // namespace ilio
