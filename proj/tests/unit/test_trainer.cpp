#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "ilioseg/phantom.hpp"
#include "ilioseg/trainer.hpp"

using namespace ilio;

namespace {

TrainConfig tiny_config() {
  TrainConfig c;
  c.epochs = 3;
  c.batch_size = 2;
  c.lr = 1e-2;
  c.seed = 31;
  c.crop = CropSpec{{16, 16, 32}};
  c.arch = ArchitectureSpec{{16, 16, 32}, 0.25};
  c.aug_count = 0;
  return c;
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

bool same_parameters(const VNet<float>& a, const VNet<float>& b) {
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    const auto va = a.parameters()[i].tensor.values(), vb = b.parameters()[i].tensor.values();
    if (!std::equal(va.begin(), va.end(), vb.begin(), vb.end())) return false;
  }
  return true;
}

// Trained once and shared by the segmentation cases.
const TrainResult& overfit_model() {
  static const TrainResult r = [] {
    auto c = tiny_config();
    c.epochs = 120;
    const auto subjects = phantom_subjects(1, 40);
    auto samples = build_training_set(subjects, c.crop, 0, 1);
    samples.resize(2);  // right side, plain and flipped
    return train(c, samples);
  }();
  return r;
}

}  // namespace

TEST_CASE("config validation and digest") {
  CHECK_NOTHROW(TrainConfig::paper().validate());
  CHECK_NOTHROW(TrainConfig::desk().validate());
  CHECK(TrainConfig::desk().arch.input_dims == TrainConfig::desk().crop.dims);
  auto c = tiny_config();
  c.crop = CropSpec::desk();
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c = tiny_config();
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c = tiny_config();
  c.lr = -1;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  CHECK(tiny_config().digest() == tiny_config().digest());
  c = tiny_config();
  c.seed += 1;
  CHECK(c.digest() != tiny_config().digest());
  CHECK_THROWS_AS(train(tiny_config(), {}), ArgumentError);
}

TEST_CASE("epoch order is a seeded permutation") {
  const auto a = epoch_order(50, 3, 1);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::size_t> iota(50);
  std::iota(iota.begin(), iota.end(), 0);
  CHECK(sorted == iota);
  CHECK(a == epoch_order(50, 3, 1));
  CHECK(a != epoch_order(50, 3, 2));
  CHECK(a != epoch_order(50, 4, 1));
}

TEST_CASE("training is deterministic and reports every epoch") {
  const auto subjects = phantom_subjects(2, 41);
  const auto c = tiny_config();
  const auto samples = build_training_set({subjects[0]}, c.crop, 0, 2);
  std::vector<EpochReport> reports;
  TrainOptions opt;
  opt.validation = &subjects;
  opt.on_epoch = [&](const EpochReport& r) { reports.push_back(r); };
  const auto a = train(c, samples, opt);
  const auto b = train(c, samples, opt);
  CHECK(a.history.loss.size() == 3);
  CHECK(a.history.val_dsc.size() == 3);
  REQUIRE(reports.size() == 6);
  CHECK(reports[0].epoch == 1);
  CHECK(reports[2].epoch == 3);
  CHECK(reports[2].loss == a.history.loss[2]);
  CHECK(a.history.loss == b.history.loss);
  CHECK(a.history.val_dsc == b.history.val_dsc);
  CHECK(same_parameters(a.model, b.model));
  CHECK(a.model.metadata().seed == c.seed);
  CHECK(a.model.metadata().config_digest == c.digest());
  CHECK(train(c, samples).history.val_dsc.empty());

  auto other = c;
  other.seed = 32;
  CHECK(!same_parameters(a.model, train(other, samples).model));
}

TEST_CASE("overfits two samples") {
  const auto& r = overfit_model();
  CHECK(*std::min_element(r.history.loss.begin(), r.history.loss.end()) < 0.05);
  const auto& l = r.history.loss;
  CHECK(std::accumulate(l.end() - 10, l.end(), 0.0) < std::accumulate(l.begin(), l.begin() + 10, 0.0));
}

TEST_CASE("an untrained model segments poorly") {
  const auto c = TrainConfig::desk();
  const auto subjects = phantom_subjects(3, 42);
  double sum = 0;
  std::size_t n = 0;
  for (std::uint64_t seed : {5u, 6u, 7u}) {
    const auto d = evaluate_dsc(VNet<float>::build(c.arch, seed), subjects, c.crop);
    REQUIRE(d.size() == 3);
    for (double v : d) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      sum += v, ++n;
    }
  }
  CHECK(sum / n < 0.5);
}

TEST_CASE("segmentation output") {
  const auto& model = overfit_model().model;
  const auto crop = tiny_config().crop;
  const auto s = phantom_subjects(1, 43).front();
  const auto seg = segment_subject(model, s.image, s.landmarks, crop);
  CHECK(seg.mask.dims() == s.image.dims());
  CHECK(std::all_of(seg.mask.voxels().begin(), seg.mask.voxels().end(), [](auto v) { return v <= 2; }));
  CHECK(seg.left_ml == doctest::Approx(mask_volume_ml(seg.mask, kLeftLabel)));
  CHECK(seg.right_ml == doctest::Approx(mask_volume_ml(seg.mask, kRightLabel)));
  CHECK(seg.right_ml > 0);
  const double crop_ml = 16 * 16 * 32 * s.image.spacing().voxel_mm3() / 1000.0;
  CHECK(seg.right_ml <= crop_ml);
  CHECK(seg.left_ml <= crop_ml);

  const auto kept = segment_subject(model, s.image, s.landmarks, crop, true);
  CHECK(kept.right_ml <= seg.right_ml);
  CHECK(kept.mask == largest_component(largest_component(kept.mask, kRightLabel), kLeftLabel));

  CHECK_THROWS_AS(segment_subject(model, s.image, s.landmarks, CropSpec::desk()), ArgumentError);
}

TEST_CASE("segmentation commutes with mirroring the subject") {
  const auto& model = overfit_model().model;
  const auto crop = tiny_config().crop;
  const auto s = phantom_subjects(1, 44).front();
  const long nx = static_cast<long>(s.image.dims().nx);
  LandmarkPair flipped{{nx - 1 - s.landmarks.left.x, s.landmarks.left.y, s.landmarks.left.z},
                       {nx - 1 - s.landmarks.right.x, s.landmarks.right.y, s.landmarks.right.z}};
  const auto a = segment_subject(model, s.image, s.landmarks, crop);
  const auto b = segment_subject(model, flip_x(s.image), flipped, crop);
  CHECK(a.left_ml == b.right_ml);
  CHECK(a.right_ml == b.left_ml);
}

TEST_CASE("symmetric phantom gives matching side volumes") {
  const auto& model = overfit_model().model;
  const auto crop = tiny_config().crop;
  for (const auto& s : phantom_subjects(3, 45, true)) {
    const auto seg = segment_subject(model, s.image, s.landmarks, crop);
    CHECK(std::fabs(seg.left_ml - seg.right_ml) <= 0.05 * std::max(seg.left_ml, seg.right_ml));
  }
}
