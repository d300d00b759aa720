#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <queue>

#include "ilioseg/mvol.hpp"
#include "ilioseg/voxgrid.hpp"
#include "oracles.hpp"

using namespace ilio;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "ilioseg_unit";
  fs::create_directories(dir);
  return dir / name;
}

Mask3D random_mask(oracle::Rng& rng, Dims d, double fill) {
  std::vector<std::uint8_t> v(d.count());
  for (auto& x : v) x = oracle::uniform(rng, 0, 1) < fill ? static_cast<std::uint8_t>(oracle::pick(rng, 1, 2)) : 0;
  return Mask3D(d, {1, 1, 1}, std::move(v));
}

// Breadth-first labelling of 26-connected components; returns component sizes
// and, per voxel, its component id (-1 outside `label`).
std::vector<std::size_t> flood_sizes(const Mask3D& m, int label, std::vector<int>& comp) {
  const Dims d = m.dims();
  comp.assign(d.count(), -1);
  std::vector<std::size_t> sizes;
  for (std::size_t start = 0; start < d.count(); ++start) {
    if (m.voxels()[start] != label || comp[start] >= 0) continue;
    const int id = static_cast<int>(sizes.size());
    sizes.push_back(0);
    std::queue<std::size_t> q;
    q.push(start);
    comp[start] = id;
    while (!q.empty()) {
      const std::size_t i = q.front();
      q.pop();
      ++sizes[id];
      const long x = i % d.nx, y = (i / d.nx) % d.ny, z = i / (d.nx * d.ny);
      for (long dz = -1; dz <= 1; ++dz)
        for (long dy = -1; dy <= 1; ++dy)
          for (long dx = -1; dx <= 1; ++dx) {
            const long a = x + dx, b = y + dy, c = z + dz;
            if (a < 0 || b < 0 || c < 0 || a >= (long)d.nx || b >= (long)d.ny || c >= (long)d.nz) continue;
            const std::size_t j = a + d.nx * (b + d.ny * c);
            if (m.voxels()[j] == label && comp[j] < 0) {
              comp[j] = id;
              q.push(j);
            }
          }
    }
  }
  return sizes;
}

}  // namespace

TEST_CASE("grid constructors reject bad headers and values") {
  CHECK_THROWS_AS(Volume3D(Dims{0, 1, 1}, Spacing{}), ArgumentError);
  CHECK_THROWS_AS(Volume3D(Dims{1, 1, 1}, Spacing{0, 1, 1}), ArgumentError);
  CHECK_THROWS_AS(Volume3D(Dims{2, 2, 2}, Spacing{}, std::vector<float>(7)), ArgumentError);
  CHECK_THROWS_AS(Mask3D(Dims{1, 1, 1}, Spacing{}, std::uint8_t{3}), ArgumentError);
  CHECK_THROWS_AS(Volume3D(Dims{1, 1, 1}, Spacing{}, std::vector<float>{NAN}), ArgumentError);
}

TEST_CASE("mvol round trip is exact") {
  oracle::Rng rng(3);
  std::vector<float> v(3 * 4 * 5);
  for (auto& x : v) x = static_cast<float>(oracle::uniform(rng, -10, 10));
  const Volume3D vol({3, 4, 5}, {0.5, 1.25, 3.0}, v);
  const auto p = temp_path("rt.mvol");
  write_mvol(vol, p);
  CHECK(read_volume(p) == vol);
  const Mask3D m = random_mask(rng, {4, 3, 2}, 0.5);
  write_mvol(m, p);
  CHECK(read_mask(p) == m);
  CHECK_THROWS_AS(read_volume(p), FormatError);
}

TEST_CASE("mvol payload of a single 1.0f voxel") {
  const std::string bytes = encode_mvol(Volume3D({1, 1, 1}, {1, 1, 1}, 1.0f));
  const auto nl = bytes.find('\n');
  REQUIRE(nl != std::string::npos);
  const std::string payload = bytes.substr(nl + 1);
  REQUIRE(payload.size() == 4);
  CHECK(static_cast<unsigned char>(payload[0]) == 0x00);
  CHECK(static_cast<unsigned char>(payload[1]) == 0x00);
  CHECK(static_cast<unsigned char>(payload[2]) == 0x80);
  CHECK(static_cast<unsigned char>(payload[3]) == 0x3F);
}

TEST_CASE("mvol corrupt and unknown files") {
  std::string bytes = encode_mvol(Volume3D({2, 2, 2}, {1, 1, 1}, 0.0f));
  CHECK_THROWS_AS(decode_mvol(bytes.substr(0, bytes.size() - 4)), CorruptFileError);
  CHECK_THROWS_AS(decode_mvol(bytes + "xxxx"), CorruptFileError);
  std::string bad = bytes;
  bad.replace(bad.find("MVOL"), 4, "NOPE");
  CHECK_THROWS_AS(decode_mvol(bad), FormatError);
  CHECK_THROWS_AS(decode_mvol("not json\n"), FormatError);
}

TEST_CASE("mask_volume_ml examples") {
  CHECK(mask_volume_ml(Mask3D({10, 10, 10}, {1, 1, 1}, std::uint8_t{1}), 1) == doctest::Approx(1.0));
  CHECK(mask_volume_ml(Mask3D({10, 10, 10}, {1, 1, 1}, std::uint8_t{1}), 2) == 0.0);
  CHECK(mask_volume_ml(Mask3D({2, 2, 2}, {2, 2, 3}, std::uint8_t{2}), 2) == doctest::Approx(0.096));
  CHECK_THROWS_AS(mask_volume_ml(Mask3D({1, 1, 1}, {}), 0), ArgumentError);
  CHECK_THROWS_AS(mask_volume_ml(Mask3D({1, 1, 1}, {}), 3), ArgumentError);
}

TEST_CASE("mask volume is additive over labels and flip invariant") {
  oracle::Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Dims d{oracle::pick(rng, 1, 7), oracle::pick(rng, 1, 7), oracle::pick(rng, 1, 7)};
    Mask3D m = random_mask(rng, d, 0.6);
    const Spacing sp{oracle::uniform(rng, 0.5, 3), oracle::uniform(rng, 0.5, 3), oracle::uniform(rng, 0.5, 3)};
    m = Mask3D(d, sp, std::vector<std::uint8_t>(m.voxels().begin(), m.voxels().end()));
    std::size_t nonzero = 0;
    for (auto v : m.voxels()) nonzero += v != 0;
    CHECK(mask_volume_ml(m, 1) + mask_volume_ml(m, 2) ==
          doctest::Approx(nonzero * sp.voxel_mm3() / 1000.0));
    CHECK(mask_volume_ml(flip_x(m), 1) == mask_volume_ml(m, 1));
    CHECK(mask_volume_ml(flip_x(m), 2) == mask_volume_ml(m, 2));
  }
}

TEST_CASE("dsc examples") {
  const Dims d{4, 1, 1};
  const Mask3D a(d, {}, std::vector<std::uint8_t>{1, 1, 0, 0});
  const Mask3D b(d, {}, std::vector<std::uint8_t>{0, 0, 1, 1});
  CHECK(dsc(a, a, 1) == 1.0);
  CHECK(dsc(a, b, 1) == 0.0);
  const Mask3D e(d, {}, std::uint8_t{0});
  CHECK(dsc(e, e, 1) == 1.0);
  // TP=3, FP=1, FN=1
  const Mask3D p({5, 1, 1}, {}, std::vector<std::uint8_t>{1, 1, 1, 1, 0});
  const Mask3D g({5, 1, 1}, {}, std::vector<std::uint8_t>{1, 1, 1, 0, 1});
  CHECK(dsc(p, g, 1) == 0.75);
  CHECK_THROWS_AS(dsc(a, p, 1), ArgumentError);
}

TEST_CASE("dsc is symmetric, flip invariant and matches voxel counting") {
  oracle::Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const Dims d{oracle::pick(rng, 1, 6), oracle::pick(rng, 1, 6), oracle::pick(rng, 1, 6)};
    const Mask3D a = random_mask(rng, d, 0.5), b = random_mask(rng, d, 0.5);
    for (int label : {1, 2}) {
      std::size_t tp = 0, fp = 0, fn = 0;
      for (std::size_t i = 0; i < d.count(); ++i) {
        const bool x = a.voxels()[i] == label, y = b.voxels()[i] == label;
        tp += x && y;
        fp += x && !y;
        fn += !x && y;
      }
      const double expect = tp + fp + fn == 0 ? 1.0 : 2.0 * tp / (fp + 2.0 * tp + fn);
      CHECK(dsc(a, b, label) == expect);
      CHECK(dsc(a, b, label) == dsc(b, a, label));
      CHECK(dsc(flip_x(a), flip_x(b), label) == dsc(a, b, label));
    }
  }
}

TEST_CASE("flip_x moves x=0 to nx-1 and is an involution") {
  Mask3D m({5, 2, 2}, {1, 2, 3}, std::uint8_t{0});
  m.set(0, 1, 1, 2);
  const Mask3D f = flip_x(m);
  CHECK(f(4, 1, 1) == 2);
  CHECK(f(0, 1, 1) == 0);
  CHECK(f.spacing() == m.spacing());
  CHECK(flip_x(f) == m);
}

TEST_CASE("largest_component") {
  SUBCASE("sizes 10 and 3") {
    Mask3D m({12, 3, 3}, {}, std::uint8_t{0});
    for (int x = 0; x < 10; ++x) m.set(x, 0, 0, 1);
    for (int x = 0; x < 3; ++x) m.set(x, 2, 2, 1);
    m.set(11, 1, 1, 2);
    const Mask3D out = largest_component(m, 1);
    std::size_t kept = 0;
    for (auto v : out.voxels()) kept += v == 1;
    CHECK(kept == 10);
    CHECK(out(0, 2, 2) == 0);
    CHECK(out(11, 1, 1) == 2);
  }
  SUBCASE("empty and single component") {
    const Mask3D e({3, 3, 3}, {}, std::uint8_t{0});
    CHECK(largest_component(e, 1) == e);
    Mask3D one({3, 3, 3}, {}, std::uint8_t{0});
    one.set(0, 0, 0, 1);
    one.set(1, 1, 1, 1);  // diagonal neighbour
    CHECK(largest_component(one, 1) == one);
  }
  SUBCASE("matches a flood-fill oracle") {
    oracle::Rng rng(9);
    for (int trial = 0; trial < 30; ++trial) {
      const Dims d{oracle::pick(rng, 2, 8), oracle::pick(rng, 2, 8), oracle::pick(rng, 2, 8)};
      const Mask3D m = random_mask(rng, d, 0.15);
      std::vector<int> comp;
      const auto sizes = flood_sizes(m, 1, comp);
      const Mask3D out = largest_component(m, 1);
      if (sizes.empty()) {
        CHECK(out == m);
        continue;
      }
      // Components are discovered in linear order, so the first maximum has
      // the smallest minimal index.
      const int best = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
      for (std::size_t i = 0; i < d.count(); ++i) {
        const std::uint8_t expect = m.voxels()[i] == 1 ? (comp[i] == best ? 1 : 0) : m.voxels()[i];
        REQUIRE(out.voxels()[i] == expect);
      }
    }
  }
}

TEST_CASE("landmark pair validity") {
  const Dims d{10, 10, 10};
  CHECK(LandmarkPair{{2, 5, 5}, {7, 5, 5}}.valid_for(d));
  CHECK_FALSE(LandmarkPair{{7, 5, 5}, {2, 5, 5}}.valid_for(d));
  CHECK_FALSE(LandmarkPair{{2, 5, 5}, {10, 5, 5}}.valid_for(d));
}

TEST_CASE("atomic write replaces the target in one step") {
  const auto p = temp_path("atomic.bin");
  write_file_atomic(p, "first");
  write_file_atomic(p, "second");
  std::ifstream f(p);
  std::string s;
  f >> s;
  CHECK(s == "second");
  for (const auto& e : fs::directory_iterator(p.parent_path())) {
    CHECK(e.path().filename().string().find(".tmp") == std::string::npos);
  }
}
