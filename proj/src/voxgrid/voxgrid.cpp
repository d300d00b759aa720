#include "ilioseg/voxgrid.hpp"

#include <string>

namespace ilio {

namespace {

void check_label(int label) {
  if (label != kRightLabel && label != kLeftLabel) {
    throw ArgumentError("label must be 1 (right) or 2 (left), got " + std::to_string(label));
  }
}

}  // namespace

bool LandmarkPair::valid_for(const Dims& dims) const {
  auto inside = [&](const Voxel& v) {
    return v.x >= 0 && v.y >= 0 && v.z >= 0 && static_cast<std::size_t>(v.x) < dims.nx &&
           static_cast<std::size_t>(v.y) < dims.ny && static_cast<std::size_t>(v.z) < dims.nz;
  };
  return inside(right) && inside(left) && right.x < left.x;
}

double mask_volume_ml(const Mask3D& mask, int label) {
  check_label(label);
  std::size_t count = 0;
  for (auto v : mask.voxels()) count += (v == label);
  return static_cast<double>(count) * mask.spacing().voxel_mm3() / 1000.0;
}

double dsc(const Mask3D& a, const Mask3D& b, int label) {
  check_label(label);
  if (!(a.dims() == b.dims())) throw ArgumentError("dsc: mask dims differ");
  std::size_t tp = 0, fp = 0, fn = 0;
  auto va = a.voxels();
  auto vb = b.voxels();
  for (std::size_t i = 0; i < va.size(); ++i) {
    const bool in_a = va[i] == label;
    const bool in_b = vb[i] == label;
    tp += in_a && in_b;
    fp += !in_a && in_b;
    fn += in_a && !in_b;
  }
  const std::size_t denom = fp + 2 * tp + fn;
  if (denom == 0) return 1.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

Mask3D largest_component(const Mask3D& mask, int label) {
  check_label(label);
  const Dims& d = mask.dims();
  const auto src = mask.voxels();
  const long nx = static_cast<long>(d.nx), ny = static_cast<long>(d.ny),
             nz = static_cast<long>(d.nz);

  // Component id per voxel; 0 = unvisited / not the label.
  std::vector<std::uint32_t> comp(src.size(), 0);
  std::vector<std::size_t> sizes{0};
  std::vector<std::size_t> stack;
  std::uint32_t next = 1;

  // Scanning in linear order means each component is discovered at its
  // smallest index, so the first maximum wins ties.
  for (std::size_t start = 0; start < src.size(); ++start) {
    if (src[start] != label || comp[start] != 0) continue;
    std::size_t size = 0;
    comp[start] = next;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      ++size;
      const long x = static_cast<long>(i % d.nx);
      const long y = static_cast<long>((i / d.nx) % d.ny);
      const long z = static_cast<long>(i / (d.nx * d.ny));
      for (long dz = -1; dz <= 1; ++dz) {
        const long zz = z + dz;
        if (zz < 0 || zz >= nz) continue;
        for (long dy = -1; dy <= 1; ++dy) {
          const long yy = y + dy;
          if (yy < 0 || yy >= ny) continue;
          for (long dx = -1; dx <= 1; ++dx) {
            const long xx = x + dx;
            if (xx < 0 || xx >= nx) continue;
            const std::size_t j = static_cast<std::size_t>(xx + nx * (yy + ny * zz));
            if (src[j] == label && comp[j] == 0) {
              comp[j] = next;
              stack.push_back(j);
            }
          }
        }
      }
    }
    sizes.push_back(size);
    ++next;
  }

  std::uint32_t keep = 0;
  std::size_t best = 0;
  for (std::uint32_t c = 1; c < sizes.size(); ++c) {
    if (sizes[c] > best) {
      best = sizes[c];
      keep = c;
    }
  }

  std::vector<std::uint8_t> out(src.begin(), src.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] == label && comp[i] != keep) out[i] = kBackground;
  }
  return Mask3D(d, mask.spacing(), std::move(out));
}

}  // namespace ilio
