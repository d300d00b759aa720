#include "ilioseg/mvol.hpp"

#include <bit>
#include <fstream>
#include <iterator>

#include <json.hpp>

namespace ilio {

namespace {

constexpr std::string_view kMagic = "MVOL";
constexpr int kVersion = 1;

std::string header_line(const Dims& d, const Spacing& s, const char* kind, const char* dtype) {
  nlohmann::json h;
  h["magic"] = kMagic;
  h["version"] = kVersion;
  h["kind"] = kind;
  h["dtype"] = dtype;
  h["dims"] = {d.nx, d.ny, d.nz};
  h["spacing_mm"] = {s.dx, s.dy, s.dz};
  return h.dump() + "\n";
}

void append_f32_le(std::string& out, float v) {
  auto bits = std::bit_cast<std::uint32_t>(v);
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFFu));
}

float read_f32_le(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(p[b]) << (8 * b);
  return std::bit_cast<float>(bits);
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

std::string encode_mvol(const Volume3D& volume) {
  std::string out = header_line(volume.dims(), volume.spacing(), "image", "f32");
  out.reserve(out.size() + 4 * volume.size());
  for (float v : volume.voxels()) append_f32_le(out, v);
  return out;
}

std::string encode_mvol(const Mask3D& mask) {
  std::string out = header_line(mask.dims(), mask.spacing(), "mask", "u8");
  auto v = mask.voxels();
  out.append(reinterpret_cast<const char*>(v.data()), v.size());
  return out;
}

GridVariant decode_mvol(std::string_view bytes) {
  const auto nl = bytes.find('\n');
  if (nl == std::string_view::npos) throw FormatError("MVOL: missing header terminator");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(bytes.substr(0, nl));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("MVOL: header is not JSON: ") + e.what());
  }
  if (!h.is_object() || !h.contains("magic") || h["magic"] != kMagic) {
    throw FormatError("MVOL: unknown magic");
  }

  Dims dims;
  Spacing spacing;
  std::string kind, dtype;
  try {
    if (h.at("version").get<int>() != kVersion) throw FormatError("MVOL: unsupported version");
    kind = h.at("kind").get<std::string>();
    dtype = h.at("dtype").get<std::string>();
    const auto& d = h.at("dims");
    const auto& s = h.at("spacing_mm");
    if (d.size() != 3 || s.size() != 3) throw FormatError("MVOL: dims/spacing must have 3 entries");
    dims = {d[0].get<std::size_t>(), d[1].get<std::size_t>(), d[2].get<std::size_t>()};
    spacing = {s[0].get<double>(), s[1].get<double>(), s[2].get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("MVOL: bad header field: ") + e.what());
  }
  if (!dims.valid() || !spacing.valid()) throw FormatError("MVOL: invalid dims or spacing");

  const auto payload = bytes.substr(nl + 1);
  const auto* p = reinterpret_cast<const unsigned char*>(payload.data());

  if (kind == "image" && dtype == "f32") {
    if (payload.size() != 4 * dims.count()) {
      throw CorruptFileError("MVOL: payload holds " + std::to_string(payload.size() / 4) +
                             " voxels, header declares " + std::to_string(dims.count()));
    }
    std::vector<float> voxels(dims.count());
    for (std::size_t i = 0; i < voxels.size(); ++i) {
      voxels[i] = read_f32_le(p + 4 * i);
      if (!std::isfinite(voxels[i])) throw CorruptFileError("MVOL: non-finite image voxel");
    }
    return Volume3D(dims, spacing, std::move(voxels));
  }
  if (kind == "mask" && dtype == "u8") {
    if (payload.size() != dims.count()) {
      throw CorruptFileError("MVOL: payload holds " + std::to_string(payload.size()) +
                             " voxels, header declares " + std::to_string(dims.count()));
    }
    std::vector<std::uint8_t> voxels(p, p + payload.size());
    for (auto v : voxels) {
      if (v > kLeftLabel) throw CorruptFileError("MVOL: mask label outside {0,1,2}");
    }
    return Mask3D(dims, spacing, std::move(voxels));
  }
  throw FormatError("MVOL: unsupported kind/dtype " + kind + "/" + dtype);
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      out.close();
      std::filesystem::remove(tmp);
      throw std::runtime_error("write failed for " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

void write_mvol(const Volume3D& volume, const std::filesystem::path& path) {
  write_file_atomic(path, encode_mvol(volume));
}

void write_mvol(const Mask3D& mask, const std::filesystem::path& path) {
  write_file_atomic(path, encode_mvol(mask));
}

GridVariant read_mvol(const std::filesystem::path& path) { return decode_mvol(slurp(path)); }

Volume3D read_volume(const std::filesystem::path& path) {
  auto g = read_mvol(path);
  if (auto* v = std::get_if<Volume3D>(&g)) return std::move(*v);
  throw FormatError("MVOL: expected an image in " + path.string());
}

Mask3D read_mask(const std::filesystem::path& path) {
  auto g = read_mvol(path);
  if (auto* m = std::get_if<Mask3D>(&g)) return std::move(*m);
  throw FormatError("MVOL: expected a mask in " + path.string());
}

}  // namespace ilio
