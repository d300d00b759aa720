#include "ilioseg/vnet.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>

#include "ilioseg/mvol.hpp"

namespace ilio {

namespace {

constexpr std::string_view kCheckpointMagic = "ILIOCKPT";
constexpr int kCheckpointVersion = 1;

template <typename T>
constexpr const char* dtype_name() {
  return sizeof(T) == 4 ? "f32" : "f64";
}

struct BlockPlan {
  const char* name;
  std::size_t convs;
  std::size_t base;  // paper-scale filters inside the block
};

// Encoder I, D1..D3; then L; decoder U1..U3.
constexpr BlockPlan kEncoder[] = {{"I", 1, 8}, {"D1", 2, 32}, {"D2", 3, 64}, {"D3", 3, 128}};
constexpr std::size_t kDownOut[] = {16, 64, 128, 128};
constexpr BlockPlan kBottom = {"L", 3, 128};
constexpr std::size_t kBottomUp = 64;
constexpr BlockPlan kDecoder[] = {{"U1", 3, 128}, {"U2", 3, 64}, {"U3", 3, 32}};
constexpr std::size_t kDecoderUp[] = {64, 32, 16};
constexpr std::size_t kFinalBase = 16;

std::array<std::size_t, 3> spatial(const ag::Shape& s) { return {s[2], s[3], s[4]}; }

}  // namespace

std::string fnv1a64_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::size_t ArchitectureSpec::filters(std::size_t base) const {
  const double f = std::round(static_cast<double>(base) * width);
  return f < 1.0 ? 1 : static_cast<std::size_t>(f);
}

void ArchitectureSpec::validate() const {
  if (!(width > 0.0) || !std::isfinite(width)) throw SpecError("architecture: width must be positive");
  for (std::size_t d : input_dims) {
    if (d == 0 || d % 16 != 0) {
      throw SpecError("architecture: input dims must be positive multiples of 16, got " +
                      std::to_string(input_dims[0]) + "x" + std::to_string(input_dims[1]) + "x" +
                      std::to_string(input_dims[2]));
    }
  }
}

nlohmann::json ArchitectureSpec::to_json() const {
  nlohmann::json j;
  j["input_dims"] = input_dims;
  j["width"] = width;
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : kEncoder) blocks.push_back({{"block", b.name}, {"convs", b.convs}, {"filters", filters(b.base)}});
  blocks.push_back({{"block", kBottom.name}, {"convs", kBottom.convs}, {"filters", filters(kBottom.base)}});
  for (const auto& b : kDecoder) blocks.push_back({{"block", b.name}, {"convs", b.convs}, {"filters", filters(b.base)}});
  blocks.push_back({{"block", "F"}, {"convs", 1}, {"filters", filters(kFinalBase)}});
  j["blocks"] = blocks;
  return j;
}

ArchitectureSpec ArchitectureSpec::from_json(const nlohmann::json& j) {
  ArchitectureSpec s;
  s.input_dims = j.at("input_dims").get<std::array<std::size_t, 3>>();
  s.width = j.at("width").get<double>();
  s.validate();
  if (j.contains("blocks") && j.at("blocks") != s.to_json().at("blocks")) {
    throw SpecError("architecture: block list does not match the supported layout");
  }
  return s;
}

std::string ArchitectureSpec::digest() const { return fnv1a64_hex(to_json().dump()); }

template <typename T>
void VNet<T>::register_kernel(const std::string& name, ag::ConvKernel<T>& k) {
  params_.push_back({name + ".weight", k.weight});
  params_.push_back({name + ".bias", k.bias});
}

template <typename T>
VNet<T> VNet<T>::build(const ArchitectureSpec& spec, std::uint64_t seed) {
  spec.validate();
  VNet net;
  net.spec_ = spec;
  net.metadata_.seed = seed;
  using K = ag::ConvKernel<T>;

  auto make_block = [&](const BlockPlan& plan, std::size_t in_ch, Block& b) {
    const std::size_t m = spec.filters(plan.base);
    const std::string name = plan.name;
    std::size_t c = in_ch;
    for (std::size_t i = 0; i < plan.convs; ++i) {
      b.convs.push_back(K::create(m, c, 5));
      c = m;
    }
    for (std::size_t i = 0; i < b.convs.size(); ++i) net.register_kernel(name + ".conv" + std::to_string(i), b.convs[i]);
    if (in_ch != m) {
      b.projection = K::create(m, in_ch, 1);
      net.register_kernel(name + ".proj", b.projection);
    }
    return m;
  };

  std::size_t ch = 1;
  std::vector<std::size_t> skip_ch;
  for (std::size_t i = 0; i < 4; ++i) {
    Block b;
    const std::size_t m = make_block(kEncoder[i], ch, b);
    skip_ch.push_back(m);
    const std::size_t down = spec.filters(kDownOut[i]);
    b.resample = K::create(down, m, 2);
    net.register_kernel(std::string(kEncoder[i].name) + ".down", b.resample);
    net.encoder_.push_back(std::move(b));
    ch = down;
  }
  {
    const std::size_t m = make_block(kBottom, ch, net.bottom_);
    const std::size_t up = spec.filters(kBottomUp);
    net.bottom_.resample = K::create(m, up, 2, true);
    net.register_kernel("L.up", net.bottom_.resample);
    ch = up;
  }
  for (std::size_t i = 0; i < 3; ++i) {
    Block b;
    const std::size_t in = ch + skip_ch[3 - i];
    const std::size_t m = make_block(kDecoder[i], in, b);
    const std::size_t up = spec.filters(kDecoderUp[i]);
    b.resample = K::create(m, up, 2, true);
    net.register_kernel(std::string(kDecoder[i].name) + ".up", b.resample);
    net.decoder_.push_back(std::move(b));
    ch = up;
  }
  {
    const BlockPlan f{"F", 1, kFinalBase};
    const std::size_t m = make_block(f, ch + skip_ch[0], net.final_);
    net.final_.head = K::create(1, m, 1);
    net.register_kernel("F.out", net.final_.head);
  }

  std::mt19937_64 rng(seed);
  for (auto& p : net.params_) {
    if (p.tensor.rank() != 5) continue;  // biases stay zero
    const bool transpose = p.name.ends_with(".up.weight");
    const auto& s = p.tensor.shape();
    const double fan_in = transpose ? static_cast<double>(s[0])
                                    : static_cast<double>(s[1] * s[2] * s[3] * s[4]);
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(fan_in));
    for (T& w : p.tensor.mutable_values()) w = static_cast<T>(dist(rng));
  }
  return net;
}

template <typename T>
ag::Tensor<T> VNet<T>::run_convs(const Block& b, const ag::Tensor<T>& x) const {
  ag::Tensor<T> h = x;
  for (const auto& k : b.convs) h = ag::selu(ag::conv3d(h, k));
  return h;
}

template <typename T>
ag::Tensor<T> VNet<T>::residual(const Block& b, const ag::Tensor<T>& in,
                                const ag::Tensor<T>& out) const {
  return ag::residual_combine(in, out, b.projection.weight.defined() ? &b.projection : nullptr);
}

template <typename T>
ag::Tensor<T> VNet<T>::forward(const ag::Tensor<T>& input,
                               std::vector<std::array<std::size_t, 3>>* stage_dims) const {
  if (!input.defined() || input.rank() != 5 || input.dim(1) != 1 ||
      spatial(input.shape()) != spec_.input_dims) {
    throw ArgumentError("vnet forward: expected (batch, 1, " + std::to_string(spec_.input_dims[0]) +
                        ", " + std::to_string(spec_.input_dims[1]) + ", " +
                        std::to_string(spec_.input_dims[2]) + ") input, got " +
                        (input.defined() ? ag::shape_string(input.shape()) : std::string("undefined")));
  }
  auto record = [&](const ag::Tensor<T>& t) {
    if (stage_dims) stage_dims->push_back(spatial(t.shape()));
  };
  if (stage_dims) stage_dims->clear();

  std::vector<ag::Tensor<T>> skips;
  ag::Tensor<T> h = input;
  for (const auto& b : encoder_) {
    ag::Tensor<T> r = residual(b, h, run_convs(b, h));
    skips.push_back(r);
    h = ag::selu(ag::conv3d(r, b.resample, 2));
    record(h);
  }
  {
    ag::Tensor<T> r = residual(bottom_, h, run_convs(bottom_, h));
    h = ag::selu(ag::conv3d_transpose(r, bottom_.resample));
    record(h);
  }
  for (std::size_t i = 0; i < decoder_.size(); ++i) {
    const auto& b = decoder_[i];
    ag::Tensor<T> in = ag::concat_channels(h, skips[3 - i]);
    ag::Tensor<T> r = residual(b, in, run_convs(b, in));
    h = ag::selu(ag::conv3d_transpose(r, b.resample));
    record(h);
  }
  ag::Tensor<T> in = ag::concat_channels(h, skips[0]);
  ag::Tensor<T> r = residual(final_, in, run_convs(final_, in));
  ag::Tensor<T> out = ag::sigmoid(ag::conv3d(r, final_.head));
  record(out);
  return out;
}

template <typename T>
std::vector<ag::Tensor<T>> VNet<T>::parameter_tensors() const {
  std::vector<ag::Tensor<T>> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.tensor);
  return out;
}

template <typename T>
std::size_t VNet<T>::count_parameters() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.size();
  return n;
}

template <typename T>
void VNet<T>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

template <typename T>
void save_checkpoint(const VNet<T>& model, const std::filesystem::path& path) {
  nlohmann::json h;
  h["magic"] = kCheckpointMagic;
  h["version"] = kCheckpointVersion;
  h["dtype"] = dtype_name<T>();
  h["architecture"] = model.spec().to_json();
  h["spec_digest"] = model.spec().digest();
  h["metadata"] = {{"seed", model.metadata().seed}, {"config_digest", model.metadata().config_digest}};
  nlohmann::json manifest = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& p : model.parameters()) {
    manifest.push_back({{"name", p.name}, {"shape", p.tensor.shape()}, {"offset", offset}});
    offset += p.tensor.size() * sizeof(T);
  }
  h["parameters"] = manifest;
  h["payload_bytes"] = offset;

  std::string out = h.dump() + "\n";
  const std::size_t start = out.size();
  out.resize(start + offset);
  char* dst = out.data() + start;
  for (const auto& p : model.parameters()) {
    for (T v : p.tensor.values()) {
      using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
      auto bits = std::bit_cast<U>(v);
      for (std::size_t b = 0; b < sizeof(T); ++b) *dst++ = static_cast<char>((bits >> (8 * b)) & 0xFFu);
    }
  }
  write_file_atomic(path, out);
}

template <typename T>
VNet<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorruptCheckpointError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto nl = bytes.find('\n');
  if (nl == std::string::npos) throw CorruptCheckpointError("checkpoint: missing header line");

  nlohmann::json h;
  ArchitectureSpec spec;
  try {
    h = nlohmann::json::parse(bytes.substr(0, nl));
    if (h.at("magic").get<std::string>() != kCheckpointMagic) throw CorruptCheckpointError("checkpoint: bad magic");
    if (h.at("version").get<int>() != kCheckpointVersion) throw CorruptCheckpointError("checkpoint: unsupported version");
    if (h.at("dtype").get<std::string>() != dtype_name<T>()) throw CorruptCheckpointError("checkpoint: dtype mismatch");
    spec = ArchitectureSpec::from_json(h.at("architecture"));
    if (h.at("spec_digest").get<std::string>() != spec.digest()) {
      throw CorruptCheckpointError("checkpoint: architecture digest mismatch");
    }
  } catch (const CorruptCheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CorruptCheckpointError(std::string("checkpoint: bad header: ") + e.what());
  }

  VNet<T> model = VNet<T>::build(spec, 0);
  try {
    model.metadata().seed = h.at("metadata").at("seed").get<std::uint64_t>();
    model.metadata().config_digest = h.at("metadata").at("config_digest").get<std::string>();
    const auto& manifest = h.at("parameters");
    const auto& params = model.parameters();
    if (manifest.size() != params.size()) throw CorruptCheckpointError("checkpoint: parameter count mismatch");
    std::size_t expected = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& e = manifest[i];
      if (e.at("name").get<std::string>() != params[i].name ||
          e.at("shape").get<ag::Shape>() != params[i].tensor.shape() ||
          e.at("offset").get<std::size_t>() != expected) {
        throw CorruptCheckpointError("checkpoint: manifest mismatch at " + params[i].name);
      }
      expected += params[i].tensor.size() * sizeof(T);
    }
    if (h.at("payload_bytes").get<std::size_t>() != expected || bytes.size() - nl - 1 != expected) {
      throw CorruptCheckpointError("checkpoint: payload is " + std::to_string(bytes.size() - nl - 1) +
                                   " bytes, expected " + std::to_string(expected));
    }
  } catch (const CorruptCheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CorruptCheckpointError(std::string("checkpoint: bad manifest: ") + e.what());
  }

  const unsigned char* src = reinterpret_cast<const unsigned char*>(bytes.data()) + nl + 1;
  for (const auto& p : model.parameters()) {
    ag::Tensor<T> t = p.tensor;
    for (T& v : t.mutable_values()) {
      using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
      U bits = 0;
      for (std::size_t b = 0; b < sizeof(T); ++b) bits |= static_cast<U>(src[b]) << (8 * b);
      src += sizeof(T);
      v = std::bit_cast<T>(bits);
      if (!std::isfinite(v)) throw CorruptCheckpointError("checkpoint: non-finite value in " + p.name);
    }
  }
  return model;
}

template class VNet<float>;
template class VNet<double>;
template void save_checkpoint<float>(const VNet<float>&, const std::filesystem::path&);
template void save_checkpoint<double>(const VNet<double>&, const std::filesystem::path&);
template VNet<float> load_checkpoint<float>(const std::filesystem::path&);
template VNet<double> load_checkpoint<double>(const std::filesystem::path&);

}  // namespace ilio
