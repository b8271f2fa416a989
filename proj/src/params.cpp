#include "rkp/params.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <numbers>

#include "rkp/error.hpp"
#include "rkp/pgm.hpp"

namespace rkp::ad {

namespace {

constexpr char kMagic[4] = {'R', 'K', 'W', '1'};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

double counter_uniform(std::uint64_t key, std::uint64_t counter) {
  return static_cast<double>(splitmix64(key ^ splitmix64(counter)) >> 11) * 0x1.0p-53;
}

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T bits) {
  for (std::size_t b = 0; b < sizeof(T); ++b) out.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
}

template <typename T>
T get_le(const std::uint8_t* p) {
  T bits = 0;
  for (std::size_t b = 0; b < sizeof(T); ++b) bits |= T(p[b]) << (8 * b);
  return bits;
}

}  // namespace

Eigen::ArrayXd keyed_uniform(std::uint64_t seed, const std::string& name, Eigen::Index count) {
  const std::uint64_t key = splitmix64(seed ^ splitmix64(fnv1a(name)));
  Eigen::ArrayXd out(count);
  for (Eigen::Index i = 0; i < count; ++i) out[i] = counter_uniform(key, static_cast<std::uint64_t>(i));
  return out;
}

Eigen::ArrayXd keyed_normal(std::uint64_t seed, const std::string& name, Eigen::Index count) {
  const Eigen::ArrayXd u = keyed_uniform(seed, name + "#normal", 2 * count);
  Eigen::ArrayXd out(count);
  for (Eigen::Index i = 0; i < count; ++i) {
    const double r = std::sqrt(-2.0 * std::log(1.0 - u[2 * i]));
    out[i] = r * std::cos(2.0 * std::numbers::pi * u[2 * i + 1]);
  }
  return out;
}

Tensor& ParameterStore::create(const std::string& name, Shape shape, Init init, bool trainable) {
  if (contains(name)) throw ContractError("ParameterStore: duplicate parameter " + name);
  const Eigen::Index n = ad::numel(shape);
  Eigen::ArrayXd values;
  switch (init.kind) {
    case InitKind::Zeros: values = Eigen::ArrayXd::Zero(n); break;
    case InitKind::Constant: values = Eigen::ArrayXd::Constant(n, init.scale); break;
    case InitKind::Uniform: values = init.scale * (2.0 * keyed_uniform(seed_, name, n) - 1.0); break;
    case InitKind::Normal: values = init.scale * keyed_normal(seed_, name, n); break;
  }
  return tensors_[name] = Tensor::from(std::move(shape), std::move(values), trainable);
}

void ParameterStore::set(const std::string& name, Tensor t) { tensors_[name] = std::move(t); }

const Tensor& ParameterStore::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ContractError("ParameterStore: no parameter named " + name);
  return it->second;
}

Tensor& ParameterStore::at(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ContractError("ParameterStore: no parameter named " + name);
  return it->second;
}

std::vector<std::string> ParameterStore::names() const {
  std::vector<std::string> out;
  for (const auto& [n, t] : tensors_) out.push_back(n);
  return out;
}

std::vector<std::string> ParameterStore::trainable_names() const {
  std::vector<std::string> out;
  for (const auto& [n, t] : tensors_)
    if (t.requires_grad()) out.push_back(n);
  return out;
}

Eigen::Index ParameterStore::parameter_count() const {
  Eigen::Index n = 0;
  for (const auto& [name, t] : tensors_)
    if (t.requires_grad()) n += t.numel();
  return n;
}

ParameterStore ParameterStore::clone() const {
  ParameterStore out(seed_);
  out.hyper_ = hyper_;
  for (const auto& [n, t] : tensors_) out.tensors_[n] = Tensor::from(t.shape(), t.value(), t.requires_grad());
  return out;
}

void ParameterStore::zero_grad() {
  for (auto& [n, t] : tensors_)
    if (t.requires_grad()) t.zero_grad();
}

std::vector<std::uint8_t> encode_weights(const ParameterStore& store, WeightPrecision precision) {
  const bool f64 = precision == WeightPrecision::Float64;
  const std::size_t width = f64 ? 8 : 4;
  nlohmann::json manifest;
  manifest["format"] = "RKW1";
  manifest["dtype"] = f64 ? "f64" : "f32";
  manifest["endian"] = "little";
  manifest["seed"] = store.seed();
  manifest["hyperparameters"] = store.hyperparameters();
  nlohmann::json entries = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& [name, t] : store.tensors()) {
    entries.push_back({{"name", name},
                       {"shape", t.shape()},
                       {"offset", offset},
                       {"count", t.numel()},
                       {"trainable", t.requires_grad()}});
    offset += static_cast<std::size_t>(t.numel()) * width;
  }
  manifest["tensors"] = entries;
  manifest["payload_bytes"] = offset;
  const std::string text = manifest.dump();

  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  out.reserve(out.size() + offset);
  for (const auto& [name, t] : store.tensors()) {
    for (Eigen::Index i = 0; i < t.numel(); ++i) {
      if (f64)
        put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(t.value()[i]));
      else
        put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(t.value()[i])));
    }
  }
  return out;
}

ParameterStore decode_weights(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) throw FormatError("unexpected end of data", bytes.size());
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("not an RKW1 weight file", 0);
  const std::uint32_t len = get_le<std::uint32_t>(bytes.data() + 4);
  if (bytes.size() < 8ull + len) throw FormatError("unexpected end of data", bytes.size());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + len);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("RKW1 manifest is not JSON: ") + e.what(), 8 + e.byte);
  }
  const bool f64 = manifest.value("dtype", "f32") == "f64";
  const std::size_t width = f64 ? 8 : 4;
  const std::size_t payload = 8 + len;

  ParameterStore store(manifest.value("seed", std::uint64_t{0}));
  store.hyperparameters() = manifest.value("hyperparameters", nlohmann::json::object());
  for (const auto& e : manifest.at("tensors")) {
    const Shape shape = e.at("shape").get<Shape>();
    const auto offset = e.at("offset").get<std::size_t>();
    const Eigen::Index count = ad::numel(shape);
    if (payload + offset + count * width > bytes.size())
      throw FormatError("unexpected end of data", bytes.size());
    Eigen::ArrayXd values(count);
    const std::uint8_t* p = bytes.data() + payload + offset;
    for (Eigen::Index i = 0; i < count; ++i) {
      values[i] = f64 ? std::bit_cast<double>(get_le<std::uint64_t>(p + i * 8))
                      : static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(p + i * 4)));
    }
    store.set(e.at("name").get<std::string>(),
              Tensor::from(shape, std::move(values), e.value("trainable", true)));
  }
  return store;
}

void save_weights(const ParameterStore& store, const std::filesystem::path& path, WeightPrecision precision) {
  write_file_bytes(path, encode_weights(store, precision));
}

ParameterStore load_weights(const std::filesystem::path& path) { return decode_weights(read_file_bytes(path)); }

}  // namespace rkp::ad
