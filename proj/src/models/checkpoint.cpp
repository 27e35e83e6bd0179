#include "sfuda/checkpoint.hpp"

#include <openssl/evp.h>

#include <bit>
#include <fstream>
#include <memory>

#include "sfuda/errors.hpp"

namespace sfuda {
namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "checkpoint encoding assumes little-endian hosts");

namespace {

constexpr char kMagic[8] = {'S', 'F', 'U', 'D', 'A', 'C', 'K', '1'};

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new(), EVP_MD_CTX_free) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) throw Error("SHA-256 init failed");
  }
  void update(const void* data, size_t size) {
    if (size != 0 && EVP_DigestUpdate(ctx_.get(), data, size) != 1) throw Error("SHA-256 update failed");
  }
  template <typename T>
  void update_value(const T& value) {
    update(&value, sizeof(T));
  }
  std::string hex() {
    unsigned char out[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_.get(), out, &len) != 1) throw Error("SHA-256 final failed");
    static constexpr char kHex[] = "0123456789abcdef";
    std::string text;
    for (unsigned int i = 0; i < len; ++i) {
      text.push_back(kHex[out[i] >> 4]);
      text.push_back(kHex[out[i] & 0xF]);
    }
    return text;
  }

 private:
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

template <typename T>
void write_value(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_value(std::istream& in, const fs::path& path) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw IoError("truncated checkpoint blob: " + path.string());
  return value;
}

NamedArray array_from_tensor(const std::string& name, const torch::Tensor& tensor) {
  auto t = tensor.detach().to(torch::kCPU, torch::kFloat32).contiguous();
  NamedArray array;
  array.name = name;
  array.shape = t.sizes().vec();
  array.values.assign(t.data_ptr<float>(), t.data_ptr<float>() + t.numel());
  return array;
}

}  // namespace

std::string digest_arrays(std::span<const NamedArray> arrays) {
  Sha256 sha;
  for (const auto& a : arrays) {
    sha.update(a.name.data(), a.name.size());
    sha.update_value('\0');
    sha.update_value(static_cast<uint64_t>(a.shape.size()));
    for (int64_t d : a.shape) sha.update_value(d);
    sha.update(a.values.data(), a.values.size() * sizeof(float));
  }
  return sha.hex();
}

std::vector<NamedArray> capture_arrays(const torch::nn::Module& module) {
  std::vector<NamedArray> arrays;
  for (const auto& item : module.named_parameters(true)) arrays.push_back(array_from_tensor(item.key(), item.value()));
  for (const auto& item : module.named_buffers(true)) {
    if (!item.value().is_floating_point()) continue;  // batch counters
    arrays.push_back(array_from_tensor(item.key(), item.value()));
  }
  return arrays;
}

std::string digest_module(const torch::nn::Module& module) { return digest_arrays(capture_arrays(module)); }

Checkpoint capture(const torch::nn::Module& module, CheckpointMeta meta) {
  Checkpoint checkpoint;
  checkpoint.arrays = capture_arrays(module);
  checkpoint.digest = digest_arrays(checkpoint.arrays);
  checkpoint.meta = std::move(meta);
  return checkpoint;
}

void restore(const Checkpoint& checkpoint, torch::nn::Module& module) {
  torch::NoGradGuard no_grad;
  auto params = module.named_parameters(true);
  auto buffers = module.named_buffers(true);
  size_t restored = 0;
  for (const auto& array : checkpoint.arrays) {
    torch::Tensor* target = params.find(array.name);
    if (target == nullptr) target = buffers.find(array.name);
    if (target == nullptr) throw ContractViolation("checkpoint array '" + array.name + "' has no module counterpart");
    require(target->sizes().vec() == array.shape, "checkpoint array '" + array.name + "' has a different shape");
    auto source = torch::from_blob(const_cast<float*>(array.values.data()), array.shape,
                                   torch::TensorOptions().dtype(torch::kFloat32));
    target->copy_(source);
    ++restored;
  }
  size_t expected = params.size();
  for (const auto& item : buffers) expected += item.value().is_floating_point() ? 1 : 0;
  require(restored == expected, "checkpoint does not cover every parameter of the module");
}

void save_checkpoint(const Checkpoint& checkpoint, const fs::path& dir) {
  const fs::path parent = dir.has_parent_path() ? dir.parent_path() : fs::path(".");
  std::error_code ec;
  fs::create_directories(parent, ec);
  const fs::path staging = parent / (dir.filename().string() + ".tmp");
  fs::remove_all(staging, ec);
  if (!fs::create_directories(staging, ec) || ec) throw IoError("cannot create checkpoint directory " + staging.string());

  {
    std::ofstream out(staging / "params.bin", std::ios::binary);
    if (!out) throw IoError("cannot write " + (staging / "params.bin").string());
    out.write(kMagic, sizeof(kMagic));
    write_value(out, static_cast<uint64_t>(checkpoint.arrays.size()));
    for (const auto& a : checkpoint.arrays) {
      write_value(out, static_cast<uint32_t>(a.name.size()));
      out.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
      write_value(out, static_cast<uint32_t>(a.shape.size()));
      for (int64_t d : a.shape) write_value(out, d);
      write_value(out, static_cast<uint64_t>(a.values.size()));
      out.write(reinterpret_cast<const char*>(a.values.data()),
                static_cast<std::streamsize>(a.values.size() * sizeof(float)));
    }
    if (!out) throw IoError("failed writing checkpoint blob");
  }
  {
    nlohmann::json meta = {{"schema_version", kCheckpointSchemaVersion},
                           {"kind", checkpoint.meta.kind},
                           {"epoch", checkpoint.meta.epoch},
                           {"validation_loss", checkpoint.meta.validation_loss},
                           {"digest", checkpoint.digest},
                           {"config", checkpoint.meta.config},
                           {"extra", checkpoint.meta.extra}};
    std::ofstream out(staging / "meta.json");
    if (!out) throw IoError("cannot write " + (staging / "meta.json").string());
    out << meta.dump(2) << '\n';
  }

  const fs::path previous = parent / (dir.filename().string() + ".old");
  fs::remove_all(previous, ec);
  if (fs::exists(dir)) fs::rename(dir, previous);
  fs::rename(staging, dir);
  fs::remove_all(previous, ec);
}

Checkpoint load_checkpoint(const fs::path& dir) {
  const fs::path blob = dir / "params.bin";
  const fs::path meta_path = dir / "meta.json";
  if (!fs::exists(blob) || !fs::exists(meta_path)) throw MissingArtifact("checkpoint not found at " + dir.string());

  Checkpoint checkpoint;
  std::ifstream in(blob, std::ios::binary);
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(std::begin(magic), std::end(magic), std::begin(kMagic))) {
    throw IoError("not a checkpoint blob: " + blob.string());
  }
  const auto count = read_value<uint64_t>(in, blob);
  checkpoint.arrays.reserve(count);
  for (uint64_t i = 0; i < count; ++i) {
    NamedArray a;
    a.name.resize(read_value<uint32_t>(in, blob));
    in.read(a.name.data(), static_cast<std::streamsize>(a.name.size()));
    a.shape.resize(read_value<uint32_t>(in, blob));
    for (auto& d : a.shape) d = read_value<int64_t>(in, blob);
    a.values.resize(read_value<uint64_t>(in, blob));
    in.read(reinterpret_cast<char*>(a.values.data()), static_cast<std::streamsize>(a.values.size() * sizeof(float)));
    if (!in) throw IoError("truncated checkpoint blob: " + blob.string());
    checkpoint.arrays.push_back(std::move(a));
  }

  nlohmann::json meta;
  try {
    std::ifstream meta_in(meta_path);
    meta = nlohmann::json::parse(meta_in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed checkpoint metadata " + meta_path.string() + ": " + e.what());
  }
  if (meta.value("schema_version", 0) != kCheckpointSchemaVersion) {
    throw ContractViolation("unsupported checkpoint schema in " + meta_path.string());
  }
  checkpoint.meta.kind = meta.at("kind").get<std::string>();
  checkpoint.meta.epoch = meta.at("epoch").get<int64_t>();
  checkpoint.meta.validation_loss = meta.at("validation_loss").get<double>();
  checkpoint.meta.config = meta.value("config", nlohmann::json::object());
  checkpoint.meta.extra = meta.value("extra", nlohmann::json::object());
  checkpoint.digest = digest_arrays(checkpoint.arrays);
  if (checkpoint.digest != meta.at("digest").get<std::string>()) {
    throw ContractViolation("checkpoint digest mismatch in " + dir.string());
  }
  return checkpoint;
}

}  // namespace sfuda
