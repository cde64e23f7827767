// SPDX-License-Identifier: Apache-2.0
#include "kid/model/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "kid/util/io.hpp"

namespace kid::model {

namespace {

constexpr std::string_view kMagic = "KIDCKPT1";

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(const std::string& in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

}  // namespace

std::string checkpoint_bytes(const DualHeadModel& model, std::uint64_t seed,
                             const nlohmann::ordered_json& metadata) {
  nlohmann::ordered_json header;
  header["config"] = model.config().to_json();
  auto& manifest = header["manifest"] = nlohmann::ordered_json::array();
  for (const auto& p : model.params()) manifest.push_back({{"name", p.name}, {"shape", p.value.shape()}});
  header["seed"] = seed;
  header["metadata"] = metadata;
  // ensure_ascii keeps the header pure ASCII.
  const std::string text = header.dump(-1, ' ', true);
  std::string out(kMagic);
  put_u64(out, text.size());
  out += text;
  for (const auto& p : model.params()) {
    const auto d = p.value.data();
    const std::size_t at = out.size();
    out.resize(at + d.size() * sizeof(double));
    std::memcpy(out.data() + at, d.data(), d.size() * sizeof(double));
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const DualHeadModel& model, std::uint64_t seed,
                     const nlohmann::ordered_json& metadata) {
  util::atomic_write(path, checkpoint_bytes(model, seed, metadata));
}

LoadedCheckpoint parse_checkpoint(const std::string& bytes) {
  if (bytes.size() < kMagic.size() + 8 || bytes.compare(0, kMagic.size(), kMagic) != 0) {
    throw CheckpointError("checkpoint: bad magic");
  }
  const std::uint64_t header_len = get_u64(bytes, kMagic.size());
  const std::size_t header_at = kMagic.size() + 8;
  if (header_len > bytes.size() - header_at) throw CheckpointError("checkpoint: truncated header");
  nlohmann::ordered_json header;
  try {
    header = nlohmann::ordered_json::parse(bytes.substr(header_at, header_len));
  } catch (const nlohmann::json::parse_error& e) {
    throw CheckpointError(std::string("checkpoint: header: ") + e.what());
  }
  const auto seed = header.at("seed").get<std::uint64_t>();
  LoadedCheckpoint out{DualHeadModel(ModelConfig::from_json(header.at("config")), seed), seed,
                       header.value("metadata", nlohmann::ordered_json::object())};
  const auto& manifest = header.at("manifest");
  if (manifest.size() != out.model.params().size()) throw CheckpointError("checkpoint: manifest size mismatch");
  std::size_t at = header_at + header_len;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    auto& p = out.model.params()[i];
    if (manifest[i].at("name").get<std::string>() != p.name ||
        manifest[i].at("shape").get<num::Shape>() != p.value.shape()) {
      throw CheckpointError("checkpoint: manifest entry " + std::to_string(i) + " does not match the architecture");
    }
    auto d = p.value.mutable_data();
    const std::size_t n = d.size() * sizeof(double);
    if (bytes.size() < at + n) throw CheckpointError("checkpoint: truncated tensor data for " + p.name);
    std::memcpy(d.data(), bytes.data() + at, n);
    at += n;
  }
  if (at != bytes.size()) throw CheckpointError("checkpoint: trailing bytes");
  return out;
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(util::read_file(path));
}

void copy_weights(const DualHeadModel& src, DualHeadModel& dst) {
  if (src.params().size() != dst.params().size()) throw CheckpointError("copy_weights: architecture mismatch");
  for (std::size_t i = 0; i < src.params().size(); ++i) {
    auto from = src.params()[i].value.data();
    auto to = dst.params()[i].value.mutable_data();
    if (from.size() != to.size()) throw CheckpointError("copy_weights: shape mismatch at " + src.params()[i].name);
    std::copy(from.begin(), from.end(), to.begin());
  }
}

}  // namespace kid::model
