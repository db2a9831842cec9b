#pragma once

// Model checkpoint file.
//
//   "CGCK" | u32 version | 32-byte SHA-256 of the architecture descriptor
//   u32 descriptor length | descriptor JSON
//   u32 head count | u32 tensor count
//   per tensor: u16 name length | name | u32 rows | u32 cols | u64 offset (in floats)
//   u64 payload float count | f32 payload
//   u32 CRC32 of every preceding byte
//
// Integers and floats are little-endian. Tensor names carry their head as a
// "h<k>/" prefix.

#include "coldguess/binary_io.hpp"
#include "coldguess/model.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>

namespace coldguess {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[4] = {'C', 'G', 'C', 'K'};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::array<std::uint8_t, 32> config_hash(const ModelSpec& spec) { return io::sha256_of(spec.descriptor().dump()); }

inline std::vector<std::uint8_t> encode_checkpoint(const Model& model) {
  const std::string descriptor = model.spec.descriptor().dump();
  const auto hash = io::sha256_of(descriptor);
  std::vector<std::uint8_t> out;
  io::put_bytes(out, std::string_view(kCheckpointMagic, 4));
  io::put_u32(out, kCheckpointVersion);
  out.insert(out.end(), hash.begin(), hash.end());
  io::put_u32(out, static_cast<std::uint32_t>(descriptor.size()));
  io::put_bytes(out, descriptor);
  io::put_u32(out, static_cast<std::uint32_t>(model.heads.size()));
  std::size_t tensors = 0;
  for (const auto& h : model.heads) tensors += h.size();
  io::put_u32(out, static_cast<std::uint32_t>(tensors));
  std::uint64_t offset = 0;
  for (std::size_t k = 0; k < model.heads.size(); ++k) {
    for (const auto& e : model.heads[k]) {
      const std::string name = "h" + std::to_string(k) + "/" + e.name;
      io::put_u16(out, static_cast<std::uint16_t>(name.size()));
      io::put_bytes(out, name);
      io::put_u32(out, static_cast<std::uint32_t>(e.value.rows));
      io::put_u32(out, static_cast<std::uint32_t>(e.value.cols));
      io::put_u64(out, offset);
      offset += e.value.size();
    }
  }
  io::put_u64(out, offset);
  for (const auto& h : model.heads)
    for (const auto& e : h)
      for (float v : e.value.data) io::put_f32(out, v);
  io::put_u32(out, io::crc32_of(out));
  return out;
}

/// Decodes a checkpoint. With `expected`, a checkpoint whose architecture
/// differs from it is refused.
inline Model decode_checkpoint(const std::vector<std::uint8_t>& bytes, const std::optional<ModelSpec>& expected = {}) {
  if (bytes.size() < 4 + 4 + 32 + 4) throw CheckpointError("checkpoint: file too short");
  std::uint32_t stored_crc = 0;
  {
    io::Reader tail(bytes.data() + bytes.size() - 4, 4, "checkpoint");
    stored_crc = tail.u32();
  }
  if (io::crc32_of(bytes.data(), bytes.size() - 4) != stored_crc)
    throw CheckpointError("checkpoint: checksum mismatch (file is corrupted or truncated)");

  io::Reader r(bytes.data(), bytes.size() - 4, "checkpoint");
  if (r.str(4) != std::string_view(kCheckpointMagic, 4)) throw CheckpointError("checkpoint: bad magic, not a checkpoint file");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw CheckpointError("checkpoint: unsupported format version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  std::array<std::uint8_t, 32> hash{};
  std::copy_n(r.take(32), 32, hash.begin());
  const std::string descriptor = r.str(r.u32());
  if (io::sha256_of(descriptor) != hash) throw CheckpointError("checkpoint: config hash does not match descriptor");

  Model model;
  try {
    model.spec = ModelSpec::from_descriptor(nlohmann::json::parse(descriptor));
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("checkpoint: bad architecture descriptor: ") + e.what());
  }
  if (expected && config_hash(*expected) != hash)
    throw CheckpointError("checkpoint: architecture " + descriptor + " does not match the requested " +
                          expected->descriptor().dump());

  const std::uint32_t heads = r.u32();
  if (heads != model.spec.head_count()) throw CheckpointError("checkpoint: head count does not match descriptor");
  const std::uint32_t tensors = r.u32();
  struct Entry {
    std::size_t head;
    std::string name;
    std::size_t rows, cols;
    std::uint64_t offset;
  };
  std::vector<Entry> manifest;
  std::uint64_t expected_offset = 0;
  for (std::uint32_t t = 0; t < tensors; ++t) {
    const std::string full = r.str(r.u16());
    const auto slash = full.find('/');
    if (full.size() < 3 || full[0] != 'h' || slash == std::string::npos)
      throw CheckpointError("checkpoint: malformed tensor name '" + full + "'");
    Entry e;
    e.head = std::stoul(full.substr(1, slash - 1));
    e.name = full.substr(slash + 1);
    e.rows = r.u32();
    e.cols = r.u32();
    e.offset = r.u64();
    if (e.head >= heads || e.offset != expected_offset) throw CheckpointError("checkpoint: inconsistent manifest at '" + full + "'");
    expected_offset += static_cast<std::uint64_t>(e.rows) * e.cols;
    manifest.push_back(std::move(e));
  }
  if (r.u64() != expected_offset) throw CheckpointError("checkpoint: payload size does not match manifest");
  if (r.remaining() != expected_offset * 4) throw CheckpointError("checkpoint: payload length mismatch");

  model.heads.resize(heads);
  for (const Entry& e : manifest) {
    Matrix<float> m(e.rows, e.cols);
    for (float& v : m.data) v = r.f32();
    model.heads[e.head].add(e.name, std::move(m));
  }
  // Rebuilding each network checks that names and shapes fit the architecture.
  try {
    for (const auto& h : model.heads) (void)detail::load_head<float>(model.spec, h);
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("checkpoint: parameters do not fit the architecture: ") + e.what());
  }
  return model;
}

inline void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  io::write_file(path, encode_checkpoint(model));
}

inline Model load_checkpoint(const std::filesystem::path& path, const std::optional<ModelSpec>& expected = {}) {
  return decode_checkpoint(io::read_file(path), expected);
}

}  // namespace coldguess
