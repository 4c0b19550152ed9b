#pragma once

// Model persistence. A checkpoint file is
//
//   "TMCKPT01" | u64 metadata length | metadata JSON | float32 payload
//
// with all integers and floats little-endian. The metadata carries the model
// and preprocessing configuration, the vocabulary, training provenance and a
// tensor table {name, shape, offset} into the payload. Tensors are stored
// row-major by their logical shape.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>
#include "json.hpp"

#include "topomatch/errors.hpp"
#include "topomatch/model.hpp"
#include "topomatch/preprocess.hpp"

namespace topomatch {

namespace io {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

inline std::uint32_t get_u32(const char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

inline std::uint64_t get_u64(const char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

inline float get_f32(const char* p) { return std::bit_cast<float>(get_u32(p)); }

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("write failed: " + path.string());
}

inline std::string sha256_hex(const std::string& bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 computation failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

}  // namespace io

/// Logical row-major shape of a stored tensor.
template <typename Tensor>
std::vector<std::uint64_t> tensor_shape(const std::string& name, const Tensor& t) {
  if (t.cols() == 1 && name.find(".b") != std::string::npos) return {static_cast<std::uint64_t>(t.rows())};
  return {static_cast<std::uint64_t>(t.rows()), static_cast<std::uint64_t>(t.cols())};
}

template <typename Tensor>
void append_tensor_f32(std::string& out, const Tensor& t) {
  for (Eigen::Index r = 0; r < t.rows(); ++r) {
    for (Eigen::Index c = 0; c < t.cols(); ++c) io::put_f32(out, static_cast<float>(t(r, c)));
  }
}

struct ModelCheckpoint {
  Model<float> model;
  PreprocessOptions preprocess;
  Vocabulary vocab;
  int epoch = 0;
  nlohmann::json metrics = nlohmann::json::object();
  std::optional<std::string> parent_fingerprint;
  std::uint64_t seed = 0;

  /// SHA-256 over the canonical serialization of configuration, vocabulary
  /// and parameters. Provenance fields are excluded.
  std::string fingerprint() const {
    nlohmann::json header = {{"config", model.config.to_json()},
                             {"preprocess", preprocess.to_json()},
                             {"vocab", vocab.to_json()}};
    std::string bytes = header.dump();
    bytes.push_back('\0');
    model.params.for_each([&](const std::string& name, const auto& t) {
      bytes += name;
      bytes.push_back('\0');
      for (auto d : tensor_shape(name, t)) io::put_u64(bytes, d);
      append_tensor_f32(bytes, t);
    });
    return io::sha256_hex(bytes);
  }

  void save(const std::filesystem::path& path) const {
    std::string payload;
    nlohmann::json tensors = nlohmann::json::array();
    model.params.for_each([&](const std::string& name, const auto& t) {
      tensors.push_back({{"name", name}, {"shape", tensor_shape(name, t)}, {"offset", payload.size()}});
      append_tensor_f32(payload, t);
    });
    nlohmann::json meta = {{"format", "topomatch-checkpoint"},
                           {"version", 1},
                           {"config", model.config.to_json()},
                           {"preprocess", preprocess.to_json()},
                           {"vocab", vocab.to_json()},
                           {"epoch", epoch},
                           {"metrics", metrics},
                           {"seed", seed},
                           {"parent_fingerprint", parent_fingerprint ? nlohmann::json(*parent_fingerprint) : nlohmann::json()},
                           {"fingerprint", fingerprint()},
                           {"tensors", tensors}};
    const std::string meta_bytes = meta.dump();
    std::string out = "TMCKPT01";
    io::put_u64(out, meta_bytes.size());
    out += meta_bytes;
    out += payload;
    io::write_file(path, out);
  }

  static ModelCheckpoint load(const std::filesystem::path& path) {
    const std::string bytes = io::read_file(path);
    const std::string where = path.string();
    if (bytes.size() < 16 || bytes.compare(0, 8, "TMCKPT01") != 0) throw InputError(where + ": not a checkpoint file");
    const std::uint64_t meta_len = io::get_u64(bytes.data() + 8);
    if (meta_len > bytes.size() - 16) throw InputError(where + ": truncated metadata");
    nlohmann::json meta;
    try {
      meta = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(meta_len));
    } catch (const nlohmann::json::exception& e) {
      throw InputError(where + ": bad metadata: " + e.what());
    }
    const char* payload = bytes.data() + 16 + meta_len;
    const std::size_t payload_size = bytes.size() - 16 - meta_len;

    ModelCheckpoint ck;
    try {
      ck.preprocess = PreprocessOptions::from_json(meta.at("preprocess"));
      ck.vocab = Vocabulary::from_json(meta.at("vocab"));
      const ModelConfig cfg = ModelConfig::from_json(meta.at("config"));
      ck.model = Model<float>{cfg, ModelParameters<float>::zeros(cfg, ck.vocab.size())};
      ck.epoch = meta.at("epoch").get<int>();
      ck.metrics = meta.value("metrics", nlohmann::json::object());
      ck.seed = meta.value("seed", std::uint64_t{0});
      if (meta.contains("parent_fingerprint") && meta["parent_fingerprint"].is_string()) {
        ck.parent_fingerprint = meta["parent_fingerprint"].get<std::string>();
      }
      std::map<std::string, nlohmann::json> table;
      for (const auto& t : meta.at("tensors")) table[t.at("name").get<std::string>()] = t;
      ck.model.params.for_each([&](const std::string& name, auto& t) {
        const auto it = table.find(name);
        if (it == table.end()) throw InputError(where + ": missing tensor " + name);
        if (it->second.at("shape").get<std::vector<std::uint64_t>>() != tensor_shape(name, t)) {
          throw ConsistencyError(where + ": shape mismatch for tensor " + name);
        }
        const auto offset = it->second.at("offset").get<std::uint64_t>();
        const auto count = static_cast<std::uint64_t>(t.size());
        if (offset + count * 4 > payload_size) throw InputError(where + ": truncated tensor " + name);
        const char* p = payload + offset;
        for (Eigen::Index r = 0; r < t.rows(); ++r) {
          for (Eigen::Index c = 0; c < t.cols(); ++c, p += 4) t(r, c) = io::get_f32(p);
        }
        if (!t.allFinite()) throw NumericError(where + ": non-finite values in tensor " + name);
      });
    } catch (const nlohmann::json::exception& e) {
      throw InputError(where + ": bad metadata: " + e.what());
    }
    const std::string stored = meta.value("fingerprint", "");
    if (!stored.empty() && stored != ck.fingerprint()) {
      throw ConsistencyError(where + ": stored fingerprint does not match contents");
    }
    return ck;
  }
};

}  // namespace topomatch
