#pragma once

// Vector index over gazetteer altnames and exact L2 top-k ranking.
//
// Index file layout (little-endian):
//   "DZVIX1" | u32 version | u64 N | u32 D | N*D float32, row-major |
//   u64 trailer length | trailer JSON {fingerprint, preprocess}
// Row metadata lives in the sidecar `<path>.meta.jsonl`, one
// {"altname", "location_ids"} object per row.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "topomatch/candidates.hpp"
#include "topomatch/checkpoint.hpp"
#include "topomatch/errors.hpp"
#include "topomatch/gazetteer.hpp"
#include "topomatch/model.hpp"
#include "topomatch/preprocess.hpp"
#include "topomatch/trainer.hpp"

namespace topomatch {

struct VectorIndex {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<float> data;  // rows x dim, row-major
  std::vector<std::string> altnames;
  std::vector<std::vector<std::string>> location_ids;
  std::string fingerprint;
  PreprocessOptions preprocess;

  const float* row(std::size_t i) const { return data.data() + i * dim; }

  static constexpr std::uint32_t kVersion = 1;

  static std::filesystem::path meta_path(const std::filesystem::path& path) {
    return std::filesystem::path(path.string() + ".meta.jsonl");
  }

  void save(const std::filesystem::path& path) const {
    std::string out = "DZVIX1";
    io::put_u32(out, kVersion);
    io::put_u64(out, rows);
    io::put_u32(out, static_cast<std::uint32_t>(dim));
    out.reserve(out.size() + data.size() * 4 + 256);
    for (float f : data) io::put_f32(out, f);
    const std::string trailer = nlohmann::json{{"fingerprint", fingerprint}, {"preprocess", preprocess.to_json()}}.dump();
    io::put_u64(out, trailer.size());
    out += trailer;
    io::write_file(path, out);

    std::string meta;
    for (std::size_t i = 0; i < rows; ++i) {
      meta += nlohmann::json{{"altname", altnames[i]}, {"location_ids", location_ids[i]}}.dump();
      meta += '\n';
    }
    io::write_file(meta_path(path), meta);
  }

  static VectorIndex load(const std::filesystem::path& path) {
    const std::string bytes = io::read_file(path);
    const std::string where = path.string();
    constexpr std::size_t header = 6 + 4 + 8 + 4;
    if (bytes.size() < header || bytes.compare(0, 6, "DZVIX1") != 0) throw InputError(where + ": not a vector index");
    if (io::get_u32(bytes.data() + 6) != kVersion) throw InputError(where + ": unsupported index version");
    VectorIndex ix;
    ix.rows = io::get_u64(bytes.data() + 10);
    ix.dim = io::get_u32(bytes.data() + 18);
    const std::size_t payload = ix.rows * ix.dim * 4;
    if (bytes.size() < header + payload + 8) throw InputError(where + ": truncated payload");
    ix.data.resize(ix.rows * ix.dim);
    const char* p = bytes.data() + header;
    for (auto& f : ix.data) {
      f = io::get_f32(p);
      p += 4;
    }
    const std::uint64_t trailer_len = io::get_u64(p);
    p += 8;
    if (static_cast<std::size_t>(p - bytes.data()) + trailer_len != bytes.size()) {
      throw InputError(where + ": bad trailer length");
    }
    try {
      const auto trailer = nlohmann::json::parse(p, p + trailer_len);
      ix.fingerprint = trailer.at("fingerprint").get<std::string>();
      ix.preprocess = PreprocessOptions::from_json(trailer.at("preprocess"));
    } catch (const nlohmann::json::exception& e) {
      throw InputError(where + ": bad trailer: " + e.what());
    }

    const auto mpath = meta_path(path);
    std::ifstream in(mpath);
    if (!in) throw InputError("cannot open index metadata " + mpath.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      try {
        const auto j = nlohmann::json::parse(line);
        ix.altnames.push_back(j.at("altname").get<std::string>());
        ix.location_ids.push_back(j.at("location_ids").get<std::vector<std::string>>());
      } catch (const nlohmann::json::exception& e) {
        throw InputError(mpath.string(), lineno, e.what());
      }
    }
    if (ix.altnames.size() != ix.rows) {
      throw ConsistencyError(where + ": metadata has " + std::to_string(ix.altnames.size()) + " rows, index has " +
                             std::to_string(ix.rows));
    }
    return ix;
  }
};

/// Eval-mode vectors of raw strings, in input order. Strings that normalize to
/// nothing raise InputError.
inline std::vector<float> vectorize(const ModelCheckpoint& ck, const std::vector<std::string>& strings,
                                    unsigned threads = 1) {
  const auto dim = static_cast<std::size_t>(ck.model.config.vector_dim());
  std::vector<EncodedString> enc;
  enc.reserve(strings.size());
  for (const auto& s : strings) {
    auto e = prepare(s, ck.vocab, ck.preprocess);
    if (!e) throw InputError("string '" + s + "' is empty after normalization");
    enc.push_back(std::move(*e));
  }
  std::vector<float> out(strings.size() * dim);
  parallel_for(enc.size(), threads, [&](std::size_t i) {
    const Vec<float> v = encode_string(ck.model, enc[i]);
    std::copy(v.data(), v.data() + dim, out.data() + i * dim);
  });
  return out;
}

/// Vectors of arbitrary strings with the producing checkpoint's fingerprint.
inline VectorIndex vectorize_strings(const ModelCheckpoint& ck, std::vector<std::string> strings,
                                     std::vector<std::vector<std::string>> ids, unsigned threads = 1) {
  VectorIndex ix;
  ix.dim = static_cast<std::size_t>(ck.model.config.vector_dim());
  ix.rows = strings.size();
  ix.data = vectorize(ck, strings, threads);
  ix.altnames = std::move(strings);
  ix.location_ids = std::move(ids);
  ix.fingerprint = ck.fingerprint();
  ix.preprocess = ck.preprocess;
  return ix;
}

/// One row per unique altname spelling, in lexicographic order. Spellings
/// that normalize to nothing are skipped.
inline VectorIndex build_index(const ModelCheckpoint& ck, const Gazetteer& gaz, unsigned threads = 1) {
  std::vector<std::string> names;
  std::vector<std::vector<std::string>> ids;
  for (const auto& [name, id_set] : gaz.altnames()) {
    if (!normalize_string(name, ck.preprocess)) continue;
    names.push_back(name);
    ids.emplace_back(id_set.begin(), id_set.end());
  }
  return vectorize_strings(ck, std::move(names), std::move(ids), threads);
}

/// Query vectors: same file format, queries as row names and no ids.
inline VectorIndex vectorize_queries(const ModelCheckpoint& ck, const std::vector<std::string>& queries,
                                     unsigned threads = 1) {
  return vectorize_strings(ck, queries, std::vector<std::vector<std::string>>(queries.size()), threads);
}

/// Exact top-k by L2 over a full scan. Selection uses squared distances
/// computed from direct differences in double precision; ties break on altname.
inline std::vector<RankedCandidates> rank(const VectorIndex& index, const VectorIndex& queries, std::size_t k,
                                          unsigned threads = 1) {
  if (k < 1) throw InputError("k must be at least 1");
  if (queries.rows > 0 && queries.dim != index.dim) {
    throw ConsistencyError("query dimension " + std::to_string(queries.dim) + " does not match index dimension " +
                           std::to_string(index.dim));
  }
  const std::size_t n = index.rows;
  const std::size_t d = index.dim;
  const std::size_t take = std::min(k, n);
  std::vector<RankedCandidates> out(queries.rows);
  parallel_for(queries.rows, threads, [&](std::size_t q) {
    const float* qv = queries.row(q);
    std::vector<double> dist(n);
    for (std::size_t i = 0; i < n; ++i) {
      const float* r = index.row(i);
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = static_cast<double>(r[j]) - static_cast<double>(qv[j]);
        acc += diff * diff;
      }
      dist[i] = acc;
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        if (dist[a] != dist[b]) return dist[a] < dist[b];
                        return index.altnames[a] < index.altnames[b];
                      });
    RankedCandidates& rc = out[q];
    rc.query = queries.altnames[q];
    for (std::size_t i = 0; i < take; ++i) {
      const std::size_t row = order[i];
      rc.items.push_back({index.altnames[row], std::sqrt(dist[row]), index.location_ids[row]});
    }
  });
  return out;
}

inline void check_compatible(const ModelCheckpoint& ck, const VectorIndex& index) {
  if (index.fingerprint != ck.fingerprint()) {
    throw ConsistencyError("index was built with a different model (fingerprint mismatch)");
  }
  if (index.dim != static_cast<std::size_t>(ck.model.config.vector_dim())) {
    throw ConsistencyError("index dimension does not match the model");
  }
}

inline std::vector<RankedCandidates> rank_on_the_fly(const ModelCheckpoint& ck, const VectorIndex& index,
                                                     const std::vector<std::string>& queries, std::size_t k,
                                                     unsigned threads = 1) {
  check_compatible(ck, index);
  return rank(index, vectorize_queries(ck, queries, threads), k, threads);
}

}  // namespace topomatch
