#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace evk {

/// Unit-norm embeddings keyed by unique ids; rows stored contiguously.
struct EmbeddingSet {
  std::vector<std::string> ids;
  std::vector<double> data;
  int width = 0;

  std::size_t size() const { return ids.size(); }
  std::span<const double> row(std::size_t i) const {
    return {data.data() + i * static_cast<std::size_t>(width), static_cast<std::size_t>(width)};
  }

  /// Throws WidthMismatch for ragged rows, InvalidArgument for duplicate ids
  /// or rows that are not unit length within 1e-6 (unless normalize is set,
  /// in which case rows are rescaled and only zero rows are rejected).
  static EmbeddingSet from_rows(std::vector<std::string> ids, const std::vector<std::vector<double>>& rows,
                                bool normalize = false);
};

/// Scans items in id order and keeps one iff its cosine to every previously
/// kept item is below the threshold (clamped to [-1, 1]). Returns kept ids in
/// scan order.
std::vector<std::string> greedy_prune(const EmbeddingSet& set, double sim_threshold);

struct AssetEntry {
  std::string character, pose;
};

struct EditPair {
  std::string character, pose_before, pose_after;
};

struct PairManifest {
  std::uint64_t seed = 0;
  std::size_t k = 0, pool_size = 0;
  std::vector<AssetEntry> assets;  // k per character, in sampled order
  std::vector<EditPair> pairs;     // consecutive sampled poses per character
};

/// Each character draws k distinct poses (seeded partial Fisher-Yates, one
/// stream per character). Throws PoolTooSmall when k exceeds the pool.
PairManifest assemble_pairs(const std::vector<std::string>& characters, const std::vector<std::string>& pose_pool,
                            std::size_t k, std::uint64_t seed);

nlohmann::json to_json(const PairManifest& m);

namespace serial {
std::vector<std::string> greedy_prune(const EmbeddingSet& set, double sim_threshold);
}  // namespace serial

}  // namespace evk
