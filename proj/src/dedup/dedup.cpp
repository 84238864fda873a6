#include "evk/dedup.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "evk/error.hpp"
#include "evk/rng.hpp"

namespace evk {

namespace {

// A candidate is pruned at cosine >= threshold; the slack absorbs rounding in
// the dot product of two identical unit vectors.
constexpr double kCosSlack = 1e-9;

void require_unique(const std::vector<std::string>& ids, const char* what) {
  std::set<std::string> seen;
  for (const auto& id : ids)
    if (!seen.insert(id).second) throw Error(ErrorKind::InvalidArgument, std::string("duplicate ") + what + " '" + id + "'");
}

double dot_rows(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<std::size_t> id_order(const EmbeddingSet& set) {
  std::vector<std::size_t> order(set.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return set.ids[a] < set.ids[b]; });
  return order;
}

double clamp_threshold(double t) {
  if (!std::isfinite(t)) throw Error(ErrorKind::InvalidArgument, "similarity threshold must be finite");
  return std::clamp(t, -1.0, 1.0);
}

template <bool Parallel>
std::vector<std::string> prune(const EmbeddingSet& set, double threshold) {
  const double t = clamp_threshold(threshold) - kCosSlack;
  std::vector<std::size_t> kept;
  std::vector<std::string> out;
  for (std::size_t idx : id_order(set)) {
    const auto row = set.row(idx);
    const auto n = static_cast<std::ptrdiff_t>(kept.size());
    int hit = 0;
    if constexpr (Parallel) {
      // Blocks keep most of the serial early exit: a match usually turns up
      // long before the whole kept list has been scanned.
      constexpr std::ptrdiff_t kBlock = 4096;
      for (std::ptrdiff_t b = 0; b < n && !hit; b += kBlock) {
        const std::ptrdiff_t e = std::min(n, b + kBlock);
        if (e - b < kBlock) {
          for (std::ptrdiff_t j = b; j < e && !hit; ++j) hit = dot_rows(row, set.row(kept[j])) >= t;
          continue;
        }
#pragma omp parallel for reduction(| : hit) schedule(static)
        for (std::ptrdiff_t j = b; j < e; ++j) hit |= dot_rows(row, set.row(kept[j])) >= t;
      }
    } else {
      for (std::ptrdiff_t j = 0; j < n && !hit; ++j) hit = dot_rows(row, set.row(kept[j])) >= t;
    }
    if (!hit) {
      kept.push_back(idx);
      out.push_back(set.ids[idx]);
    }
  }
  return out;
}

}  // namespace

EmbeddingSet EmbeddingSet::from_rows(std::vector<std::string> ids, const std::vector<std::vector<double>>& rows,
                                     bool normalize) {
  if (ids.size() != rows.size()) throw Error(ErrorKind::WidthMismatch, "id count differs from embedding count");
  require_unique(ids, "id");
  EmbeddingSet s;
  s.ids = std::move(ids);
  s.width = rows.empty() ? 0 : static_cast<int>(rows.front().size());
  if (!rows.empty() && s.width == 0) throw Error(ErrorKind::WidthMismatch, "embeddings have zero width");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (static_cast<int>(rows[i].size()) != s.width)
      throw Error(ErrorKind::WidthMismatch, "embedding '" + s.ids[i] + "' has a different width");
    const double n = std::sqrt(dot_rows(rows[i], rows[i]));
    if (normalize) {
      if (!(n > 0) || !std::isfinite(n)) throw Error(ErrorKind::InvalidArgument, "embedding '" + s.ids[i] + "' is zero");
      for (double x : rows[i]) s.data.push_back(x / n);
    } else {
      if (!(std::abs(n - 1) <= 1e-6)) throw Error(ErrorKind::InvalidArgument, "embedding '" + s.ids[i] + "' is not unit length");
      s.data.insert(s.data.end(), rows[i].begin(), rows[i].end());
    }
  }
  return s;
}

std::vector<std::string> greedy_prune(const EmbeddingSet& set, double sim_threshold) {
  return prune<true>(set, sim_threshold);
}

namespace serial {
std::vector<std::string> greedy_prune(const EmbeddingSet& set, double sim_threshold) {
  return prune<false>(set, sim_threshold);
}
}  // namespace serial

PairManifest assemble_pairs(const std::vector<std::string>& characters, const std::vector<std::string>& pose_pool,
                            std::size_t k, std::uint64_t seed) {
  if (k > pose_pool.size())
    throw Error(ErrorKind::PoolTooSmall, "k = " + std::to_string(k) + " exceeds the pose pool of " +
                                             std::to_string(pose_pool.size()));
  require_unique(characters, "character");
  require_unique(pose_pool, "pose");
  PairManifest m;
  m.seed = seed;
  m.k = k;
  m.pool_size = pose_pool.size();
  m.assets.reserve(characters.size() * k);
  std::vector<std::size_t> idx(pose_pool.size());
  for (std::size_t c = 0; c < characters.size(); ++c) {
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(derive_seed(seed, c));
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(uniform_index(rng, idx.size() - i));
      std::swap(idx[i], idx[j]);
      m.assets.push_back({characters[c], pose_pool[idx[i]]});
    }
    for (std::size_t i = 0; i + 1 < k; ++i)
      m.pairs.push_back({characters[c], pose_pool[idx[i]], pose_pool[idx[i + 1]]});
  }
  return m;
}

nlohmann::json to_json(const PairManifest& m) {
  nlohmann::json j;
  j["seed"] = m.seed;
  j["k"] = m.k;
  j["pool_size"] = m.pool_size;
  j["asset_count"] = m.assets.size();
  j["pair_count"] = m.pairs.size();
  auto& assets = j["assets"] = nlohmann::json::array();
  for (const auto& a : m.assets) assets.push_back({{"character", a.character}, {"pose", a.pose}});
  auto& pairs = j["pairs"] = nlohmann::json::array();
  for (const auto& p : m.pairs)
    pairs.push_back({{"character", p.character}, {"pose_before", p.pose_before}, {"pose_after", p.pose_after}});
  return j;
}

}  // namespace evk
