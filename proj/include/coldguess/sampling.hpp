#pragma once

#include "coldguess/graph.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace coldguess {

struct OfferBatch {
  std::vector<std::uint32_t> offers;
  std::uint64_t seed = 0;
};

/// Uniform sample without replacement of min(batch_size, |candidates|)
/// offers. Deterministic for a given seed.
inline OfferBatch sample_offer_batch(std::span<const std::uint32_t> candidates, std::size_t batch_size, std::uint64_t seed) {
  if (candidates.empty()) throw GraphError("sample_offer_batch: no labeled offers to sample from");
  std::vector<std::uint32_t> pool(candidates.begin(), candidates.end());
  const std::size_t k = std::min(batch_size, pool.size());
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(k);
  return {std::move(pool), seed};
}

inline std::vector<std::uint32_t> labeled_offers(const HeteroGraph& g) {
  if (!g.has_labels()) return {};
  std::vector<std::uint32_t> all(g.offer_count());
  std::iota(all.begin(), all.end(), 0u);
  return all;
}

inline OfferBatch sample_offer_batch(const HeteroGraph& g, std::size_t batch_size, std::uint64_t seed) {
  return sample_offer_batch(labeled_offers(g), batch_size, seed);
}

/// Subgraph within `hops` relation-edges of a seed node set. Local indices
/// follow breadth-first order, so the nodes within distance k of the seeds
/// are exactly the local prefix [0, hop_prefix[k]).
struct EgoNetwork {
  std::size_t hops = 0;
  std::vector<std::uint32_t> nodes;  // local -> global id
  std::vector<std::uint8_t> hop;     // distance from the seed set
  std::vector<std::size_t> hop_prefix;
  std::vector<SegmentIndex> relations;  // every edge among included nodes, local ids
  /// Local (seller, product) endpoints of each batch offer, batch order.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> endpoints;
  std::vector<std::uint32_t> seeds;  // local ids of the seed nodes, batch order

  std::size_t size() const { return nodes.size(); }

  std::optional<std::uint32_t> local_index(std::uint32_t global) const {
    auto it = std::lower_bound(sorted_globals.begin(), sorted_globals.end(), std::pair{global, 0u},
                               [](const auto& a, const auto& b) { return a.first < b.first; });
    if (it == sorted_globals.end() || it->first != global) return std::nullopt;
    return it->second;
  }

  std::vector<std::pair<std::uint32_t, std::uint32_t>> sorted_globals;
};

struct EgoOptions {
  /// Largest number of neighbors expanded per node and relation; 0 expands all.
  std::size_t fanout_cap = 0;
};

/// Breadth-first closure over every relation of `view`, starting from the
/// seed nodes (distance 0).
inline EgoNetwork extract_ego_network(const RelationalView& view, std::span<const std::uint32_t> seed_nodes, std::size_t hops,
                                      EgoOptions options = {}) {
  if (hops < 1) throw std::invalid_argument("extract_ego_network: hops must be >= 1");
  if (hops > 250) throw std::invalid_argument("extract_ego_network: hops too large");
  EgoNetwork ego;
  ego.hops = hops;
  std::vector<std::int32_t> local(view.num_nodes, -1);

  auto admit = [&](std::uint32_t g, std::uint8_t h) {
    local[g] = static_cast<std::int32_t>(ego.nodes.size());
    ego.nodes.push_back(g);
    ego.hop.push_back(h);
  };

  std::vector<std::uint32_t> level;
  for (std::uint32_t s : seed_nodes) {
    if (s >= view.num_nodes) throw GraphError("extract_ego_network: seed out of range");
    if (local[s] < 0) {
      local[s] = 0;
      level.push_back(s);
    }
  }
  std::sort(level.begin(), level.end());
  for (std::uint32_t g : level) admit(g, 0);
  ego.hop_prefix.push_back(ego.nodes.size());

  for (std::size_t h = 1; h <= hops; ++h) {
    std::vector<std::uint32_t> next;
    const std::size_t begin = h == 1 ? 0 : ego.hop_prefix[h - 2];
    const std::size_t end = ego.hop_prefix[h - 1];
    for (std::size_t i = begin; i < end; ++i) {
      const std::uint32_t v = ego.nodes[i];
      for (std::size_t r = 0; r < view.relations.size(); ++r) {
        const auto nb = view.neighbors(v, r);
        const std::size_t take = options.fanout_cap ? std::min(options.fanout_cap, nb.size()) : nb.size();
        for (std::size_t j = 0; j < take; ++j) {
          // Evenly strided subset when capped.
          const std::uint32_t u = take == nb.size() ? nb[j] : nb[j * nb.size() / take];
          if (local[u] >= 0) continue;
          local[u] = 0;
          next.push_back(u);
        }
      }
    }
    std::sort(next.begin(), next.end());
    for (std::uint32_t g : next) admit(g, static_cast<std::uint8_t>(h));
    ego.hop_prefix.push_back(ego.nodes.size());
  }

  for (std::size_t r = 0; r < view.relations.size(); ++r) {
    SegmentIndex csr;
    std::vector<std::uint32_t> row;
    for (std::uint32_t g : ego.nodes) {
      row.clear();
      // Global neighbor order, so aggregation sums in the same order as a
      // whole-graph pass.
      for (std::uint32_t u : view.neighbors(g, r))
        if (local[u] >= 0) row.push_back(static_cast<std::uint32_t>(local[u]));
      csr.push_segment(row);
    }
    ego.relations.push_back(std::move(csr));
  }

  for (std::uint32_t s : seed_nodes) ego.seeds.push_back(static_cast<std::uint32_t>(local[s]));
  ego.sorted_globals.reserve(ego.nodes.size());
  for (std::size_t i = 0; i < ego.nodes.size(); ++i) ego.sorted_globals.emplace_back(ego.nodes[i], static_cast<std::uint32_t>(i));
  std::sort(ego.sorted_globals.begin(), ego.sorted_globals.end());
  return ego;
}

/// Ego network around the seller and product endpoints of a batch of offers.
inline EgoNetwork extract_ego_network(const HeteroGraph& g, const RelationalView& view, const OfferBatch& batch,
                                      std::size_t hops, EgoOptions options = {}) {
  std::vector<std::uint32_t> seeds;
  seeds.reserve(batch.offers.size() * 2);
  for (std::uint32_t o : batch.offers) {
    const Listing& l = g.listing(o);
    seeds.push_back(flat_id(g, l.seller));
    seeds.push_back(flat_id(g, l.product));
  }
  EgoNetwork ego = extract_ego_network(view, seeds, hops, options);
  for (std::size_t i = 0; i < batch.offers.size(); ++i) ego.endpoints.emplace_back(ego.seeds[2 * i], ego.seeds[2 * i + 1]);
  return ego;
}

inline EgoNetwork extract_ego_network(const HeteroGraph& g, const OfferBatch& batch, std::size_t hops, EgoOptions options = {}) {
  return extract_ego_network(g, relational_view(g), batch, hops, options);
}

}  // namespace coldguess
