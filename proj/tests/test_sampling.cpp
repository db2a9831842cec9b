#include "coldguess/sampling.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <array>
#include <deque>
#include <set>

using namespace coldguess;
using testutil::random_graph;

namespace {

std::vector<std::uint32_t> sorted(std::vector<std::uint32_t> v) {
  std::sort(v.begin(), v.end());
  return v;
}

// Plain BFS distances over the flat view.
std::vector<int> bfs_distances(const RelationalView& view, const std::vector<std::uint32_t>& seeds) {
  std::vector<int> d(view.num_nodes, -1);
  std::deque<std::uint32_t> q;
  for (auto s : seeds)
    if (d[s] < 0) {
      d[s] = 0;
      q.push_back(s);
    }
  while (!q.empty()) {
    const auto v = q.front();
    q.pop_front();
    for (std::size_t r = 0; r < view.relations.size(); ++r)
      for (auto u : view.neighbors(v, r))
        if (d[u] < 0) {
          d[u] = d[v] + 1;
          q.push_back(u);
        }
  }
  return d;
}

// s1 -(offer)- p1, s1 - s2, s2 -(offer)- p2 with sellers {0,1}, products {0,1}.
HeteroGraph path_graph() {
  HeteroGraph g(1, 1, 1);
  const std::vector<float> f{0};
  g.add_node(NodeType::seller, f);
  g.add_node(NodeType::seller, f);
  g.add_node(NodeType::product, f);
  g.add_node(NodeType::product, f);
  g.add_edge(RelationTag::offer(), NodeRef::seller(0), NodeRef::product(0), std::span<const float>(f));
  g.add_edge(RelationTag::seller_seller(4), NodeRef::seller(0), NodeRef::seller(1));
  g.add_edge(RelationTag::offer(), NodeRef::seller(1), NodeRef::product(1), std::span<const float>(f));
  g.set_labels(Matrix<float>(2, kClassCount));
  return g;
}

}  // namespace

TEST(SampleOfferBatch, ExhaustiveWhenBatchCoversAll) {
  const auto g = random_graph(1, 8, 8, 10, 4);
  for (std::uint64_t seed : {0u, 1u, 99u}) {
    const auto b = sample_offer_batch(g, 10, seed);
    EXPECT_EQ(sorted(b.offers), labeled_offers(g));
  }
  EXPECT_EQ(sample_offer_batch(g, 50, 3).offers.size(), 10u);
}

TEST(SampleOfferBatch, DeterministicAndUnique) {
  const auto g = random_graph(2, 10, 10, 30, 4);
  const auto a = sample_offer_batch(g, 3, 7), b = sample_offer_batch(g, 3, 7);
  EXPECT_EQ(a.offers, b.offers);
  const auto big = sample_offer_batch(g, 20, 11);
  EXPECT_EQ(std::set<std::uint32_t>(big.offers.begin(), big.offers.end()).size(), big.offers.size());
}

TEST(SampleOfferBatch, UniformFrequency) {
  const std::vector<std::uint32_t> pool{0, 1, 2, 3};
  std::array<int, 4> counts{};
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) ++counts[sample_offer_batch(pool, 1, static_cast<std::uint64_t>(i)).offers[0]];
  for (int c : counts) EXPECT_NEAR(static_cast<double>(c) / draws, 0.25, 0.01);
}

TEST(SampleOfferBatch, NoLabeledOffersThrows) {
  auto g = random_graph(3);
  g.clear_labels();
  EXPECT_THROW(sample_offer_batch(g, 4, 1), GraphError);
}

TEST(EgoNetwork, PathGraphOneHop) {
  const auto g = path_graph();
  const auto ego = extract_ego_network(g, OfferBatch{{0}, 0}, 1);
  // flat ids: s1=0, s2=1, p1=2, p2=3
  EXPECT_EQ(sorted(ego.nodes), (std::vector<std::uint32_t>{0, 1, 2}));
}

TEST(EgoNetwork, PathGraphTwoHops) {
  const auto g = path_graph();
  const auto ego = extract_ego_network(g, OfferBatch{{0}, 0}, 2);
  EXPECT_EQ(sorted(ego.nodes), (std::vector<std::uint32_t>{0, 1, 2, 3}));
  ASSERT_TRUE(ego.local_index(3).has_value());
  EXPECT_EQ(ego.hop[*ego.local_index(3)], 2);
  EXPECT_EQ(ego.hop[*ego.local_index(1)], 1);
  EXPECT_EQ(ego.hop[*ego.local_index(0)], 0);
}

TEST(EgoNetwork, EndpointsInLocalCoordinates) {
  const auto g = random_graph(4, 20, 15, 40, 30);
  const auto view = relational_view(g);
  const OfferBatch batch{{3, 7, 3}, 0};
  const auto ego = extract_ego_network(g, view, batch, 2);
  ASSERT_EQ(ego.endpoints.size(), 3u);
  for (std::size_t i = 0; i < batch.offers.size(); ++i) {
    const auto& l = g.listing(batch.offers[i]);
    EXPECT_EQ(ego.nodes[ego.endpoints[i].first], flat_id(g, l.seller));
    EXPECT_EQ(ego.nodes[ego.endpoints[i].second], flat_id(g, l.product));
  }
}

TEST(EgoNetwork, MatchesBfsOracle) {
  for (std::uint64_t seed = 0; seed < 15; ++seed) {
    const auto g = random_graph(seed, 30, 20, 50, 40);
    const auto view = relational_view(g);
    const auto batch = sample_offer_batch(g, 3, seed);
    std::vector<std::uint32_t> seeds;
    for (auto o : batch.offers) {
      seeds.push_back(flat_id(g, g.listing(o).seller));
      seeds.push_back(flat_id(g, g.listing(o).product));
    }
    const auto dist = bfs_distances(view, seeds);
    for (std::size_t hops = 1; hops <= 4; ++hops) {
      const auto ego = extract_ego_network(g, view, batch, hops);
      std::vector<std::uint32_t> expect;
      for (std::uint32_t v = 0; v < view.num_nodes; ++v)
        if (dist[v] >= 0 && dist[v] <= static_cast<int>(hops)) expect.push_back(v);
      EXPECT_EQ(sorted(ego.nodes), expect);
      for (std::size_t i = 0; i < ego.size(); ++i) {
        EXPECT_EQ(ego.hop[i], dist[ego.nodes[i]]);
        EXPECT_EQ(*ego.local_index(ego.nodes[i]), i);
        if (i > 0) {
          EXPECT_LE(ego.hop[i - 1], ego.hop[i]);
        }
      }
      for (std::size_t k = 0; k <= hops; ++k) {
        const auto n = static_cast<std::size_t>(std::count_if(dist.begin(), dist.end(), [&](int d) { return d >= 0 && d <= int(k); }));
        EXPECT_EQ(ego.hop_prefix[k], n);
      }
      // Every edge among included nodes is present, in local ids and in the
      // graph's own neighbor order.
      for (std::size_t r = 0; r < kRelationCount; ++r)
        for (std::size_t i = 0; i < ego.size(); ++i) {
          std::vector<std::uint32_t> expect_nb;
          for (auto u : view.neighbors(ego.nodes[i], r))
            if (auto li = ego.local_index(u)) expect_nb.push_back(*li);
          const auto got = ego.relations[r].segment(i);
          EXPECT_EQ(std::vector<std::uint32_t>(got.begin(), got.end()), expect_nb);
        }
    }
  }
}

TEST(EgoNetwork, NestedInHops) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto g = random_graph(seed, 25, 20, 40, 30);
    const auto view = relational_view(g);
    const auto batch = sample_offer_batch(g, 2, seed + 100);
    std::vector<std::uint32_t> prev;
    for (std::size_t k = 1; k <= 5; ++k) {
      const auto cur = sorted(extract_ego_network(g, view, batch, k).nodes);
      EXPECT_TRUE(std::includes(cur.begin(), cur.end(), prev.begin(), prev.end()));
      prev = cur;
    }
  }
}

TEST(EgoNetwork, DiameterHopsGiveConnectedComponent) {
  const auto g = random_graph(6, 15, 10, 20, 10);
  const auto view = relational_view(g);
  const OfferBatch batch{{0}, 0};
  const auto l = g.listing(0);
  const auto dist = bfs_distances(view, {flat_id(g, l.seller), flat_id(g, l.product)});
  std::vector<std::uint32_t> component;
  for (std::uint32_t v = 0; v < view.num_nodes; ++v)
    if (dist[v] >= 0) component.push_back(v);
  const auto ego = extract_ego_network(g, view, batch, view.num_nodes);
  EXPECT_EQ(sorted(ego.nodes), component);
}

TEST(EgoNetwork, ZeroHopsRejected) {
  const auto g = path_graph();
  EXPECT_THROW(extract_ego_network(g, OfferBatch{{0}, 0}, 0), std::invalid_argument);
}

TEST(EgoNetwork, FanoutCapLimitsExpansion) {
  HeteroGraph g(1, 1, 1);
  const std::vector<float> f{0};
  for (int i = 0; i < 20; ++i) g.add_node(NodeType::seller, f);
  g.add_node(NodeType::product, f);
  for (std::uint32_t i = 1; i < 20; ++i) g.add_edge(RelationTag::seller_seller(0), NodeRef::seller(0), NodeRef::seller(i));
  g.add_edge(RelationTag::offer(), NodeRef::seller(0), NodeRef::product(0), std::span<const float>(f));
  const auto capped = extract_ego_network(g, OfferBatch{{0}, 0}, 1, EgoOptions{5});
  EXPECT_EQ(capped.size(), 2u + 5u);
  EXPECT_EQ(extract_ego_network(g, OfferBatch{{0}, 0}, 1).size(), 21u);
}
