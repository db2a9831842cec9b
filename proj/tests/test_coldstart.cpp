#include "coldguess/coldstart.hpp"

#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <map>

using namespace coldguess;

namespace {

GeneratorConfig small_config(std::uint64_t seed = 42) {
  GeneratorConfig c;
  c.sellers = 400;
  c.products = 300;
  c.offers = 1500;
  c.communities = 10;
  c.seller_dim = 6;
  c.product_dim = 4;
  c.offer_dim = 5;
  c.p_in = {0.05, 0.04, 0.03, 0.03, 0.02, 0.02, 0.01, 0.01};
  c.seed = seed;
  return c;
}

bool contains(const std::vector<std::uint32_t>& sorted, std::uint32_t x) {
  return std::binary_search(sorted.begin(), sorted.end(), x);
}

bool is_subset(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b) {
  return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

// One-hot labelled graph: offer i gets class classes[i]; seller i owns offer i.
HeteroGraph labelled_graph(const std::vector<std::size_t>& classes) {
  HeteroGraph g(1, 1, 1);
  const std::vector<float> f{1.0f};
  g.add_node(NodeType::product, f);
  for (std::size_t i = 0; i < classes.size(); ++i) {
    g.add_node(NodeType::seller, f);
    g.add_edge(RelationTag::offer(), NodeRef::seller(static_cast<std::uint32_t>(i)), NodeRef::product(0),
               std::span<const float>(f));
  }
  Matrix<float> z(classes.size(), kClassCount);
  for (std::size_t i = 0; i < classes.size(); ++i) z(i, classes[i]) = 1.0f;
  g.set_labels(std::move(z));
  return g;
}

std::vector<float> row(const FeatureMatrix& m, std::size_t r) {
  return {m.data.begin() + static_cast<std::ptrdiff_t>(r * m.cols), m.data.begin() + static_cast<std::ptrdiff_t>((r + 1) * m.cols)};
}

}  // namespace

TEST(Generator, ExactCounts) {
  GeneratorConfig c = small_config();
  c.sellers = 100;
  c.products = 200;
  c.offers = 700;
  const auto g = generate_synthetic_graph(c);
  EXPECT_EQ(g.seller_count(), 100u);
  EXPECT_EQ(g.product_count(), 200u);
  EXPECT_EQ(g.offer_count(), 700u);
  EXPECT_EQ(g.labels().rows, 700u);
  EXPECT_TRUE(validate(g).ok());
  for (std::size_t o = 0; o < g.offer_count(); ++o) {
    float sum = 0.0f;
    for (std::size_t k = 0; k < kClassCount; ++k) sum += g.labels()(o, k);
    EXPECT_EQ(sum, 1.0f);
  }
}

TEST(Generator, DeterministicPerSeedAndSnapshot) {
  const auto c = small_config();
  const auto a = generate_synthetic_graph(c), b = generate_synthetic_graph(c);
  EXPECT_EQ(a.listings(), b.listings());
  EXPECT_TRUE(a.offer_features() == b.offer_features());
  EXPECT_TRUE(a.seller_features() == b.seller_features());
  EXPECT_TRUE(a.labels() == b.labels());
  const auto s1 = generate_synthetic_graph(c, 1);
  EXPECT_FALSE(s1.seller_features() == a.seller_features());
  EXPECT_EQ(s1.offer_count(), a.offer_count());
}

TEST(Generator, ColumnConventions) {
  const auto g = generate_synthetic_graph(small_config());
  EXPECT_EQ(g.offer_columns().front(), "list_price");
  EXPECT_EQ(g.product_columns().front(), "product_category");
  for (std::size_t o = 0; o < g.offer_count(); ++o) EXPECT_GT(g.offer_features()(o, 0), 0.0f);
}

TEST(Generator, NoiselessDisjointCommunitiesAreHomogeneous) {
  GeneratorConfig c = small_config();
  c.communities = 2;
  c.noise = 0.0;
  c.class_probabilities = {{0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0}, {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0}};
  const auto out = generate_synthetic_graph_with_truth(c);
  const auto& g = out.graph;
  for (std::size_t o = 0; o < g.offer_count(); ++o) {
    const auto community = out.seller_community[g.listing(o).seller.index];
    EXPECT_EQ(g.labels()(o, community == 0 ? 2 : 8), 1.0f);
  }
  // Without noise every seller sits on its community centroid.
  for (std::uint32_t s = 1; s < g.seller_count(); ++s)
    if (out.seller_community[s] == out.seller_community[0]) {
      EXPECT_EQ(row(g.seller_features(), s), row(g.seller_features(), 0));
    }
}

TEST(Generator, IntraCommunityEdgeRateMatchesConfig) {
  GeneratorConfig c;
  c.offers = 2000;
  const auto out = generate_synthetic_graph_with_truth(c);
  const auto& g = out.graph;
  std::map<std::uint32_t, std::size_t> size;
  for (auto k : out.seller_community) ++size[k];
  double pairs = 0.0;
  for (auto [k, n] : size) pairs += static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
  for (std::size_t r = 0; r < kSellerRelationCount; ++r) {
    std::size_t inside = 0;
    for (auto [a, b] : g.seller_edges(r)) inside += out.seller_community[a] == out.seller_community[b];
    const double rate = static_cast<double>(inside) / pairs;
    EXPECT_NEAR(rate, c.p_in[r], 0.1 * c.p_in[r]) << "relation " << r;
  }
}

TEST(Generator, RiskClustersAlongSellerEdges) {
  const auto g = generate_synthetic_graph(small_config());
  // Per-seller defect share, compared across linked pairs and random pairs.
  std::vector<double> defect(g.seller_count(), 0.0);
  for (std::uint32_t s = 0; s < g.seller_count(); ++s) {
    const auto offers = g.seller_offers(s);
    for (auto o : offers) defect[s] += 1.0 - g.labels()(o, kClassCount - 1);
    if (!offers.empty()) defect[s] /= static_cast<double>(offers.size());
  }
  double linked = 0.0, n_linked = 0.0;
  for (std::size_t r = 0; r < kSellerRelationCount; ++r)
    for (auto [a, b] : g.seller_edges(r)) {
      linked += std::abs(defect[a] - defect[b]);
      n_linked += 1.0;
    }
  double random = 0.0, n_random = 0.0;
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(g.seller_count() - 1));
  for (int i = 0; i < 20000; ++i) {
    random += std::abs(defect[pick(rng)] - defect[pick(rng)]);
    n_random += 1.0;
  }
  EXPECT_LT(linked / n_linked, random / n_random);
}

TEST(Generator, InfeasibleConfigsRejected) {
  GeneratorConfig c = small_config();
  c.products = 0;
  EXPECT_THROW(generate_synthetic_graph(c), GeneratorError);
  c = small_config();
  c.p_in[0] = 1.5;
  EXPECT_THROW(generate_synthetic_graph(c), GeneratorError);
  c = small_config();
  c.sellers = 2;
  c.products = 2;
  c.offers = 5;
  EXPECT_THROW(generate_synthetic_graph(c), GeneratorError);
  c = small_config();
  c.class_probabilities = {{0.5, 0.6, 0, 0, 0, 0, 0, 0}};
  c.communities = 1;
  EXPECT_THROW(generate_synthetic_graph(c), GeneratorError);
}

TEST(Generator, ConfigJsonRoundTrip) {
  GeneratorConfig c = small_config(7);
  c.noise = 0.25;
  const auto back = GeneratorConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_THROW(GeneratorConfig::from_json({{"selers", 3}}), std::invalid_argument);
  EXPECT_THROW(GeneratorConfig::from_json({{"sellers", "many"}}), std::invalid_argument);
}

TEST(Generator, ExpandedGraphDoublesOfferEdges) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto g = generate_synthetic_graph(small_config(seed));
    const auto x = build_expanded_graph(g);
    EXPECT_EQ(x.offer_incident_edge_count(), 2 * g.offer_count());
    EXPECT_EQ(x.seller_edge_count(), g.seller_edge_count());
  }
}

TEST(SampleColdEntities, CeilCounts) {
  // Class 1 (minority) has 8 offers, Normal has 100, class 0 has none.
  std::vector<std::size_t> classes(8, 1);
  classes.insert(classes.end(), 100, 8);
  const auto g = labelled_graph(classes);
  const auto picked = sample_cold_entities(g, 5);
  std::size_t minority = 0, normal = 0;
  for (auto o : picked) (o < 8 ? minority : normal) += 1;
  EXPECT_EQ(minority, 2u);
  EXPECT_EQ(normal, 1u);
  EXPECT_TRUE(std::is_sorted(picked.begin(), picked.end()));
}

TEST(SampleColdEntities, EmptyGraphClassesContributeNothing) {
  const auto g = labelled_graph({8, 8, 8});
  EXPECT_EQ(sample_cold_entities(g, 1).size(), 1u);
}

TEST(SampleColdEntities, DeterministicPerSeed) {
  const auto g = generate_synthetic_graph(small_config());
  EXPECT_EQ(sample_cold_entities(g, 3), sample_cold_entities(g, 3));
  EXPECT_NE(sample_cold_entities(g, 3), sample_cold_entities(g, 4));
}

TEST(Scenario, NewSellerFractionUnderDefaultConfig) {
  const auto g = generate_synthetic_graph(GeneratorConfig{});
  const auto spec = sample_scenario(g, Scenario::new_seller, 11);
  const double fraction = static_cast<double>(spec.new_sellers.size()) / static_cast<double>(g.seller_count());
  EXPECT_GE(fraction, 0.05);
  EXPECT_LE(fraction, 0.25);
}

TEST(Scenario, RetainedColumnsPerScenario) {
  const auto g = generate_synthetic_graph(small_config());
  EXPECT_TRUE(sample_scenario(g, Scenario::full, 1).retained_offer_columns.empty());
  for (Scenario s : {Scenario::new_offer, Scenario::new_seller, Scenario::new_seller_new_product})
    EXPECT_EQ(sample_scenario(g, s, 1).retained_offer_columns, std::vector<std::string>{"list_price"});
  EXPECT_EQ(sample_scenario(g, Scenario::new_seller_new_product, 1).retained_product_columns,
            std::vector<std::string>{"product_category"});
}

TEST(Scenario, FullLeavesGraphUnchanged) {
  const auto g = generate_synthetic_graph(small_config());
  const auto res = apply_scenario(g, sample_scenario(g, Scenario::full, 1));
  EXPECT_TRUE(res.graph.offer_features() == g.offer_features());
  EXPECT_TRUE(res.graph.seller_features() == g.seller_features());
  EXPECT_TRUE(res.graph.product_features() == g.product_features());
  EXPECT_EQ(res.evaluation.size(), g.offer_count());
  EXPECT_TRUE(res.seller_mask.sellers.empty());
}

TEST(Scenario, NewOfferKeepsOnlyListPrice) {
  HeteroGraph g(1, 1, 5);
  const std::vector<float> f{1.0f};
  g.add_node(NodeType::seller, f);
  g.add_node(NodeType::product, f);
  g.add_node(NodeType::product, f);
  const std::vector<float> x{12.5f, 1.0f, 2.0f, 3.0f, 4.0f};
  g.add_edge(RelationTag::offer(), NodeRef::seller(0), NodeRef::product(0), std::span<const float>(x));
  g.add_edge(RelationTag::offer(), NodeRef::seller(0), NodeRef::product(1), std::span<const float>(x));
  g.set_labels(Matrix<float>(2, kClassCount));
  name_generated_columns(g);
  const auto res = apply_scenario(g, make_scenario(g, Scenario::new_offer, {0}));
  EXPECT_EQ(row(res.graph.offer_features(), 0), (std::vector<float>{12.5f, 0, 0, 0, 0}));
  EXPECT_EQ(row(res.graph.offer_features(), 1), x);
  EXPECT_EQ(res.evaluation, std::vector<std::uint32_t>{0});
  EXPECT_TRUE(res.graph.seller_features() == g.seller_features());
}

TEST(Scenario, NewSellerExpandsToAllItsOffers) {
  // Seller 0 lists o1 = 0 and o2 = 1; seller 1 lists offer 2. Only o1 is sampled.
  HeteroGraph g(2, 1, 3);
  g.add_node(NodeType::seller, std::vector<float>{1, 2});
  g.add_node(NodeType::seller, std::vector<float>{3, 4});
  g.add_node(NodeType::product, std::vector<float>{5});
  g.add_node(NodeType::product, std::vector<float>{6});
  const std::vector<float> x{9.0f, 1.0f, 1.0f};
  g.add_edge(RelationTag::offer(), NodeRef::seller(0), NodeRef::product(0), std::span<const float>(x));
  g.add_edge(RelationTag::offer(), NodeRef::seller(0), NodeRef::product(1), std::span<const float>(x));
  g.add_edge(RelationTag::offer(), NodeRef::seller(1), NodeRef::product(0), std::span<const float>(x));
  g.add_edge(RelationTag::seller_seller(2), NodeRef::seller(0), NodeRef::seller(1));
  g.set_labels(Matrix<float>(3, kClassCount));
  name_generated_columns(g);
  const auto spec = make_scenario(g, Scenario::new_seller, {0});
  EXPECT_EQ(spec.new_sellers, std::vector<std::uint32_t>{0});
  const auto res = apply_scenario(g, spec);
  EXPECT_EQ(res.evaluation, (std::vector<std::uint32_t>{0, 1}));
  EXPECT_EQ(row(res.graph.offer_features(), 0), (std::vector<float>{9, 0, 0}));
  EXPECT_EQ(row(res.graph.offer_features(), 1), (std::vector<float>{9, 0, 0}));
  EXPECT_EQ(row(res.graph.offer_features(), 2), x);
  EXPECT_EQ(row(res.graph.seller_features(), 0), (std::vector<float>{0, 0}));
  EXPECT_EQ(row(res.graph.seller_features(), 1), (std::vector<float>{3, 4}));
  // Edges survive masking.
  EXPECT_EQ(res.graph.seller_edges(2), g.seller_edges(2));
  EXPECT_EQ(res.seller_mask.sellers, std::vector<std::uint32_t>{0});
  EXPECT_EQ(res.seller_mask.columns, (std::vector<std::size_t>{0, 1}));
}

TEST(Scenario, NewSellerNewProductAddsProductOffers) {
  // Product 0 is shared between the new seller and seller 1.
  HeteroGraph g(1, 2, 2);
  g.add_node(NodeType::seller, std::vector<float>{1});
  g.add_node(NodeType::seller, std::vector<float>{2});
  g.add_node(NodeType::product, std::vector<float>{3, 4});
  g.add_node(NodeType::product, std::vector<float>{5, 6});
  const std::vector<float> x{7.0f, 8.0f};
  g.add_edge(RelationTag::offer(), NodeRef::seller(0), NodeRef::product(0), std::span<const float>(x));
  g.add_edge(RelationTag::offer(), NodeRef::seller(1), NodeRef::product(0), std::span<const float>(x));
  g.add_edge(RelationTag::offer(), NodeRef::seller(1), NodeRef::product(1), std::span<const float>(x));
  g.set_labels(Matrix<float>(3, kClassCount));
  name_generated_columns(g);
  const auto res = apply_scenario(g, make_scenario(g, Scenario::new_seller_new_product, {0}));
  EXPECT_EQ(res.evaluation, (std::vector<std::uint32_t>{0, 1}));
  EXPECT_EQ(row(res.graph.product_features(), 0), (std::vector<float>{3, 0}));
  EXPECT_EQ(row(res.graph.product_features(), 1), (std::vector<float>{5, 6}));
  EXPECT_EQ(row(res.graph.offer_features(), 1), (std::vector<float>{7, 0}));
  EXPECT_EQ(row(res.graph.offer_features(), 2), x);
}

TEST(Scenario, MaskingInvariantsOnGeneratedGraphs) {
  for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
    const auto g = generate_synthetic_graph(small_config(seed));
    std::vector<std::vector<std::uint32_t>> evals;
    for (Scenario sc : {Scenario::new_offer, Scenario::new_seller, Scenario::new_seller_new_product}) {
      const auto spec = sample_scenario(g, sc, seed * 10);
      const auto res = apply_scenario(g, spec);
      const auto& x0 = g.offer_features();
      const auto& x1 = res.graph.offer_features();
      for (std::uint32_t o = 0; o < g.offer_count(); ++o) {
        const bool masked = contains(res.evaluation, o);
        for (std::size_t c = 0; c < g.offer_dim(); ++c) {
          if (!masked || c == 0) {
            EXPECT_EQ(std::bit_cast<std::uint32_t>(x1(o, c)), std::bit_cast<std::uint32_t>(x0(o, c)));
          } else {
            EXPECT_EQ(x1(o, c), 0.0f);
          }
        }
      }
      for (std::uint32_t s = 0; s < g.seller_count(); ++s) {
        const bool is_new = contains(spec.new_sellers, s);
        for (std::size_t c = 0; c < g.seller_dim(); ++c) {
          if (is_new) {
            EXPECT_EQ(res.graph.seller_features()(s, c), 0.0f);
          } else {
            EXPECT_EQ(res.graph.seller_features()(s, c), g.seller_features()(s, c));
          }
        }
      }
      for (std::uint32_t p = 0; p < g.product_count(); ++p) {
        const bool is_new = contains(spec.new_products, p);
        for (std::size_t c = 0; c < g.product_dim(); ++c) {
          if (is_new && c > 0) {
            EXPECT_EQ(res.graph.product_features()(p, c), 0.0f);
          } else {
            EXPECT_EQ(res.graph.product_features()(p, c), g.product_features()(p, c));
          }
        }
      }
      EXPECT_EQ(res.graph.listings(), g.listings());
      EXPECT_TRUE(res.graph.labels() == g.labels());

      const auto again = apply_scenario(res.graph, spec);
      EXPECT_TRUE(again.graph.offer_features() == res.graph.offer_features());
      EXPECT_TRUE(again.graph.seller_features() == res.graph.seller_features());
      EXPECT_TRUE(again.graph.product_features() == res.graph.product_features());
      EXPECT_EQ(again.evaluation, res.evaluation);
      evals.push_back(res.evaluation);
    }
    EXPECT_TRUE(is_subset(evals[0], evals[1]));
    EXPECT_TRUE(is_subset(evals[1], evals[2]));
  }
}

TEST(Scenario, BadSpecsRejected) {
  const auto g = generate_synthetic_graph(small_config());
  auto spec = sample_scenario(g, Scenario::new_offer, 1);
  spec.retained_offer_columns = {"colour"};
  EXPECT_THROW(apply_scenario(g, spec), std::invalid_argument);
  spec = sample_scenario(g, Scenario::new_offer, 1);
  spec.new_offers.push_back(static_cast<std::uint32_t>(g.offer_count()));
  EXPECT_THROW(apply_scenario(g, spec), std::invalid_argument);
  EXPECT_THROW(parse_scenario("G_x"), std::invalid_argument);
}

TEST(Scenario, JsonRoundTrip) {
  const auto g = generate_synthetic_graph(small_config());
  const auto spec = sample_scenario(g, Scenario::new_seller_new_product, 9);
  const auto back = ScenarioSpec::from_json(spec.to_json());
  EXPECT_EQ(back.to_json(), spec.to_json());
  EXPECT_EQ(back.new_products, spec.new_products);
  auto j = spec.to_json();
  j["extra"] = 1;
  EXPECT_THROW(ScenarioSpec::from_json(j), std::invalid_argument);
  EXPECT_THROW(ScenarioSpec::from_json({{"seed", 1}}), std::invalid_argument);
}
