#include "coldguess/eval.hpp"
#include "coldguess/model.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <limits>
#include <set>

using namespace coldguess;
using testutil::random_graph;

namespace {

std::vector<std::uint32_t> all_offers(const HeteroGraph& g) {
  std::vector<std::uint32_t> v(g.offer_count());
  std::iota(v.begin(), v.end(), 0u);
  return v;
}

// Two-class toy: positives (class 0) have offer feature +1, negatives (class 8) -1.
HeteroGraph separable_toy() {
  std::mt19937_64 rng(3);
  std::normal_distribution<float> n(0.0f, 0.1f);
  HeteroGraph g(2, 2, 2);
  for (int i = 0; i < 12; ++i) g.add_node(NodeType::seller, std::vector<float>{n(rng), n(rng)});
  for (int i = 0; i < 10; ++i) g.add_node(NodeType::product, std::vector<float>{n(rng), n(rng)});
  for (std::uint32_t s = 0; s + 1 < 12; s += 2) g.add_edge(RelationTag::seller_seller(s % 8), NodeRef::seller(s), NodeRef::seller(s + 1));
  std::vector<int> positive;
  for (std::uint32_t s = 0; s < 12; ++s)
    for (std::uint32_t k = 0; k < 3; ++k) {
      const bool pos = (s + k) % 2 == 0;
      const std::vector<float> f{pos ? 1.0f + n(rng) : -1.0f + n(rng), n(rng)};
      g.add_edge(RelationTag::offer(), NodeRef::seller(s), NodeRef::product((s + 3 * k) % 10), std::span<const float>(f));
      positive.push_back(pos);
    }
  Matrix<float> z(g.offer_count(), kClassCount);
  for (std::size_t o = 0; o < g.offer_count(); ++o) z(o, positive[o] ? 0 : 8) = 1.0f;
  g.set_labels(std::move(z));
  return g;
}

// Tiny graph for gradient checks: 4 sellers, 4 products, 5 offers.
HeteroGraph gradient_toy() {
  std::mt19937_64 rng(17);
  std::normal_distribution<float> n(0.0f, 1.0f);
  HeteroGraph g(3, 2, 2);
  auto f = [&](std::size_t d) {
    std::vector<float> v(d);
    for (float& x : v) x = n(rng);
    return v;
  };
  for (int i = 0; i < 4; ++i) g.add_node(NodeType::seller, f(3));
  for (int i = 0; i < 4; ++i) g.add_node(NodeType::product, f(2));
  g.add_edge(RelationTag::seller_seller(0), NodeRef::seller(0), NodeRef::seller(1));
  g.add_edge(RelationTag::seller_seller(3), NodeRef::seller(1), NodeRef::seller(2));
  g.add_edge(RelationTag::seller_seller(3), NodeRef::seller(0), NodeRef::seller(3));
  const std::pair<std::uint32_t, std::uint32_t> offers[] = {{0, 0}, {0, 1}, {1, 1}, {2, 2}, {3, 3}};
  for (auto [s, p] : offers) {
    const auto x = f(2);
    g.add_edge(RelationTag::offer(), NodeRef::seller(s), NodeRef::product(p), std::span<const float>(x));
  }
  Matrix<float> z(g.offer_count(), kClassCount);
  for (std::size_t o = 0; o < g.offer_count(); ++o) z(o, (o * 4) % kClassCount) = 1.0f;
  g.set_labels(std::move(z));
  return g;
}

// Full ColdGuess loss at narrow widths so every coordinate can be probed quickly.
struct GradientFixture {
  HeteroGraph graph = gradient_toy();
  ColdGuessConfig config;
  std::vector<std::uint32_t> offers;

  GradientFixture() {
    config.seller_dim = graph.seller_dim();
    config.product_dim = graph.product_dim();
    config.offer_dim = graph.offer_dim();
    config.hidden = config.edge_hidden = config.classifier_hidden = 8;
    offers = all_offers(graph);
  }

  template <class T>
  LossFn<T> loss(const ColdGuessNet<T>& net, const ColdGuessBatch<T>& batch, const Matrix<T>& z) const {
    return [&net, &batch, &z](Tape<T>& tape, const std::vector<Var<T>>& w) {
      return scale(bce_loss(net.forward(tape, w, batch), z), static_cast<T>(kClassCount));
    };
  }
};

}  // namespace

TEST(GradientCheck, ColdGuessLossDouble) {
  GradientFixture fx;
  const auto net = ColdGuessNet<double>::create(fx.config, 5);
  const auto batch = make_ego_batch<double>(fx.graph, relational_view(fx.graph), fx.offers, fx.config.layers);
  const Matrix<double> z = fx.graph.labels().cast<double>();
  const auto r = finite_diff_check(fx.loss(net, batch, z), net.parameters(), 1e-6);
  EXPECT_LT(r.max_relative_error, 1e-5) << r.worst_parameter;
  EXPECT_GT(r.coordinates, 1000u);
}

TEST(GradientCheck, ColdGuessLossFloatAgainstDoubleDifferences) {
  GradientFixture fx;
  const auto view = relational_view(fx.graph);
  const auto net = ColdGuessNet<float>::create(fx.config, 5);
  const auto ref = ColdGuessNet<double>::create(fx.config, 5);
  const auto batch = make_ego_batch<float>(fx.graph, view, fx.offers, fx.config.layers);
  const auto ref_batch = make_ego_batch<double>(fx.graph, view, fx.offers, fx.config.layers);
  const Matrix<float> z = fx.graph.labels();
  const Matrix<double> zd = z.cast<double>();
  const auto r = finite_diff_check(fx.loss(net, batch, z), fx.loss(ref, ref_batch, zd), net.parameters(), 1e-6);
  EXPECT_LT(r.max_relative_error, 1e-3) << r.worst_parameter;
}

TEST(Train, ZeroLearningRateKeepsParameters) {
  const auto g = random_graph(1, 10, 8, 30, 10);
  for (ModelKind k : {ModelKind::coldguess, ModelKind::tabular, ModelKind::rgcn_expanded}) {
    Model m = init_model(spec_for_graph(k, TrainMode::multi_task, g), 3);
    const Model before = m;
    TrainConfig c;
    c.epochs = 3;
    c.batch_size = 8;
    c.lr = 0.0;
    train_model(m, g, all_offers(g), c);
    ASSERT_EQ(m.heads.size(), before.heads.size());
    EXPECT_TRUE(m.heads[0] == before.heads[0]) << to_string(k);
  }
}

TEST(Train, SeparableToyReachesPerfectAuc) {
  const auto g = separable_toy();
  Model m = init_model(spec_for_graph(ModelKind::coldguess, TrainMode::multi_task, g), 7);
  TrainConfig c;
  c.epochs = 60;
  c.batch_size = 1024;
  c.lr = 3e-3;
  const auto report = train_model(m, g, all_offers(g), c);
  ASSERT_EQ(report.loss_curve.size(), 60u);
  for (std::size_t e = 1; e < 10; ++e) EXPECT_LT(report.loss_curve[e], report.loss_curve[e - 1]) << "epoch " << e;
  const auto scores = score_offers(m, g, all_offers(g));
  const auto rep = per_class_report(scores, g.labels());
  ASSERT_TRUE(rep.auc[0].has_value());
  EXPECT_EQ(*rep.auc[0], 1.0);
  EXPECT_EQ(*rep.auc[8], 1.0);
}

TEST(Train, TabularSeparableToyReachesPerfectAuc) {
  const auto g = separable_toy();
  Model m = init_model(spec_for_graph(ModelKind::tabular, TrainMode::nine_binary, g), 7);
  TrainConfig c;
  c.epochs = 60;
  c.lr = 1e-2;
  train_model(m, g, all_offers(g), c);
  const auto rep = per_class_report(score_offers(m, g, all_offers(g)), g.labels());
  EXPECT_EQ(*rep.auc[0], 1.0);
}

TEST(Train, SameSeedSameCurve) {
  const auto g = random_graph(2, 15, 10, 40, 20);
  auto run = [&] {
    Model m = init_model(spec_for_graph(ModelKind::coldguess, TrainMode::nine_binary, g), 4);
    TrainConfig c;
    c.epochs = 2;
    c.batch_size = 16;
    c.seed = 99;
    const auto r = train_model(m, g, all_offers(g), c);
    return std::pair{r.loss_curve, m.heads};
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a.first, b.first);
  ASSERT_EQ(a.second.size(), b.second.size());
  for (std::size_t h = 0; h < a.second.size(); ++h) EXPECT_TRUE(a.second[h] == b.second[h]);
}

TEST(Train, NineBinaryHeadsMove) {
  const auto g = random_graph(3, 15, 10, 40, 20);
  Model m = init_model(spec_for_graph(ModelKind::coldguess, TrainMode::nine_binary, g), 4);
  const Model before = m;
  TrainConfig c;
  c.epochs = 1;
  c.batch_size = 16;
  train_model(m, g, all_offers(g), c);
  for (std::size_t h = 0; h < 9; ++h) EXPECT_FALSE(m.heads[h] == before.heads[h]);
}

TEST(Train, EpochCallbackSeesEveryEpoch) {
  const auto g = random_graph(4);
  Model m = init_model(spec_for_graph(ModelKind::sign, TrainMode::multi_task, g), 1);
  TrainConfig c;
  c.epochs = 4;
  std::vector<std::size_t> seen;
  train_model(m, g, all_offers(g), c, [&](const EpochReport& r) { seen.push_back(r.epoch); });
  EXPECT_EQ(seen, (std::vector<std::size_t>{0, 1, 2, 3}));
}

TEST(Train, NoLabelsRejected) {
  auto g = random_graph(5);
  g.clear_labels();
  Model m = init_model(spec_for_graph(ModelKind::tabular, TrainMode::multi_task, g), 1);
  EXPECT_THROW(train_model(m, g, std::vector<std::uint32_t>{0}, TrainConfig{}), GraphError);
}

TEST(Train, NanLossAbortsWithReport) {
  const auto g = random_graph(6);
  Model m = init_model(spec_for_graph(ModelKind::tabular, TrainMode::multi_task, g), 1);
  m.heads[0].at("tab.fc2.b")(0, 0) = std::numeric_limits<float>::quiet_NaN();
  try {
    train_model(m, g, all_offers(g), TrainConfig{});
    FAIL() << "expected TrainingDiverged";
  } catch (const TrainingDiverged& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 0"), std::string::npos);
  }
  // Parameters are handed back even after the abort.
  EXPECT_EQ(m.heads.size(), 1u);
}

TEST(Train, ModesAgreeAtInitialization) {
  const auto g = random_graph(7, 12, 10, 30, 12);
  ColdGuessConfig cfg;
  cfg.seller_dim = g.seller_dim();
  cfg.product_dim = g.product_dim();
  cfg.offer_dim = g.offer_dim();
  const auto multi = ColdGuessNet<float>::create(cfg, 21);
  const auto offers = all_offers(g);
  const auto batch = make_ego_batch<float>(g, relational_view(g), offers, 3);
  const auto p = multi.predict(batch);
  for (std::size_t c = 0; c < kClassCount; ++c) {
    const auto head = multi.binary_head(c);
    const auto q = head.predict(batch);
    Matrix<float> pc(p.rows, 1), zc(p.rows, 1);
    for (std::size_t i = 0; i < p.rows; ++i) {
      pc(i, 0) = p(i, c);
      zc(i, 0) = g.labels()(i, c);
    }
    Tape<float> t(false);
    const float multi_loss = bce_loss(t.constant(pc), zc).value()(0, 0);
    const float head_loss = bce_loss(t.constant(q), zc).value()(0, 0);
    EXPECT_NEAR(multi_loss, head_loss, 1e-6);
  }
}

TEST(DeriveSeed, DistinctStreams) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 100; ++s) seen.insert(derive_seed(42, s));
  EXPECT_EQ(seen.size(), 100u);
  EXPECT_EQ(derive_seed(1, 2), derive_seed(1, 2));
}
