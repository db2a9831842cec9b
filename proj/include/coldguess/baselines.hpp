#pragma once

// Comparison models:
//   tabular        dense classifier on concatenated raw seller/product/offer features
//   naive fill     new sellers' missing features replaced by their seller neighbors' mean
//   SIGN           tabular classifier over precomputed multi-hop neighbor averages
//   expanded RGCN  node classification with offers as nodes of a third type

#include "coldguess/graph.hpp"
#include "coldguess/optim.hpp"
#include "coldguess/rgcn.hpp"
#include "coldguess/sampling.hpp"
#include "coldguess/tensor.hpp"

#include <algorithm>
#include <array>
#include <memory>
#include <numeric>
#include <random>
#include <set>
#include <span>
#include <vector>

namespace coldguess {

// Tabular classifier

struct TabularConfig {
  std::size_t input_dim = 0;
  std::size_t hidden = 64;
  std::size_t outputs = kClassCount;
  double dropout = 0.0;
};

template <class T>
class TabularNet {
 public:
  static TabularNet create(const TabularConfig& config, std::uint64_t seed) {
    TabularNet net;
    net.config_ = config;
    std::mt19937_64 rng(seed);
    net.fc1_ = DenseLayout::create(net.params_, "tab.fc1", config.input_dim, config.hidden, rng);
    net.fc2_ = DenseLayout::create(net.params_, "tab.fc2", config.hidden, config.outputs, rng);
    return net;
  }
  static TabularNet from_parameters(const TabularConfig& config, ParameterSet<T> params) {
    TabularNet net;
    net.config_ = config;
    net.params_ = std::move(params);
    net.fc1_ = DenseLayout::find(net.params_, "tab.fc1");
    net.fc2_ = DenseLayout::find(net.params_, "tab.fc2");
    if (net.params_[net.fc1_.weight].value.rows != config.input_dim || net.params_[net.fc2_.weight].value.cols != config.outputs)
      throw ShapeError("TabularNet: parameters do not match configuration");
    return net;
  }

  const TabularConfig& config() const { return config_; }
  ParameterSet<T>& parameters() { return params_; }
  const ParameterSet<T>& parameters() const { return params_; }

  template <class Rng = std::mt19937_64>
  Var<T> forward(Var<T> x, const std::vector<Var<T>>& w, Rng* rng = nullptr) const {
    Var<T> h = activation(fc1_.apply(x, w), Activation::relu);
    if (rng && config_.dropout > 0.0) h = dropout(h, config_.dropout, *rng);
    return activation(fc2_.apply(h, w), Activation::sigmoid);
  }

  Matrix<T> predict(const Matrix<T>& x) const {
    Tape<T> tape(false);
    const auto w = params_.bind(tape);
    return forward(tape.constant(x), w).value();
  }

 private:
  TabularConfig config_;
  ParameterSet<T> params_;
  DenseLayout fc1_, fc2_;
};

/// One row per offer: [seller features | product features | offer features].
template <class T>
Matrix<T> listing_feature_table(const HeteroGraph& g, std::span<const std::uint32_t> offers) {
  const std::size_t ds = g.seller_dim(), dp = g.product_dim(), d_o = g.offer_dim();
  Matrix<T> out(offers.size(), ds + dp + d_o);
  for (std::size_t i = 0; i < offers.size(); ++i) {
    const Listing& l = g.listing(offers[i]);
    auto row = out.row(i);
    std::size_t c = 0;
    for (float v : g.seller_features().row(l.seller.index)) row[c++] = static_cast<T>(v);
    for (float v : g.product_features().row(l.product.index)) row[c++] = static_cast<T>(v);
    for (float v : g.offer_features().row(offers[i])) row[c++] = static_cast<T>(v);
  }
  return out;
}

template <class T>
Matrix<T> gather_table_rows(const Matrix<T>& table, std::span<const std::uint32_t> rows) {
  Matrix<T> out(rows.size(), table.cols);
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy(table.row(rows[i]).begin(), table.row(rows[i]).end(), out.row(i).begin());
  return out;
}

// Naive neighbor fill

/// Seller feature matrix where each listed new seller's `columns` are
/// replaced by the unweighted mean over the distinct sellers adjacent to it
/// under any seller-seller relation. Sellers without neighbors keep their
/// current values.
inline FeatureMatrix naive_fill_seller_features(const HeteroGraph& g, std::span<const std::uint32_t> new_sellers,
                                                std::span<const std::size_t> columns) {
  FeatureMatrix filled = g.seller_features();
  for (std::uint32_t s : new_sellers) {
    std::set<std::uint32_t> neighbors;
    for (std::size_t r = 0; r < kSellerRelationCount; ++r)
      for (std::uint32_t u : g.neighbor_indices(NodeRef::seller(s), RelationTag::seller_seller(r))) neighbors.insert(u);
    if (neighbors.empty()) continue;
    for (std::size_t c : columns) {
      double acc = 0.0;
      for (std::uint32_t u : neighbors) acc += g.seller_features()(u, c);
      filled(s, c) = static_cast<float>(acc / static_cast<double>(neighbors.size()));
    }
  }
  return filled;
}

// SIGN precomputation

/// Width of a node's type-padded feature vector [seller block | product block].
inline std::size_t sign_base_width(const HeteroGraph& g) { return g.seller_dim() + g.product_dim(); }

/// Per node (consolidated flat ids), the concatenation [X, AX, A^2 X, ..., A^K X].
/// X pads each node's features into the [seller | product] layout. A averages,
/// over the relations in which a node has neighbors, the mean of its neighbors
/// under that relation. Nodes without neighbors get zero rows for k >= 1.
inline Matrix<double> sign_precompute(const HeteroGraph& g, std::size_t hops) {
  const RelationalView view = relational_view(g);
  const std::size_t n = view.num_nodes, w = sign_base_width(g), S = g.seller_count();
  Matrix<double> cur(n, w);
  for (std::size_t v = 0; v < n; ++v) {
    if (v < S) {
      const auto src = g.seller_features().row(v);
      for (std::size_t c = 0; c < src.size(); ++c) cur(v, c) = src[c];
    } else {
      const auto src = g.product_features().row(v - S);
      for (std::size_t c = 0; c < src.size(); ++c) cur(v, g.seller_dim() + c) = src[c];
    }
  }
  Matrix<double> out(n, (hops + 1) * w);
  auto place = [&](const Matrix<double>& m, std::size_t k) {
    for (std::size_t v = 0; v < n; ++v) std::copy(m.row(v).begin(), m.row(v).end(), out.row(v).begin() + static_cast<std::ptrdiff_t>(k * w));
  };
  place(cur, 0);
  for (std::size_t k = 1; k <= hops; ++k) {
    Matrix<double> next(n, w);
    std::vector<double> rel_mean(w);
    for (std::size_t v = 0; v < n; ++v) {
      std::size_t active = 0;
      auto dst = next.row(v);
      for (std::size_t r = 0; r < view.relations.size(); ++r) {
        const auto nb = view.neighbors(static_cast<std::uint32_t>(v), r);
        if (nb.empty()) continue;
        ++active;
        std::fill(rel_mean.begin(), rel_mean.end(), 0.0);
        for (std::uint32_t u : nb)
          for (std::size_t c = 0; c < w; ++c) rel_mean[c] += cur(u, c);
        for (std::size_t c = 0; c < w; ++c) dst[c] += rel_mean[c] / static_cast<double>(nb.size());
      }
      if (active)
        for (double& x : dst) x /= static_cast<double>(active);
    }
    cur = std::move(next);
    place(cur, k);
  }
  return out;
}

/// Listing rows [x_s | x_p | o | (A^1 X)_s | (A^1 X)_p | ... | (A^K X)_s | (A^K X)_p].
/// With K = 0 this is exactly listing_feature_table.
template <class T>
Matrix<T> sign_listing_table(const HeteroGraph& g, const Matrix<double>& augmented, std::span<const std::uint32_t> offers) {
  const std::size_t w = sign_base_width(g);
  const std::size_t hops = augmented.cols / w - 1;
  const Matrix<T> base = listing_feature_table<T>(g, offers);
  Matrix<T> out(offers.size(), base.cols + 2 * hops * w);
  for (std::size_t i = 0; i < offers.size(); ++i) {
    auto row = out.row(i);
    std::copy(base.row(i).begin(), base.row(i).end(), row.begin());
    std::size_t c = base.cols;
    const Listing& l = g.listing(offers[i]);
    const std::uint32_t ids[2] = {flat_id(g, l.seller), flat_id(g, l.product)};
    for (std::size_t k = 1; k <= hops; ++k)
      for (std::uint32_t id : ids)
        for (std::size_t j = 0; j < w; ++j) row[c++] = static_cast<T>(augmented(id, k * w + j));
  }
  return out;
}

// Expanded-graph RGCN

struct ExpandedRgcnConfig {
  std::size_t seller_dim = 0;
  std::size_t product_dim = 0;
  std::size_t offer_dim = 0;
  std::size_t hidden = 64;
  std::size_t layers = 6;
  std::size_t classifier_hidden = 64;
  std::size_t outputs = kClassCount;
  double dropout = 0.0;
};

template <class T>
struct ExpandedBatch {
  PropagationPlan plan;
  std::size_t rows = 0;
  std::array<Matrix<T>, 3> x;  // seller, product, offer feature rows
  std::array<std::shared_ptr<const std::vector<std::uint32_t>>, 3> type_rows;
  std::shared_ptr<const std::vector<std::uint32_t>> readout;  // plan row of each offer node
};

namespace detail {

template <class T>
void fill_expanded_inputs(const ExpandedGraph& x, std::span<const std::uint32_t> local_to_global, std::size_t rows,
                          ExpandedBatch<T>& b) {
  b.rows = rows;
  std::array<std::shared_ptr<std::vector<std::uint32_t>>, 3> idx;
  for (auto& p : idx) p = std::make_shared<std::vector<std::uint32_t>>();
  for (std::size_t i = 0; i < rows; ++i) idx[x.view.node_type[local_to_global[i]]]->push_back(static_cast<std::uint32_t>(i));
  const FeatureMatrix* src[3] = {&x.seller_features, &x.product_features, &x.offer_features};
  const std::size_t base[3] = {0, x.sellers, x.sellers + x.products};
  for (std::size_t t = 0; t < 3; ++t) {
    b.x[t] = Matrix<T>(idx[t]->size(), src[t]->cols);
    for (std::size_t k = 0; k < idx[t]->size(); ++k) {
      const auto row = src[t]->row(local_to_global[(*idx[t])[k]] - base[t]);
      for (std::size_t c = 0; c < row.size(); ++c) b.x[t](k, c) = static_cast<T>(row[c]);
    }
    b.type_rows[t] = idx[t];
  }
}

}  // namespace detail

template <class T>
ExpandedBatch<T> make_expanded_ego_batch(const ExpandedGraph& x, std::span<const std::uint32_t> offers, std::size_t layers) {
  std::vector<std::uint32_t> seeds;
  for (std::uint32_t o : offers) seeds.push_back(x.offer_node(o));
  const EgoNetwork ego = extract_ego_network(x.view, seeds, layers);
  ExpandedBatch<T> b;
  b.plan = plan_from_ego(ego, layers);
  detail::fill_expanded_inputs(x, ego.nodes, b.plan.input_rows, b);
  b.readout = std::make_shared<const std::vector<std::uint32_t>>(ego.seeds);
  return b;
}

template <class T>
ExpandedBatch<T> make_expanded_whole_batch(const ExpandedGraph& x, std::span<const std::uint32_t> offers, std::size_t layers) {
  ExpandedBatch<T> b;
  b.plan = plan_whole_graph(x.view, layers);
  std::vector<std::uint32_t> identity(x.view.num_nodes);
  std::iota(identity.begin(), identity.end(), 0u);
  detail::fill_expanded_inputs(x, identity, x.view.num_nodes, b);
  auto r = std::make_shared<std::vector<std::uint32_t>>();
  for (std::uint32_t o : offers) r->push_back(x.offer_node(o));
  b.readout = std::move(r);
  return b;
}

template <class T>
class ExpandedRgcnNet {
 public:
  static ExpandedRgcnNet create(const ExpandedRgcnConfig& config, std::uint64_t seed) {
    ExpandedRgcnNet net;
    net.config_ = config;
    std::mt19937_64 rng(seed);
    auto& p = net.params_;
    net.proj_[0] = DenseLayout::create(p, "xproj_seller", config.seller_dim, config.hidden, rng);
    net.proj_[1] = DenseLayout::create(p, "xproj_product", config.product_dim, config.hidden, rng);
    net.proj_[2] = DenseLayout::create(p, "xproj_offer", config.offer_dim, config.hidden, rng);
    net.rgcn_ = RgcnStackLayout::create(p, "xrgcn", config.layers, kExpandedRelationCount, config.hidden, rng);
    net.cls1_ = DenseLayout::create(p, "xcls.fc1", config.hidden, config.classifier_hidden, rng);
    net.cls2_ = DenseLayout::create(p, "xcls.fc2", config.classifier_hidden, config.outputs, rng);
    return net;
  }
  static ExpandedRgcnNet from_parameters(const ExpandedRgcnConfig& config, ParameterSet<T> params) {
    ExpandedRgcnNet net;
    net.config_ = config;
    net.params_ = std::move(params);
    const auto& p = net.params_;
    net.proj_[0] = DenseLayout::find(p, "xproj_seller");
    net.proj_[1] = DenseLayout::find(p, "xproj_product");
    net.proj_[2] = DenseLayout::find(p, "xproj_offer");
    net.rgcn_ = RgcnStackLayout::find(p, "xrgcn", config.layers, kExpandedRelationCount);
    net.cls1_ = DenseLayout::find(p, "xcls.fc1");
    net.cls2_ = DenseLayout::find(p, "xcls.fc2");
    if (p[net.cls2_.weight].value.cols != config.outputs) throw ShapeError("ExpandedRgcnNet: output width mismatch");
    return net;
  }

  const ExpandedRgcnConfig& config() const { return config_; }
  ParameterSet<T>& parameters() { return params_; }
  const ParameterSet<T>& parameters() const { return params_; }

  template <class Rng = std::mt19937_64>
  Var<T> forward(Tape<T>& tape, const std::vector<Var<T>>& w, const ExpandedBatch<T>& b, Rng* rng = nullptr) const {
    Var<T> h0 = tape.constant(Matrix<T>(b.rows, config_.hidden));
    for (std::size_t t = 0; t < 3; ++t) {
      if (b.type_rows[t]->empty()) continue;
      Var<T> ht = activation(proj_[t].apply(tape.constant(b.x[t]), w), Activation::relu);
      h0 = scatter_add_rows(h0, ht, b.type_rows[t]);
    }
    Var<T> h = rgcn_stack(h0, rgcn_, w, b.plan, Activation::relu, Activation::identity, RelationNorm::per_node);
    Var<T> emb = gather_rows(h, b.readout);
    Var<T> hidden = activation(cls1_.apply(emb, w), Activation::relu);
    if (rng && config_.dropout > 0.0) hidden = dropout(hidden, config_.dropout, *rng);
    return activation(cls2_.apply(hidden, w), Activation::sigmoid);
  }

  Matrix<T> predict(const ExpandedBatch<T>& b) const {
    Tape<T> tape(false);
    const auto w = params_.bind(tape);
    return forward(tape, w, b).value();
  }

 private:
  ExpandedRgcnConfig config_;
  ParameterSet<T> params_;
  std::array<DenseLayout, 3> proj_;
  DenseLayout cls1_, cls2_;
  RgcnStackLayout rgcn_;
};

}  // namespace coldguess
