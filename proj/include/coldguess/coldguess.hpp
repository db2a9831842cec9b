#pragma once

// The ColdGuess edge classifier.
//
//   node embedder      seller/product features -> shared width -> stacked RGCN
//   edge embedder      [o_o | o_p | o_s] -> dense -> relu -> dense
//   final classifier   [emb_s | emb_p | emb_o] -> dense -> relu -> dense -> sigmoid
//
// o_s and o_p are the mean feature vectors of the other offers sharing the
// target offer's seller and product. They let offer features reach the
// classifier directly instead of only through node propagation.

#include "coldguess/graph.hpp"
#include "coldguess/optim.hpp"
#include "coldguess/rgcn.hpp"
#include "coldguess/sampling.hpp"
#include "coldguess/tensor.hpp"

#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace coldguess {

struct ColdGuessConfig {
  std::size_t seller_dim = 0;
  std::size_t product_dim = 0;
  std::size_t offer_dim = 0;
  std::size_t hidden = 64;
  std::size_t layers = 3;
  std::size_t edge_hidden = 64;
  std::size_t classifier_hidden = 64;
  std::size_t outputs = kClassCount;
  Activation projection_activation = Activation::relu;
  Activation layer_activation = Activation::relu;  // between RGCN layers; the last layer is linear
  double dropout = 0.0;                            // classifier hidden layer, training only
};

/// Mean feature rows of the sibling offers through the seller (first) and the
/// product (second); zero vectors when a side has no siblings.
inline std::pair<std::vector<float>, std::vector<float>> summarize_neighbor_offers(const HeteroGraph& g, std::size_t offer) {
  const IncidentOffers sets = incident_offer_sets(g, offer);
  const FeatureMatrix& y = g.offer_features();
  auto mean_of = [&](const std::vector<std::uint32_t>& ids) {
    std::vector<double> acc(y.cols, 0.0);
    for (std::uint32_t o : ids)
      for (std::size_t c = 0; c < y.cols; ++c) acc[c] += y(o, c);
    std::vector<float> out(y.cols, 0.0f);
    if (!ids.empty())
      for (std::size_t c = 0; c < y.cols; ++c) out[c] = static_cast<float>(acc[c] / static_cast<double>(ids.size()));
    return out;
  };
  return {mean_of(sets.seller_side), mean_of(sets.product_side)};
}

/// Rows [o_o | o_p | o_s] for each offer, the edge embedder's input.
template <class T>
Matrix<T> homogeneous_offer_input(const HeteroGraph& g, std::span<const std::uint32_t> offers) {
  const std::size_t d = g.offer_dim();
  Matrix<T> out(offers.size(), 3 * d);
  for (std::size_t i = 0; i < offers.size(); ++i) {
    const auto own = g.offer_features().row(offers[i]);
    const auto [o_s, o_p] = summarize_neighbor_offers(g, offers[i]);
    auto row = out.row(i);
    for (std::size_t c = 0; c < d; ++c) {
      row[c] = static_cast<T>(own[c]);
      row[d + c] = static_cast<T>(o_p[c]);
      row[2 * d + c] = static_cast<T>(o_s[c]);
    }
  }
  return out;
}

/// Seller and product feature rows of the nodes a plan propagates over.
template <class T>
struct NodeInputs {
  std::size_t rows = 0;
  Matrix<T> seller_x;
  Matrix<T> product_x;
  std::shared_ptr<const std::vector<std::uint32_t>> seller_rows;
  std::shared_ptr<const std::vector<std::uint32_t>> product_rows;
};

/// Gathers features for the first `rows` entries of a local -> global map in
/// the consolidated flat id space.
template <class T>
NodeInputs<T> gather_node_inputs(const HeteroGraph& g, std::span<const std::uint32_t> local_to_global, std::size_t rows) {
  NodeInputs<T> in;
  in.rows = rows;
  const std::size_t S = g.seller_count();
  auto srows = std::make_shared<std::vector<std::uint32_t>>();
  auto prows = std::make_shared<std::vector<std::uint32_t>>();
  for (std::size_t i = 0; i < rows; ++i) (local_to_global[i] < S ? srows : prows)->push_back(static_cast<std::uint32_t>(i));
  in.seller_x = Matrix<T>(srows->size(), g.seller_dim());
  in.product_x = Matrix<T>(prows->size(), g.product_dim());
  for (std::size_t k = 0; k < srows->size(); ++k) {
    const auto src = g.seller_features().row(local_to_global[(*srows)[k]]);
    for (std::size_t c = 0; c < src.size(); ++c) in.seller_x(k, c) = static_cast<T>(src[c]);
  }
  for (std::size_t k = 0; k < prows->size(); ++k) {
    const auto src = g.product_features().row(local_to_global[(*prows)[k]] - S);
    for (std::size_t c = 0; c < src.size(); ++c) in.product_x(k, c) = static_cast<T>(src[c]);
  }
  in.seller_rows = std::move(srows);
  in.product_rows = std::move(prows);
  return in;
}

/// Everything one forward pass over a set of offers needs.
template <class T>
struct ColdGuessBatch {
  std::vector<std::uint32_t> offers;
  PropagationPlan plan;
  NodeInputs<T> nodes;
  std::shared_ptr<const std::vector<std::uint32_t>> seller_readout;   // plan row of each offer's seller
  std::shared_ptr<const std::vector<std::uint32_t>> product_readout;  // plan row of each offer's product
  Matrix<T> offer_x;                                                  // [o_o | o_p | o_s]
};

/// Batch over the ego network of the offers (hops = layers).
template <class T>
ColdGuessBatch<T> make_ego_batch(const HeteroGraph& g, const RelationalView& view, std::span<const std::uint32_t> offers,
                                 std::size_t layers) {
  ColdGuessBatch<T> b;
  b.offers.assign(offers.begin(), offers.end());
  const EgoNetwork ego = extract_ego_network(g, view, OfferBatch{b.offers, 0}, layers);
  b.plan = plan_from_ego(ego, layers);
  b.nodes = gather_node_inputs<T>(g, ego.nodes, b.plan.input_rows);
  auto s = std::make_shared<std::vector<std::uint32_t>>();
  auto p = std::make_shared<std::vector<std::uint32_t>>();
  for (auto [ls, lp] : ego.endpoints) {
    s->push_back(ls);
    p->push_back(lp);
  }
  b.seller_readout = std::move(s);
  b.product_readout = std::move(p);
  b.offer_x = homogeneous_offer_input<T>(g, offers);
  return b;
}

/// Batch that propagates over the whole graph; used for full-graph scoring.
template <class T>
ColdGuessBatch<T> make_whole_graph_batch(const HeteroGraph& g, const RelationalView& view,
                                         std::span<const std::uint32_t> offers, std::size_t layers) {
  ColdGuessBatch<T> b;
  b.offers.assign(offers.begin(), offers.end());
  b.plan = plan_whole_graph(view, layers);
  std::vector<std::uint32_t> identity(view.num_nodes);
  std::iota(identity.begin(), identity.end(), 0u);
  b.nodes = gather_node_inputs<T>(g, identity, view.num_nodes);
  auto s = std::make_shared<std::vector<std::uint32_t>>();
  auto p = std::make_shared<std::vector<std::uint32_t>>();
  for (std::uint32_t o : offers) {
    s->push_back(flat_id(g, g.listing(o).seller));
    p->push_back(flat_id(g, g.listing(o).product));
  }
  b.seller_readout = std::move(s);
  b.product_readout = std::move(p);
  b.offer_x = homogeneous_offer_input<T>(g, offers);
  return b;
}

template <class T>
class ColdGuessNet {
 public:
  static ColdGuessNet create(const ColdGuessConfig& config, std::uint64_t seed) {
    ColdGuessNet net;
    net.config_ = config;
    std::mt19937_64 rng(seed);
    auto& p = net.params_;
    net.proj_seller_ = DenseLayout::create(p, "proj_seller", config.seller_dim, config.hidden, rng);
    net.proj_product_ = DenseLayout::create(p, "proj_product", config.product_dim, config.hidden, rng);
    net.rgcn_ = RgcnStackLayout::create(p, "rgcn", config.layers, kRelationCount, config.hidden, rng);
    net.edge1_ = DenseLayout::create(p, "edge.fc1", 3 * config.offer_dim, config.edge_hidden, rng);
    net.edge2_ = DenseLayout::create(p, "edge.fc2", config.edge_hidden, config.edge_hidden, rng);
    net.cls1_ = DenseLayout::create(p, "cls.fc1", 2 * config.hidden + config.edge_hidden, config.classifier_hidden, rng);
    net.cls2_ = DenseLayout::create(p, "cls.fc2", config.classifier_hidden, config.outputs, rng);
    return net;
  }

  static ColdGuessNet from_parameters(const ColdGuessConfig& config, ParameterSet<T> params) {
    ColdGuessNet net;
    net.config_ = config;
    net.params_ = std::move(params);
    const auto& p = net.params_;
    net.proj_seller_ = DenseLayout::find(p, "proj_seller");
    net.proj_product_ = DenseLayout::find(p, "proj_product");
    net.rgcn_ = RgcnStackLayout::find(p, "rgcn", config.layers, kRelationCount);
    net.edge1_ = DenseLayout::find(p, "edge.fc1");
    net.edge2_ = DenseLayout::find(p, "edge.fc2");
    net.cls1_ = DenseLayout::find(p, "cls.fc1");
    net.cls2_ = DenseLayout::find(p, "cls.fc2");
    if (p[net.cls2_.weight].value.cols != config.outputs || p[net.edge1_.weight].value.rows != 3 * config.offer_dim)
      throw ShapeError("ColdGuessNet: parameters do not match configuration");
    return net;
  }

  const ColdGuessConfig& config() const { return config_; }
  ParameterSet<T>& parameters() { return params_; }
  const ParameterSet<T>& parameters() const { return params_; }

  /// h0 rows in plan order: each node's features through its type's projection.
  Var<T> project_node_features(Tape<T>& tape, const std::vector<Var<T>>& w, const NodeInputs<T>& in) const {
    Var<T> h0 = tape.constant(Matrix<T>(in.rows, config_.hidden));
    if (!in.seller_rows->empty()) {
      Var<T> hs = activation(proj_seller_.apply(tape.constant(in.seller_x), w), config_.projection_activation);
      h0 = scatter_add_rows(h0, hs, in.seller_rows);
    }
    if (!in.product_rows->empty()) {
      Var<T> hp = activation(proj_product_.apply(tape.constant(in.product_x), w), config_.projection_activation);
      h0 = scatter_add_rows(h0, hp, in.product_rows);
    }
    return h0;
  }

  /// Final-layer node representations for the plan's output rows.
  Var<T> node_embeddings(Var<T> h0, const std::vector<Var<T>>& w, const PropagationPlan& plan) const {
    return rgcn_stack(h0, rgcn_, w, plan, config_.layer_activation, Activation::identity);
  }

  Var<T> edge_embedding(Var<T> offer_x, const std::vector<Var<T>>& w) const {
    if (offer_x.cols() != 3 * config_.offer_dim)
      throw ShapeError("edge embedder expects width " + std::to_string(3 * config_.offer_dim) + ", got " +
                       std::to_string(offer_x.cols()));
    return edge2_.apply(activation(edge1_.apply(offer_x, w), Activation::relu), w);
  }

  template <class Rng>
  Var<T> classify(Var<T> emb_s, Var<T> emb_p, Var<T> emb_o, const std::vector<Var<T>>& w, Rng* rng) const {
    Var<T> x = concat_cols<T>({emb_s, emb_p, emb_o});
    Var<T> hidden = activation(cls1_.apply(x, w), Activation::relu);
    if (rng && config_.dropout > 0.0) hidden = dropout(hidden, config_.dropout, *rng);
    return activation(cls2_.apply(hidden, w), Activation::sigmoid);
  }

  Var<T> classify(Var<T> emb_s, Var<T> emb_p, Var<T> emb_o, const std::vector<Var<T>>& w) const {
    return classify<std::mt19937_64>(emb_s, emb_p, emb_o, w, nullptr);
  }

  /// Probabilities |offers| x outputs.
  template <class Rng = std::mt19937_64>
  Var<T> forward(Tape<T>& tape, const std::vector<Var<T>>& w, const ColdGuessBatch<T>& b, Rng* rng = nullptr) const {
    Var<T> h0 = project_node_features(tape, w, b.nodes);
    Var<T> h = node_embeddings(h0, w, b.plan);
    Var<T> emb_s = gather_rows(h, b.seller_readout);
    Var<T> emb_p = gather_rows(h, b.product_readout);
    Var<T> emb_o = edge_embedding(tape.constant(b.offer_x), w);
    return classify(emb_s, emb_p, emb_o, w, rng);
  }

  /// Inference without gradient recording.
  Matrix<T> predict(const ColdGuessBatch<T>& b) const {
    Tape<T> tape(false);
    const auto w = params_.bind(tape);
    return forward(tape, w, b).value();
  }

  /// Single-output network equal to output column `c` of this one.
  ColdGuessNet binary_head(std::size_t c) const {
    if (c >= config_.outputs) throw std::out_of_range("binary_head: class out of range");
    ColdGuessConfig cfg = config_;
    cfg.outputs = 1;
    ParameterSet<T> p;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const auto& e = params_[i];
      if (i == cls2_.weight || i == cls2_.bias) {
        Matrix<T> col(e.value.rows, 1);
        for (std::size_t r = 0; r < e.value.rows; ++r) col(r, 0) = e.value(r, c);
        p.add(e.name, std::move(col));
      } else {
        p.add(e.name, e.value);
      }
    }
    return from_parameters(cfg, std::move(p));
  }

 private:
  ColdGuessConfig config_;
  ParameterSet<T> params_;
  DenseLayout proj_seller_, proj_product_, edge1_, edge2_, cls1_, cls2_;
  RgcnStackLayout rgcn_;
};

}  // namespace coldguess
