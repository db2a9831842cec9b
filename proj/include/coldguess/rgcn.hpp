#pragma once

// Relational graph convolution over a propagation plan.
//
//   h_v' = act( sum_r sum_{u in N_v^r} (1 / |N_v^r|) W_r h_u  +  W_0 h_v + b )
//
// A plan fixes, for every layer, which rows are produced and which input rows
// each relation aggregates. Plans built from an ego network shrink layer by
// layer: layer l of an L-layer stack only produces nodes within L-1-l hops of
// the seeds, which is all the final layer needs.

#include "coldguess/graph.hpp"
#include "coldguess/optim.hpp"
#include "coldguess/sampling.hpp"
#include "coldguess/tensor.hpp"

#include <memory>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace coldguess {

struct RelationBlock {
  std::shared_ptr<const std::vector<std::uint32_t>> targets;  // output rows with at least one neighbor
  std::shared_ptr<const SegmentIndex> neighbors;              // one segment of input rows per target
};

struct PropagationPlan {
  std::size_t input_rows = 0;
  std::vector<std::size_t> output_rows;             // per layer
  std::vector<std::vector<RelationBlock>> blocks;   // [layer][relation]
  std::vector<std::shared_ptr<const std::vector<std::uint32_t>>> self_rows;  // [layer] rows 0..output-1

  std::size_t layers() const { return output_rows.size(); }
};

namespace detail {

inline std::shared_ptr<const std::vector<std::uint32_t>> iota_rows(std::size_t n) {
  auto v = std::make_shared<std::vector<std::uint32_t>>(n);
  std::iota(v->begin(), v->end(), 0u);
  return v;
}

inline std::vector<RelationBlock> relation_blocks(const std::vector<SegmentIndex>& adjacency, std::size_t out_rows) {
  std::vector<RelationBlock> blocks;
  for (const SegmentIndex& csr : adjacency) {
    auto targets = std::make_shared<std::vector<std::uint32_t>>();
    auto segs = std::make_shared<SegmentIndex>();
    for (std::size_t v = 0; v < out_rows; ++v) {
      const auto nb = csr.segment(v);
      if (nb.empty()) continue;
      targets->push_back(static_cast<std::uint32_t>(v));
      segs->push_segment(nb);
    }
    blocks.push_back({std::move(targets), std::move(segs)});
  }
  return blocks;
}

}  // namespace detail

/// Plan for `layers` layers over an ego network extracted with hops >= layers.
inline PropagationPlan plan_from_ego(const EgoNetwork& ego, std::size_t layers) {
  if (layers == 0) throw std::invalid_argument("plan_from_ego: need at least one layer");
  if (ego.hops < layers)
    throw std::invalid_argument("ego network of depth " + std::to_string(ego.hops) + " is too shallow for " +
                                std::to_string(layers) + " layers");
  PropagationPlan plan;
  plan.input_rows = ego.hop_prefix[layers];
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t out = ego.hop_prefix[layers - 1 - l];
    plan.output_rows.push_back(out);
    plan.blocks.push_back(detail::relation_blocks(ego.relations, out));
    plan.self_rows.push_back(detail::iota_rows(out));
  }
  return plan;
}

/// Plan that propagates over every node of the graph at every layer.
inline PropagationPlan plan_whole_graph(const RelationalView& view, std::size_t layers) {
  if (layers == 0) throw std::invalid_argument("plan_whole_graph: need at least one layer");
  PropagationPlan plan;
  plan.input_rows = view.num_nodes;
  auto blocks = detail::relation_blocks(view.relations, view.num_nodes);
  auto all = detail::iota_rows(view.num_nodes);
  for (std::size_t l = 0; l < layers; ++l) {
    plan.output_rows.push_back(view.num_nodes);
    plan.blocks.push_back(blocks);
    plan.self_rows.push_back(all);
  }
  return plan;
}

/// Bound weights of one relational layer.
template <class T>
struct RgcnLayerVars {
  std::vector<Var<T>> relation;  // W_r, one per relation
  Var<T> self;                   // W_0
  Var<T> bias;
};

/// Normalization of a node's update. per_relation divides each relation's sum
/// by its neighbor count; per_node further averages the self term and the
/// relation terms present at the node, which keeps deep stacks over many
/// relations from growing geometrically.
enum class RelationNorm { per_relation, per_node };

template <class T>
Var<T> rgcn_layer(Var<T> h, const RgcnLayerVars<T>& w, const std::vector<RelationBlock>& blocks,
                  const std::shared_ptr<const std::vector<std::uint32_t>>& self_rows, Activation act,
                  RelationNorm norm = RelationNorm::per_relation) {
  if (blocks.size() != w.relation.size()) throw ShapeError("rgcn_layer: relation count mismatch");
  Var<T> self_in = self_rows->size() == h.rows() ? h : gather_rows(h, self_rows);
  Var<T> acc = affine(self_in, w.self, w.bias);
  std::vector<T> terms(norm == RelationNorm::per_node ? acc.rows() : 0, T{1});
  for (std::size_t r = 0; r < blocks.size(); ++r) {
    if (blocks[r].targets->empty()) continue;
    Var<T> agg = segment_mean(h, blocks[r].neighbors);
    acc = scatter_add_rows(acc, matmul(agg, w.relation[r]), blocks[r].targets);
    if (norm == RelationNorm::per_node)
      for (std::uint32_t v : *blocks[r].targets) terms[v] += T{1};
  }
  if (norm == RelationNorm::per_node) {
    for (T& v : terms) v = T{1} / v;
    acc = scale_rows(acc, std::make_shared<const std::vector<T>>(std::move(terms)));
  }
  return activation(acc, act);
}

/// Parameter names of a relational stack with `layers` layers.
struct RgcnStackLayout {
  std::vector<std::vector<std::size_t>> relation;  // [layer][relation] parameter index
  std::vector<std::size_t> self, bias;

  template <class T>
  static RgcnStackLayout create(ParameterSet<T>& params, const std::string& prefix, std::size_t layers,
                                std::size_t relations, std::size_t width, std::mt19937_64& rng) {
    RgcnStackLayout out;
    for (std::size_t l = 0; l < layers; ++l) {
      const std::string base = prefix + std::to_string(l);
      std::vector<std::size_t> rel;
      for (std::size_t r = 0; r < relations; ++r)
        rel.push_back(params.add(base + ".rel" + std::to_string(r), glorot_uniform<T>(width, width, rng)));
      out.relation.push_back(std::move(rel));
      out.self.push_back(params.add(base + ".self.W", glorot_uniform<T>(width, width, rng)));
      out.bias.push_back(params.add(base + ".self.b", Matrix<T>(1, width)));
    }
    return out;
  }

  template <class T>
  static RgcnStackLayout find(const ParameterSet<T>& params, const std::string& prefix, std::size_t layers,
                              std::size_t relations) {
    RgcnStackLayout out;
    for (std::size_t l = 0; l < layers; ++l) {
      const std::string base = prefix + std::to_string(l);
      std::vector<std::size_t> rel;
      for (std::size_t r = 0; r < relations; ++r) rel.push_back(params.index(base + ".rel" + std::to_string(r)));
      out.relation.push_back(std::move(rel));
      out.self.push_back(params.index(base + ".self.W"));
      out.bias.push_back(params.index(base + ".self.b"));
    }
    return out;
  }

  template <class T>
  RgcnLayerVars<T> bind(const std::vector<Var<T>>& leaves, std::size_t layer) const {
    RgcnLayerVars<T> v;
    for (std::size_t i : relation[layer]) v.relation.push_back(leaves[i]);
    v.self = leaves[self[layer]];
    v.bias = leaves[bias[layer]];
    return v;
  }
};

/// Runs every layer of the plan; inner layers use `inner`, the last `last`.
template <class T>
Var<T> rgcn_stack(Var<T> h0, const RgcnStackLayout& layout, const std::vector<Var<T>>& leaves, const PropagationPlan& plan,
                  Activation inner, Activation last, RelationNorm norm = RelationNorm::per_relation) {
  if (layout.self.size() != plan.layers()) throw ShapeError("rgcn_stack: plan and parameter depth differ");
  if (h0.rows() != plan.input_rows) throw ShapeError("rgcn_stack: input rows do not match plan");
  Var<T> h = h0;
  for (std::size_t l = 0; l < plan.layers(); ++l) {
    const Activation act = l + 1 == plan.layers() ? last : inner;
    h = rgcn_layer(h, layout.bind(leaves, l), plan.blocks[l], plan.self_rows[l], act, norm);
  }
  return h;
}

/// Dense layer parameter indices.
struct DenseLayout {
  std::size_t weight = 0, bias = 0;

  template <class T>
  static DenseLayout create(ParameterSet<T>& params, const std::string& name, std::size_t in, std::size_t out,
                            std::mt19937_64& rng) {
    DenseLayout d;
    d.weight = params.add(name + ".W", glorot_uniform<T>(in, out, rng));
    d.bias = params.add(name + ".b", Matrix<T>(1, out));
    return d;
  }
  template <class T>
  static DenseLayout find(const ParameterSet<T>& params, const std::string& name) {
    return {params.index(name + ".W"), params.index(name + ".b")};
  }
  template <class T>
  Var<T> apply(Var<T> x, const std::vector<Var<T>>& leaves) const {
    return affine(x, leaves[weight], leaves[bias]);
  }
};

}  // namespace coldguess
