#pragma once

// Seller-product heterogeneous graph.
//
// Two node types (Seller, Product) with dense per-type indices and nine
// relations: eight seller-seller association types plus the Offer relation.
// Offers are feature-bearing edges between a seller and a product; every
// offer is also a listing <seller, offer, product>. All relations are stored
// symmetrically so neighbor queries work from either endpoint.

#include "coldguess/tensor.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace coldguess {

inline constexpr std::size_t kSellerRelationCount = 8;
inline constexpr std::size_t kRelationCount = kSellerRelationCount + 1;
inline constexpr std::size_t kClassCount = 9;

enum class NodeType : std::uint8_t { seller = 0, product = 1 };

inline const char* to_string(NodeType t) { return t == NodeType::seller ? "seller" : "product"; }

struct NodeRef {
  NodeType type = NodeType::seller;
  std::uint32_t index = 0;

  static NodeRef seller(std::uint32_t i) { return {NodeType::seller, i}; }
  static NodeRef product(std::uint32_t i) { return {NodeType::product, i}; }
  auto operator<=>(const NodeRef&) const = default;
};

class RelationTag {
 public:
  constexpr RelationTag() = default;
  static constexpr RelationTag seller_seller(std::size_t k) {
    if (k >= kSellerRelationCount) throw std::out_of_range("seller-seller relation id must be < 8");
    return RelationTag(static_cast<std::uint8_t>(k));
  }
  static constexpr RelationTag offer() { return RelationTag(static_cast<std::uint8_t>(kSellerRelationCount)); }
  static constexpr RelationTag from_id(std::size_t id) {
    if (id >= kRelationCount) throw std::out_of_range("relation id must be < 9");
    return RelationTag(static_cast<std::uint8_t>(id));
  }

  constexpr std::size_t id() const { return id_; }
  constexpr bool is_offer() const { return id_ == kSellerRelationCount; }
  auto operator<=>(const RelationTag&) const = default;

 private:
  constexpr explicit RelationTag(std::uint8_t id) : id_(id) {}
  std::uint8_t id_ = 0;
};

struct Listing {
  NodeRef seller;
  std::uint32_t offer = 0;
  NodeRef product;
  bool operator==(const Listing&) const = default;
};

class GraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using FeatureMatrix = Matrix<float>;

class HeteroGraph {
 public:
  HeteroGraph() : HeteroGraph(0, 0, 0) {}
  HeteroGraph(std::size_t seller_dim, std::size_t product_dim, std::size_t offer_dim)
      : seller_features_(0, seller_dim), product_features_(0, product_dim), offer_features_(0, offer_dim) {
    seller_columns_ = default_columns("s", seller_dim);
    product_columns_ = default_columns("p", product_dim);
    offer_columns_ = default_columns("o", offer_dim);
  }

  std::size_t seller_dim() const { return seller_features_.cols; }
  std::size_t product_dim() const { return product_features_.cols; }
  std::size_t offer_dim() const { return offer_features_.cols; }
  std::size_t dim(NodeType t) const { return t == NodeType::seller ? seller_dim() : product_dim(); }

  std::size_t seller_count() const { return seller_features_.rows; }
  std::size_t product_count() const { return product_features_.rows; }
  std::size_t node_count(NodeType t) const { return t == NodeType::seller ? seller_count() : product_count(); }
  std::size_t offer_count() const { return offers_.size(); }
  std::size_t seller_edge_count(std::size_t relation) const { return seller_edges_.at(relation).size(); }
  std::size_t seller_edge_count() const {
    std::size_t n = 0;
    for (const auto& e : seller_edges_) n += e.size();
    return n;
  }
  std::size_t edge_count() const { return seller_edge_count() + offer_count(); }

  bool valid(NodeRef v) const { return v.index < node_count(v.type); }

  NodeRef add_node(NodeType type, std::span<const float> features) {
    FeatureMatrix& m = type == NodeType::seller ? seller_features_ : product_features_;
    if (features.size() != m.cols)
      throw GraphError(std::string("add_node: ") + to_string(type) + " features have length " +
                       std::to_string(features.size()) + ", expected " + std::to_string(m.cols));
    m.data.insert(m.data.end(), features.begin(), features.end());
    m.rows += 1;
    if (type == NodeType::seller) {
      for (auto& adj : seller_adj_) adj.emplace_back();
      seller_products_.emplace_back();
      seller_offers_.emplace_back();
    } else {
      product_sellers_.emplace_back();
      product_offers_.emplace_back();
    }
    return NodeRef{type, static_cast<std::uint32_t>(m.rows - 1)};
  }

  /// Adds an undirected edge. Seller-seller relations return the index within
  /// that relation's edge list; the Offer relation returns the new offer index.
  std::size_t add_edge(RelationTag r, NodeRef src, NodeRef dst, std::optional<std::span<const float>> offer_features = {}) {
    check_edge(r, src, dst, offer_features);
    if (r.is_offer()) {
      const NodeRef s = src.type == NodeType::seller ? src : dst;
      const NodeRef p = src.type == NodeType::seller ? dst : src;
      if (std::binary_search(seller_products_[s.index].begin(), seller_products_[s.index].end(), p.index))
        throw GraphError("add_edge: duplicate offer between seller " + std::to_string(s.index) + " and product " +
                         std::to_string(p.index));
    } else {
      const auto& adj = seller_adj_[r.id()][src.index];
      if (std::binary_search(adj.begin(), adj.end(), dst.index))
        throw GraphError("add_edge: duplicate edge in relation " + std::to_string(r.id()) + " between sellers " +
                         std::to_string(src.index) + " and " + std::to_string(dst.index));
    }
    return insert_edge_unchecked(r, src, dst, offer_features);
  }

  /// Inserts without the duplicate check. Intended for loaders that run
  /// validate() afterwards; endpoint and type checks still apply.
  std::size_t insert_edge_unchecked(RelationTag r, NodeRef src, NodeRef dst,
                                    std::optional<std::span<const float>> offer_features = {}) {
    check_edge(r, src, dst, offer_features);
    if (r.is_offer()) {
      const NodeRef s = src.type == NodeType::seller ? src : dst;
      const NodeRef p = src.type == NodeType::seller ? dst : src;
      const auto offer = static_cast<std::uint32_t>(offers_.size());
      offers_.push_back({s, offer, p});
      offer_features_.data.insert(offer_features_.data.end(), offer_features->begin(), offer_features->end());
      offer_features_.rows += 1;
      sorted_insert(seller_products_[s.index], p.index);
      sorted_insert(product_sellers_[p.index], s.index);
      seller_offers_[s.index].push_back(offer);
      product_offers_[p.index].push_back(offer);
      if (labels_) {
        labels_->data.resize(labels_->data.size() + kClassCount, 0.0f);
        labels_->rows += 1;
      }
      return offer;
    }
    sorted_insert(seller_adj_[r.id()][src.index], dst.index);
    sorted_insert(seller_adj_[r.id()][dst.index], src.index);
    seller_edges_[r.id()].emplace_back(src.index, dst.index);
    return seller_edges_[r.id()].size() - 1;
  }

  /// Indices of v's neighbors under r, sorted ascending; the neighbor type is
  /// implied by the relation and v's type.
  std::span<const std::uint32_t> neighbor_indices(NodeRef v, RelationTag r) const {
    if (!valid(v)) throw GraphError("neighbors: invalid node");
    if (r.is_offer())
      return v.type == NodeType::seller ? std::span<const std::uint32_t>(seller_products_[v.index])
                                        : std::span<const std::uint32_t>(product_sellers_[v.index]);
    if (v.type != NodeType::seller) return {};
    return seller_adj_[r.id()][v.index];
  }

  std::vector<NodeRef> neighbors(NodeRef v, RelationTag r) const {
    const auto idx = neighbor_indices(v, r);
    const NodeType nt = r.is_offer() ? (v.type == NodeType::seller ? NodeType::product : NodeType::seller) : NodeType::seller;
    std::vector<NodeRef> out;
    out.reserve(idx.size());
    for (std::uint32_t i : idx) out.push_back({nt, i});
    return out;
  }

  const Listing& listing(std::size_t offer) const { return offers_.at(offer); }
  const std::vector<Listing>& listings() const { return offers_; }
  std::span<const std::uint32_t> seller_offers(std::uint32_t s) const { return seller_offers_.at(s); }
  std::span<const std::uint32_t> product_offers(std::uint32_t p) const { return product_offers_.at(p); }
  const std::vector<std::pair<std::uint32_t, std::uint32_t>>& seller_edges(std::size_t relation) const {
    return seller_edges_.at(relation);
  }

  const FeatureMatrix& seller_features() const { return seller_features_; }
  const FeatureMatrix& product_features() const { return product_features_; }
  const FeatureMatrix& offer_features() const { return offer_features_; }
  FeatureMatrix& mutable_seller_features() { return seller_features_; }
  FeatureMatrix& mutable_product_features() { return product_features_; }
  FeatureMatrix& mutable_offer_features() { return offer_features_; }
  const FeatureMatrix& features(NodeType t) const { return t == NodeType::seller ? seller_features_ : product_features_; }

  bool has_labels() const { return labels_.has_value(); }
  const Matrix<float>& labels() const {
    if (!labels_) throw GraphError("graph has no labels");
    return *labels_;
  }
  void set_labels(Matrix<float> z) {
    if (z.rows != offer_count() || z.cols != kClassCount)
      throw GraphError("set_labels: expected " + std::to_string(offer_count()) + "x9 label matrix");
    labels_ = std::move(z);
  }
  void clear_labels() { labels_.reset(); }
  Matrix<float>& mutable_labels() {
    if (!labels_) throw GraphError("graph has no labels");
    return *labels_;
  }

  const std::vector<std::string>& seller_columns() const { return seller_columns_; }
  const std::vector<std::string>& product_columns() const { return product_columns_; }
  const std::vector<std::string>& offer_columns() const { return offer_columns_; }
  void set_column_names(std::vector<std::string> seller, std::vector<std::string> product, std::vector<std::string> offer) {
    if (seller.size() != seller_dim() || product.size() != product_dim() || offer.size() != offer_dim())
      throw GraphError("set_column_names: name count does not match feature dimensions");
    seller_columns_ = std::move(seller);
    product_columns_ = std::move(product);
    offer_columns_ = std::move(offer);
  }

  /// Bytes held by adjacency structures (neighbor lists and incident-offer lists).
  std::size_t edge_storage_bytes() const {
    std::size_t n = 0;
    auto lists = [&n](const std::vector<std::vector<std::uint32_t>>& v) {
      for (const auto& l : v) n += l.size() * sizeof(std::uint32_t);
    };
    for (const auto& adj : seller_adj_) lists(adj);
    lists(seller_products_);
    lists(product_sellers_);
    return n;
  }

 private:
  static std::vector<std::string> default_columns(const std::string& prefix, std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
    return out;
  }

  static void sorted_insert(std::vector<std::uint32_t>& v, std::uint32_t x) {
    v.insert(std::upper_bound(v.begin(), v.end(), x), x);
  }

  void check_edge(RelationTag r, NodeRef src, NodeRef dst, const std::optional<std::span<const float>>& offer_features) const {
    if (!valid(src) || !valid(dst)) throw GraphError("add_edge: endpoint out of range");
    if (r.is_offer()) {
      if (src.type == dst.type) throw GraphError("add_edge: Offer relation must connect a seller and a product");
      if (!offer_features) throw GraphError("add_edge: Offer edge requires offer features");
      if (offer_features->size() != offer_dim())
        throw GraphError("add_edge: offer features have length " + std::to_string(offer_features->size()) +
                         ", expected " + std::to_string(offer_dim()));
    } else {
      if (src.type != NodeType::seller || dst.type != NodeType::seller)
        throw GraphError("add_edge: relation " + std::to_string(r.id()) + " connects sellers only");
      if (offer_features) throw GraphError("add_edge: only Offer edges carry features");
      if (src.index == dst.index) throw GraphError("add_edge: self-loop on seller " + std::to_string(src.index));
    }
  }

  FeatureMatrix seller_features_;
  FeatureMatrix product_features_;
  FeatureMatrix offer_features_;
  std::optional<Matrix<float>> labels_;
  std::vector<std::string> seller_columns_, product_columns_, offer_columns_;

  std::array<std::vector<std::vector<std::uint32_t>>, kSellerRelationCount> seller_adj_;
  std::array<std::vector<std::pair<std::uint32_t, std::uint32_t>>, kSellerRelationCount> seller_edges_;
  std::vector<std::vector<std::uint32_t>> seller_products_;
  std::vector<std::vector<std::uint32_t>> product_sellers_;
  std::vector<std::vector<std::uint32_t>> seller_offers_;
  std::vector<std::vector<std::uint32_t>> product_offers_;
  std::vector<Listing> offers_;
};

struct IncidentOffers {
  std::vector<std::uint32_t> seller_side;   // other offers of the same seller
  std::vector<std::uint32_t> product_side;  // other offers of the same product
};

/// Sibling offers of `offer` through its seller and its product; the offer
/// itself is excluded from both sets.
inline IncidentOffers incident_offer_sets(const HeteroGraph& g, std::size_t offer) {
  const Listing& l = g.listing(offer);
  IncidentOffers out;
  for (std::uint32_t o : g.seller_offers(l.seller.index))
    if (o != offer) out.seller_side.push_back(o);
  for (std::uint32_t o : g.product_offers(l.product.index))
    if (o != offer) out.product_side.push_back(o);
  return out;
}

struct ValidationResult {
  std::string violation;  // empty when the graph is valid
  bool ok() const { return violation.empty(); }
};

namespace detail {

inline std::string check_finite(const FeatureMatrix& m, const char* what) {
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c)
      if (!std::isfinite(m(r, c)))
        return std::string(what) + " features: non-finite value at row " + std::to_string(r) + ", column " +
               std::to_string(c);
  return {};
}

inline std::string check_sorted_unique(std::span<const std::uint32_t> v, const std::string& where) {
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] == v[i - 1]) return "duplicate edge: " + where + " lists neighbor " + std::to_string(v[i]) + " twice";
    if (v[i] < v[i - 1]) return "unsorted neighbor list: " + where;
  }
  return {};
}

}  // namespace detail

/// Checks every graph invariant and reports the first violation found.
inline ValidationResult validate(const HeteroGraph& g) {
  for (auto [m, name] : {std::pair{&g.seller_features(), "seller"}, std::pair{&g.product_features(), "product"},
                         std::pair{&g.offer_features(), "offer"}}) {
    if (auto v = detail::check_finite(*m, name); !v.empty()) return {v};
  }
  for (std::size_t r = 0; r < kSellerRelationCount; ++r) {
    const RelationTag tag = RelationTag::seller_seller(r);
    for (std::uint32_t s = 0; s < g.seller_count(); ++s) {
      const auto nb = g.neighbor_indices(NodeRef::seller(s), tag);
      const std::string where = "relation " + std::to_string(r) + ", seller " + std::to_string(s);
      if (auto v = detail::check_sorted_unique(nb, where); !v.empty()) return {v};
      for (std::uint32_t u : nb) {
        if (u >= g.seller_count()) return {"endpoint out of range: " + where};
        if (u == s) return {"self-loop: " + where};
        const auto back = g.neighbor_indices(NodeRef::seller(u), tag);
        if (!std::binary_search(back.begin(), back.end(), s)) return {"asymmetric edge: " + where + " -> " + std::to_string(u)};
      }
    }
  }
  const RelationTag offer = RelationTag::offer();
  for (std::uint32_t s = 0; s < g.seller_count(); ++s) {
    const std::string where = "offer relation, seller " + std::to_string(s);
    const auto nb = g.neighbor_indices(NodeRef::seller(s), offer);
    if (auto v = detail::check_sorted_unique(nb, where); !v.empty()) return {v};
    if (g.seller_offers(s).size() != nb.size()) return {"offer bookkeeping mismatch: " + where};
  }
  for (std::uint32_t p = 0; p < g.product_count(); ++p) {
    const std::string where = "offer relation, product " + std::to_string(p);
    const auto nb = g.neighbor_indices(NodeRef::product(p), offer);
    if (auto v = detail::check_sorted_unique(nb, where); !v.empty()) return {v};
    if (g.product_offers(p).size() != nb.size()) return {"offer bookkeeping mismatch: " + where};
  }
  for (std::size_t o = 0; o < g.offer_count(); ++o) {
    const Listing& l = g.listing(o);
    if (l.offer != o || l.seller.type != NodeType::seller || l.product.type != NodeType::product || !g.valid(l.seller) ||
        !g.valid(l.product))
      return {"inconsistent listing for offer " + std::to_string(o)};
    const auto nb = g.neighbor_indices(l.seller, offer);
    if (!std::binary_search(nb.begin(), nb.end(), l.product.index))
      return {"offer " + std::to_string(o) + " missing from adjacency"};
  }
  if (g.offer_features().rows != g.offer_count()) return {"offer feature row count does not match offers"};
  if (g.has_labels()) {
    const auto& z = g.labels();
    if (z.rows != g.offer_count() || z.cols != kClassCount) return {"label matrix shape mismatch"};
    for (std::size_t r = 0; r < z.rows; ++r)
      for (std::size_t c = 0; c < z.cols; ++c)
        if (z(r, c) != 0.0f && z(r, c) != 1.0f)
          return {"label at row " + std::to_string(r) + ", column " + std::to_string(c) + " is not 0/1"};
  }
  return {};
}

/// Flat multi-relational adjacency over a single node id space. Each
/// relation is a symmetric CSR; rows are node ids, entries neighbor ids.
struct RelationalView {
  std::size_t num_nodes = 0;
  std::vector<std::uint8_t> node_type;
  std::vector<SegmentIndex> relations;

  std::span<const std::uint32_t> neighbors(std::uint32_t v, std::size_t r) const { return relations[r].segment(v); }

  std::size_t edge_storage_bytes() const {
    std::size_t n = 0;
    for (const auto& r : relations) n += r.indices.size() * sizeof(std::uint32_t);
    return n;
  }
};

namespace detail {

/// Builds a symmetric CSR from an undirected edge list.
inline SegmentIndex symmetric_csr(std::size_t n, const std::vector<std::pair<std::uint32_t, std::uint32_t>>& edges) {
  std::vector<std::uint32_t> degree(n, 0);
  for (auto [a, b] : edges) {
    ++degree[a];
    ++degree[b];
  }
  SegmentIndex csr;
  csr.offsets.assign(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) csr.offsets[i + 1] = csr.offsets[i] + degree[i];
  csr.indices.assign(csr.offsets[n], 0);
  std::vector<std::uint32_t> fill(csr.offsets.begin(), csr.offsets.end() - 1);
  for (auto [a, b] : edges) {
    csr.indices[fill[a]++] = b;
    csr.indices[fill[b]++] = a;
  }
  for (std::size_t i = 0; i < n; ++i)
    std::sort(csr.indices.begin() + csr.offsets[i], csr.indices.begin() + csr.offsets[i + 1]);
  return csr;
}

}  // namespace detail

/// Flat id of a node in the consolidated view: sellers first, then products.
inline std::uint32_t flat_id(const HeteroGraph& g, NodeRef v) {
  return v.type == NodeType::seller ? v.index : static_cast<std::uint32_t>(g.seller_count() + v.index);
}

inline RelationalView relational_view(const HeteroGraph& g) {
  RelationalView view;
  const std::size_t S = g.seller_count();
  view.num_nodes = S + g.product_count();
  view.node_type.assign(view.num_nodes, static_cast<std::uint8_t>(NodeType::product));
  std::fill_n(view.node_type.begin(), S, static_cast<std::uint8_t>(NodeType::seller));
  for (std::size_t r = 0; r < kSellerRelationCount; ++r) view.relations.push_back(detail::symmetric_csr(view.num_nodes, g.seller_edges(r)));
  std::vector<std::pair<std::uint32_t, std::uint32_t>> offer_edges;
  offer_edges.reserve(g.offer_count());
  for (const Listing& l : g.listings()) offer_edges.emplace_back(l.seller.index, static_cast<std::uint32_t>(S + l.product.index));
  view.relations.push_back(detail::symmetric_csr(view.num_nodes, offer_edges));
  return view;
}

// Expanded ("offers as nodes") graph.

inline constexpr std::size_t kExpandedRelationCount = kSellerRelationCount + 2;
inline constexpr std::size_t kSellerOfferRelation = kSellerRelationCount;
inline constexpr std::size_t kOfferProductRelation = kSellerRelationCount + 1;
inline constexpr std::uint8_t kOfferNodeType = 2;

/// Offers become nodes of a third type. Node ids: sellers [0, S), products
/// [S, S+P), offers [S+P, S+P+O). Relations 0..7 are the seller-seller
/// relations, 8 is seller-offer and 9 is offer-product.
struct ExpandedGraph {
  std::size_t sellers = 0;
  std::size_t products = 0;
  std::size_t offers = 0;
  RelationalView view;
  FeatureMatrix seller_features;
  FeatureMatrix product_features;
  FeatureMatrix offer_features;
  std::optional<Matrix<float>> labels;

  std::uint32_t offer_node(std::size_t offer) const { return static_cast<std::uint32_t>(sellers + products + offer); }
  std::size_t seller_edge_count() const {
    std::size_t n = 0;
    for (std::size_t r = 0; r < kSellerRelationCount; ++r) n += view.relations[r].indices.size() / 2;
    return n;
  }
  std::size_t offer_incident_edge_count() const {
    return (view.relations[kSellerOfferRelation].indices.size() + view.relations[kOfferProductRelation].indices.size()) / 2;
  }
  std::size_t edge_count() const { return seller_edge_count() + offer_incident_edge_count(); }
  std::size_t edge_storage_bytes() const { return view.edge_storage_bytes(); }
};

inline ExpandedGraph build_expanded_graph(const HeteroGraph& g) {
  ExpandedGraph x;
  x.sellers = g.seller_count();
  x.products = g.product_count();
  x.offers = g.offer_count();
  x.seller_features = g.seller_features();
  x.product_features = g.product_features();
  x.offer_features = g.offer_features();
  if (g.has_labels()) x.labels = g.labels();

  const std::size_t S = x.sellers, P = x.products;
  x.view.num_nodes = S + P + x.offers;
  x.view.node_type.assign(x.view.num_nodes, kOfferNodeType);
  std::fill_n(x.view.node_type.begin(), S, static_cast<std::uint8_t>(NodeType::seller));
  std::fill_n(x.view.node_type.begin() + static_cast<std::ptrdiff_t>(S), P, static_cast<std::uint8_t>(NodeType::product));
  for (std::size_t r = 0; r < kSellerRelationCount; ++r)
    x.view.relations.push_back(detail::symmetric_csr(x.view.num_nodes, g.seller_edges(r)));
  std::vector<std::pair<std::uint32_t, std::uint32_t>> seller_offer, offer_product;
  for (const Listing& l : g.listings()) {
    const std::uint32_t node = x.offer_node(l.offer);
    seller_offer.emplace_back(l.seller.index, node);
    offer_product.emplace_back(node, static_cast<std::uint32_t>(S + l.product.index));
  }
  x.view.relations.push_back(detail::symmetric_csr(x.view.num_nodes, seller_offer));
  x.view.relations.push_back(detail::symmetric_csr(x.view.num_nodes, offer_product));
  return x;
}

}  // namespace coldguess
