#pragma once

// One interface over the five model kinds: construction from an architecture
// spec, mini-batch training and scoring of offer listings.

#include "coldguess/baselines.hpp"
#include "coldguess/coldguess.hpp"
#include "coldguess/graph.hpp"
#include "coldguess/optim.hpp"
#include "coldguess/tensor.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace coldguess {

enum class ModelKind { coldguess, naive, sign, rgcn_expanded, tabular };
enum class TrainMode { nine_binary, multi_task };
enum class OptimizerKind { adam, sgd };

inline const char* to_string(ModelKind k) {
  switch (k) {
    case ModelKind::coldguess: return "coldguess";
    case ModelKind::naive: return "naive";
    case ModelKind::sign: return "sign";
    case ModelKind::rgcn_expanded: return "rgcn_expanded";
    case ModelKind::tabular: return "tabular";
  }
  return "?";
}
inline const char* to_string(TrainMode m) { return m == TrainMode::nine_binary ? "nine_binary" : "multi_task"; }
inline const char* to_string(OptimizerKind o) { return o == OptimizerKind::adam ? "adam" : "sgd"; }

inline ModelKind parse_model_kind(std::string_view s) {
  for (ModelKind k : {ModelKind::coldguess, ModelKind::naive, ModelKind::sign, ModelKind::rgcn_expanded, ModelKind::tabular})
    if (s == to_string(k)) return k;
  throw std::invalid_argument("unknown model '" + std::string(s) +
                              "' (expected coldguess, naive, sign, rgcn_expanded or tabular)");
}
inline TrainMode parse_train_mode(std::string_view s) {
  if (s == "nine_binary") return TrainMode::nine_binary;
  if (s == "multi_task") return TrainMode::multi_task;
  throw std::invalid_argument("unknown training mode '" + std::string(s) + "' (expected nine_binary or multi_task)");
}
inline OptimizerKind parse_optimizer(std::string_view s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "sgd") return OptimizerKind::sgd;
  throw std::invalid_argument("unknown optimizer '" + std::string(s) + "' (expected adam or sgd)");
}

/// Everything that fixes the shapes and names of a model's parameters.
struct ModelSpec {
  ModelKind kind = ModelKind::coldguess;
  TrainMode mode = TrainMode::nine_binary;
  std::size_t seller_dim = 0;
  std::size_t product_dim = 0;
  std::size_t offer_dim = 0;
  std::size_t hidden = 64;
  std::size_t layers = 3;           // ColdGuess RGCN depth
  std::size_t expanded_layers = 6;  // expanded-graph RGCN depth
  std::size_t sign_hops = 3;
  std::size_t edge_hidden = 64;
  std::size_t classifier_hidden = 64;
  double dropout = 0.0;

  std::size_t head_count() const { return mode == TrainMode::nine_binary ? kClassCount : 1; }
  std::size_t head_outputs() const { return mode == TrainMode::nine_binary ? 1 : kClassCount; }

  std::size_t tabular_input_dim() const {
    std::size_t d = seller_dim + product_dim + offer_dim;
    if (kind == ModelKind::sign) d += 2 * sign_hops * (seller_dim + product_dim);
    return d;
  }

  ColdGuessConfig coldguess_config() const {
    ColdGuessConfig c;
    c.seller_dim = seller_dim;
    c.product_dim = product_dim;
    c.offer_dim = offer_dim;
    c.hidden = hidden;
    c.layers = layers;
    c.edge_hidden = edge_hidden;
    c.classifier_hidden = classifier_hidden;
    c.outputs = head_outputs();
    c.dropout = dropout;
    return c;
  }
  TabularConfig tabular_config() const { return {tabular_input_dim(), hidden, head_outputs(), dropout}; }
  ExpandedRgcnConfig expanded_config() const {
    ExpandedRgcnConfig c;
    c.seller_dim = seller_dim;
    c.product_dim = product_dim;
    c.offer_dim = offer_dim;
    c.hidden = hidden;
    c.layers = expanded_layers;
    c.classifier_hidden = classifier_hidden;
    c.outputs = head_outputs();
    c.dropout = dropout;
    return c;
  }

  /// Architecture descriptor; dropout is a training setting and is left out.
  nlohmann::json descriptor() const {
    nlohmann::json j;
    j["kind"] = to_string(kind);
    j["mode"] = to_string(mode);
    j["seller_dim"] = seller_dim;
    j["product_dim"] = product_dim;
    j["offer_dim"] = offer_dim;
    j["hidden"] = hidden;
    j["relations"] = kind == ModelKind::rgcn_expanded ? kExpandedRelationCount : kRelationCount;
    j["layers"] = kind == ModelKind::rgcn_expanded ? expanded_layers : layers;
    j["edge_hidden"] = edge_hidden;
    j["classifier_hidden"] = classifier_hidden;
    j["sign_hops"] = sign_hops;
    j["classes"] = kClassCount;
    return j;
  }

  static ModelSpec from_descriptor(const nlohmann::json& j) {
    ModelSpec s;
    s.kind = parse_model_kind(j.at("kind").get<std::string>());
    s.mode = parse_train_mode(j.at("mode").get<std::string>());
    s.seller_dim = j.at("seller_dim");
    s.product_dim = j.at("product_dim");
    s.offer_dim = j.at("offer_dim");
    s.hidden = j.at("hidden");
    if (s.kind == ModelKind::rgcn_expanded)
      s.expanded_layers = j.at("layers");
    else
      s.layers = j.at("layers");
    s.edge_hidden = j.at("edge_hidden");
    s.classifier_hidden = j.at("classifier_hidden");
    s.sign_hops = j.at("sign_hops");
    return s;
  }
};

inline ModelSpec spec_for_graph(ModelKind kind, TrainMode mode, const HeteroGraph& g) {
  ModelSpec s;
  s.kind = kind;
  s.mode = mode;
  s.seller_dim = g.seller_dim();
  s.product_dim = g.product_dim();
  s.offer_dim = g.offer_dim();
  return s;
}

/// Parameters of every head; nine_binary has one head per class.
struct Model {
  ModelSpec spec;
  std::vector<ParameterSet<float>> heads;
};

/// splitmix64 of (base, stream); independent-looking seeds for heads and epochs.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace detail {

template <class T>
using HeadNet = std::variant<ColdGuessNet<T>, TabularNet<T>, ExpandedRgcnNet<T>>;

template <class T>
HeadNet<T> create_head(const ModelSpec& spec, std::uint64_t seed) {
  switch (spec.kind) {
    case ModelKind::coldguess: return ColdGuessNet<T>::create(spec.coldguess_config(), seed);
    case ModelKind::rgcn_expanded: return ExpandedRgcnNet<T>::create(spec.expanded_config(), seed);
    default: return TabularNet<T>::create(spec.tabular_config(), seed);
  }
}

template <class T>
HeadNet<T> load_head(const ModelSpec& spec, ParameterSet<T> params) {
  switch (spec.kind) {
    case ModelKind::coldguess: return ColdGuessNet<T>::from_parameters(spec.coldguess_config(), std::move(params));
    case ModelKind::rgcn_expanded: return ExpandedRgcnNet<T>::from_parameters(spec.expanded_config(), std::move(params));
    default: return TabularNet<T>::from_parameters(spec.tabular_config(), std::move(params));
  }
}

template <class T>
ParameterSet<T>& head_parameters(HeadNet<T>& net) {
  return std::visit([](auto& n) -> ParameterSet<T>& { return n.parameters(); }, net);
}

/// Graph-derived inputs shared by every batch of one model kind.
template <class T>
struct PreparedGraph {
  const HeteroGraph* graph = nullptr;
  RelationalView view;                // coldguess
  std::optional<ExpandedGraph> expanded;  // rgcn_expanded
  Matrix<T> table;                    // tabular family: one row per offer
};

template <class T>
PreparedGraph<T> prepare(const ModelSpec& spec, const HeteroGraph& g) {
  PreparedGraph<T> p;
  p.graph = &g;
  std::vector<std::uint32_t> all(g.offer_count());
  std::iota(all.begin(), all.end(), 0u);
  switch (spec.kind) {
    case ModelKind::coldguess: p.view = relational_view(g); break;
    case ModelKind::rgcn_expanded: p.expanded = build_expanded_graph(g); break;
    case ModelKind::sign: p.table = sign_listing_table<T>(g, sign_precompute(g, spec.sign_hops), all); break;
    case ModelKind::naive:
    case ModelKind::tabular: p.table = listing_feature_table<T>(g, all); break;
  }
  return p;
}

/// Per-batch network input, built once and shared across heads.
template <class T>
using BatchInput = std::variant<ColdGuessBatch<T>, Matrix<T>, ExpandedBatch<T>>;

template <class T>
BatchInput<T> make_training_batch(const ModelSpec& spec, const PreparedGraph<T>& p, std::span<const std::uint32_t> offers) {
  switch (spec.kind) {
    case ModelKind::coldguess: return make_ego_batch<T>(*p.graph, p.view, offers, spec.layers);
    case ModelKind::rgcn_expanded: return make_expanded_ego_batch<T>(*p.expanded, offers, spec.expanded_layers);
    default: return gather_table_rows(p.table, offers);
  }
}

template <class T>
BatchInput<T> make_scoring_batch(const ModelSpec& spec, const PreparedGraph<T>& p, std::span<const std::uint32_t> offers) {
  switch (spec.kind) {
    case ModelKind::coldguess: return make_whole_graph_batch<T>(*p.graph, p.view, offers, spec.layers);
    case ModelKind::rgcn_expanded: return make_expanded_whole_batch<T>(*p.expanded, offers, spec.expanded_layers);
    default: return gather_table_rows(p.table, offers);
  }
}

template <class T>
Var<T> head_forward(const HeadNet<T>& net, Tape<T>& tape, const std::vector<Var<T>>& w, const BatchInput<T>& in,
                    std::mt19937_64* rng) {
  if (auto* n = std::get_if<ColdGuessNet<T>>(&net)) return n->forward(tape, w, std::get<ColdGuessBatch<T>>(in), rng);
  if (auto* n = std::get_if<ExpandedRgcnNet<T>>(&net)) return n->forward(tape, w, std::get<ExpandedBatch<T>>(in), rng);
  return std::get<TabularNet<T>>(net).forward(tape.constant(std::get<Matrix<T>>(in)), w, rng);
}

}  // namespace detail

inline Model init_model(const ModelSpec& spec, std::uint64_t seed) {
  Model m;
  m.spec = spec;
  for (std::size_t h = 0; h < spec.head_count(); ++h) {
    auto net = detail::create_head<float>(spec, derive_seed(seed, h));
    m.heads.push_back(std::move(detail::head_parameters(net)));
  }
  return m;
}

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 1024;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  OptimizerKind optimizer = OptimizerKind::adam;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
};

struct EpochReport {
  std::size_t epoch = 0;
  double loss = 0.0;
  double seconds = 0.0;
};

struct TrainReport {
  /// Per epoch, the mean over offers of the summed per-class cross-entropy.
  std::vector<double> loss_curve;
  double seconds = 0.0;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using EpochCallback = std::function<void(const EpochReport&)>;

/// Mini-batch training on `offers` of `g`. Each epoch shuffles the offers once
/// and visits every one; all heads see the same batches but keep separate
/// parameters and optimizer state.
inline TrainReport train_model(Model& model, const HeteroGraph& g, std::span<const std::uint32_t> offers,
                               const TrainConfig& config, const EpochCallback& on_epoch = {}) {
  if (!g.has_labels()) throw GraphError("train: graph has no labels");
  if (offers.empty() && config.epochs > 0) throw GraphError("train: no labeled offers");
  if (config.batch_size == 0) throw std::invalid_argument("train: batch_size must be positive");
  if (model.heads.size() != model.spec.head_count()) throw ShapeError("train: head count does not match spec");
  for (std::uint32_t o : offers)
    if (o >= g.offer_count()) throw GraphError("train: offer index out of range");

  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  const ModelSpec& spec = model.spec;
  const std::size_t heads = spec.head_count();

  std::vector<detail::HeadNet<float>> nets;
  for (auto& p : model.heads) nets.push_back(detail::load_head<float>(spec, std::move(p)));
  model.heads.clear();
  struct Restore {
    Model& m;
    std::vector<detail::HeadNet<float>>& nets;
    ~Restore() {
      m.heads.clear();
      for (auto& n : nets) m.heads.push_back(std::move(detail::head_parameters(n)));
    }
  } restore{model, nets};

  std::vector<AdamState<float>> adam(heads);
  for (auto& s : adam) s.config = {config.lr, config.beta1, config.beta2, config.eps};
  std::vector<std::mt19937_64> dropout_rng;
  for (std::size_t h = 0; h < heads; ++h) dropout_rng.emplace_back(derive_seed(config.seed, 1000 + h));

  const detail::PreparedGraph<float> prepared = detail::prepare<float>(spec, g);
  std::vector<std::uint32_t> order(offers.begin(), offers.end());
  std::mt19937_64 shuffle_rng(derive_seed(config.seed, 0));
  const Matrix<float>& labels = g.labels();

  TrainReport report;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto te = clock::now();
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t n = std::min(config.batch_size, order.size() - start);
      const std::span<const std::uint32_t> batch(order.data() + start, n);
      const auto input = detail::make_training_batch(spec, prepared, batch);
      for (std::size_t h = 0; h < heads; ++h) {
        Matrix<float> z(n, spec.head_outputs());
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t c = 0; c < z.cols; ++c) z(i, c) = labels(batch[i], heads == 1 ? c : h);
        ParameterSet<float>& params = detail::head_parameters(nets[h]);
        Tape<float> tape(true);
        const auto w = params.bind(tape);
        Var<float> probs = detail::head_forward(nets[h], tape, w, input, &dropout_rng[h]);
        Var<float> loss = scale(bce_loss(probs, z), static_cast<float>(z.cols));
        const double value = static_cast<double>(loss.value().data[0]);
        if (!std::isfinite(value))
          throw TrainingDiverged("training diverged: loss is " + std::to_string(value) + " at epoch " + std::to_string(epoch) +
                                 ", batch starting at " + std::to_string(start) + ", head " + std::to_string(h));
        tape.backward(loss);
        std::vector<Matrix<float>> grads;
        grads.reserve(w.size());
        for (std::size_t k = 0; k < w.size(); ++k) {
          Matrix<float> gk = tape.grad(w[k]);
          if (config.weight_decay > 0.0)
            for (std::size_t i = 0; i < gk.size(); ++i)
              gk.data[i] += static_cast<float>(config.weight_decay) * params[k].value.data[i];
          grads.push_back(std::move(gk));
        }
        if (config.optimizer == OptimizerKind::adam)
          adam_step(params, grads, adam[h]);
        else
          sgd_step(params, grads, config.lr);
        epoch_loss += value * static_cast<double>(n);
      }
    }
    EpochReport er;
    er.epoch = epoch;
    er.loss = epoch_loss / static_cast<double>(order.size());
    er.seconds = std::chrono::duration<double>(clock::now() - te).count();
    report.loss_curve.push_back(er.loss);
    if (on_epoch) on_epoch(er);
  }
  report.seconds = std::chrono::duration<double>(clock::now() - t0).count();
  return report;
}

/// Which sellers lost their features and which seller columns were cleared;
/// the naive model fills exactly these entries before scoring.
struct SellerMask {
  std::vector<std::uint32_t> sellers;
  std::vector<std::size_t> columns;
};

/// Probabilities |offers| x 9, propagating over the whole of `g`.
inline Matrix<float> score_offers(const Model& model, const HeteroGraph& g, std::span<const std::uint32_t> offers,
                                  const SellerMask& mask = {}) {
  const ModelSpec& spec = model.spec;
  if (model.heads.size() != spec.head_count()) throw ShapeError("score: head count does not match spec");
  if (g.seller_dim() != spec.seller_dim || g.product_dim() != spec.product_dim || g.offer_dim() != spec.offer_dim)
    throw ShapeError("score: graph feature dimensions do not match the model");
  for (std::uint32_t o : offers)
    if (o >= g.offer_count()) throw GraphError("score: offer index out of range");

  std::optional<HeteroGraph> filled;
  const HeteroGraph* source = &g;
  if (spec.kind == ModelKind::naive && !mask.sellers.empty()) {
    filled = g;
    filled->mutable_seller_features() = naive_fill_seller_features(g, mask.sellers, mask.columns);
    source = &*filled;
  }
  const detail::PreparedGraph<float> prepared = detail::prepare<float>(spec, *source);
  const auto input = detail::make_scoring_batch(spec, prepared, offers);

  Matrix<float> out(offers.size(), kClassCount);
  for (std::size_t h = 0; h < model.heads.size(); ++h) {
    const auto net = detail::load_head<float>(spec, model.heads[h]);
    Tape<float> tape(false);
    const auto w = model.heads[h].bind(tape);
    const Matrix<float> p = detail::head_forward<float>(net, tape, w, input, nullptr).value();
    for (std::size_t i = 0; i < p.rows; ++i)
      for (std::size_t c = 0; c < p.cols; ++c) out(i, model.heads.size() == 1 ? c : h) = p(i, c);
  }
  return out;
}

}  // namespace coldguess
