#pragma once

// Synthetic seller-product graphs with planted risk communities, and the
// cold-start scenarios built on top of them.
//
// Sellers belong to communities. Each community has a centroid in seller
// feature space and a class-probability vector; every offer of a seller draws
// its label from that vector. Seller-seller relations follow a stochastic
// block model, so risky sellers cluster. Offers mostly go to products from
// the seller's home pool, which makes products informative as well.
//
// A generator seed fixes the "world" (centroids and class vectors); the
// snapshot index draws a fresh set of sellers, products and offers from it.

#include "coldguess/graph.hpp"
#include "coldguess/model.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace coldguess {

struct GeneratorConfig {
  std::size_t sellers = 5000;
  std::size_t products = 4000;
  std::size_t offers = 20000;
  std::size_t communities = 50;
  std::size_t seller_dim = 16;
  std::size_t product_dim = 16;
  std::size_t offer_dim = 16;
  /// Within-community edge probability, per seller-seller relation.
  std::vector<double> p_in = {0.02, 0.015, 0.012, 0.01, 0.008, 0.006, 0.005, 0.004};
  /// Cross-community edge probability, per seller-seller relation.
  std::vector<double> p_out = {5e-5, 5e-5, 5e-5, 5e-5, 5e-5, 5e-5, 5e-5, 5e-5};
  /// Defect-class rates every community starts from (8 entries).
  std::vector<double> base_class_rates = {0.03, 0.01, 0.03, 0.03, 0.03, 0.01, 0.01, 0.01};
  double risky_fraction = 0.4;  // communities with one dominant defect class
  double risky_boost = 0.4;     // added to the dominant class rate
  /// Explicit per-community defect rates (communities x 8). Overrides the
  /// three fields above when non-empty.
  std::vector<std::vector<double>> class_probabilities;
  double centroid_scale = 1.0;
  double noise = 1.0;
  double offer_signal = 0.6;       // scale of the label centroid in offer features
  double product_affinity = 0.7;   // probability an offer's product comes from the seller's home pool
  std::size_t categories = 10;     // distinct values of product_category
  double activity_sigma = 0.8;     // lognormal spread of offers per seller
  std::uint64_t seed = 42;

  nlohmann::json to_json() const;
  static GeneratorConfig from_json(const nlohmann::json& j);
};

inline nlohmann::json GeneratorConfig::to_json() const {
  return {{"sellers", sellers},
          {"products", products},
          {"offers", offers},
          {"communities", communities},
          {"seller_dim", seller_dim},
          {"product_dim", product_dim},
          {"offer_dim", offer_dim},
          {"p_in", p_in},
          {"p_out", p_out},
          {"base_class_rates", base_class_rates},
          {"risky_fraction", risky_fraction},
          {"risky_boost", risky_boost},
          {"class_probabilities", class_probabilities},
          {"centroid_scale", centroid_scale},
          {"noise", noise},
          {"offer_signal", offer_signal},
          {"product_affinity", product_affinity},
          {"categories", categories},
          {"activity_sigma", activity_sigma},
          {"seed", seed}};
}

/// Reads the keys present in `j` over the defaults; unknown keys are errors.
inline GeneratorConfig GeneratorConfig::from_json(const nlohmann::json& j) {
  GeneratorConfig c;
  if (!j.is_object()) throw std::invalid_argument("generator: expected an object");
  const nlohmann::json known = c.to_json();
  for (const auto& [key, value] : j.items())
    if (!known.contains(key)) throw std::invalid_argument("generator: unknown key '" + key + "'");
  auto get = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(field);
    } catch (const nlohmann::json::exception&) {
      throw std::invalid_argument(std::string("generator: bad value for '") + key + "'");
    }
  };
  get("sellers", c.sellers);
  get("products", c.products);
  get("offers", c.offers);
  get("communities", c.communities);
  get("seller_dim", c.seller_dim);
  get("product_dim", c.product_dim);
  get("offer_dim", c.offer_dim);
  get("p_in", c.p_in);
  get("p_out", c.p_out);
  get("base_class_rates", c.base_class_rates);
  get("risky_fraction", c.risky_fraction);
  get("risky_boost", c.risky_boost);
  get("class_probabilities", c.class_probabilities);
  get("centroid_scale", c.centroid_scale);
  get("noise", c.noise);
  get("offer_signal", c.offer_signal);
  get("product_affinity", c.product_affinity);
  get("categories", c.categories);
  get("activity_sigma", c.activity_sigma);
  get("seed", c.seed);
  return c;
}

class GeneratorError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline void check_generator_config(const GeneratorConfig& c) {
  auto prob = [](double p, const std::string& what) {
    if (!(p >= 0.0 && p <= 1.0)) throw GeneratorError(what + " must lie in [0, 1]");
  };
  if (c.communities == 0) throw GeneratorError("generator: need at least one community");
  if (c.offers > 0 && (c.sellers == 0 || c.products == 0))
    throw GeneratorError("generator: offers need at least one seller and one product");
  if (static_cast<double>(c.offers) > static_cast<double>(c.sellers) * static_cast<double>(c.products))
    throw GeneratorError("generator: more offers than distinct seller-product pairs");
  if (c.seller_dim == 0 || c.product_dim < 1 || c.offer_dim < 1) throw GeneratorError("generator: feature dims must be positive");
  if (c.p_in.size() != kSellerRelationCount || c.p_out.size() != kSellerRelationCount)
    throw GeneratorError("generator: p_in and p_out need one entry per seller-seller relation (8)");
  for (double p : c.p_in) prob(p, "generator: p_in");
  for (double p : c.p_out) prob(p, "generator: p_out");
  prob(c.risky_fraction, "generator: risky_fraction");
  prob(c.product_affinity, "generator: product_affinity");
  if (c.categories == 0) throw GeneratorError("generator: categories must be positive");
  if (!(c.noise >= 0.0) || !(c.centroid_scale >= 0.0) || !(c.activity_sigma >= 0.0))
    throw GeneratorError("generator: noise, centroid_scale and activity_sigma must be non-negative");
  auto check_rates = [&](const std::vector<double>& rates, const std::string& what) {
    if (rates.size() != kClassCount - 1) throw GeneratorError(what + " needs 8 defect-class rates");
    double sum = 0.0;
    for (double p : rates) {
      prob(p, what);
      sum += p;
    }
    if (sum > 1.0 + 1e-12) throw GeneratorError(what + " sums to more than 1");
  };
  if (c.class_probabilities.empty()) {
    check_rates(c.base_class_rates, "generator: base_class_rates");
    for (double p : c.base_class_rates)
      if (p + c.risky_boost > 1.0) throw GeneratorError("generator: risky_boost pushes a class rate above 1");
    double base = 0.0;
    for (double p : c.base_class_rates) base += p;
    if (base + c.risky_boost > 1.0 + 1e-12) throw GeneratorError("generator: boosted class rates sum to more than 1");
  } else {
    if (c.class_probabilities.size() != c.communities)
      throw GeneratorError("generator: class_probabilities needs one row per community");
    for (const auto& row : c.class_probabilities) check_rates(row, "generator: class_probabilities row");
  }
}

namespace detail {

/// Calls f(i, j) for each pair i < j of n items kept independently with
/// probability p, skipping geometrically between kept pairs.
template <class F>
void sample_pairs(std::size_t n, double p, std::mt19937_64& rng, F&& f) {
  if (n < 2 || p <= 0.0) return;
  const std::uint64_t total = static_cast<std::uint64_t>(n) * (n - 1) / 2;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double logq = p < 1.0 ? std::log1p(-p) : 0.0;
  auto next = [&](std::uint64_t k) -> std::uint64_t {
    if (p >= 1.0) return k + 1;
    const double u = 1.0 - unit(rng);  // (0, 1]
    const double skip = std::floor(std::log(u) / logq);
    if (skip >= static_cast<double>(total)) return total;
    return k + 1 + static_cast<std::uint64_t>(skip);
  };
  std::size_t i = 0;
  std::uint64_t row_start = 0, row_len = n - 1;
  for (std::uint64_t k = next(static_cast<std::uint64_t>(-1)); k < total; k = next(k)) {
    while (k >= row_start + row_len) {
      row_start += row_len;
      ++i;
      row_len = n - 1 - i;
    }
    f(i, i + 1 + static_cast<std::size_t>(k - row_start));
  }
}

/// Parameters shared by every snapshot of one generator seed.
struct World {
  std::vector<std::vector<double>> seller_centroid;   // per community
  std::vector<std::vector<double>> product_centroid;  // per community, product_dim - 1 wide
  std::vector<std::vector<double>> class_centroid;    // per class, offer_dim - 1 wide
  std::vector<std::vector<double>> class_rates;       // per community, 9 entries (Normal last)
  std::vector<double> log_price_mean;                 // per class
};

inline World make_world(const GeneratorConfig& c) {
  World w;
  std::mt19937_64 rng(c.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto vec = [&](std::size_t d, double scale) {
    std::vector<double> v(d);
    for (double& x : v) x = scale * normal(rng);
    return v;
  };
  for (std::size_t k = 0; k < c.communities; ++k) w.seller_centroid.push_back(vec(c.seller_dim, c.centroid_scale));
  for (std::size_t k = 0; k < c.communities; ++k) w.product_centroid.push_back(vec(c.product_dim - 1, c.centroid_scale));
  for (std::size_t k = 0; k < kClassCount; ++k) w.class_centroid.push_back(vec(c.offer_dim - 1, 1.0));
  for (std::size_t k = 0; k < kClassCount; ++k) w.log_price_mean.push_back(3.0 + 0.1 * normal(rng));

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick_class(0, kClassCount - 2);
  for (std::size_t k = 0; k < c.communities; ++k) {
    std::vector<double> rates;
    if (!c.class_probabilities.empty()) {
      rates = c.class_probabilities[k];
    } else {
      rates = c.base_class_rates;
      if (unit(rng) < c.risky_fraction) rates[pick_class(rng)] += c.risky_boost;
    }
    double sum = 0.0;
    for (double r : rates) sum += r;
    rates.push_back(std::max(0.0, 1.0 - sum));
    w.class_rates.push_back(std::move(rates));
  }
  return w;
}

}  // namespace detail

/// Column names of generated graphs; list_price and product_category lead
/// their matrices.
inline void name_generated_columns(HeteroGraph& g) {
  std::vector<std::string> s, p, o;
  for (std::size_t i = 0; i < g.seller_dim(); ++i) s.push_back("seller_f" + std::to_string(i));
  p.push_back("product_category");
  for (std::size_t i = 1; i < g.product_dim(); ++i) p.push_back("product_f" + std::to_string(i));
  o.push_back("list_price");
  for (std::size_t i = 1; i < g.offer_dim(); ++i) o.push_back("offer_f" + std::to_string(i));
  g.set_column_names(std::move(s), std::move(p), std::move(o));
}

/// Ground truth kept alongside a generated graph.
struct GeneratedGraph {
  HeteroGraph graph;
  std::vector<std::uint32_t> seller_community;
  std::vector<std::uint32_t> product_community;
};

inline GeneratedGraph generate_synthetic_graph_with_truth(const GeneratorConfig& c, std::uint64_t snapshot = 0) {
  check_generator_config(c);
  const detail::World world = detail::make_world(c);
  std::mt19937_64 rng(derive_seed(c.seed, 1 + snapshot));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  GeneratedGraph out;
  HeteroGraph& g = out.graph;
  g = HeteroGraph(c.seller_dim, c.product_dim, c.offer_dim);

  // Sellers: balanced community sizes in random order.
  std::vector<std::uint32_t>& community = out.seller_community;
  for (std::size_t s = 0; s < c.sellers; ++s) community.push_back(static_cast<std::uint32_t>(s % c.communities));
  std::shuffle(community.begin(), community.end(), rng);
  std::vector<float> row;
  for (std::size_t s = 0; s < c.sellers; ++s) {
    row.assign(c.seller_dim, 0.0f);
    for (std::size_t j = 0; j < c.seller_dim; ++j)
      row[j] = static_cast<float>(world.seller_centroid[community[s]][j] + c.noise * normal(rng));
    g.add_node(NodeType::seller, row);
  }

  // Products: home community p mod C, category derived from it.
  std::vector<std::vector<std::uint32_t>> pool(c.communities);
  for (std::size_t p = 0; p < c.products; ++p) {
    const auto home = static_cast<std::uint32_t>(p % c.communities);
    out.product_community.push_back(home);
    pool[home].push_back(static_cast<std::uint32_t>(p));
    row.assign(c.product_dim, 0.0f);
    row[0] = static_cast<float>(home % c.categories);
    for (std::size_t j = 1; j < c.product_dim; ++j)
      row[j] = static_cast<float>(world.product_centroid[home][j - 1] + c.noise * normal(rng));
    g.add_node(NodeType::product, row);
  }

  // Seller-seller relations: stochastic block model per relation.
  std::vector<std::vector<std::uint32_t>> members(c.communities);
  for (std::size_t s = 0; s < c.sellers; ++s) members[community[s]].push_back(static_cast<std::uint32_t>(s));
  for (std::size_t r = 0; r < kSellerRelationCount; ++r) {
    const RelationTag tag = RelationTag::seller_seller(r);
    for (const auto& m : members)
      detail::sample_pairs(m.size(), c.p_in[r], rng, [&](std::size_t i, std::size_t j) {
        g.insert_edge_unchecked(tag, NodeRef::seller(m[i]), NodeRef::seller(m[j]));
      });
    detail::sample_pairs(c.sellers, c.p_out[r], rng, [&](std::size_t i, std::size_t j) {
      if (community[i] != community[j])
        g.insert_edge_unchecked(tag, NodeRef::seller(static_cast<std::uint32_t>(i)), NodeRef::seller(static_cast<std::uint32_t>(j)));
    });
  }

  // Offers per seller: one each while offers last, the rest by lognormal activity.
  std::vector<std::size_t> per_seller(c.sellers, 0);
  if (c.offers > 0) {
    std::vector<std::uint32_t> order(c.sellers);
    std::iota(order.begin(), order.end(), 0u);
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t base = std::min(c.offers, c.sellers);
    for (std::size_t i = 0; i < base; ++i) per_seller[order[i]] = 1;
    std::vector<double> activity(c.sellers);
    for (double& a : activity) a = std::exp(c.activity_sigma * normal(rng));
    std::discrete_distribution<std::size_t> pick(activity.begin(), activity.end());
    for (std::size_t left = c.offers - base; left > 0;) {
      const std::size_t s = pick(rng);
      if (per_seller[s] >= c.products) continue;
      ++per_seller[s];
      --left;
    }
  }

  Matrix<float> labels(c.offers, kClassCount);
  std::vector<std::uint32_t> chosen;
  std::uniform_int_distribution<std::uint32_t> any_product(0, static_cast<std::uint32_t>(c.products ? c.products - 1 : 0));
  std::vector<float> feat(c.offer_dim);
  for (std::size_t s = 0; s < c.sellers; ++s) {
    chosen.clear();
    const auto& home = pool[community[s]];
    for (std::size_t k = 0; k < per_seller[s]; ++k) {
      std::uint32_t p = 0;
      for (std::size_t attempt = 0;; ++attempt) {
        if (attempt < 64) {
          const bool from_home = !home.empty() && unit(rng) < c.product_affinity;
          p = from_home ? home[std::uniform_int_distribution<std::size_t>(0, home.size() - 1)(rng)] : any_product(rng);
        } else {
          // Dense sellers: first unused product after a random start.
          p = any_product(rng);
          while (std::find(chosen.begin(), chosen.end(), p) != chosen.end()) p = (p + 1) % static_cast<std::uint32_t>(c.products);
        }
        if (std::find(chosen.begin(), chosen.end(), p) == chosen.end()) break;
      }
      chosen.push_back(p);

      const auto& rates = world.class_rates[community[s]];
      std::discrete_distribution<std::size_t> draw(rates.begin(), rates.end());
      const std::size_t cls = draw(rng);
      feat[0] = static_cast<float>(std::exp(world.log_price_mean[cls] + 0.5 * normal(rng)));
      for (std::size_t j = 1; j < c.offer_dim; ++j)
        feat[j] = static_cast<float>(c.offer_signal * world.class_centroid[cls][j - 1] + c.noise * normal(rng));
      const std::size_t o = g.insert_edge_unchecked(RelationTag::offer(), NodeRef::seller(static_cast<std::uint32_t>(s)),
                                                    NodeRef::product(p), std::span<const float>(feat));
      labels(o, cls) = 1.0f;
    }
  }
  g.set_labels(std::move(labels));
  name_generated_columns(g);
  return out;
}

inline HeteroGraph generate_synthetic_graph(const GeneratorConfig& c, std::uint64_t snapshot = 0) {
  return generate_synthetic_graph_with_truth(c, snapshot).graph;
}

// Cold-start scenarios

enum class Scenario { full, new_offer, new_seller, new_seller_new_product };

inline const char* to_string(Scenario s) {
  switch (s) {
    case Scenario::full: return "G_o";
    case Scenario::new_offer: return "G_no";
    case Scenario::new_seller: return "G_ns";
    case Scenario::new_seller_new_product: return "G_nsnp";
  }
  return "?";
}

inline Scenario parse_scenario(std::string_view s) {
  for (Scenario x : {Scenario::full, Scenario::new_offer, Scenario::new_seller, Scenario::new_seller_new_product})
    if (s == to_string(x)) return x;
  if (s == "full") return Scenario::full;
  if (s == "new_offer") return Scenario::new_offer;
  if (s == "new_seller") return Scenario::new_seller;
  if (s == "new_seller_new_product") return Scenario::new_seller_new_product;
  throw std::invalid_argument("unknown scenario '" + std::string(s) + "' (expected G_o, G_no, G_ns or G_nsnp)");
}

inline constexpr std::array<Scenario, 4> kAllScenarios = {Scenario::full, Scenario::new_offer, Scenario::new_seller,
                                                           Scenario::new_seller_new_product};

struct ColdStartConfig {
  std::vector<std::size_t> minority_classes = {1, 5, 6, 7};
  double minority_rate = 0.25;
  double other_rate = 0.01;
};

/// Sorted union over classes of ceil(rate * count) offers drawn uniformly
/// from each class's positive offers. Empty classes contribute nothing.
inline std::vector<std::uint32_t> sample_cold_entities(const HeteroGraph& g, std::uint64_t seed,
                                                       const ColdStartConfig& config = {}) {
  const Matrix<float>& z = g.labels();
  std::mt19937_64 rng(seed);
  std::set<std::uint32_t> picked;
  for (std::size_t c = 0; c < kClassCount; ++c) {
    std::vector<std::uint32_t> members;
    for (std::size_t o = 0; o < z.rows; ++o)
      if (z(o, c) != 0.0f) members.push_back(static_cast<std::uint32_t>(o));
    if (members.empty()) continue;
    const bool minority = std::find(config.minority_classes.begin(), config.minority_classes.end(), c) != config.minority_classes.end();
    const double rate = minority ? config.minority_rate : config.other_rate;
    const auto k = static_cast<std::size_t>(std::ceil(rate * static_cast<double>(members.size()) - 1e-9));
    for (std::uint32_t o : sample_offer_batch(members, k, rng()).offers) picked.insert(o);
  }
  return {picked.begin(), picked.end()};
}

/// Entities treated as new and the feature columns that survive masking.
struct ScenarioSpec {
  Scenario scenario = Scenario::full;
  std::uint64_t seed = 0;
  std::vector<std::uint32_t> new_offers;
  std::vector<std::uint32_t> new_sellers;
  std::vector<std::uint32_t> new_products;
  std::vector<std::string> retained_offer_columns;
  std::vector<std::string> retained_seller_columns;
  std::vector<std::string> retained_product_columns;

  nlohmann::json to_json() const {
    return {{"scenario", to_string(scenario)},
            {"seed", seed},
            {"new_offers", new_offers},
            {"new_sellers", new_sellers},
            {"new_products", new_products},
            {"retained_columns",
             {{"offer", retained_offer_columns}, {"seller", retained_seller_columns}, {"product", retained_product_columns}}}};
  }

  static ScenarioSpec from_json(const nlohmann::json& j) {
    ScenarioSpec s;
    try {
      for (const auto& [key, value] : j.items())
        if (key != "scenario" && key != "seed" && key != "new_offers" && key != "new_sellers" && key != "new_products" &&
            key != "retained_columns")
          throw std::invalid_argument("scenario: unknown key '" + key + "'");
      s.scenario = parse_scenario(j.at("scenario").get<std::string>());
      s.seed = j.value("seed", std::uint64_t{0});
      s.new_offers = j.value("new_offers", std::vector<std::uint32_t>{});
      s.new_sellers = j.value("new_sellers", std::vector<std::uint32_t>{});
      s.new_products = j.value("new_products", std::vector<std::uint32_t>{});
      if (j.contains("retained_columns")) {
        const auto& r = j.at("retained_columns");
        s.retained_offer_columns = r.value("offer", std::vector<std::string>{});
        s.retained_seller_columns = r.value("seller", std::vector<std::string>{});
        s.retained_product_columns = r.value("product", std::vector<std::string>{});
      }
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument(std::string("scenario: ") + e.what());
    }
    return s;
  }
};

/// Completes a scenario from its sampled new offers: new sellers are the
/// sellers of those offers, new products (G_nsnp only) their products.
inline ScenarioSpec make_scenario(const HeteroGraph& g, Scenario scenario, std::vector<std::uint32_t> new_offers,
                                  std::uint64_t seed = 0) {
  ScenarioSpec s;
  s.scenario = scenario;
  s.seed = seed;
  if (scenario == Scenario::full) return s;
  std::sort(new_offers.begin(), new_offers.end());
  new_offers.erase(std::unique(new_offers.begin(), new_offers.end()), new_offers.end());
  s.new_offers = std::move(new_offers);
  s.retained_offer_columns = {"list_price"};
  if (scenario == Scenario::new_offer) return s;
  std::set<std::uint32_t> sellers, products;
  for (std::uint32_t o : s.new_offers) {
    sellers.insert(g.listing(o).seller.index);
    products.insert(g.listing(o).product.index);
  }
  s.new_sellers.assign(sellers.begin(), sellers.end());
  if (scenario == Scenario::new_seller_new_product) {
    s.new_products.assign(products.begin(), products.end());
    s.retained_product_columns = {"product_category"};
  }
  return s;
}

inline ScenarioSpec sample_scenario(const HeteroGraph& g, Scenario scenario, std::uint64_t seed,
                                    const ColdStartConfig& config = {}) {
  if (scenario == Scenario::full) return make_scenario(g, scenario, {}, seed);
  return make_scenario(g, scenario, sample_cold_entities(g, seed, config), seed);
}

struct ScenarioResult {
  HeteroGraph graph;                     // features masked, structure and labels unchanged
  std::vector<std::uint32_t> evaluation;  // sorted offer indices to score
  SellerMask seller_mask;                // new sellers and their cleared columns
};

namespace detail {

inline std::vector<std::size_t> masked_columns(const std::vector<std::string>& names, const std::vector<std::string>& retained,
                                               const char* kind) {
  for (const auto& r : retained)
    if (std::find(names.begin(), names.end(), r) == names.end())
      throw std::invalid_argument(std::string("scenario: unknown retained ") + kind + " column '" + r + "'");
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < names.size(); ++c)
    if (std::find(retained.begin(), retained.end(), names[c]) == retained.end()) out.push_back(c);
  return out;
}

inline void zero_columns(FeatureMatrix& m, std::uint32_t row, const std::vector<std::size_t>& cols) {
  for (std::size_t c : cols) m(row, c) = 0.0f;
}

}  // namespace detail

/// Masks the features of the scenario's new entities with zeros and returns
/// the offers to evaluate. Edges and labels are never touched.
inline ScenarioResult apply_scenario(const HeteroGraph& g, const ScenarioSpec& spec) {
  ScenarioResult res{g, {}, {}};
  for (std::uint32_t o : spec.new_offers)
    if (o >= g.offer_count()) throw std::invalid_argument("scenario: new offer " + std::to_string(o) + " out of range");
  for (std::uint32_t s : spec.new_sellers)
    if (s >= g.seller_count()) throw std::invalid_argument("scenario: new seller " + std::to_string(s) + " out of range");
  for (std::uint32_t p : spec.new_products)
    if (p >= g.product_count()) throw std::invalid_argument("scenario: new product " + std::to_string(p) + " out of range");

  const auto offer_cols = detail::masked_columns(g.offer_columns(), spec.retained_offer_columns, "offer");
  const auto seller_cols = detail::masked_columns(g.seller_columns(), spec.retained_seller_columns, "seller");
  const auto product_cols = detail::masked_columns(g.product_columns(), spec.retained_product_columns, "product");

  std::set<std::uint32_t> eval;
  switch (spec.scenario) {
    case Scenario::full:
      if (g.has_labels())
        for (std::uint32_t o = 0; o < g.offer_count(); ++o) eval.insert(o);
      break;
    case Scenario::new_offer:
      eval.insert(spec.new_offers.begin(), spec.new_offers.end());
      break;
    case Scenario::new_seller:
    case Scenario::new_seller_new_product:
      for (std::uint32_t s : spec.new_sellers) {
        detail::zero_columns(res.graph.mutable_seller_features(), s, seller_cols);
        for (std::uint32_t o : g.seller_offers(s)) eval.insert(o);
      }
      res.seller_mask.sellers = spec.new_sellers;
      res.seller_mask.columns = seller_cols;
      if (spec.scenario == Scenario::new_seller_new_product)
        for (std::uint32_t p : spec.new_products) {
          detail::zero_columns(res.graph.mutable_product_features(), p, product_cols);
          for (std::uint32_t o : g.product_offers(p)) eval.insert(o);
        }
      break;
  }
  if (spec.scenario != Scenario::full)
    for (std::uint32_t o : eval) detail::zero_columns(res.graph.mutable_offer_features(), o, offer_cols);
  res.evaluation.assign(eval.begin(), eval.end());
  return res;
}

}  // namespace coldguess
