#pragma once

// Graph bundle directory:
//   meta.json       counts, dims, relation and column names, format version, CRC32 per file
//   sellers.fbin, products.fbin, offers.fbin
//                   "CGFM" | u32 rows | u32 cols | u32 format version | row-major f32
//   edges.csv       relation_id,src_type,src_idx,dst_type,dst_idx (offer edges in offer order)
//   labels.csv      offer_idx,z0..z8 (only when the graph has labels)

#include "coldguess/binary_io.hpp"
#include "coldguess/graph.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace coldguess {

inline constexpr std::uint32_t kGraphFormatVersion = 1;

inline std::vector<std::string> relation_names() {
  std::vector<std::string> names;
  for (std::size_t r = 0; r < kSellerRelationCount; ++r) names.push_back("seller_seller_" + std::to_string(r));
  names.push_back("offer");
  return names;
}

namespace detail {

inline std::vector<std::uint8_t> encode_fbin(const FeatureMatrix& m) {
  std::vector<std::uint8_t> out;
  io::put_bytes(out, "CGFM");
  io::put_u32(out, static_cast<std::uint32_t>(m.rows));
  io::put_u32(out, static_cast<std::uint32_t>(m.cols));
  io::put_u32(out, kGraphFormatVersion);
  for (float v : m.data) io::put_f32(out, v);
  return out;
}

inline FeatureMatrix decode_fbin(const std::vector<std::uint8_t>& bytes, const std::string& name) {
  io::Reader r(bytes.data(), bytes.size(), name);
  if (r.str(4) != "CGFM") throw io::FormatError(name + ": bad magic");
  const std::size_t rows = r.u32(), cols = r.u32();
  const std::uint32_t version = r.u32();
  if (version != kGraphFormatVersion) throw io::FormatError(name + ": unsupported format version " + std::to_string(version));
  if (r.remaining() != rows * cols * 4)
    throw io::FormatError(name + ": expected " + std::to_string(rows * cols * 4) + " payload bytes, found " +
                          std::to_string(r.remaining()));
  FeatureMatrix m(rows, cols);
  for (float& v : m.data) v = r.f32();
  return m;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <class Int>
Int parse_int(std::string_view s, const std::string& where) {
  Int v{};
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw io::FormatError(where + ": not an integer: '" + std::string(s) + "'");
  return v;
}

inline std::vector<std::string_view> csv_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) lines.push_back(line);
    start = nl + 1;
  }
  return lines;
}

inline NodeType parse_node_type(std::string_view s, const std::string& where) {
  if (s == "seller") return NodeType::seller;
  if (s == "product") return NodeType::product;
  throw io::FormatError(where + ": unknown node type '" + std::string(s) + "'");
}

/// labels.csv body; `rows` is the expected offer count when known.
inline Matrix<float> parse_labels(const std::vector<std::uint8_t>& bytes, std::optional<std::size_t> rows = {}) {
  const auto lines = csv_lines(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  if (lines.empty() || split_csv(lines[0]).size() != kClassCount + 1 || split_csv(lines[0])[0] != "offer_idx")
    throw io::FormatError("labels.csv: missing or unexpected header");
  if (rows && lines.size() != *rows + 1) throw io::FormatError("labels.csv: expected one row per offer");
  Matrix<float> z(lines.size() - 1, kClassCount);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::string where = "labels.csv line " + std::to_string(i + 1);
    const auto f = split_csv(lines[i]);
    if (f.size() != kClassCount + 1) throw io::FormatError(where + ": expected 10 fields");
    const auto o = parse_int<std::size_t>(f[0], where);
    if (o != i - 1) throw io::FormatError(where + ": offers must be listed in order");
    for (std::size_t c = 0; c < kClassCount; ++c) {
      const int v = parse_int<int>(f[c + 1], where);
      if (v != 0 && v != 1) throw io::FormatError(where + ": labels must be 0 or 1");
      z(o, c) = static_cast<float>(v);
    }
  }
  return z;
}

inline std::string crc_hex(std::uint32_t crc) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", crc);
  return buf;
}

}  // namespace detail

/// Writes `g` as a bundle under `dir` (created if needed).
inline void save_graph(const HeteroGraph& g, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json checksums;
  auto emit = [&](const std::string& name, std::span<const std::uint8_t> bytes) {
    io::write_file(dir / name, bytes);
    checksums[name] = detail::crc_hex(io::crc32_of(bytes.data(), bytes.size()));
  };
  emit("sellers.fbin", detail::encode_fbin(g.seller_features()));
  emit("products.fbin", detail::encode_fbin(g.product_features()));
  emit("offers.fbin", detail::encode_fbin(g.offer_features()));

  std::string edges = "relation_id,src_type,src_idx,dst_type,dst_idx\n";
  for (std::size_t r = 0; r < kSellerRelationCount; ++r)
    for (auto [a, b] : g.seller_edges(r))
      edges += std::to_string(r) + ",seller," + std::to_string(a) + ",seller," + std::to_string(b) + "\n";
  for (const Listing& l : g.listings())
    edges += std::to_string(kSellerRelationCount) + ",seller," + std::to_string(l.seller.index) + ",product," +
             std::to_string(l.product.index) + "\n";
  emit("edges.csv", std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(edges.data()), edges.size()));

  if (g.has_labels()) {
    std::string labels = "offer_idx";
    for (std::size_t c = 0; c < kClassCount; ++c) labels += ",z" + std::to_string(c);
    labels += "\n";
    for (std::size_t o = 0; o < g.offer_count(); ++o) {
      labels += std::to_string(o);
      for (std::size_t c = 0; c < kClassCount; ++c) labels += g.labels()(o, c) != 0.0f ? ",1" : ",0";
      labels += "\n";
    }
    emit("labels.csv", std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(labels.data()), labels.size()));
  }

  nlohmann::json meta;
  meta["format_version"] = kGraphFormatVersion;
  meta["counts"] = {{"sellers", g.seller_count()},
                    {"products", g.product_count()},
                    {"offers", g.offer_count()},
                    {"seller_edges", g.seller_edge_count()}};
  meta["dims"] = {{"seller", g.seller_dim()}, {"product", g.product_dim()}, {"offer", g.offer_dim()}};
  meta["relations"] = relation_names();
  meta["columns"] = {{"seller", g.seller_columns()}, {"product", g.product_columns()}, {"offer", g.offer_columns()}};
  meta["has_labels"] = g.has_labels();
  meta["checksums"] = checksums;
  io::write_file(dir / "meta.json", meta.dump(2) + "\n");
}

/// Reads a bundle written by save_graph. Any malformed, truncated or
/// checksum-mismatched file raises io::FormatError.
inline HeteroGraph load_graph(const std::filesystem::path& dir) {
  nlohmann::json meta;
  try {
    const auto bytes = io::read_file(dir / "meta.json");
    meta = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw io::FormatError((dir / "meta.json").string() + ": " + e.what());
  }
  try {
    const std::uint32_t version = meta.at("format_version");
    if (version != kGraphFormatVersion)
      throw io::FormatError((dir / "meta.json").string() + ": unsupported format version " + std::to_string(version));

    auto load = [&](const std::string& name) {
      auto bytes = io::read_file(dir / name);
      const std::string expected = meta.at("checksums").at(name);
      if (detail::crc_hex(io::crc32_of(bytes)) != expected)
        throw io::FormatError((dir / name).string() + ": checksum mismatch (file is corrupted or truncated)");
      return bytes;
    };

    const FeatureMatrix sellers = detail::decode_fbin(load("sellers.fbin"), "sellers.fbin");
    const FeatureMatrix products = detail::decode_fbin(load("products.fbin"), "products.fbin");
    const FeatureMatrix offers = detail::decode_fbin(load("offers.fbin"), "offers.fbin");
    const auto& counts = meta.at("counts");
    const auto& dims = meta.at("dims");
    if (sellers.rows != counts.at("sellers").get<std::size_t>() || products.rows != counts.at("products").get<std::size_t>() ||
        offers.rows != counts.at("offers").get<std::size_t>())
      throw io::FormatError("feature row counts do not match meta.json");
    if (sellers.cols != dims.at("seller").get<std::size_t>() || products.cols != dims.at("product").get<std::size_t>() ||
        offers.cols != dims.at("offer").get<std::size_t>())
      throw io::FormatError("feature widths do not match meta.json");

    HeteroGraph g(sellers.cols, products.cols, offers.cols);
    for (std::size_t i = 0; i < sellers.rows; ++i) g.add_node(NodeType::seller, sellers.row(i));
    for (std::size_t i = 0; i < products.rows; ++i) g.add_node(NodeType::product, products.row(i));
    const auto& cols = meta.at("columns");
    g.set_column_names(cols.at("seller").get<std::vector<std::string>>(), cols.at("product").get<std::vector<std::string>>(),
                       cols.at("offer").get<std::vector<std::string>>());

    const auto edge_bytes = load("edges.csv");
    const std::string_view edge_text(reinterpret_cast<const char*>(edge_bytes.data()), edge_bytes.size());
    const auto lines = detail::csv_lines(edge_text);
    if (lines.empty() || lines[0] != "relation_id,src_type,src_idx,dst_type,dst_idx")
      throw io::FormatError("edges.csv: missing or unexpected header");
    std::size_t offer = 0;
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const std::string where = "edges.csv line " + std::to_string(i + 1);
      const auto f = detail::split_csv(lines[i]);
      if (f.size() != 5) throw io::FormatError(where + ": expected 5 fields");
      const auto rid = detail::parse_int<std::size_t>(f[0], where);
      if (rid >= kRelationCount) throw io::FormatError(where + ": relation id out of range");
      const NodeRef src{detail::parse_node_type(f[1], where), detail::parse_int<std::uint32_t>(f[2], where)};
      const NodeRef dst{detail::parse_node_type(f[3], where), detail::parse_int<std::uint32_t>(f[4], where)};
      const RelationTag r = RelationTag::from_id(rid);
      try {
        if (r.is_offer()) {
          if (offer >= offers.rows) throw io::FormatError(where + ": more offer edges than offer feature rows");
          g.add_edge(r, src, dst, offers.row(offer++));
        } else {
          g.add_edge(r, src, dst);
        }
      } catch (const GraphError& e) {
        throw io::FormatError(where + ": " + e.what());
      }
    }
    if (offer != offers.rows) throw io::FormatError("edges.csv: fewer offer edges than offer feature rows");

    if (meta.at("has_labels").get<bool>()) g.set_labels(detail::parse_labels(load("labels.csv"), g.offer_count()));

    const ValidationResult check = validate(g);
    if (!check.ok()) throw io::FormatError("loaded graph is invalid: " + check.violation);
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw io::FormatError((dir / "meta.json").string() + ": " + e.what());
  }
}

/// Labels alone, from a bundle directory or a labels.csv file.
inline Matrix<float> load_labels(const std::filesystem::path& path) {
  const auto file = std::filesystem::is_directory(path) ? path / "labels.csv" : path;
  return detail::parse_labels(io::read_file(file));
}

}  // namespace coldguess
