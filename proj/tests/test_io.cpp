#include "coldguess/checkpoint.hpp"
#include "coldguess/coldstart.hpp"
#include "coldguess/experiment.hpp"
#include "coldguess/graph_io.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace coldguess;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() / (std::string("cg_") + info->test_suite_name() + "_" + info->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void expect_same_graph(const HeteroGraph& a, const HeteroGraph& b) {
  EXPECT_TRUE(a.seller_features() == b.seller_features());
  EXPECT_TRUE(a.product_features() == b.product_features());
  EXPECT_TRUE(a.offer_features() == b.offer_features());
  EXPECT_EQ(a.listings(), b.listings());
  for (std::size_t r = 0; r < kSellerRelationCount; ++r) EXPECT_EQ(a.seller_edges(r), b.seller_edges(r));
  EXPECT_EQ(a.has_labels(), b.has_labels());
  if (a.has_labels() && b.has_labels()) {
    EXPECT_TRUE(a.labels() == b.labels());
  }
  EXPECT_EQ(a.seller_columns(), b.seller_columns());
  EXPECT_EQ(a.product_columns(), b.product_columns());
  EXPECT_EQ(a.offer_columns(), b.offer_columns());
}

HeteroGraph thousand_edge_graph() {
  GeneratorConfig c;
  c.sellers = 200;
  c.products = 150;
  c.offers = 700;
  c.communities = 5;
  c.seller_dim = 4;
  c.product_dim = 3;
  c.offer_dim = 5;
  c.p_in = {0.02, 0.02, 0.01, 0.01, 0.01, 0.005, 0.005, 0.005};
  return generate_synthetic_graph(c);
}

void flip_byte(const fs::path& file, std::size_t from_end) {
  auto bytes = io::read_file(file);
  bytes[bytes.size() - 1 - from_end] ^= 0x5a;
  io::write_file(file, bytes);
}

void truncate(const fs::path& file, std::size_t keep) {
  auto bytes = io::read_file(file);
  bytes.resize(keep);
  io::write_file(file, bytes);
}

Model trained_like_model(ModelKind kind, const HeteroGraph& g, std::uint64_t seed) {
  return init_model(spec_for_graph(kind, TrainMode::multi_task, g), seed);
}

}  // namespace

TEST(GraphIo, RoundTripThousandEdges) {
  TempDir dir;
  const auto g = thousand_edge_graph();
  ASSERT_GE(g.edge_count(), 1000u);
  save_graph(g, dir.path());
  expect_same_graph(load_graph(dir.path()), g);
}

TEST(GraphIo, RoundTripWithoutLabels) {
  TempDir dir;
  auto g = testutil::random_graph(3);
  g.clear_labels();
  save_graph(g, dir.path());
  EXPECT_FALSE(fs::exists(dir.path() / "labels.csv"));
  expect_same_graph(load_graph(dir.path()), g);
}

TEST(GraphIo, EmptyGraphRoundTrips) {
  TempDir dir;
  const HeteroGraph g(2, 3, 4);
  save_graph(g, dir.path());
  const auto back = load_graph(dir.path());
  EXPECT_EQ(back.seller_count(), 0u);
  EXPECT_EQ(back.offer_count(), 0u);
  EXPECT_EQ(back.offer_dim(), 4u);
}

TEST(GraphIo, BundleLayout) {
  TempDir dir;
  save_graph(testutil::random_graph(1), dir.path());
  for (const char* f : {"meta.json", "sellers.fbin", "products.fbin", "offers.fbin", "edges.csv", "labels.csv"})
    EXPECT_TRUE(fs::exists(dir.path() / f)) << f;
  const auto meta = nlohmann::json::parse(std::ifstream(dir.path() / "meta.json"));
  EXPECT_EQ(meta.at("format_version"), kGraphFormatVersion);
  EXPECT_EQ(meta.at("relations").size(), kRelationCount);
  const auto fbin = io::read_file(dir.path() / "sellers.fbin");
  EXPECT_EQ(std::string(fbin.begin(), fbin.begin() + 4), "CGFM");
}

TEST(GraphIo, TruncatedFilesRejected) {
  for (const char* file : {"sellers.fbin", "offers.fbin", "edges.csv", "labels.csv"}) {
    TempDir dir;
    save_graph(testutil::random_graph(2), dir.path());
    truncate(dir.path() / file, io::read_file(dir.path() / file).size() / 2);
    EXPECT_THROW(load_graph(dir.path()), io::FormatError) << file;
  }
}

TEST(GraphIo, CorruptedBytesRejected) {
  for (const char* file : {"products.fbin", "offers.fbin", "edges.csv"}) {
    TempDir dir;
    save_graph(testutil::random_graph(4), dir.path());
    flip_byte(dir.path() / file, 3);
    try {
      load_graph(dir.path());
      FAIL() << "corruption in " << file << " went unnoticed";
    } catch (const io::FormatError& e) {
      EXPECT_NE(std::string(e.what()).find(file), std::string::npos) << e.what();
    }
  }
}

TEST(GraphIo, BrokenMetaRejected) {
  TempDir dir;
  save_graph(testutil::random_graph(5), dir.path());
  io::write_file(dir.path() / "meta.json", std::string_view("{\"format_version\": 1"));
  EXPECT_THROW(load_graph(dir.path()), io::FormatError);
  io::write_file(dir.path() / "meta.json", std::string_view("{\"format_version\": 9}"));
  EXPECT_THROW(load_graph(dir.path()), io::FormatError);
}

TEST(GraphIo, MissingDirectoryRejected) {
  EXPECT_THROW(load_graph("/nonexistent/coldguess/bundle"), std::runtime_error);
}

TEST(Checkpoint, RoundTripScoresBitwise) {
  const auto g = testutil::random_graph(6, 15, 12, 40, 20);
  const std::vector<std::uint32_t> probe{0, 3, 5, 7, 11};
  for (ModelKind kind : {ModelKind::coldguess, ModelKind::naive, ModelKind::sign, ModelKind::rgcn_expanded, ModelKind::tabular}) {
    const Model m = trained_like_model(kind, g, 8);
    const auto back = decode_checkpoint(encode_checkpoint(m));
    EXPECT_EQ(back.spec.descriptor(), m.spec.descriptor());
    EXPECT_TRUE(score_offers(back, g, probe) == score_offers(m, g, probe)) << to_string(kind);
  }
}

TEST(Checkpoint, NineBinaryHeadsRoundTrip) {
  const auto g = testutil::random_graph(7);
  const Model m = init_model(spec_for_graph(ModelKind::coldguess, TrainMode::nine_binary, g), 2);
  const auto back = decode_checkpoint(encode_checkpoint(m));
  ASSERT_EQ(back.heads.size(), 9u);
  for (std::size_t h = 0; h < 9; ++h) EXPECT_TRUE(back.heads[h] == m.heads[h]);
}

TEST(Checkpoint, FileRoundTrip) {
  TempDir dir;
  const auto g = testutil::random_graph(8);
  const Model m = trained_like_model(ModelKind::coldguess, g, 1);
  save_checkpoint(m, dir.path() / "model.ckpt");
  const auto back = load_checkpoint(dir.path() / "model.ckpt", m.spec);
  EXPECT_TRUE(back.heads[0] == m.heads[0]);
}

TEST(Checkpoint, EveryFlippedByteIsDetected) {
  const auto g = testutil::random_graph(9, 8, 6, 10, 5);
  const auto bytes = encode_checkpoint(trained_like_model(ModelKind::tabular, g, 1));
  for (std::size_t i = 0; i < bytes.size(); i += 7) {
    auto bad = bytes;
    bad[i] ^= 0x01;
    EXPECT_THROW(decode_checkpoint(bad), CheckpointError) << "byte " << i;
  }
}

TEST(Checkpoint, TruncationDetected) {
  const auto g = testutil::random_graph(10);
  const auto bytes = encode_checkpoint(trained_like_model(ModelKind::sign, g, 1));
  for (std::size_t keep : {std::size_t{0}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
    const std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(keep));
    EXPECT_THROW(decode_checkpoint(cut), CheckpointError) << keep;
  }
}

TEST(Checkpoint, WrongArchitectureRefused) {
  const auto g = testutil::random_graph(11);
  const Model m = trained_like_model(ModelKind::coldguess, g, 1);
  auto other = m.spec;
  other.kind = ModelKind::tabular;
  EXPECT_THROW(decode_checkpoint(encode_checkpoint(m), other), CheckpointError);
  EXPECT_NE(io::hex(config_hash(other)), io::hex(config_hash(m.spec)));
}

TEST(Checkpoint, NotACheckpoint) {
  const std::string text = "this is a perfectly ordinary text file with enough bytes in it to pass the size check";
  EXPECT_THROW(decode_checkpoint(std::vector<std::uint8_t>(text.begin(), text.end())), CheckpointError);
}

TEST(ExperimentConfig, EpochBudgetsRoundTrip) {
  ExperimentConfig c;
  c.model.epochs = 5;
  c.model.epochs_by_model = {{ModelKind::sign, 2}};
  const ExperimentConfig back = ExperimentConfig::from_json(c.to_json());
  EXPECT_EQ(back.model.epochs_for(ModelKind::sign), 2u);
  EXPECT_EQ(back.model.epochs_for(ModelKind::tabular), 5u);
  EXPECT_EQ(back.to_json(), c.to_json());
}

TEST(ExperimentConfig, BadEpochBudgetsRejected) {
  auto j = ExperimentConfig{}.to_json();
  j["model"]["epochs_by_model"] = {{"lightgbm", 3}};
  EXPECT_THROW(ExperimentConfig::from_json(j), ConfigError);
  j["model"]["epochs_by_model"] = {{"tabular", -1}};
  EXPECT_THROW(ExperimentConfig::from_json(j), ConfigError);
  j["model"]["epochs_by_model"] = nlohmann::json::array({1, 2});
  EXPECT_THROW(ExperimentConfig::from_json(j), ConfigError);
}
