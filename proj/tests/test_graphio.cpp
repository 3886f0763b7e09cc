#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "muchgcn/graphio.hpp"
#include "muchgcn/rng.hpp"

using namespace muchgcn;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("muchgcn_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p);
  out << content;
}

/// Two graphs: a triangle (label 1) and a 2-path (label -1), with node labels.
fs::path write_tiny_tu(const std::string& tag) {
  fs::path dir = fresh_dir(tag);
  fs::create_directories(dir / "TINY");
  write_file(dir / "TINY" / "TINY_A.txt",
             "1, 2\n2, 1\n2, 3\n3, 2\n1, 3\n3, 1\n4, 5\n5, 4\n");
  write_file(dir / "TINY" / "TINY_graph_indicator.txt", "1\n1\n1\n2\n2\n");
  write_file(dir / "TINY" / "TINY_graph_labels.txt", "1\n-1\n");
  write_file(dir / "TINY" / "TINY_node_labels.txt", "7\n7\n9\n9\n7\n");
  return dir;
}

}  // namespace

TEST_CASE("read_tu_files reconstructs graphs, labels, and node labels") {
  fs::path dir = write_tiny_tu("read");
  TuData raw = read_tu_files(dir, "TINY");
  REQUIRE(raw.adjacency.size() == 2);
  CHECK(raw.num_classes == 2);
  CHECK(raw.graph_labels == std::vector<int>{1, 0});  // -1 -> 0, 1 -> 1 (sorted ascending)
  CHECK(raw.adjacency[0].rows() == 3);
  CHECK(raw.adjacency[1].rows() == 2);
  // Triangle: every off-diagonal entry set, diagonal zero.
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(raw.adjacency[0].at(i, j) == (i == j ? 0.0 : 1.0));
  CHECK(raw.adjacency[1].at(0, 1) == 1.0);
  CHECK(raw.num_node_labels == 2);
  CHECK(raw.node_labels[0] == std::vector<int>{0, 0, 1});  // 7 -> 0, 9 -> 1
  CHECK(raw.node_labels[1] == std::vector<int>{1, 0});
}

TEST_CASE("read_tu_files reports missing and malformed inputs") {
  fs::path dir = fresh_dir("missing");
  CHECK_THROWS_WITH_AS(read_tu_files(dir, "NOPE"), doctest::Contains("NOPE"), std::runtime_error);

  fs::path dir2 = write_tiny_tu("badedge");
  write_file(dir2 / "TINY" / "TINY_A.txt", "1, 9\n");
  CHECK_THROWS_AS(read_tu_files(dir2, "TINY"), std::runtime_error);

  fs::path dir3 = write_tiny_tu("crossedge");
  write_file(dir3 / "TINY" / "TINY_A.txt", "1, 4\n");  // node 1 in graph 1, node 4 in graph 2
  CHECK_THROWS_AS(read_tu_files(dir3, "TINY"), std::runtime_error);
}

TEST_CASE("bio features are one-hot label, degree, clustering coefficient") {
  fs::path dir = write_tiny_tu("bio");
  Dataset ds = parse_tu_dataset(dir, "TINY", FeatureMode::kBio);
  REQUIRE(ds.input_dim == 4);  // 2 node labels + degree + clustering
  const Graph& tri = ds.graphs[0];
  // Node 0 of the triangle: label 7 -> one-hot [1,0], degree 2, clustering 1.
  CHECK(tri.features.at(0, 0) == 1.0);
  CHECK(tri.features.at(0, 1) == 0.0);
  CHECK(tri.features.at(0, 2) == 2.0);
  CHECK(tri.features.at(0, 3) == 1.0);
  const Graph& path = ds.graphs[1];
  // Path endpoints: degree 1, clustering 0 by convention.
  CHECK(path.features.at(0, 2) == 1.0);
  CHECK(path.features.at(0, 3) == 0.0);
  CHECK(ds.max_nodes == 3);
  CHECK(ds.num_classes == 2);
}

TEST_CASE("social features are the degree column only") {
  fs::path dir = write_tiny_tu("social");
  Dataset ds = parse_tu_dataset(dir, "TINY", FeatureMode::kSocial);
  CHECK(ds.input_dim == 1);
  CHECK(ds.graphs[0].features.at(1, 0) == 2.0);
}

TEST_CASE("clustering coefficient on a square-with-diagonal") {
  // 4-cycle 0-1-2-3 plus diagonal 0-2: node 0 has neighbors {1,2,3} with one
  // edge among them... actually two: (1,2) and (2,3). c_0 = 2*2/(3*2) = 2/3.
  Array a({4, 4});
  auto link = [&](int i, int j) { a.at(i, j) = a.at(j, i) = 1.0; };
  link(0, 1);
  link(1, 2);
  link(2, 3);
  link(3, 0);
  link(0, 2);
  Array f = build_features(a, nullptr, 0, FeatureMode::kBio);
  CHECK(f.cols() == 2);
  CHECK(f.at(0, 0) == 3.0);
  CHECK(f.at(0, 1) == doctest::Approx(2.0 / 3.0));
  CHECK(f.at(1, 1) == doctest::Approx(1.0));  // neighbors {0,2} are linked
}

TEST_CASE("TU round trip preserves structure and labels") {
  Dataset ds = generate_synthetic(SyntheticFamily::kCyclesVsChords, 12, 5);
  fs::path dir = fresh_dir("roundtrip");
  write_tu_dataset(dir, "SYN", ds);
  Dataset back = parse_tu_dataset(dir, "SYN", FeatureMode::kSocial);
  REQUIRE(back.graphs.size() == ds.graphs.size());
  for (size_t g = 0; g < ds.graphs.size(); ++g) {
    CHECK(back.graphs[g].label == ds.graphs[g].label);
    REQUIRE(back.graphs[g].n() == ds.graphs[g].n());
    CHECK(back.graphs[g].adjacency.data == ds.graphs[g].adjacency.data);
  }
}

TEST_CASE("cycles_vs_chords generates balanced, in-range, well-formed graphs") {
  Dataset ds = generate_synthetic(SyntheticFamily::kCyclesVsChords, 40, 123);
  REQUIRE(ds.graphs.size() == 40);
  CHECK(ds.num_classes == 2);
  CHECK(ds.input_dim == 1);
  int ones = 0;
  for (const Graph& g : ds.graphs) {
    ones += g.label;
    REQUIRE(g.n() >= 8);
    REQUIRE(g.n() <= 20);
    long edges = 0;
    for (int i = 0; i < g.n(); ++i) {
      CHECK(g.adjacency.at(i, i) == 0.0);
      for (int j = 0; j < g.n(); ++j) {
        CHECK(g.adjacency.at(i, j) == g.adjacency.at(j, i));
        edges += g.adjacency.at(i, j) != 0.0;
      }
    }
    edges /= 2;
    long expect = g.label == 0 ? g.n() : g.n() + (g.n() + 3) / 4;
    CHECK(edges == expect);
  }
  CHECK(ones == 20);
  // Determinism: same seed, same graphs.
  Dataset ds2 = generate_synthetic(SyntheticFamily::kCyclesVsChords, 40, 123);
  CHECK(ds2.graphs[7].adjacency.data == ds.graphs[7].adjacency.data);
  Dataset ds3 = generate_synthetic(SyntheticFamily::kCyclesVsChords, 40, 124);
  bool any_diff = false;
  for (size_t g = 0; g < ds.graphs.size() && !any_diff; ++g)
    any_diff = ds3.graphs[g].adjacency.data != ds.graphs[g].adjacency.data ||
               ds3.graphs[g].n() != ds.graphs[g].n();
  CHECK(any_diff);
}

TEST_CASE("k_communities generates two balanced classes in the size range") {
  Dataset ds = generate_synthetic(SyntheticFamily::kKCommunities, 30, 9);
  int zeros = 0;
  for (const Graph& g : ds.graphs) {
    zeros += g.label == 0;
    REQUIRE(g.n() >= 12);
    REQUIRE(g.n() <= 18);
  }
  CHECK(zeros == 15);
}

TEST_CASE("make_folds partitions indices with stratified classes") {
  std::vector<int> labels;
  for (int i = 0; i < 50; ++i) labels.push_back(i < 30 ? 0 : 1);
  auto folds = make_folds(labels, 5, 77);
  REQUIRE(folds.size() == 5);
  std::set<int> seen;
  for (auto& [train, test] : folds) {
    CHECK(train.size() + test.size() == labels.size());
    for (int idx : test) {
      CHECK(!seen.count(idx));
      seen.insert(idx);
    }
    // No overlap between train and test.
    std::set<int> tr(train.begin(), train.end());
    for (int idx : test) CHECK(!tr.count(idx));
    // Stratification: each test fold holds 6 of class 0, 4 of class 1.
    int c0 = 0;
    for (int idx : test) c0 += labels[idx] == 0;
    CHECK(c0 == 6);
    CHECK(test.size() == 10);
  }
  CHECK(seen.size() == 50);
  // Deterministic under the same seed.
  auto folds2 = make_folds(labels, 5, 77);
  CHECK(folds2[2].second == folds[2].second);
}

TEST_CASE("batchify pads with zeros and sets the node mask") {
  Dataset ds = generate_synthetic(SyntheticFamily::kCyclesVsChords, 7, 3);
  std::vector<int> idx{0, 1, 2, 3, 4, 5, 6};
  auto batches = batchify(ds, idx, 3, 25);
  REQUIRE(batches.size() == 3);
  CHECK(batches[0].size() == 3);
  CHECK(batches[2].size() == 1);
  const Batch& b = batches[0];
  CHECK(b.max_nodes() == 25);
  for (int bi = 0; bi < b.size(); ++bi) {
    const Graph& g = ds.graphs[idx[bi]];
    Array mask = b.graph_mask(bi);
    for (int i = 0; i < 25; ++i) CHECK(mask.data[i] == (i < g.n() ? 1.0 : 0.0));
    Array feat = b.graph_features(bi);
    Array adj = b.graph_adjacency(bi);
    for (int i = 0; i < g.n(); ++i) CHECK(feat.at(i, 0) == g.features.at(i, 0));
    for (int i = g.n(); i < 25; ++i) {
      CHECK(feat.at(i, 0) == 0.0);
      for (int j = 0; j < 25; ++j) CHECK(adj.at(i, j) == 0.0);
    }
    CHECK(b.labels[bi] == g.label);
  }
  CHECK_THROWS_AS(batchify(ds, idx, 3, 10), std::invalid_argument);  // graphs up to 20 nodes
}
