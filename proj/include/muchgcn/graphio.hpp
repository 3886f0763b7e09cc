#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "muchgcn/array.hpp"

namespace muchgcn {

/// One graph: symmetric 0/1 adjacency with zero diagonal plus node features.
struct Graph {
  Array adjacency;  // {n,n}
  Array features;   // {n,input_dim}
  int label = 0;
  int n() const { return adjacency.rows(); }
};

struct Dataset {
  std::string name;
  std::vector<Graph> graphs;
  int num_classes = 0;
  int input_dim = 0;
  int max_nodes = 0;  // largest graph actually present
};

/// Raw TU-format content before features are attached. Graph labels are
/// remapped to 0..C-1 (sorted by original value); node labels likewise.
struct TuData {
  std::vector<Array> adjacency;
  std::vector<int> graph_labels;
  std::vector<std::vector<int>> node_labels;  // empty when the file is absent
  int num_classes = 0;
  int num_node_labels = 0;
};

/// Feature recipe: bio-style graphs get [one-hot node label, degree,
/// clustering coefficient]; social-style graphs get [degree].
enum class FeatureMode { kBio, kSocial };

TuData read_tu_files(const std::filesystem::path& dir, const std::string& name);

Array build_features(const Array& adjacency, const std::vector<int>* node_labels,
                     int num_node_labels, FeatureMode mode);

Dataset build_dataset(const TuData& raw, FeatureMode mode, std::string name);

Dataset parse_tu_dataset(const std::filesystem::path& dir, const std::string& name,
                         FeatureMode mode);

/// Write a dataset back out in TU format (adjacency, indicator, graph labels).
void write_tu_dataset(const std::filesystem::path& dir, const std::string& name,
                      const Dataset& ds);

enum class SyntheticFamily { kCyclesVsChords, kKCommunities };
SyntheticFamily synthetic_family_from_string(const std::string& s);

/// Deterministic synthetic benchmark graphs with degree features attached.
/// cycles_vs_chords: plain cycle (label 0) vs cycle plus ceil(n/4) random
/// chords (label 1), n in [8,20]. k_communities: k in {2,3} blocks of a
/// 12..18-node graph wired with p_in=0.8 / p_out=0.05; label k-2.
Dataset generate_synthetic(SyntheticFamily family, int count, uint64_t seed);

/// Stratified k-fold split; returns (train, test) index lists per fold, each
/// sorted ascending. Every index lands in exactly one test fold.
std::vector<std::pair<std::vector<int>, std::vector<int>>> make_folds(
    std::span<const int> labels, int k, uint64_t seed);

/// Fixed-size padded minibatch. Padding rows/columns are all zero and the
/// node mask marks real nodes with 1.
struct Batch {
  Array features;   // {B, max_nodes, input_dim}
  Array adjacency;  // {B, max_nodes, max_nodes}
  Array node_mask;  // {B, max_nodes}
  std::vector<int> labels;

  int size() const { return features.shape.at(0); }
  int max_nodes() const { return features.shape.at(1); }
  int input_dim() const { return features.shape.at(2); }
  Array graph_features(int b) const;
  Array graph_adjacency(int b) const;
  Array graph_mask(int b) const;
};

/// Slice `indices` (in order) into batches of at most batch_size graphs,
/// padding every graph to max_nodes. Throws if a graph exceeds max_nodes.
std::vector<Batch> batchify(const Dataset& ds, std::span<const int> indices, int batch_size,
                            int max_nodes);

}  // namespace muchgcn
