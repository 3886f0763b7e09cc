#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "muchgcn/graphio.hpp"
#include "muchgcn/model.hpp"
#include "muchgcn/train.hpp"

namespace muchgcn {

/// Where training data comes from: a generated benchmark family or a TU-style
/// directory on disk.
struct DatasetSpec {
  std::string source = "synthetic";  // "synthetic" | "tu"
  std::string path;                  // TU: directory containing the files
  std::string name;                  // TU: dataset (file prefix)
  std::string features = "bio";      // TU: feature recipe, "bio" | "social"
  std::string family = "cycles_vs_chords";
  int graphs = 200;       // synthetic: number of graphs
  std::uint64_t seed = 1;  // synthetic: generator seed
};

struct OutputSpec {
  std::string metrics;     // per-epoch JSONL, empty = don't write
  std::string summary;     // final summary JSON, empty = don't write
  std::string checkpoint;  // fold-0 model parameters, empty = don't write
};

/// Everything a training run needs, with the merged JSON kept alongside so
/// reports can echo the effective configuration verbatim.
struct RunConfig {
  DatasetSpec dataset;
  ModelConfig model;
  TrainOptions train;
  OutputSpec output;
  nlohmann::json effective;
};

/// The canonical defaults, as JSON. Every recognized key appears here; files
/// and overrides may only touch keys present in this document.
nlohmann::json default_config_json();

/// Recursively merge `patch` into `doc`. Unknown keys and type mismatches
/// (other than integer-for-float) raise std::invalid_argument.
void merge_config(nlohmann::json& doc, const nlohmann::json& patch, const std::string& prefix = "");

/// Apply "dotted.path=value" assignments. Values parse as JSON when possible
/// ("0.5", "true", "[0.25,0.1]") and fall back to plain strings.
void apply_overrides(nlohmann::json& doc, const std::vector<std::string>& assignments);

/// Convert a fully merged document into typed configuration. Validates the
/// model section; dataset-derived fields (max_nodes, input_dim, num_classes)
/// stay zero until data is loaded.
RunConfig run_config_from_json(const nlohmann::json& doc);

/// defaults <- optional file <- overrides, then typed conversion.
/// An empty path skips the file step.
RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides);

/// Materialize the configured dataset (generator or TU parser).
Dataset load_dataset(const DatasetSpec& spec);

}  // namespace muchgcn
