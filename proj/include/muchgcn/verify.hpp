#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "muchgcn/graphio.hpp"
#include "muchgcn/model.hpp"

namespace muchgcn {

/// Relative error with an absolute floor: |a - b| / max(|a|, |b|, floor).
double rel_err(double a, double b, double floor = 1e-8);

/// Largest rel_err over paired values; *worst (if given) receives its index.
double max_rel_err(std::span<const double> ad, std::span<const double> fd,
                   size_t* worst = nullptr, double floor = 1e-8);

// --- finite-difference gradient check -----------------------------------

struct GradCheckResult {
  std::vector<std::string> labels;  // "param_name[flat_index]" per coordinate
  std::vector<double> ad;           // reverse-mode gradients
  std::vector<double> fd;           // central finite differences
  double max_err = 0.0;
  size_t worst = 0;
  int coords = 0;
};

/// Pinned tiny configuration per variant (small enough for finite
/// differences, large enough to exercise every code path of the variant).
ModelConfig gradcheck_config(Variant v);

/// Pinned configuration per variant for the engine-vs-reference comparison;
/// slightly larger than the gradcheck shape since no differencing is done.
ModelConfig oracle_config(Variant v);

/// Deterministic two-graph batch matching cfg's feature width; every random
/// choice derives from `seed`.
Batch gradcheck_batch(const ModelConfig& cfg, uint64_t seed);

/// Compare reverse-mode gradients of the training loss against central
/// differences on `coords` sampled trainable coordinates (all, if fewer).
GradCheckResult gradcheck_model(const ModelConfig& cfg, uint64_t seed, int coords, double h);

// --- independent forward reference ---------------------------------------

/// Straight-line reimplementation of the forward pass with plain loops,
/// reading parameters from the store by name. Never mutates the model (in
/// train mode it computes batch statistics without touching the running
/// ones, which matches the engine's train-mode outputs).
Array reference_forward(const Model& model, const Batch& batch, Mode mode);

/// Worst |engine - reference| logit entry across an eval pass, a train pass,
/// and a second eval pass after the train pass has moved the running
/// statistics, on a three-graph batch of distinct sizes. cfg needs
/// max_nodes >= 4; zero num_classes defaults to 2.
double oracle_gap(const ModelConfig& cfg, uint64_t seed);

// --- multiset-distinctness spot check -------------------------------------

struct Prop1Result {
  int trials = 0;
  int collisions = 0;      // first-draw filter failed to separate the pair
  int retry_failures = 0;  // a redrawn filter still failed
  bool degenerate_collides = false;  // theta = 0 must NOT separate anything
  bool pass = false;
};

/// Empirical check that a randomly parameterized channel filter separates
/// distinct multisets: per trial, two multisets differing in one entry must
/// map to different outputs (one redraw allowed); the zero-theta filter must
/// collapse every pair.
Prop1Result proposition1_check(int trials, uint64_t seed);

// --- runtime scaling -------------------------------------------------------

struct BenchAxis {
  double base_seconds = 0.0;
  double scaled_seconds = 0.0;
  double ratio = 0.0;
};

/// Fastest wall time of a full training step (forward, loss, backward) over
/// `reps` repetitions for both configurations on one shared random batch.
BenchAxis bench_pair(const ModelConfig& base, const ModelConfig& scaled, int nodes,
                     int batch_size, int reps, uint64_t seed);

struct BenchPlan {
  ModelConfig base;
  ModelConfig scaled;
};

/// Canonical config pair for a named scaling axis, sized so the base step
/// takes a few milliseconds at ~150 nodes. "steps" doubles the message
/// passing depth; "channels" doubles the per-level channel expansion.
BenchPlan bench_plan(const std::string& axis);

}  // namespace muchgcn
