#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "muchgcn/graphio.hpp"
#include "muchgcn/model.hpp"

namespace muchgcn {

struct TrainOptions {
  double lr = 0.001;
  int epochs = 30;
  int batch_size = 20;
  /// Weight of the assignment-entropy regularizer (pushes soft assignments
  /// toward one cluster per node). Ignored by variants without pooling.
  double entropy_weight = 0.1;
  int folds = 10;
  uint64_t seed = 0;
  double clip_norm = 2.0;
  /// Worker threads across folds; 1 trains folds sequentially. Results are
  /// identical either way.
  int parallel_folds = 1;
  /// When set, one JSON object per line is appended here per (fold, epoch).
  std::string metrics_path;
};

/// Cross-entropy over the batch plus entropy_weight times the summed mean row
/// entropy of every assignment matrix (rows pooled across the batch per
/// generated graph).
Tensor training_loss(Tape& t, const ForwardResult& fr, const std::vector<int>& labels,
                     double entropy_weight);

/// Fraction of rows whose argmax (ties to the lowest class) equals the label.
double accuracy(const Array& logits, const std::vector<int>& labels);

/// Scale all trainable gradients so their global l2 norm is at most max_norm;
/// returns the norm before clipping.
double clip_gradients(ParamStore& params, double max_norm);

/// Adam with bias correction; state is keyed by position in the store, which
/// therefore must not grow between steps.
class Adam {
 public:
  explicit Adam(double lr = 0.001, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(ParamStore& params);

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Array> m_, v_;
};

struct EpochMetrics {
  int fold = 0;
  int epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
  double seconds = 0.0;
};

struct FoldResult {
  int fold = 0;
  double final_train_loss = 0.0;
  double final_test_acc = 0.0;
  double best_test_acc = 0.0;
  double seconds = 0.0;
};

struct CvResult {
  std::vector<FoldResult> folds;  // in fold order
  double mean_acc = 0.0;          // of final_test_acc
  double std_acc = 0.0;           // population standard deviation
  double mean_best_acc = 0.0;
  double total_seconds = 0.0;
};

/// Train one model on explicit train/test index sets. Every random choice
/// derives from `seed`; on_epoch (if set) fires after each epoch.
FoldResult train_fold(const Dataset& ds, const ModelConfig& cfg, const TrainOptions& opt,
                      int fold, std::span<const int> train_idx, std::span<const int> test_idx,
                      uint64_t seed, const std::function<void(const EpochMetrics&)>& on_epoch,
                      Model* out_model = nullptr);

/// Stratified k-fold cross-validation. Zero-valued dataset-shaped config
/// fields (max_nodes, input_dim, num_classes) are filled from the dataset.
/// Results depend only on (dataset, config, options), not on thread count.
/// When fold0_model (a model built with the same config) is given, fold 0's
/// trained parameters are copied into it.
CvResult run_cv(const Dataset& ds, ModelConfig cfg, const TrainOptions& opt,
                Model* fold0_model = nullptr);

}  // namespace muchgcn
