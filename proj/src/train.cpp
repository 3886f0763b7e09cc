#include "muchgcn/train.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "muchgcn/rng.hpp"

namespace muchgcn {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

double evaluate(Model& model, const Dataset& ds, std::span<const int> idx, int batch_size) {
  double acc_sum = 0.0;
  int seen = 0;
  for (const Batch& batch : batchify(ds, idx, batch_size, ds.max_nodes)) {
    Tape t;
    ForwardResult fr = model.forward(t, batch, Mode::kEval);
    acc_sum += accuracy(t.value(fr.logits), batch.labels) * batch.size();
    seen += batch.size();
  }
  return acc_sum / seen;
}

}  // namespace

Tensor training_loss(Tape& t, const ForwardResult& fr, const std::vector<int>& labels,
                     double entropy_weight) {
  Tensor loss = t.mean_softmax_cross_entropy(fr.logits, labels);
  if (entropy_weight == 0.0 || fr.assignments.empty()) return loss;

  Tensor entropy;
  bool first = true;
  for (const auto& level : fr.assignments)
    for (const auto& per_graph : level) {
      Tensor pooled = t.concat_rows(per_graph);
      Tensor e = t.row_entropy_mean(pooled);
      entropy = first ? e : t.add(entropy, e);
      first = false;
    }
  return t.add(loss, t.scalar_mul(entropy, entropy_weight));
}

double accuracy(const Array& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2 || logits.rows() != static_cast<int>(labels.size()))
    throw std::invalid_argument("accuracy: logits/label shape mismatch");
  int correct = 0;
  for (int i = 0; i < logits.rows(); ++i) {
    int best = 0;
    for (int c = 1; c < logits.cols(); ++c)
      if (logits.at(i, c) > logits.at(i, best)) best = c;
    correct += best == labels[i];
  }
  return static_cast<double>(correct) / logits.rows();
}

double clip_gradients(ParamStore& params, double max_norm) {
  if (max_norm <= 0.0) throw std::invalid_argument("clip_gradients: max_norm must be positive");
  double sq = 0.0;
  for (const Parameter& p : params) {
    if (!p.trainable) continue;
    for (double g : p.grad.data) sq += g * g;
  }
  double norm = std::sqrt(sq);
  if (norm > max_norm) {
    double scale = max_norm / norm;
    for (Parameter& p : params) {
      if (!p.trainable) continue;
      for (double& g : p.grad.data) g *= scale;
    }
  }
  return norm;
}

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(ParamStore& params) {
  if (m_.empty()) {
    for (const Parameter& p : params) {
      m_.emplace_back(p.value.shape);
      v_.emplace_back(p.value.shape);
    }
  }
  if (m_.size() != params.size())
    throw std::logic_error("Adam: parameter store changed size between steps");

  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  size_t i = 0;
  for (Parameter& p : params) {
    Array& m = m_[i];
    Array& v = v_[i];
    ++i;
    if (!p.trainable) continue;
    for (size_t j = 0; j < p.value.data.size(); ++j) {
      double g = p.grad.data[j];
      m.data[j] = beta1_ * m.data[j] + (1.0 - beta1_) * g;
      v.data[j] = beta2_ * v.data[j] + (1.0 - beta2_) * g * g;
      p.value.data[j] -= lr_ * (m.data[j] / bc1) / (std::sqrt(v.data[j] / bc2) + eps_);
    }
  }
}

FoldResult train_fold(const Dataset& ds, const ModelConfig& cfg, const TrainOptions& opt,
                      int fold, std::span<const int> train_idx, std::span<const int> test_idx,
                      uint64_t seed, const std::function<void(const EpochMetrics&)>& on_epoch,
                      Model* out_model) {
  if (opt.epochs < 1 || opt.batch_size < 1)
    throw std::invalid_argument("train_fold: epochs and batch_size must be >= 1");
  if (train_idx.empty() || test_idx.empty())
    throw std::invalid_argument("train_fold: empty train or test split");

  auto fold_start = Clock::now();
  Rng fold_rng(seed);
  Model model(cfg, fold_rng.stream("model").next_u64());
  Adam adam(opt.lr);

  FoldResult result;
  result.fold = fold;
  std::vector<int> order(train_idx.begin(), train_idx.end());
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    auto epoch_start = Clock::now();
    Rng epoch_rng = fold_rng.stream("epoch", static_cast<uint64_t>(epoch));
    epoch_rng.shuffle(order);

    double loss_sum = 0.0, acc_sum = 0.0;
    int seen = 0;
    for (const Batch& batch : batchify(ds, order, opt.batch_size, ds.max_nodes)) {
      Tape t;
      ForwardResult fr = model.forward(t, batch, Mode::kTrain);
      Tensor loss = training_loss(t, fr, batch.labels, opt.entropy_weight);
      model.params().zero_grads();
      t.backward(loss);
      clip_gradients(model.params(), opt.clip_norm);
      adam.step(model.params());
      loss_sum += t.value(loss).data[0] * batch.size();
      acc_sum += accuracy(t.value(fr.logits), batch.labels) * batch.size();
      seen += batch.size();
    }

    EpochMetrics em;
    em.fold = fold;
    em.epoch = epoch;
    em.train_loss = loss_sum / seen;
    em.train_acc = acc_sum / seen;
    em.test_acc = evaluate(model, ds, test_idx, opt.batch_size);
    em.seconds = seconds_since(epoch_start);
    if (on_epoch) on_epoch(em);

    result.final_train_loss = em.train_loss;
    result.final_test_acc = em.test_acc;
    result.best_test_acc = std::max(result.best_test_acc, em.test_acc);
  }
  result.seconds = seconds_since(fold_start);

  if (out_model) {
    auto dst = out_model->params().begin();
    for (const Parameter& src : model.params()) {
      if (dst == out_model->params().end() || dst->name != src.name)
        throw std::invalid_argument("train_fold: out_model configuration differs");
      dst->value = src.value;
      ++dst;
    }
  }
  return result;
}

CvResult run_cv(const Dataset& ds, ModelConfig cfg, const TrainOptions& opt, Model* fold0_model) {
  if (cfg.max_nodes == 0) cfg.max_nodes = ds.max_nodes;
  if (cfg.input_dim == 0) cfg.input_dim = ds.input_dim;
  if (cfg.num_classes == 0) cfg.num_classes = ds.num_classes;
  cfg.validate();
  if (opt.folds < 2) throw std::invalid_argument("run_cv: folds must be >= 2");
  if (static_cast<int>(ds.graphs.size()) < opt.folds)
    throw std::invalid_argument("run_cv: fewer graphs than folds");

  auto start = Clock::now();
  std::vector<int> labels;
  labels.reserve(ds.graphs.size());
  for (const Graph& g : ds.graphs) labels.push_back(g.label);
  auto splits = make_folds(labels, opt.folds, opt.seed);

  std::ofstream metrics;
  if (!opt.metrics_path.empty()) {
    std::filesystem::path p(opt.metrics_path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    metrics.open(p);
    if (!metrics)
      throw std::runtime_error("run_cv: cannot open metrics path " + opt.metrics_path);
  }
  std::mutex metrics_mu;
  auto on_epoch = [&](const EpochMetrics& em) {
    if (!metrics.is_open()) return;
    nlohmann::json line{{"fold", em.fold},           {"epoch", em.epoch},
                        {"train_loss", em.train_loss}, {"train_acc", em.train_acc},
                        {"test_acc", em.test_acc},   {"seconds", em.seconds}};
    std::lock_guard<std::mutex> lock(metrics_mu);
    metrics << line.dump() << "\n";
  };

  Rng root(opt.seed);
  std::vector<uint64_t> fold_seeds;
  for (size_t f = 0; f < splits.size(); ++f)
    fold_seeds.push_back(root.stream("fold", f).next_u64());

  CvResult cv;
  cv.folds.resize(splits.size());
  std::atomic<size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mu;
  auto work = [&]() {
    while (true) {
      size_t f = next.fetch_add(1);
      if (f >= splits.size()) return;
      try {
        cv.folds[f] = train_fold(ds, cfg, opt, static_cast<int>(f), splits[f].first,
                                 splits[f].second, fold_seeds[f], on_epoch,
                                 f == 0 ? fold0_model : nullptr);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };

  int workers = std::min<int>(std::max(opt.parallel_folds, 1), static_cast<int>(splits.size()));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (std::thread& th : pool) th.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  double mean = 0.0, mean_best = 0.0;
  for (const FoldResult& fr : cv.folds) {
    mean += fr.final_test_acc;
    mean_best += fr.best_test_acc;
  }
  mean /= cv.folds.size();
  mean_best /= cv.folds.size();
  double var = 0.0;
  for (const FoldResult& fr : cv.folds)
    var += (fr.final_test_acc - mean) * (fr.final_test_acc - mean);
  cv.mean_acc = mean;
  cv.std_acc = std::sqrt(var / cv.folds.size());
  cv.mean_best_acc = mean_best;
  cv.total_seconds = seconds_since(start);
  return cv;
}

}  // namespace muchgcn
