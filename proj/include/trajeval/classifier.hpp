#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "trajeval/core.hpp"

namespace trajeval {

// Per-channel standardization statistics. Channels with zero variance get
// std clamped to 1 so constant channels map to zero.
struct NormStats {
  Vec mean;
  Vec std;
};

NormStats compute_norm_stats(const std::vector<LabeledWindow>& windows);

// (x - mean) / std per channel. Throws on dimension mismatch.
Mat standardize(const Mat& window, const NormStats& stats);
void standardize_in_place(Mat& window, const NormStats& stats);

// window + i.i.d. Gaussian noise with standard deviation sigma;
// deterministic under seed. sigma = 0 returns the input unchanged.
Mat augment(const Mat& window, double sigma, std::uint64_t seed);

// Gate order used throughout parameter blocks and checkpoints.
enum Gate { kGateInput = 0, kGateForget = 1, kGateCell = 2, kGateOutput = 3 };
inline constexpr int kNumGates = 4;
std::string_view gate_name(int gate);

struct LstmLayerParams {
  std::array<Mat, kNumGates> wx;  // input-to-hidden, h x h
  std::array<Mat, kNumGates> wh;  // hidden-to-hidden, h x h
  std::array<Vec, kNumGates> b;   // h
};

// All trainable parameters: projection, stacked LSTM layers, readout.
// The same structure holds gradients and optimizer moments.
struct ModelParams {
  Mat proj_w;  // h x D
  Vec proj_b;  // h
  std::vector<LstmLayerParams> lstm;
  Mat out_w;  // K x h
  Vec out_b;  // K

  void zero();
  std::size_t count() const;
};

struct ParamBlock {
  std::string name;
  std::vector<int> shape;
  Vec* data;
};

struct ConstParamBlock {
  std::string name;
  std::vector<int> shape;
  const Vec* data;
};

// Named flat views over every parameter block, in a stable order.
std::vector<ParamBlock> param_blocks(ModelParams& p);
std::vector<ConstParamBlock> param_blocks(const ModelParams& p);

ModelParams make_params(int input_dim, int hidden, int layers, int classes);

struct TrainConfig {
  int window_len = 32;  // L
  int hidden = 64;      // h
  int num_layers = 1;
  double learning_rate = 1e-3;
  double noise_sigma = 1e-2;  // training-time augmentation
  int max_epochs = 30;
  int patience = 5;
  int batch_size = 64;
  double weight_decay = 1e-2;
  double grad_clip = 5.0;  // global norm; <= 0 disables
  std::array<double, kNumBehaviors> class_weights{1, 1, 1, 1, 1, 1, 1};
  std::uint64_t seed = 0;
};

TrainConfig train_config_from_json(const std::string& json_text);
std::string train_config_to_json(const TrainConfig& cfg);

struct EvaluatorModel {
  int input_dim = 24;
  int hidden = 64;
  int num_layers = 1;
  int classes = kNumBehaviors;
  int window_len = 32;
  ModelParams params;
  NormStats norm;
  TrainConfig config;  // creation config snapshot
};

// Glorot-uniform initialization, biases zero except the forget gate at 1.
EvaluatorModel make_model(int input_dim, int hidden, int layers, int classes,
                          std::uint64_t init_seed);

struct ForwardResult {
  Vec logits;
  Vec probs;
};

// Projection per frame, stacked LSTM over the L steps from zero state,
// readout of the last hidden state, softmax. The window must already be
// standardized. Throws NumericError on non-finite activations.
ForwardResult forward(const EvaluatorModel& model, const Mat& window);

Vec softmax(const Vec& logits);

// -log probs[label], probabilities floored at 1e-12 so the loss stays
// finite.
double cross_entropy(const Vec& probs, int label);

struct TrainingSample {
  const Mat* window;  // standardized (and augmented, for training batches)
  int label;
};

// Exact mean-batch gradients for every parameter via backpropagation through
// time. Returns the mean (class-weighted) loss. grads is resized/zeroed
// inside. Throws NumericError naming the parameter block if a gradient is
// non-finite.
double backward(const EvaluatorModel& model, std::span<const TrainingSample> batch,
                ModelParams& grads,
                const std::array<double, kNumBehaviors>& class_weights = {1, 1, 1, 1, 1, 1, 1});

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamWState {
  ModelParams m;
  ModelParams v;
  long step = 0;
};

// Flat-span update rule: decoupled weight decay (applied directly to the
// parameters, scaled by lr), bias-corrected moments from the gradients only.
void adamw_update(std::span<double> params, std::span<const double> grads,
                  std::span<double> m, std::span<double> v, long step, double lr,
                  double weight_decay, const AdamWConfig& cfg = {});

void adamw_step(ModelParams& params, const ModelParams& grads, AdamWState& state, double lr,
                double weight_decay, const AdamWConfig& cfg = {});

// Stop after `patience` consecutive epochs without a new validation-loss
// minimum.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}

  // Call once per epoch; returns true when training should stop.
  bool update(double val_loss);

  bool improved_last_epoch() const { return stall_ == 0; }
  int best_epoch() const { return best_epoch_; }  // 1-based
  double best_loss() const { return best_loss_; }

 private:
  int patience_;
  int epoch_ = 0;
  int stall_ = 0;
  int best_epoch_ = 0;
  double best_loss_ = std::numeric_limits<double>::infinity();
};

struct EpochStats {
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  int best_epoch = 0;  // 1-based, attains the minimum validation loss
  EvaluatorModel best_model;
  bool stopped_early = false;
};

// Full training loop: normalization stats from the training windows, seeded
// shuffling, augmentation on training batches only, AdamW with gradient
// clipping, early stopping, checkpoint at the best validation loss.
// Deterministic under cfg.seed. Throws NumericError on divergence, naming
// the epoch.
TrainResult train(const std::vector<LabeledWindow>& train_windows,
                  const std::vector<LabeledWindow>& val_windows, const TrainConfig& cfg);

// CSV: epoch,train_loss,val_loss,val_acc
std::string history_csv(const TrainResult& result);

struct ClassificationReport {
  std::vector<std::vector<long>> confusion;  // rows true, columns predicted
  long total = 0;
  double accuracy = 0.0;
  Vec precision, recall, f1;
  double macro_f1 = 0.0;  // unweighted mean over all classes; absent ones count 0
  std::vector<int> absent_classes;  // no true and no predicted instances
};

ClassificationReport report_from_confusion(const std::vector<std::vector<long>>& confusion);

int predict(const EvaluatorModel& model, const Mat& raw_window);

// Windows must be raw (unstandardized); standardization uses model.norm.
ClassificationReport evaluate(const EvaluatorModel& model,
                              const std::vector<LabeledWindow>& windows, int threads = 1);

struct GridSpec {
  std::vector<int> hidden{16, 64, 128};
  std::vector<int> num_layers{1, 3, 5};
  std::vector<double> learning_rate{1e-2, 1e-3, 1e-4};
  std::vector<double> noise_sigma{0.0, 1e-1, 1e-2};
};

struct GridCell {
  TrainConfig config;
  bool failed = false;
  std::string error;
  std::vector<double> seed_accuracy;
  std::vector<double> seed_f1;
  double acc_mean = 0.0, acc_std = 0.0;
  double f1_mean = 0.0, f1_std = 0.0;
};

struct GridResult {
  std::vector<GridCell> cells;
  int best_index = -1;  // highest mean val accuracy; ties to smaller h,
                        // fewer layers, lower learning rate
};

// Trains every (config, seed) combination; cells run in parallel and each
// cell is fully deterministic given its (config, seed), so the result is
// independent of the thread count. A diverging cell is marked failed and
// excluded from selection without aborting the sweep.
GridResult grid_search(const std::vector<LabeledWindow>& train_windows,
                       const std::vector<LabeledWindow>& val_windows, const GridSpec& grid,
                       const TrainConfig& base, std::span<const std::uint64_t> seeds,
                       int threads = 1);

// CSV: L,h,layers,lr,sigma,acc_mean,acc_std,f1_mean,f1_std,status
std::string grid_csv(const GridResult& result);

// Checkpoint: JSON with dimensions, window length, normalization stats,
// creation config and every parameter block as a named flat array with an
// explicit shape.
void save_checkpoint(const EvaluatorModel& model, const std::string& path);
EvaluatorModel load_checkpoint(const std::string& path);
std::string checkpoint_json(const EvaluatorModel& model);
EvaluatorModel checkpoint_from_json(const std::string& text);

}  // namespace trajeval
