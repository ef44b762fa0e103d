#include "trajeval/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "trajeval/parallel.hpp"
#include "trajeval/rng.hpp"

namespace trajeval {

using nlohmann::json;

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_window_dims(const Mat& w, int dim, const char* where) {
  if (w.cols != dim) {
    throw std::invalid_argument(std::string(where) + ": window has " + std::to_string(w.cols) +
                                " channels, expected " + std::to_string(dim));
  }
}

}  // namespace

NormStats compute_norm_stats(const std::vector<LabeledWindow>& windows) {
  if (windows.empty()) throw std::invalid_argument("compute_norm_stats: no windows");
  const int dim = windows.front().data.cols;
  NormStats stats;
  stats.mean.assign(dim, 0.0);
  stats.std.assign(dim, 0.0);
  long rows = 0;
  for (const LabeledWindow& w : windows) {
    check_window_dims(w.data, dim, "compute_norm_stats");
    for (int r = 0; r < w.data.rows; ++r) {
      const double* row = w.data.row(r);
      for (int c = 0; c < dim; ++c) stats.mean[c] += row[c];
    }
    rows += w.data.rows;
  }
  for (int c = 0; c < dim; ++c) stats.mean[c] /= static_cast<double>(rows);
  for (const LabeledWindow& w : windows) {
    for (int r = 0; r < w.data.rows; ++r) {
      const double* row = w.data.row(r);
      for (int c = 0; c < dim; ++c) {
        const double d = row[c] - stats.mean[c];
        stats.std[c] += d * d;
      }
    }
  }
  for (int c = 0; c < dim; ++c) {
    stats.std[c] = std::sqrt(stats.std[c] / static_cast<double>(rows));
    if (stats.std[c] == 0.0) stats.std[c] = 1.0;
  }
  return stats;
}

void standardize_in_place(Mat& window, const NormStats& stats) {
  if (window.cols != static_cast<int>(stats.mean.size())) {
    throw std::invalid_argument("standardize: window has " + std::to_string(window.cols) +
                                " channels, stats have " + std::to_string(stats.mean.size()));
  }
  for (int r = 0; r < window.rows; ++r) {
    double* row = window.row(r);
    for (int c = 0; c < window.cols; ++c) row[c] = (row[c] - stats.mean[c]) / stats.std[c];
  }
}

Mat standardize(const Mat& window, const NormStats& stats) {
  Mat out = window;
  standardize_in_place(out, stats);
  return out;
}

Mat augment(const Mat& window, double sigma, std::uint64_t seed) {
  if (sigma < 0.0) throw std::invalid_argument("augment: sigma must be >= 0");
  Mat out = window;
  if (sigma == 0.0) return out;
  Rng rng(mix_seed(seed, "augment"));
  for (double& v : out.a) v += rng.normal(0.0, sigma);
  return out;
}

std::string_view gate_name(int gate) {
  switch (gate) {
    case kGateInput: return "input";
    case kGateForget: return "forget";
    case kGateCell: return "cell";
    case kGateOutput: return "output";
  }
  return "?";
}

void ModelParams::zero() {
  proj_w.fill(0.0);
  std::fill(proj_b.begin(), proj_b.end(), 0.0);
  for (LstmLayerParams& l : lstm) {
    for (int g = 0; g < kNumGates; ++g) {
      l.wx[g].fill(0.0);
      l.wh[g].fill(0.0);
      std::fill(l.b[g].begin(), l.b[g].end(), 0.0);
    }
  }
  out_w.fill(0.0);
  std::fill(out_b.begin(), out_b.end(), 0.0);
}

std::size_t ModelParams::count() const {
  std::size_t n = proj_w.size() + proj_b.size() + out_w.size() + out_b.size();
  for (const LstmLayerParams& l : lstm) {
    for (int g = 0; g < kNumGates; ++g) n += l.wx[g].size() + l.wh[g].size() + l.b[g].size();
  }
  return n;
}

namespace {

template <typename Params, typename Block>
std::vector<Block> blocks_impl(Params& p) {
  std::vector<Block> out;
  out.push_back({"proj.w", {p.proj_w.rows, p.proj_w.cols}, &p.proj_w.a});
  out.push_back({"proj.b", {static_cast<int>(p.proj_b.size())}, &p.proj_b});
  for (std::size_t l = 0; l < p.lstm.size(); ++l) {
    auto& layer = p.lstm[l];
    const std::string prefix = "lstm" + std::to_string(l) + ".";
    for (int g = 0; g < kNumGates; ++g) {
      const std::string gate(gate_name(g));
      out.push_back({prefix + gate + ".wx", {layer.wx[g].rows, layer.wx[g].cols}, &layer.wx[g].a});
      out.push_back({prefix + gate + ".wh", {layer.wh[g].rows, layer.wh[g].cols}, &layer.wh[g].a});
      out.push_back({prefix + gate + ".b", {static_cast<int>(layer.b[g].size())}, &layer.b[g]});
    }
  }
  out.push_back({"out.w", {p.out_w.rows, p.out_w.cols}, &p.out_w.a});
  out.push_back({"out.b", {static_cast<int>(p.out_b.size())}, &p.out_b});
  return out;
}

}  // namespace

std::vector<ParamBlock> param_blocks(ModelParams& p) {
  return blocks_impl<ModelParams, ParamBlock>(p);
}

std::vector<ConstParamBlock> param_blocks(const ModelParams& p) {
  return blocks_impl<const ModelParams, ConstParamBlock>(p);
}

ModelParams make_params(int input_dim, int hidden, int layers, int classes) {
  ModelParams p;
  p.proj_w = Mat(hidden, input_dim);
  p.proj_b.assign(hidden, 0.0);
  p.lstm.resize(layers);
  for (LstmLayerParams& l : p.lstm) {
    for (int g = 0; g < kNumGates; ++g) {
      l.wx[g] = Mat(hidden, hidden);
      l.wh[g] = Mat(hidden, hidden);
      l.b[g].assign(hidden, 0.0);
    }
  }
  p.out_w = Mat(classes, hidden);
  p.out_b.assign(classes, 0.0);
  return p;
}

EvaluatorModel make_model(int input_dim, int hidden, int layers, int classes,
                          std::uint64_t init_seed) {
  if (input_dim < 1 || hidden < 1 || layers < 1 || classes < 2) {
    throw std::invalid_argument("make_model: bad dimensions");
  }
  EvaluatorModel model;
  model.input_dim = input_dim;
  model.hidden = hidden;
  model.num_layers = layers;
  model.classes = classes;
  model.params = make_params(input_dim, hidden, layers, classes);
  model.norm.mean.assign(input_dim, 0.0);
  model.norm.std.assign(input_dim, 1.0);

  Rng rng(mix_seed(init_seed, "glorot"));
  auto glorot = [&](Mat& m, int fan_in, int fan_out) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& v : m.a) v = rng.uniform(-limit, limit);
  };
  glorot(model.params.proj_w, input_dim, hidden);
  for (LstmLayerParams& l : model.params.lstm) {
    for (int g = 0; g < kNumGates; ++g) {
      glorot(l.wx[g], hidden, hidden);
      glorot(l.wh[g], hidden, hidden);
      if (g == kGateForget) std::fill(l.b[g].begin(), l.b[g].end(), 1.0);
    }
  }
  glorot(model.params.out_w, hidden, classes);
  return model;
}

Vec softmax(const Vec& logits) {
  Vec probs(logits.size());
  const double shift = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    probs[k] = std::exp(logits[k] - shift);
    sum += probs[k];
  }
  for (double& p : probs) p /= sum;
  return probs;
}

double cross_entropy(const Vec& probs, int label) {
  if (label < 0 || label >= static_cast<int>(probs.size())) {
    throw std::invalid_argument("cross_entropy: label out of range");
  }
  return -std::log(std::max(probs[static_cast<std::size_t>(label)], 1e-12));
}

namespace {

// Per-layer activations kept for backpropagation through time.
struct LayerCache {
  std::array<Mat, kNumGates> gates;  // L x h, post-activation
  Mat c;                             // L x h
  Mat h;                             // L x h
  Mat tanh_c;                        // L x h
};

struct ForwardCache {
  Mat proj;  // L x h, layer-0 input
  std::vector<LayerCache> layers;
  Vec logits;
  Vec probs;
};

void run_forward(const EvaluatorModel& model, const Mat& window, ForwardCache& cache) {
  check_window_dims(window, model.input_dim, "forward");
  const int steps = window.rows;
  const int h = model.hidden;
  const ModelParams& p = model.params;

  cache.proj = Mat(steps, h);
  for (int t = 0; t < steps; ++t) {
    double* row = cache.proj.row(t);
    std::copy(p.proj_b.begin(), p.proj_b.end(), row);
    matvec_add(p.proj_w, window.row(t), row);
  }

  cache.layers.assign(model.num_layers, LayerCache{});
  const Mat* input = &cache.proj;
  for (int l = 0; l < model.num_layers; ++l) {
    LayerCache& lc = cache.layers[l];
    const LstmLayerParams& lp = p.lstm[l];
    for (int g = 0; g < kNumGates; ++g) lc.gates[g] = Mat(steps, h);
    lc.c = Mat(steps, h);
    lc.h = Mat(steps, h);
    lc.tanh_c = Mat(steps, h);

    Vec pre(h);
    for (int t = 0; t < steps; ++t) {
      const double* prev_h = t > 0 ? lc.h.row(t - 1) : nullptr;
      const double* prev_c = t > 0 ? lc.c.row(t - 1) : nullptr;
      for (int g = 0; g < kNumGates; ++g) {
        std::copy(lp.b[g].begin(), lp.b[g].end(), pre.begin());
        matvec_add(lp.wx[g], input->row(t), pre.data());
        if (prev_h != nullptr) matvec_add(lp.wh[g], prev_h, pre.data());
        double* out = lc.gates[g].row(t);
        if (g == kGateCell) {
          for (int k = 0; k < h; ++k) out[k] = std::tanh(pre[k]);
        } else {
          for (int k = 0; k < h; ++k) out[k] = sigmoid(pre[k]);
        }
      }
      double* c_row = lc.c.row(t);
      double* h_row = lc.h.row(t);
      double* tc_row = lc.tanh_c.row(t);
      const double* gi = lc.gates[kGateInput].row(t);
      const double* gf = lc.gates[kGateForget].row(t);
      const double* gc = lc.gates[kGateCell].row(t);
      const double* go = lc.gates[kGateOutput].row(t);
      for (int k = 0; k < h; ++k) {
        c_row[k] = gi[k] * gc[k] + (prev_c != nullptr ? gf[k] * prev_c[k] : 0.0);
        tc_row[k] = std::tanh(c_row[k]);
        h_row[k] = go[k] * tc_row[k];
      }
    }
    input = &lc.h;
  }

  cache.logits.assign(model.classes, 0.0);
  std::copy(p.out_b.begin(), p.out_b.end(), cache.logits.begin());
  matvec_add(p.out_w, cache.layers.back().h.row(steps - 1), cache.logits.data());
  for (double v : cache.logits) {
    if (!std::isfinite(v)) throw NumericError("forward: non-finite logits");
  }
  cache.probs = softmax(cache.logits);
}

}  // namespace

ForwardResult forward(const EvaluatorModel& model, const Mat& window) {
  ForwardCache cache;
  run_forward(model, window, cache);
  return {cache.logits, cache.probs};
}

int predict(const EvaluatorModel& model, const Mat& raw_window) {
  const Mat std_window = standardize(raw_window, model.norm);
  const ForwardResult r = forward(model, std_window);
  return static_cast<int>(std::max_element(r.probs.begin(), r.probs.end()) - r.probs.begin());
}

double backward(const EvaluatorModel& model, std::span<const TrainingSample> batch,
                ModelParams& grads, const std::array<double, kNumBehaviors>& class_weights) {
  if (batch.empty()) throw std::invalid_argument("backward: empty batch");
  const int h = model.hidden;
  const int layers = model.num_layers;
  if (grads.proj_w.rows != h || grads.proj_w.cols != model.input_dim ||
      static_cast<int>(grads.lstm.size()) != layers) {
    grads = make_params(model.input_dim, h, layers, model.classes);
  } else {
    grads.zero();
  }

  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  double total_loss = 0.0;

  ForwardCache cache;
  Vec dlogits(model.classes);
  for (const TrainingSample& sample : batch) {
    run_forward(model, *sample.window, cache);
    const int steps = sample.window->rows;
    if (sample.label < 0 || sample.label >= model.classes) {
      throw std::invalid_argument("backward: label out of range");
    }
    const double weight =
        model.classes == kNumBehaviors ? class_weights[sample.label] : 1.0;
    // Loss in log space: logsumexp(logits) - logits[label].
    const double shift = *std::max_element(cache.logits.begin(), cache.logits.end());
    double lse = 0.0;
    for (double v : cache.logits) lse += std::exp(v - shift);
    total_loss += weight * (std::log(lse) + shift - cache.logits[sample.label]);

    const double coeff = weight * inv_batch;
    for (int k = 0; k < model.classes; ++k) {
      dlogits[k] = coeff * (cache.probs[k] - (k == sample.label ? 1.0 : 0.0));
    }

    // Readout.
    const double* h_last = cache.layers.back().h.row(steps - 1);
    outer_add(grads.out_w, dlogits.data(), h_last);
    for (int k = 0; k < model.classes; ++k) grads.out_b[k] += dlogits[k];

    // dh flowing into each layer from above; for the top layer only the
    // final step receives gradient (from the readout).
    Mat dh_above(steps, h);
    matvec_t_add(model.params.out_w, dlogits.data(), dh_above.row(steps - 1));

    Vec dh(h), dc(h), da(h);
    for (int l = layers - 1; l >= 0; --l) {
      const LayerCache& lc = cache.layers[l];
      const LstmLayerParams& lp = model.params.lstm[l];
      LstmLayerParams& lg = grads.lstm[l];
      const Mat& input = l == 0 ? cache.proj : cache.layers[l - 1].h;
      Mat dx(steps, h);
      Vec dh_carry(h, 0.0), dc_carry(h, 0.0);
      for (int t = steps - 1; t >= 0; --t) {
        const double* gi = lc.gates[kGateInput].row(t);
        const double* gf = lc.gates[kGateForget].row(t);
        const double* gc = lc.gates[kGateCell].row(t);
        const double* go = lc.gates[kGateOutput].row(t);
        const double* tc = lc.tanh_c.row(t);
        const double* prev_c = t > 0 ? lc.c.row(t - 1) : nullptr;
        const double* above = dh_above.row(t);
        for (int k = 0; k < h; ++k) {
          dh[k] = above[k] + dh_carry[k];
          dc[k] = dc_carry[k] + dh[k] * go[k] * (1.0 - tc[k] * tc[k]);
        }
        std::fill(dh_carry.begin(), dh_carry.end(), 0.0);
        double* dx_row = dx.row(t);
        for (int g = 0; g < kNumGates; ++g) {
          switch (g) {
            case kGateInput:
              for (int k = 0; k < h; ++k) da[k] = dc[k] * gc[k] * gi[k] * (1.0 - gi[k]);
              break;
            case kGateForget:
              if (prev_c == nullptr) {
                std::fill(da.begin(), da.end(), 0.0);
              } else {
                for (int k = 0; k < h; ++k) da[k] = dc[k] * prev_c[k] * gf[k] * (1.0 - gf[k]);
              }
              break;
            case kGateCell:
              for (int k = 0; k < h; ++k) da[k] = dc[k] * gi[k] * (1.0 - gc[k] * gc[k]);
              break;
            case kGateOutput:
              for (int k = 0; k < h; ++k) da[k] = dh[k] * tc[k] * go[k] * (1.0 - go[k]);
              break;
          }
          outer_add(lg.wx[g], da.data(), input.row(t));
          if (t > 0) outer_add(lg.wh[g], da.data(), lc.h.row(t - 1));
          for (int k = 0; k < h; ++k) lg.b[g][k] += da[k];
          matvec_t_add(lp.wx[g], da.data(), dx_row);
          if (t > 0) matvec_t_add(lp.wh[g], da.data(), dh_carry.data());
        }
        for (int k = 0; k < h; ++k) dc_carry[k] = dc[k] * gf[k];
      }
      dh_above = std::move(dx);
    }

    // Projection: dh_above now holds the gradient w.r.t. the projected rows.
    for (int t = 0; t < steps; ++t) {
      outer_add(grads.proj_w, dh_above.row(t), sample.window->row(t));
      const double* row = dh_above.row(t);
      for (int k = 0; k < h; ++k) grads.proj_b[k] += row[k];
    }
  }

  for (const auto& block : param_blocks(const_cast<const ModelParams&>(grads))) {
    for (double v : *block.data) {
      if (!std::isfinite(v)) {
        throw NumericError("backward: non-finite gradient in block " + block.name);
      }
    }
  }
  return total_loss * inv_batch;
}

void adamw_update(std::span<double> params, std::span<const double> grads, std::span<double> m,
                  std::span<double> v, long step, double lr, double weight_decay,
                  const AdamWConfig& cfg) {
  if (params.size() != grads.size() || params.size() != m.size() || params.size() != v.size()) {
    throw std::invalid_argument("adamw_update: size mismatch");
  }
  if (step < 1) throw std::invalid_argument("adamw_update: step must be >= 1");
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grads[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    params[i] -= lr * (m_hat / (std::sqrt(v_hat) + cfg.eps) + weight_decay * params[i]);
  }
}

void adamw_step(ModelParams& params, const ModelParams& grads, AdamWState& state, double lr,
                double weight_decay, const AdamWConfig& cfg) {
  if (state.m.count() != params.count()) {
    state.m = params;
    state.v = params;
    state.m.zero();
    state.v.zero();
    state.step = 0;
  }
  ++state.step;
  auto pb = param_blocks(params);
  auto gb = param_blocks(const_cast<const ModelParams&>(grads));
  auto mb = param_blocks(state.m);
  auto vb = param_blocks(state.v);
  for (std::size_t i = 0; i < pb.size(); ++i) {
    adamw_update(*pb[i].data, *gb[i].data, *mb[i].data, *vb[i].data, state.step, lr,
                 weight_decay, cfg);
  }
}

bool EarlyStopping::update(double val_loss) {
  ++epoch_;
  if (val_loss < best_loss_) {
    best_loss_ = val_loss;
    best_epoch_ = epoch_;
    stall_ = 0;
  } else {
    ++stall_;
  }
  return stall_ >= patience_;
}

namespace {

double global_grad_norm(const ModelParams& grads) {
  double acc = 0.0;
  for (const auto& block : param_blocks(grads)) {
    for (double v : *block.data) acc += v * v;
  }
  return std::sqrt(acc);
}

void scale_grads(ModelParams& grads, double factor) {
  for (auto& block : param_blocks(grads)) {
    for (double& v : *block.data) v *= factor;
  }
}

void check_training_windows(const std::vector<LabeledWindow>& windows, int window_len,
                            const char* name) {
  if (windows.empty()) throw std::invalid_argument(std::string(name) + " windows are empty");
  for (const LabeledWindow& w : windows) {
    if (w.data.rows != window_len) {
      throw std::invalid_argument(std::string(name) + " window length " +
                                  std::to_string(w.data.rows) + " does not match config L=" +
                                  std::to_string(window_len));
    }
    if (w.data.cols != windows.front().data.cols) {
      throw std::invalid_argument(std::string(name) + " windows have mixed channel counts");
    }
  }
}

struct ValScore {
  double loss = 0.0;
  double accuracy = 0.0;
};

ValScore validation_score(const EvaluatorModel& model, const std::vector<Mat>& std_windows,
                          const std::vector<int>& labels,
                          const std::array<double, kNumBehaviors>& class_weights) {
  ValScore score;
  long correct = 0;
  for (std::size_t i = 0; i < std_windows.size(); ++i) {
    const ForwardResult r = forward(model, std_windows[i]);
    const double weight = class_weights[labels[i]];
    score.loss += weight * cross_entropy(r.probs, labels[i]);
    const int pred =
        static_cast<int>(std::max_element(r.probs.begin(), r.probs.end()) - r.probs.begin());
    if (pred == labels[i]) ++correct;
  }
  score.loss /= static_cast<double>(std_windows.size());
  score.accuracy = static_cast<double>(correct) / static_cast<double>(std_windows.size());
  return score;
}

}  // namespace

TrainResult train(const std::vector<LabeledWindow>& train_windows,
                  const std::vector<LabeledWindow>& val_windows, const TrainConfig& cfg) {
  check_training_windows(train_windows, cfg.window_len, "train");
  check_training_windows(val_windows, cfg.window_len, "val");
  const int dim = train_windows.front().data.cols;
  if (val_windows.front().data.cols != dim) {
    throw std::invalid_argument("train/val channel counts differ");
  }

  const NormStats norm = compute_norm_stats(train_windows);
  EvaluatorModel model =
      make_model(dim, cfg.hidden, cfg.num_layers, kNumBehaviors, mix_seed(cfg.seed, "init"));
  model.window_len = cfg.window_len;
  model.norm = norm;
  model.config = cfg;

  // Validation windows are standardized once; no augmentation on them.
  std::vector<Mat> val_std;
  std::vector<int> val_labels;
  val_std.reserve(val_windows.size());
  for (const LabeledWindow& w : val_windows) {
    val_std.push_back(standardize(w.data, norm));
    val_labels.push_back(label_index(w.label));
  }

  TrainResult result;
  AdamWState opt;
  EarlyStopping stopper(cfg.patience);
  ModelParams grads;
  std::vector<std::size_t> order(train_windows.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    Rng rng(mix_seed(mix_seed(cfg.seed, "epoch"), static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);

    double loss_sum = 0.0;
    std::size_t pos = 0;
    while (pos < order.size()) {
      const std::size_t count = std::min<std::size_t>(cfg.batch_size, order.size() - pos);
      std::vector<Mat> batch_data(count);
      std::vector<TrainingSample> batch(count);
      for (std::size_t i = 0; i < count; ++i) {
        const LabeledWindow& w = train_windows[order[pos + i]];
        batch_data[i] = augment(w.data, cfg.noise_sigma, rng.next_u64());
        standardize_in_place(batch_data[i], norm);
        batch[i] = {&batch_data[i], label_index(w.label)};
      }
      const double batch_loss = backward(model, batch, grads, cfg.class_weights);
      loss_sum += batch_loss * static_cast<double>(count);
      if (cfg.grad_clip > 0.0) {
        const double norm2 = global_grad_norm(grads);
        if (norm2 > cfg.grad_clip) scale_grads(grads, cfg.grad_clip / norm2);
      }
      adamw_step(model.params, grads, opt, cfg.learning_rate, cfg.weight_decay);
      pos += count;
    }

    EpochStats stats;
    stats.train_loss = loss_sum / static_cast<double>(order.size());
    const ValScore val = validation_score(model, val_std, val_labels, cfg.class_weights);
    stats.val_loss = val.loss;
    stats.val_accuracy = val.accuracy;
    if (!std::isfinite(stats.train_loss) || !std::isfinite(stats.val_loss)) {
      throw NumericError("training diverged at epoch " + std::to_string(epoch));
    }
    result.history.push_back(stats);

    const bool stop = stopper.update(stats.val_loss);
    if (stopper.improved_last_epoch()) {
      result.best_epoch = epoch;
      result.best_model = model;
    }
    if (stop) {
      result.stopped_early = true;
      break;
    }
  }
  return result;
}

std::string history_csv(const TrainResult& result) {
  std::string out = "epoch,train_loss,val_loss,val_acc\n";
  for (std::size_t i = 0; i < result.history.size(); ++i) {
    const EpochStats& s = result.history[i];
    out += std::to_string(i + 1) + ',' + format_double(s.train_loss) + ',' +
           format_double(s.val_loss) + ',' + format_double(s.val_accuracy) + '\n';
  }
  return out;
}

ClassificationReport report_from_confusion(const std::vector<std::vector<long>>& confusion) {
  const int k = static_cast<int>(confusion.size());
  for (const auto& row : confusion) {
    if (static_cast<int>(row.size()) != k) {
      throw std::invalid_argument("report_from_confusion: matrix not square");
    }
  }
  ClassificationReport report;
  report.confusion = confusion;
  report.precision.assign(k, 0.0);
  report.recall.assign(k, 0.0);
  report.f1.assign(k, 0.0);
  long trace = 0;
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) report.total += confusion[i][j];
    trace += confusion[i][i];
  }
  report.accuracy = report.total > 0 ? static_cast<double>(trace) / report.total : 0.0;
  double f1_sum = 0.0;
  for (int c = 0; c < k; ++c) {
    long tp = confusion[c][c];
    long fp = 0, fn = 0;
    for (int i = 0; i < k; ++i) {
      if (i != c) {
        fp += confusion[i][c];
        fn += confusion[c][i];
      }
    }
    if (tp + fp + fn == 0) report.absent_classes.push_back(c);
    report.precision[c] = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
    report.recall[c] = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
    const double pr = report.precision[c] + report.recall[c];
    report.f1[c] = pr > 0.0 ? 2.0 * report.precision[c] * report.recall[c] / pr : 0.0;
    f1_sum += report.f1[c];
  }
  report.macro_f1 = k > 0 ? f1_sum / k : 0.0;
  return report;
}

ClassificationReport evaluate(const EvaluatorModel& model,
                              const std::vector<LabeledWindow>& windows, int threads) {
  if (windows.empty()) throw std::invalid_argument("evaluate: no windows");
  std::vector<int> preds(windows.size());
  parallel_for(windows.size(), threads,
               [&](std::size_t i) { preds[i] = predict(model, windows[i].data); });
  std::vector<std::vector<long>> confusion(model.classes, std::vector<long>(model.classes, 0));
  for (std::size_t i = 0; i < windows.size(); ++i) {
    confusion[label_index(windows[i].label)][preds[i]]++;
  }
  return report_from_confusion(confusion);
}

GridResult grid_search(const std::vector<LabeledWindow>& train_windows,
                       const std::vector<LabeledWindow>& val_windows, const GridSpec& grid,
                       const TrainConfig& base, std::span<const std::uint64_t> seeds,
                       int threads) {
  if (grid.hidden.empty() || grid.num_layers.empty() || grid.learning_rate.empty() ||
      grid.noise_sigma.empty()) {
    throw std::invalid_argument("grid_search: empty grid axis");
  }
  if (seeds.empty()) throw std::invalid_argument("grid_search: no seeds");

  GridResult result;
  for (int h : grid.hidden) {
    for (int layers : grid.num_layers) {
      for (double lr : grid.learning_rate) {
        for (double sigma : grid.noise_sigma) {
          GridCell cell;
          cell.config = base;
          cell.config.hidden = h;
          cell.config.num_layers = layers;
          cell.config.learning_rate = lr;
          cell.config.noise_sigma = sigma;
          cell.seed_accuracy.assign(seeds.size(), 0.0);
          cell.seed_f1.assign(seeds.size(), 0.0);
          result.cells.push_back(std::move(cell));
        }
      }
    }
  }

  struct RunOutcome {
    bool ok = false;
    std::string error;
    double accuracy = 0.0;
    double f1 = 0.0;
  };
  const std::size_t runs = result.cells.size() * seeds.size();
  std::vector<RunOutcome> outcomes(runs);
  parallel_for(runs, threads, [&](std::size_t r) {
    const std::size_t cell_idx = r / seeds.size();
    const std::size_t seed_idx = r % seeds.size();
    TrainConfig cfg = result.cells[cell_idx].config;
    cfg.seed = seeds[seed_idx];
    RunOutcome& out = outcomes[r];
    try {
      const TrainResult tr = train(train_windows, val_windows, cfg);
      out.accuracy = tr.history[tr.best_epoch - 1].val_accuracy;
      out.f1 = evaluate(tr.best_model, val_windows).macro_f1;
      out.ok = true;
    } catch (const NumericError& e) {
      out.error = e.what();
    }
  });

  for (std::size_t c = 0; c < result.cells.size(); ++c) {
    GridCell& cell = result.cells[c];
    double acc_sum = 0.0, f1_sum = 0.0;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      const RunOutcome& out = outcomes[c * seeds.size() + s];
      if (!out.ok) {
        cell.failed = true;
        cell.error = out.error;
        continue;
      }
      cell.seed_accuracy[s] = out.accuracy;
      cell.seed_f1[s] = out.f1;
      acc_sum += out.accuracy;
      f1_sum += out.f1;
    }
    if (cell.failed) continue;
    const double n = static_cast<double>(seeds.size());
    cell.acc_mean = acc_sum / n;
    cell.f1_mean = f1_sum / n;
    if (seeds.size() > 1) {
      double acc_var = 0.0, f1_var = 0.0;
      for (std::size_t s = 0; s < seeds.size(); ++s) {
        acc_var += (cell.seed_accuracy[s] - cell.acc_mean) * (cell.seed_accuracy[s] - cell.acc_mean);
        f1_var += (cell.seed_f1[s] - cell.f1_mean) * (cell.seed_f1[s] - cell.f1_mean);
      }
      cell.acc_std = std::sqrt(acc_var / (n - 1.0));
      cell.f1_std = std::sqrt(f1_var / (n - 1.0));
    }
  }

  // Highest mean accuracy wins; ties prefer the smaller model.
  for (std::size_t c = 0; c < result.cells.size(); ++c) {
    const GridCell& cell = result.cells[c];
    if (cell.failed) continue;
    if (result.best_index < 0) {
      result.best_index = static_cast<int>(c);
      continue;
    }
    const GridCell& best = result.cells[result.best_index];
    const auto key = [](const GridCell& g) {
      return std::make_tuple(-g.acc_mean, g.config.hidden, g.config.num_layers,
                             g.config.learning_rate);
    };
    if (key(cell) < key(best)) result.best_index = static_cast<int>(c);
  }
  return result;
}

std::string grid_csv(const GridResult& result) {
  std::string out = "L,h,layers,lr,sigma,acc_mean,acc_std,f1_mean,f1_std,status\n";
  for (const GridCell& cell : result.cells) {
    out += std::to_string(cell.config.window_len) + ',' + std::to_string(cell.config.hidden) +
           ',' + std::to_string(cell.config.num_layers) + ',' +
           format_double(cell.config.learning_rate) + ',' +
           format_double(cell.config.noise_sigma) + ',';
    if (cell.failed) {
      out += ",,,,failed\n";
    } else {
      out += format_double(cell.acc_mean) + ',' + format_double(cell.acc_std) + ',' +
             format_double(cell.f1_mean) + ',' + format_double(cell.f1_std) + ",ok\n";
    }
  }
  return out;
}

namespace {

json train_config_json(const TrainConfig& cfg) {
  return json{{"window_len", cfg.window_len},
              {"hidden", cfg.hidden},
              {"num_layers", cfg.num_layers},
              {"learning_rate", cfg.learning_rate},
              {"noise_sigma", cfg.noise_sigma},
              {"max_epochs", cfg.max_epochs},
              {"patience", cfg.patience},
              {"batch_size", cfg.batch_size},
              {"weight_decay", cfg.weight_decay},
              {"grad_clip", cfg.grad_clip},
              {"class_weights", cfg.class_weights},
              {"seed", cfg.seed}};
}

TrainConfig train_config_from(const json& j) {
  TrainConfig cfg;
  try {
    if (j.contains("window_len")) cfg.window_len = j["window_len"].get<int>();
    if (j.contains("hidden")) cfg.hidden = j["hidden"].get<int>();
    if (j.contains("num_layers")) cfg.num_layers = j["num_layers"].get<int>();
    if (j.contains("learning_rate")) cfg.learning_rate = j["learning_rate"].get<double>();
    if (j.contains("noise_sigma")) cfg.noise_sigma = j["noise_sigma"].get<double>();
    if (j.contains("max_epochs")) cfg.max_epochs = j["max_epochs"].get<int>();
    if (j.contains("patience")) cfg.patience = j["patience"].get<int>();
    if (j.contains("batch_size")) cfg.batch_size = j["batch_size"].get<int>();
    if (j.contains("weight_decay")) cfg.weight_decay = j["weight_decay"].get<double>();
    if (j.contains("grad_clip")) cfg.grad_clip = j["grad_clip"].get<double>();
    if (j.contains("class_weights")) {
      cfg.class_weights = j["class_weights"].get<std::array<double, kNumBehaviors>>();
    }
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("train config: ") + e.what());
  }
  if (cfg.window_len < 1 || cfg.hidden < 1 || cfg.num_layers < 1 || cfg.max_epochs < 1 ||
      cfg.patience < 1 || cfg.batch_size < 1 || !(cfg.learning_rate > 0.0) ||
      cfg.noise_sigma < 0.0 || cfg.weight_decay < 0.0) {
    throw std::invalid_argument("train config: values out of range");
  }
  return cfg;
}

}  // namespace

TrainConfig train_config_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("train config: ") + e.what());
  }
  return train_config_from(j);
}

std::string train_config_to_json(const TrainConfig& cfg) {
  return train_config_json(cfg).dump(2);
}

std::string checkpoint_json(const EvaluatorModel& model) {
  json j;
  j["format"] = "trajeval-evaluator";
  j["version"] = 1;
  j["input_dim"] = model.input_dim;
  j["hidden"] = model.hidden;
  j["num_layers"] = model.num_layers;
  j["classes"] = model.classes;
  j["window_len"] = model.window_len;
  j["norm_stats"] = {{"mean", model.norm.mean}, {"std", model.norm.std}};
  j["config"] = train_config_json(model.config);
  json params = json::array();
  for (const auto& block : param_blocks(model.params)) {
    params.push_back({{"name", block.name}, {"shape", block.shape}, {"data", *block.data}});
  }
  j["params"] = std::move(params);
  return j.dump();
}

void save_checkpoint(const EvaluatorModel& model, const std::string& path) {
  atomic_write_file(path, checkpoint_json(model));
}

EvaluatorModel checkpoint_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("checkpoint: ") + e.what());
  }
  try {
    if (j.value("format", "") != "trajeval-evaluator") {
      throw std::invalid_argument("checkpoint: unrecognized format field");
    }
    EvaluatorModel model;
    model.input_dim = j.at("input_dim").get<int>();
    model.hidden = j.at("hidden").get<int>();
    model.num_layers = j.at("num_layers").get<int>();
    model.classes = j.at("classes").get<int>();
    model.window_len = j.at("window_len").get<int>();
    model.norm.mean = j.at("norm_stats").at("mean").get<Vec>();
    model.norm.std = j.at("norm_stats").at("std").get<Vec>();
    model.config = train_config_from(j.at("config"));
    model.params = make_params(model.input_dim, model.hidden, model.num_layers, model.classes);
    auto blocks = param_blocks(model.params);
    std::size_t loaded = 0;
    for (const json& jb : j.at("params")) {
      const std::string name = jb.at("name").get<std::string>();
      bool found = false;
      for (auto& block : blocks) {
        if (block.name != name) continue;
        Vec data = jb.at("data").get<Vec>();
        if (data.size() != block.data->size()) {
          throw std::invalid_argument("checkpoint: block '" + name + "' has " +
                                      std::to_string(data.size()) + " values, expected " +
                                      std::to_string(block.data->size()));
        }
        for (double v : data) {
          if (!std::isfinite(v)) {
            throw std::invalid_argument("checkpoint: non-finite value in block '" + name + "'");
          }
        }
        *block.data = std::move(data);
        found = true;
        ++loaded;
        break;
      }
      if (!found) throw std::invalid_argument("checkpoint: unknown parameter block '" + name + "'");
    }
    if (loaded != blocks.size()) {
      throw std::invalid_argument("checkpoint: missing parameter blocks");
    }
    if (model.norm.mean.size() != static_cast<std::size_t>(model.input_dim) ||
        model.norm.std.size() != static_cast<std::size_t>(model.input_dim)) {
      throw std::invalid_argument("checkpoint: norm stats size mismatch");
    }
    for (double s : model.norm.std) {
      if (!(s > 0.0)) throw std::invalid_argument("checkpoint: non-positive std entry");
    }
    return model;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("checkpoint: ") + e.what());
  }
}

EvaluatorModel load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open checkpoint file '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return checkpoint_from_json(text);
}

}  // namespace trajeval
