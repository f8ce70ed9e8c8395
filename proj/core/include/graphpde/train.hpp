#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "graphpde/dataset.hpp"
#include "graphpde/model.hpp"

namespace gpde {

// ---------------------------------------------------------------------------
// Desk-scale training: per-sample tapes, batched gradient averaging, global
// norm clipping, Adam with warmup + cosine decay, per-epoch CSV logging, and
// best/last checkpointing with exact resume. Single-threaded and bitwise
// deterministic for a fixed seed.
// ---------------------------------------------------------------------------

struct TrainError : std::runtime_error {
  explicit TrainError(const std::string& m) : std::runtime_error(m) {}
};

struct TrainConfig {
  int epochs = 20;
  int batch_size = 8;
  int mc_points = 128;     // label draws per sample per step
  double lr_max = 1e-3;
  int warmup_steps = 10;
  double train_eps = 0.05;  // nRMSE regularization during training
  int eval_samples = 16;    // test subset for per-epoch eval (0: skip)
  uint64_t seed = 0;
};

// A dataset sample lowered through the graph pipeline once; label tensors are
// rebuilt per visit (they are large and cheap to assemble).
struct PreparedSample {
  BoundGraph bg;
  GraphFeatures feats;
  const DatasetSample* src = nullptr;
};

PreparedSample prepare_sample(const DatasetSample& s, const ModelConfig& cfg);

// Labels for variable 0 over the full space-time grid: coords row
// (t_j, ix/R, iy/R) for frame j, row iy, column ix; values from the frames.
std::vector<VarLabels> sample_labels(const DatasetSample& s);

struct EpochStats {
  int epoch = 0;            // 1-based
  int64_t step = 0;         // optimizer updates completed
  double lr = 0.0;          // last lr used this epoch
  double train_loss = 0.0;  // mean per-sample MC loss
  double test_nrmse = 0.0;  // subset eval (NaN when skipped)
  double seconds = 0.0;     // wall time of the epoch
};

struct TrainResult {
  std::vector<EpochStats> log;
  double best_test_nrmse = 0.0;
  int best_epoch = 0;
  int64_t steps = 0;
};

// Mean full-grid nRMSE of model predictions over (the first max_samples of)
// a dataset; -1 takes everything.
double evaluate_nrmse(const Model& m, const Dataset& ds, int max_samples = -1);

// Mean nRMSE of the constant-in-time baseline u(t) := u(0).
double baseline_nrmse(const Dataset& ds, int max_samples = -1);

// Trains in place. Writes out_dir/log.csv (one row per epoch, appended as
// they finish), out_dir/best.ckpt (float32, lowest subset-eval nRMSE), and
// out_dir/last.ckpt + out_dir/last.opt (float64 + optimizer state, rewritten
// every epoch). When out_dir/last.ckpt exists the run resumes from it and
// continues until cfg.epochs, reproducing the uninterrupted trajectory
// bitwise. Pass an empty out_dir to train without touching the filesystem.
TrainResult train_model(Model& m, const Dataset& train_ds,
                        const Dataset& test_ds, const TrainConfig& cfg,
                        const std::string& out_dir);

}  // namespace gpde
