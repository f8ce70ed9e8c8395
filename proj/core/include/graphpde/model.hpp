#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "graphpde/checkpoint.hpp"
#include "graphpde/features.hpp"
#include "graphpde/graph.hpp"
#include "graphpde/optim.hpp"
#include "graphpde/rng.hpp"
#include "graphpde/tape.hpp"

namespace gpde {

// ---------------------------------------------------------------------------
// Network: scalar encoder, grid (function) encoder, graph transformer with
// structural attention bias, latent extraction, and a modulated-INR decoder.
// All forward passes are pure given (params, inputs) and run on a caller
// tape, so the same code path serves training, inference, and input-gradient
// recovery.
// ---------------------------------------------------------------------------

struct ModelError : std::runtime_error {
  explicit ModelError(const std::string& m) : std::runtime_error(m) {}
};

struct ModelConfig {
  int d_e = 96;        // embedding width
  int n_layers = 4;    // transformer depth
  int n_heads = 4;
  int ffn_dim = 192;
  int n_branch = 4;    // N: branch nodes per function node
  int n_mod = 4;       // L: INR hidden layers == modulation nodes per var
  int inr_width = 96;
  int func_res = 32;   // R: grid-encoder input resolution

  static constexpr int kPathCap = 14;   // shortest-path table cap
  static constexpr int kDegCap = 15;    // degree table cap
  static constexpr int kScalarHidden = 256;
  // Monte-Carlo label draws per loss term at reference scale; desk-scale
  // runs use a smaller configured value.
  static constexpr int kReferenceMcSamples = 8192;

  static ModelConfig desk();   // the defaults above
  static ModelConfig paper();  // 768 / 12 / 32 / 1536 / N=4 / L=11 / 768 / 128
  static ModelConfig tiny();   // gradcheck scale: 16 / 2 / 2 / 32 / N=2 / L=2 / 16 / 16

  void validate() const;  // throws ModelError on inconsistent fields

  std::string to_text() const;               // "key=value\n" lines
  static ModelConfig from_text(const std::string& text);

  bool operator==(const ModelConfig& o) const;
};

// Grid-encoder conv stack; chosen per supported resolution so that the
// flattened output is exactly n_branch features of d_e.
struct ConvSpec {
  int in_ch, out_ch, kernel, stride;
};
std::vector<ConvSpec> conv_schedule(const ModelConfig& cfg);
int conv_output_cells(const ModelConfig& cfg);  // spatial cells after stack

struct Model {
  ModelConfig cfg;
  ParamMap params;

  // Fresh parameters: truncated-normal(0.02) weights and embeddings, zero
  // biases, unit layer-norm scales; modulation hypernets start as the
  // identity (scale 1, shift 0).
  static Model init(const ModelConfig& cfg, uint64_t seed);
};

// Checkpoint I/O: parameters in the record container plus the config as
// meta entries. Extra meta keys (training progress etc.) pass through.
void save_model(const std::string& path, const Model& m, Dtype as,
                const std::map<std::string, std::string>& extra_meta = {});
Model load_model(const std::string& path,
                 std::map<std::string, std::string>* meta = nullptr);

// Parameters materialized on a tape. Trainable attaches leaves (gradients
// tracked); otherwise constants (forward only, cheaper).
struct TapeParams {
  std::map<std::string, int> id;
  int at(const std::string& name) const;
};
TapeParams attach_params(Tape& tape, const Model& m, bool trainable);

// Per-variable latent codes mu_j, each a [L, d_e] tape node whose row l is
// the final embedding of that variable's m_{l+1} node.
struct Latents {
  std::vector<int> mu;
};

// --- Forward-pass pieces (composed by encode_graph; exposed for tests) ---

// MLP 1 -> 256 -> 256 -> d_e over a [n, 1] column of scalar inputs.
int scalar_encode_node(Tape& tape, const TapeParams& p, int inputs);

// Conv stack over an [R, R] grid node; returns [n_branch, d_e] features.
int function_encode_node(Tape& tape, const TapeParams& p,
                         const ModelConfig& cfg, int grid);

// h0 rows: x_type + payload + z_in + z_out per node. Payload is encode(0)
// for info-free nodes, encode(value) for SC nodes, and a grid-feature slice
// for branch nodes.
int initial_embeddings_node(Tape& tape, const TapeParams& p,
                            const ModelConfig& cfg, const BoundGraph& bg,
                            const GraphFeatures& f,
                            const std::map<std::string, int>* field_overrides =
                                nullptr);

// Per-head structural bias matrices [n, n], shared by every layer:
// B_h[i][j] = fwd_h[phi(i,j)] + rev_h[phi(j,i)] + mask[i][j].
std::vector<int> attention_bias_nodes(Tape& tape, const TapeParams& p,
                                      const ModelConfig& cfg,
                                      const GraphFeatures& f);

// n_layers pre-LN transformer blocks over [n, d_e] embeddings.
int graphormer_forward(Tape& tape, const TapeParams& p, const ModelConfig& cfg,
                       int h0, const std::vector<int>& bias);

// Full encoder: initial embeddings (type + scalar/grid payload + degree),
// n_layers transformer blocks with the shared structural bias, latent
// extraction. `field_overrides` substitutes a tape node (shape [R, R]) for
// a field grid so gradients can flow into recovered inputs.
Latents encode_graph(Tape& tape, const TapeParams& p, const ModelConfig& cfg,
                     const BoundGraph& bg, const GraphFeatures& f,
                     const std::map<std::string, int>* field_overrides = nullptr);

// Build a [P, 4] coordinate node from [P, 3] rows (t, x, y); the fourth
// slot exists for a z coordinate and is fixed at 0. Leaf nodes allow
// differentiating the prediction w.r.t. the query coordinates.
int coords_node(Tape& tape, const Tensor& txy, bool leaf = false);

// Modulated-INR decode of one variable at the given coordinate node:
// returns a [P, 1] tape node.
int inr_decode(Tape& tape, const TapeParams& p, const ModelConfig& cfg,
               int mu, int coords);

// Convenience one-shot inference: predicted values of variable `var` at
// [P, 3] coordinates, returned as a length-P tensor.
Tensor predict(const Model& m, const BoundGraph& bg, int var,
               const Tensor& txy);

// RMSE(pred - ref) / (eps + RMS(ref)). Evaluation uses eps = 1e-6.
double nrmse(const std::vector<double>& pred, const std::vector<double>& ref,
             double eps);
constexpr double kEvalEps = 1e-6;
constexpr double kTrainEps = 0.05;

// Same quantity on the tape, with constant reference values.
int nrmse_node(Tape& tape, int pred, const std::vector<double>& ref,
               double eps);

// Labeled solution points of one variable.
struct VarLabels {
  Tensor coords;               // [P, 3] rows (t, x, y)
  std::vector<double> values;  // P
};

// Monte-Carlo training loss: for each variable, nRMSE over K label indices
// drawn uniformly with replacement; one loss term per variable, summed.
// `terms` reports how many terms went into the sum.
struct McLoss {
  int node = -1;
  int terms = 0;
};
McLoss mc_loss(Tape& tape, const TapeParams& p, const ModelConfig& cfg,
               const BoundGraph& bg, const GraphFeatures& f,
               const std::vector<VarLabels>& labels, int K, double eps_train,
               Rng& rng);

}  // namespace gpde
