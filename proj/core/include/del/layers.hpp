#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "del/autodiff.hpp"
#include "del/densities.hpp"
#include "del/gamma.hpp"
#include "del/tensor.hpp"

namespace del {

enum class ModelKind {
  kFc0,              // linear classifier
  kFc50,             // one hidden layer of 50 ReLU units
  kLogisticEl,       // logistic-embedding layer + linear head
  kLogisticElMnn,    // logistic-EL whose location logits come from a micro net
  kAdaptiveConvDemo, // learnable-amplitude strided windows on the flat input
  kAdaptivePoolDemo, // learnable-temperature pooling on the flat input
};

ModelKind model_kind_from_name(const std::string& name);
std::string model_kind_name(ModelKind kind);

enum class SquashForm {
  kAppendix,  // (p_mu, q_mu) = (4, 0), (p_s, q_s) = (0, 1); the reported setup
  kMainText,  // p = 1, q = 0 for both location and scale
};

enum class InitKind {
  kAlphaLogit,    // N(0, 0.4)
  kBetaLogit,     // N(-3, 0.3)
  kUniformFanIn,  // U(-1/sqrt(fan_in), 1/sqrt(fan_in))
  kZero,
};

struct ParamDef {
  std::string name;
  Tensor value;
  InitKind init;
  std::int64_t fan_in = 0;  // used by kUniformFanIn
};

struct ModelConfig {
  ModelKind kind = ModelKind::kLogisticEl;
  std::int64_t n = 28;         // spatial extent of the square input
  std::int64_t channels = 1;   // input channels
  std::int64_t b = 5;          // density grid size (EL) / window count basis (demos)
  std::int64_t b0 = 0;         // micro-net grid size (mnn only)
  std::int64_t rf_channels = 1;  // 1 = receptive field shared across channels,
                                 // channels = one per channel
  std::int64_t classes = 10;
  std::int64_t hidden = 50;    // fc50 hidden width
  SquashForm squash = SquashForm::kAppendix;
};

/// Configuration used for the reported results: MNIST inputs share the
/// receptive field across the single channel; CIFAR-10 inputs get one
/// receptive field per channel.
ModelConfig preset(ModelKind kind, std::int64_t n, std::int64_t channels, std::int64_t b,
                   std::int64_t b0);

SquashSpec mu_squash(const ModelConfig& cfg);
SquashSpec s_squash(const ModelConfig& cfg);

/// A model is an ordered list of named parameter tensors plus the recipe for
/// wiring them into a forward pass. Parameters start at zero; use
/// init_params (train module) to draw the published initialization.
class Model {
 public:
  explicit Model(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }
  std::vector<ParamDef>& params() { return params_; }
  const std::vector<ParamDef>& params() const { return params_; }
  std::int64_t param_count() const;

  Tensor* find(const std::string& name);
  const Tensor* find(const std::string& name) const;

  /// Class logits [batch, classes] for images [batch, C, N, N]. When
  /// `leaves` is given it receives one leaf Var per parameter, in params()
  /// order, for gradient extraction after backward().
  Var logits(Tape& tape, const Tensor& images, std::vector<Var>* leaves = nullptr) const;

 private:
  void add_param(std::string name, std::vector<std::int64_t> shape, InitKind init,
                 std::int64_t fan_in = 0);

  ModelConfig cfg_;
  std::vector<ParamDef> params_;
};

std::int64_t param_count(const Model& model);

/// Logistic-embedding layer. alpha/beta: [B, B, 2] (receptive field shared
/// across channels) or [C, B, B, 2] (one per channel); the trailing axis
/// holds (t-axis, u-axis) logits. x: [batch, C, N, N]. Result:
/// [batch, C, B, B] of per-density expected values.
Var logistic_el_forward(Tape& tape, Var alpha, Var beta, Var x, const SquashSpec& mu_spec,
                        const SquashSpec& s_spec);

/// The layer's per-unit interval masses on each separable axis, as
/// {t rows, u rows}, both [RF, B*B, N]. `channels` is the input channel
/// count the logits must match.
std::pair<Var, Var> logistic_el_rows(Tape& tape, Var alpha, Var beta, std::int64_t channels,
                                     std::int64_t n_cells, const SquashSpec& mu_spec,
                                     const SquashSpec& s_spec);

/// Micro-net rows, conditioned on the batch: {t rows, u rows}, both
/// [batch, RF, B*B, N].
std::pair<Var, Var> micro_net_rows(Tape& tape, Var inner_alpha, Var inner_beta, Var w,
                                   Var bias, Var outer_beta, Var x, const SquashSpec& mu_spec,
                                   const SquashSpec& s_spec);

/// Micro-net variant: an inner logistic-EL (grid B0) feeds a linear map that
/// emits the outer layer's location logits, so the outer receptive field
/// depends on the input. Scale logits stay directly learned.
///   inner_alpha/inner_beta: [B0, B0, 2] or [C, B0, B0, 2]
///   w: [RF*B0*B0, 2*RF*B*B], bias: [2*RF*B*B], outer_beta like inner shapes
/// with B. RF is 1 (shared, single-channel input) or C (per-channel).
/// Result: [batch, C, B, B].
Var micro_net_forward(Tape& tape, Var inner_alpha, Var inner_beta, Var w, Var bias,
                      Var outer_beta, Var x, const SquashSpec& mu_spec,
                      const SquashSpec& s_spec);

/// Single-signal adaptive layers (x: [N]).
/// Windowed extraction with learnable amplitude p: result [K].
Var adaptive_conv_forward(Tape& tape, std::int64_t n, std::int64_t k, std::int64_t s,
                          std::int64_t l, Var p, Var x, bool normalize = false);
/// Interval pooling with learnable temperature: result [intervals.size()].
Var adaptive_pool_forward(Tape& tape, Var x, Var beta, std::span<const Interval> intervals,
                          std::int64_t n_cells);

/// Bound reparameterization p(lambda) = lo + (hi - lo) * sigmoid(lambda).
Var bounded_amplitude(Tape& tape, Var lambda, double lo, double hi);

}  // namespace del
