#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "del/data.hpp"
#include "del/layers.hpp"
#include "del/tensor.hpp"

namespace del {

enum class Schedule { kConstant, kOneCycle };

Schedule schedule_from_name(const std::string& name);
std::string schedule_name(Schedule schedule);

struct TrainConfig {
  std::int64_t epochs = 20;
  double max_lr = 0.002;
  Schedule schedule = Schedule::kConstant;
  std::int64_t batch_size = 64;
  std::uint64_t seed = 1;

  /// Throws ParamError on epochs < 0, max_lr <= 0, or batch_size < 1.
  /// epochs == 0 is allowed and means "evaluate the untrained model".
  void validate() const;
};

/// Learning rate for 0-based `step` out of `total_steps`. Constant returns
/// max_lr everywhere; one-cycle ramps linearly up to max_lr over the first
/// 30% of steps, then linearly down to zero.
double learning_rate(Schedule schedule, double max_lr, std::int64_t step,
                     std::int64_t total_steps);

struct AdamState {
  std::vector<Tensor> m, v;  // aligned with the parameter list
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

AdamState make_adam_state(const Model& model);

/// One bias-corrected Adam update, in place. grads aligns with
/// model.params(). Throws DivergenceError naming the parameter if a
/// gradient is NaN or infinite.
void adam_step(AdamState& state, Model& model, const std::vector<Tensor>& grads, double lr);

/// Draws every parameter from its declared init with a single Rng(seed)
/// stream, in registration order.
void init_params(Model& model, std::uint64_t seed);

struct EpochRecord {
  std::int64_t epoch = 0;                 // 1-based; 0 = pre-training evaluation
  std::optional<double> train_loss;       // mean batch loss; absent for epoch 0
  double test_error = 0.0;                // percent
  double seconds = 0.0;                   // wall clock; never serialized
};

struct RunRecord {
  ModelConfig model;
  TrainConfig config;
  std::vector<EpochRecord> epochs;
  std::int64_t param_count = 0;
  bool diverged = false;
  std::string divergence_note;

  double final_error() const;  // last epoch's test error
};

/// Mean cross-entropy of class logits against labels for the given rows.
double batch_loss(const Model& model, const Dataset& ds,
                  std::span<const std::int64_t> rows);

/// Error percent over the whole dataset, argmax rule, ties to the lowest
/// class. Chunked internally; the result does not depend on the chunking.
double evaluate(const Model& model, const Dataset& ds);

/// Epoch loop: shuffled batches, Adam updates, per-epoch test evaluation.
/// Parameters must already be initialized. On divergence the record is
/// returned with diverged set and the epochs seen so far preserved.
RunRecord fit(Model& model, const Dataset& train, const Dataset& test,
              const TrainConfig& config, std::ostream* progress = nullptr);

struct RunStats {
  double mean_error = 0.0;
  double std_error = 0.0;  // unbiased (n-1); zero for a single run
  std::vector<double> final_errors;
};

RunStats aggregate_runs(const std::vector<RunRecord>& runs);

/// Deterministic artifacts: no wall-clock content. One JSON object per line:
/// a config line per run, then its epoch lines.
void write_runrecords_jsonl(const std::filesystem::path& path,
                            const std::vector<RunRecord>& runs);
void write_summary_json(const std::filesystem::path& path, const std::vector<RunRecord>& runs);

/// Wall-clock seconds live here, away from the reproducible records.
void write_timing_json(const std::filesystem::path& path, const std::vector<RunRecord>& runs);

}  // namespace del
