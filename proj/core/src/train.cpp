#include "del/train.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>

#include "json.hpp"

#include "del/autodiff.hpp"
#include "del/checkpoint.hpp"
#include "del/common.hpp"
#include "del/rng.hpp"

namespace del {
namespace {

using nlohmann::json;

std::uint64_t epoch_seed(std::uint64_t seed, std::int64_t epoch) {
  return splitmix64(seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(epoch)));
}

std::pair<Tensor, std::vector<int>> gather(const Dataset& ds,
                                           std::span<const std::int64_t> rows) {
  const std::int64_t per = ds.images.size() / ds.images.dim(0);
  Tensor images({static_cast<std::int64_t>(rows.size()), ds.images.dim(1), ds.images.dim(2),
                 ds.images.dim(3)});
  std::vector<int> labels(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::int64_t row = rows[i];
    if (row < 0 || row >= ds.count())
      throw ParamError("batch row " + std::to_string(row) + " outside dataset");
    std::memcpy(images.data() + static_cast<std::int64_t>(i) * per, ds.images.data() + row * per,
                static_cast<std::size_t>(per) * sizeof(double));
    labels[i] = ds.labels[static_cast<std::size_t>(row)];
  }
  return {std::move(images), std::move(labels)};
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

json config_json(const RunRecord& rec) {
  return json{{"model", model_kind_name(rec.model.kind)},
              {"n", rec.model.n},
              {"channels", rec.model.channels},
              {"b", rec.model.b},
              {"b0", rec.model.b0},
              {"rf_channels", rec.model.rf_channels},
              {"classes", rec.model.classes},
              {"hidden", rec.model.hidden},
              {"squash", squash_form_name(rec.model.squash)},
              {"epochs", rec.config.epochs},
              {"max_lr", rec.config.max_lr},
              {"schedule", schedule_name(rec.config.schedule)},
              {"batch_size", rec.config.batch_size},
              {"seed", rec.config.seed},
              {"param_count", rec.param_count},
              {"diverged", rec.diverged}};
}

}  // namespace

Schedule schedule_from_name(const std::string& name) {
  if (name == "constant") return Schedule::kConstant;
  if (name == "one-cycle") return Schedule::kOneCycle;
  throw ParamError("unknown schedule '" + name + "' (constant, one-cycle)");
}

std::string schedule_name(Schedule schedule) {
  switch (schedule) {
    case Schedule::kConstant: return "constant";
    case Schedule::kOneCycle: return "one-cycle";
  }
  throw ParamError("unhandled schedule");
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ParamError("epochs must be >= 0");
  if (!(max_lr > 0.0)) throw ParamError("max_lr must be > 0");
  if (batch_size < 1) throw ParamError("batch_size must be >= 1");
}

double learning_rate(Schedule schedule, double max_lr, std::int64_t step,
                     std::int64_t total_steps) {
  if (schedule == Schedule::kConstant) return max_lr;
  if (total_steps <= 1) return max_lr;
  const double t = static_cast<double>(step) / static_cast<double>(total_steps);
  const double warm = 0.3;
  if (t < warm) return max_lr * (t / warm);
  return max_lr * (1.0 - (t - warm) / (1.0 - warm));
}

AdamState make_adam_state(const Model& model) {
  AdamState state;
  state.m.reserve(model.params().size());
  state.v.reserve(model.params().size());
  for (const auto& p : model.params()) {
    state.m.push_back(Tensor::zeros(p.value.shape()));
    state.v.push_back(Tensor::zeros(p.value.shape()));
  }
  return state;
}

void adam_step(AdamState& state, Model& model, const std::vector<Tensor>& grads, double lr) {
  auto& params = model.params();
  if (grads.size() != params.size() || state.m.size() != params.size())
    throw ParamError("adam_step: gradient/state size mismatch");

  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));

  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i].value;
    const Tensor& g = grads[i];
    if (!p.same_shape(g))
      throw ParamError("adam_step: gradient shape " + g.shape_str() + " for '" +
                       params[i].name + "' does not match " + p.shape_str());
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (std::int64_t j = 0; j < p.size(); ++j) {
      const double gj = g[j];
      if (!std::isfinite(gj))
        throw DivergenceError("non-finite gradient for '" + params[i].name + "' at element " +
                              std::to_string(j));
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * gj;
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * gj * gj;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

void init_params(Model& model, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& p : model.params()) {
    switch (p.init) {
      case InitKind::kAlphaLogit:
        for (std::int64_t j = 0; j < p.value.size(); ++j) p.value[j] = rng.normal(0.0, 0.4);
        break;
      case InitKind::kBetaLogit:
        for (std::int64_t j = 0; j < p.value.size(); ++j) p.value[j] = rng.normal(-3.0, 0.3);
        break;
      case InitKind::kUniformFanIn: {
        if (p.fan_in < 1)
          throw ParamError("parameter '" + p.name + "' lacks a fan-in for uniform init");
        const double bound = 1.0 / std::sqrt(static_cast<double>(p.fan_in));
        for (std::int64_t j = 0; j < p.value.size(); ++j)
          p.value[j] = rng.uniform(-bound, bound);
        break;
      }
      case InitKind::kZero:
        for (std::int64_t j = 0; j < p.value.size(); ++j) p.value[j] = 0.0;
        break;
    }
  }
}

double RunRecord::final_error() const {
  if (epochs.empty()) throw ParamError("run record holds no evaluations");
  return epochs.back().test_error;
}

double batch_loss(const Model& model, const Dataset& ds, std::span<const std::int64_t> rows) {
  Tape tape;
  auto [images, labels] = gather(ds, rows);
  const Var logits = model.logits(tape, images);
  return tape.softmax_cross_entropy(logits, labels).value().item();
}

double evaluate(const Model& model, const Dataset& ds) {
  constexpr std::int64_t kChunk = 200;
  std::int64_t wrong = 0;
  for (const auto& rows : batches(ds.count(), kChunk, 0, false)) {
    Tape tape;
    auto [images, labels] = gather(ds, rows);
    const Var logits = model.logits(tape, images);
    const std::vector<int> picks = argmax_rows(logits.value());
    for (std::size_t i = 0; i < picks.size(); ++i)
      if (picks[i] != labels[i]) ++wrong;
  }
  if (ds.count() == 0) return 0.0;
  return 100.0 * static_cast<double>(wrong) / static_cast<double>(ds.count());
}

RunRecord fit(Model& model, const Dataset& train, const Dataset& test,
              const TrainConfig& config, std::ostream* progress) {
  config.validate();
  RunRecord rec;
  rec.model = model.config();
  rec.config = config;
  rec.param_count = model.param_count();

  if (config.epochs == 0) {
    const auto start = std::chrono::steady_clock::now();
    const double err = evaluate(model, test);
    rec.epochs.push_back({0, std::nullopt, err, seconds_since(start)});
    if (progress)
      (*progress) << "epoch 0/0  test " << std::fixed << std::setprecision(2) << err << "%\n";
    return rec;
  }

  AdamState adam = make_adam_state(model);
  const std::int64_t steps_per_epoch =
      (train.count() + config.batch_size - 1) / config.batch_size;
  const std::int64_t total_steps = steps_per_epoch * config.epochs;
  std::int64_t step = 0;

  for (std::int64_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    double loss_sum = 0.0;
    std::int64_t batches_done = 0;
    try {
      for (const auto& rows :
           batches(train.count(), config.batch_size, epoch_seed(config.seed, epoch), true)) {
        Tape tape;
        std::vector<Var> leaves;
        auto [images, labels] = gather(train, rows);
        const Var logits = model.logits(tape, images, &leaves);
        const Var loss = tape.softmax_cross_entropy(logits, labels);
        const double loss_val = loss.value().item();
        if (!std::isfinite(loss_val)) throw DivergenceError("training loss is not finite");
        tape.backward(loss);
        std::vector<Tensor> grads;
        grads.reserve(leaves.size());
        for (const Var& leaf : leaves) grads.push_back(tape.grad(leaf));
        adam_step(adam, model, grads,
                  learning_rate(config.schedule, config.max_lr, step, total_steps));
        ++step;
        loss_sum += loss_val;
        ++batches_done;
      }
    } catch (const DivergenceError& e) {
      rec.diverged = true;
      rec.divergence_note = e.what();
    } catch (const TensorError& e) {
      rec.diverged = true;
      rec.divergence_note = e.what();
    }
    if (rec.diverged) {
      if (progress)
        (*progress) << "epoch " << epoch << "/" << config.epochs
                    << "  diverged: " << rec.divergence_note << "\n";
      break;
    }

    const double train_loss = loss_sum / static_cast<double>(batches_done);
    const double err = evaluate(model, test);
    rec.epochs.push_back({epoch, train_loss, err, seconds_since(start)});
    if (progress)
      (*progress) << "epoch " << epoch << "/" << config.epochs << "  loss " << std::fixed
                  << std::setprecision(4) << train_loss << "  test " << std::setprecision(2)
                  << err << "%  (" << std::setprecision(1) << rec.epochs.back().seconds
                  << " s)\n";
  }
  return rec;
}

RunStats aggregate_runs(const std::vector<RunRecord>& runs) {
  RunStats stats;
  for (const auto& run : runs)
    if (!run.epochs.empty()) stats.final_errors.push_back(run.final_error());
  if (stats.final_errors.empty())
    throw ParamError("no completed runs to aggregate");
  double sum = 0.0;
  for (const double e : stats.final_errors) sum += e;
  const auto n = static_cast<double>(stats.final_errors.size());
  stats.mean_error = sum / n;
  if (stats.final_errors.size() > 1) {
    double ss = 0.0;
    for (const double e : stats.final_errors)
      ss += (e - stats.mean_error) * (e - stats.mean_error);
    stats.std_error = std::sqrt(ss / (n - 1.0));
  }
  return stats;
}

void write_runrecords_jsonl(const std::filesystem::path& path,
                            const std::vector<RunRecord>& runs) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  for (std::size_t r = 0; r < runs.size(); ++r) {
    json cfg = config_json(runs[r]);
    cfg["type"] = "config";
    cfg["run"] = r;
    out << cfg.dump() << "\n";
    for (const auto& ep : runs[r].epochs) {
      json line{{"type", "epoch"}, {"run", r}, {"epoch", ep.epoch},
                {"test_error", ep.test_error}};
      line["train_loss"] = ep.train_loss ? json(*ep.train_loss) : json(nullptr);
      out << line.dump() << "\n";
    }
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

void write_summary_json(const std::filesystem::path& path, const std::vector<RunRecord>& runs) {
  json doc;
  if (!runs.empty()) {
    doc = config_json(runs.front());
    doc.erase("seed");
    doc.erase("diverged");
  }
  json per_run = json::array();
  for (std::size_t r = 0; r < runs.size(); ++r) {
    json entry{{"run", r}, {"seed", runs[r].config.seed}, {"diverged", runs[r].diverged}};
    entry["final_error"] =
        runs[r].epochs.empty() ? json(nullptr) : json(runs[r].final_error());
    per_run.push_back(entry);
  }
  doc["runs"] = per_run;
  const RunStats stats = aggregate_runs(runs);
  doc["mean_error"] = stats.mean_error;
  doc["std_error"] = stats.std_error;

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << doc.dump(2) << "\n";
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

void write_timing_json(const std::filesystem::path& path, const std::vector<RunRecord>& runs) {
  json per_run = json::array();
  for (std::size_t r = 0; r < runs.size(); ++r) {
    json epoch_seconds = json::array();
    double total = 0.0;
    for (const auto& ep : runs[r].epochs) {
      epoch_seconds.push_back(ep.seconds);
      total += ep.seconds;
    }
    per_run.push_back(json{{"run", r},
                           {"seed", runs[r].config.seed},
                           {"epoch_seconds", epoch_seconds},
                           {"total_seconds", total}});
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << json{{"runs", per_run}}.dump(2) << "\n";
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace del
