#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "del/autodiff.hpp"
#include "del/checkpoint.hpp"
#include "del/common.hpp"
#include "del/data.hpp"
#include "del/layers.hpp"
#include "del/render.hpp"
#include "del/rng.hpp"
#include "del/selfcheck.hpp"
#include "del/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
  std::string model = "logistic-el";
  std::int64_t b = 5;
  std::int64_t b0 = 0;
  std::string dataset = "mnist";
  std::int64_t epochs = 20;
  double lr = 0.002;
  std::string schedule = "constant";
  std::int64_t batch_size = 64;
  std::uint64_t seed = 1;
  std::int64_t runs = 1;
  std::string out = "out";
  std::string data_dir;
  std::string config_path;
  std::string squash = "appendix";
};

struct OptionRefs {
  CLI::Option* model = nullptr;
  CLI::Option* b = nullptr;
  CLI::Option* b0 = nullptr;
  CLI::Option* dataset = nullptr;
  CLI::Option* epochs = nullptr;
  CLI::Option* lr = nullptr;
  CLI::Option* schedule = nullptr;
  CLI::Option* batch_size = nullptr;
  CLI::Option* seed = nullptr;
  CLI::Option* runs = nullptr;
  CLI::Option* out = nullptr;
  CLI::Option* data_dir = nullptr;
};

OptionRefs add_run_options(CLI::App* cmd, Options& opt) {
  OptionRefs refs;
  refs.model = cmd->add_option("--model", opt.model,
                               "fc0, fc50, logistic-el, logistic-el-mnn, "
                               "adaptive-conv-demo, adaptive-pool-demo");
  refs.b = cmd->add_option("--B", opt.b, "density grid size");
  refs.b0 = cmd->add_option("--B0", opt.b0, "micro-net grid size");
  refs.dataset = cmd->add_option("--dataset", opt.dataset, "mnist or cifar10");
  refs.epochs = cmd->add_option("--epochs", opt.epochs, "training epochs");
  refs.lr = cmd->add_option("--lr", opt.lr, "maximum learning rate");
  refs.schedule = cmd->add_option("--schedule", opt.schedule, "constant or one-cycle");
  refs.batch_size = cmd->add_option("--batch-size", opt.batch_size, "items per batch");
  refs.seed = cmd->add_option("--seed", opt.seed, "base seed; run r uses seed + r");
  refs.runs = cmd->add_option("--runs", opt.runs, "independent runs to aggregate");
  refs.out = cmd->add_option("--out", opt.out, "output directory");
  refs.data_dir = cmd->add_option("--data-dir", opt.data_dir,
                                  "dataset root (overrides DATA_DIR)");
  cmd->add_option("--config", opt.config_path, "JSON config; flags win over its values");
  return refs;
}

/// flags > JSON config > defaults.
void apply_config_file(Options& opt, const OptionRefs& refs) {
  if (opt.config_path.empty()) return;
  std::ifstream in(opt.config_path);
  if (!in) throw del::IoError("cannot open config '" + opt.config_path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw del::IoError("bad JSON in '" + opt.config_path + "': " + e.what());
  }
  const auto take = [&j](const char* key, CLI::Option* flag, auto& target) {
    if (j.contains(key) && (flag == nullptr || flag->count() == 0))
      target = j.at(key).get<std::decay_t<decltype(target)>>();
  };
  take("model", refs.model, opt.model);
  take("B", refs.b, opt.b);
  take("B0", refs.b0, opt.b0);
  take("dataset", refs.dataset, opt.dataset);
  take("epochs", refs.epochs, opt.epochs);
  take("lr", refs.lr, opt.lr);
  take("schedule", refs.schedule, opt.schedule);
  take("batch_size", refs.batch_size, opt.batch_size);
  take("seed", refs.seed, opt.seed);
  take("runs", refs.runs, opt.runs);
  take("out", refs.out, opt.out);
  take("data_dir", refs.data_dir, opt.data_dir);
  take("squash", nullptr, opt.squash);
}

fs::path resolve_data_dir(const Options& opt) {
  if (!opt.data_dir.empty()) return opt.data_dir;
  if (const char* env = std::getenv("DATA_DIR"); env && *env) return env;
  return "data";
}

del::ModelConfig model_config(const Options& opt) {
  const del::ModelKind kind = del::model_kind_from_name(opt.model);
  std::int64_t n = 28, channels = 1;
  if (opt.dataset == "cifar10") {
    n = 32;
    channels = 3;
  } else if (opt.dataset != "mnist") {
    throw del::ParamError("unknown dataset '" + opt.dataset + "' (mnist, cifar10)");
  }
  del::ModelConfig cfg = del::preset(kind, n, channels, opt.b, opt.b0);
  cfg.squash = del::squash_form_from_name(opt.squash);
  return cfg;
}

del::TrainConfig train_config(const Options& opt) {
  del::TrainConfig tc;
  tc.epochs = opt.epochs;
  tc.max_lr = opt.lr;
  tc.schedule = del::schedule_from_name(opt.schedule);
  tc.batch_size = opt.batch_size;
  tc.seed = opt.seed;
  tc.validate();
  return tc;
}

std::string model_label(const del::ModelConfig& cfg) {
  std::string label = del::model_kind_name(cfg.kind);
  if (cfg.kind == del::ModelKind::kLogisticEl || cfg.kind == del::ModelKind::kLogisticElMnn ||
      cfg.kind == del::ModelKind::kAdaptiveConvDemo ||
      cfg.kind == del::ModelKind::kAdaptivePoolDemo)
    label += " B=" + std::to_string(cfg.b);
  if (cfg.kind == del::ModelKind::kLogisticElMnn) label += " B0=" + std::to_string(cfg.b0);
  return label;
}

std::pair<del::Dataset, del::Dataset> load_dataset(const Options& opt) {
  const fs::path dir = resolve_data_dir(opt);
  try {
    return opt.dataset == "cifar10" ? del::load_cifar10(dir) : del::load_mnist(dir);
  } catch (const del::IoError& e) {
    std::cerr << "error: " << e.what() << "\n"
              << "hint: place the " << opt.dataset << " files under '" << dir.string()
              << "' (raw or .gz), or point --data-dir / DATA_DIR at them.\n";
    std::exit(2);
  }
}

int cmd_train(const Options& opt) {
  const del::ModelConfig cfg = model_config(opt);
  const del::TrainConfig base = train_config(opt);
  if (opt.runs < 1) throw del::ParamError("--runs must be >= 1");

  {
    const del::Model probe(cfg);
    std::cout << "# parameters " << probe.param_count() << "\n";
  }

  auto [train_ds, test_ds] = load_dataset(opt);
  fs::create_directories(opt.out);

  std::vector<del::RunRecord> records;
  for (std::int64_t r = 0; r < opt.runs; ++r) {
    del::TrainConfig tc = base;
    tc.seed = base.seed + static_cast<std::uint64_t>(r);
    del::Model model(cfg);
    del::init_params(model, tc.seed);
    std::cout << "run " << r << " (seed " << tc.seed << ")\n";
    records.push_back(del::fit(model, train_ds, test_ds, tc, &std::cout));

    const fs::path ckpt = fs::path(opt.out) / ("run" + std::to_string(r) + ".ckpt");
    del::save_checkpoint(ckpt, model, tc.seed);
    if (cfg.kind == del::ModelKind::kLogisticEl) {
      del::write_pgm(fs::path(opt.out) / ("rf_run" + std::to_string(r) + ".pgm"),
                     del::receptive_field_image(model));
    }
  }

  del::write_runrecords_jsonl(fs::path(opt.out) / "runrecord.jsonl", records);
  del::write_summary_json(fs::path(opt.out) / "summary.json", records);
  del::write_timing_json(fs::path(opt.out) / "timing.json", records);

  const del::RunStats stats = del::aggregate_runs(records);
  char row[160];
  std::snprintf(row, sizeof row, "| %-28s | %6.2f +/- %.2f | %8lld |",
                model_label(cfg).c_str(), stats.mean_error, stats.std_error,
                static_cast<long long>(records.front().param_count));
  std::cout << "| model                        | error (%)       | # params |\n"
            << row << "\n";

  for (const auto& rec : records)
    if (rec.diverged) {
      std::cerr << "error: a run diverged: " << rec.divergence_note << "\n";
      return 1;
    }
  return 0;
}

int cmd_render_rf(const std::string& checkpoint, const std::string& input,
                  const std::string& out_dir) {
  const del::Checkpoint ck = del::load_checkpoint(checkpoint);
  const del::Model model = del::restore_model(ck);

  del::Tensor input_image;
  const del::Tensor* input_ptr = nullptr;
  if (!input.empty()) {
    if (model.config().channels != 1)
      throw del::ParamError("PGM input supports single-channel models only");
    const del::Tensor raw = del::read_pgm(input);
    if (raw.dim(0) != model.config().n || raw.dim(1) != model.config().n)
      throw del::ParamError("input image is " + raw.shape_str() + ", model expects " +
                            std::to_string(model.config().n) + "x" +
                            std::to_string(model.config().n));
    input_image = del::Tensor({1, model.config().n, model.config().n});
    for (std::int64_t i = 0; i < raw.size(); ++i) input_image[i] = raw[i] / 255.0;
    input_ptr = &input_image;
  }

  const del::Tensor field = del::receptive_field_image(model, input_ptr);
  fs::create_directories(out_dir);
  const std::string stem = fs::path(checkpoint).stem().string();
  const fs::path pgm = fs::path(out_dir) / ("rf_" + stem + ".pgm");
  del::write_pgm(pgm, field);
  std::cout << "wrote " << pgm.string() << "\n";
  if (del::png_supported()) {
    const fs::path png = fs::path(out_dir) / ("rf_" + stem + ".png");
    del::write_png(png, field);
    std::cout << "wrote " << png.string() << "\n";
  }
  return 0;
}

int cmd_bench(const Options& opt, int repeats, std::int64_t items) {
  const del::ModelConfig cfg = model_config(opt);
  const del::TrainConfig tc = train_config(opt);

  del::Rng rng(tc.seed);
  del::Dataset train;
  train.images = del::Tensor({items, cfg.channels, cfg.n, cfg.n});
  for (std::int64_t i = 0; i < train.images.size(); ++i)
    train.images[i] = rng.next_double();
  for (std::int64_t i = 0; i < items; ++i)
    train.labels.push_back(static_cast<int>(rng.below(10)));

  del::Model model(cfg);
  del::init_params(model, tc.seed);
  std::cout << "bench " << model_label(cfg) << ", # parameters " << model.param_count()
            << ", " << items << " synthetic items/epoch\n";

  std::vector<double> seconds;
  for (int r = 0; r < repeats; ++r) {
    del::AdamState adam = del::make_adam_state(model);
    const auto start = std::chrono::steady_clock::now();
    for (const auto& rows : del::batches(items, tc.batch_size, tc.seed, true)) {
      del::Tape tape;
      del::Tensor images({static_cast<std::int64_t>(rows.size()), cfg.channels, cfg.n, cfg.n});
      std::vector<int> labels(rows.size());
      const std::int64_t per = cfg.channels * cfg.n * cfg.n;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        std::copy(train.images.data() + rows[i] * per,
                  train.images.data() + (rows[i] + 1) * per,
                  images.data() + static_cast<std::int64_t>(i) * per);
        labels[i] = train.labels[static_cast<std::size_t>(rows[i])];
      }
      std::vector<del::Var> leaves;
      const del::Var logits = model.logits(tape, images, &leaves);
      const del::Var loss = tape.softmax_cross_entropy(logits, labels);
      tape.backward(loss);
      std::vector<del::Tensor> grads;
      for (const del::Var& leaf : leaves) grads.push_back(tape.grad(leaf));
      del::adam_step(adam, model, grads, tc.max_lr);
    }
    seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    std::cout << "  epoch " << r + 1 << ": " << seconds.back() << " s\n";
  }

  double mean = 0.0;
  for (const double s : seconds) mean += s;
  mean /= static_cast<double>(seconds.size());
  double var = 0.0;
  for (const double s : seconds) var += (s - mean) * (s - mean);
  const double sd = seconds.size() > 1
                        ? std::sqrt(var / static_cast<double>(seconds.size() - 1))
                        : 0.0;
  std::cout << "epoch time " << mean << " +/- " << sd << " s over " << repeats << " runs\n";
  return 0;
}

int cmd_verify() {
  const std::vector<del::CheckResult> results = del::run_selfchecks();
  for (const auto& r : results) {
    std::cout << (r.passed ? "[ok]   " : "[FAIL] ") << r.name;
    if (!r.detail.empty()) std::cout << "  (" << r.detail << ")";
    std::cout << "\n";
  }
  const bool ok = del::all_passed(results);
  std::cout << (ok ? "all checks passed" : "CHECKS FAILED") << "\n";
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"density-embedding layers: train, render, bench, verify"};
  app.require_subcommand(1);

  Options train_opt;
  CLI::App* train_cmd = app.add_subcommand("train", "train a model and log the run");
  const OptionRefs train_refs = add_run_options(train_cmd, train_opt);

  std::string ckpt_path, input_path, render_out = ".";
  CLI::App* render_cmd =
      app.add_subcommand("render-rf", "draw the summed receptive-field densities");
  render_cmd->add_option("--checkpoint", ckpt_path, "checkpoint to draw")->required();
  render_cmd->add_option("--input", input_path,
                         "input image (PGM); required for micro-net models");
  render_cmd->add_option("--out", render_out, "output directory");

  Options bench_opt;
  int bench_repeats = 3;
  std::int64_t bench_items = 10000;
  CLI::App* bench_cmd = app.add_subcommand("bench", "time training epochs (synthetic data)");
  const OptionRefs bench_refs = add_run_options(bench_cmd, bench_opt);
  bench_cmd->add_option("-r,--repeats", bench_repeats, "epochs to time");
  bench_cmd->add_option("--items", bench_items, "synthetic items per epoch");

  CLI::App* verify_cmd = app.add_subcommand("verify", "run the fast invariant battery");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) {
      apply_config_file(train_opt, train_refs);
      return cmd_train(train_opt);
    }
    if (render_cmd->parsed()) return cmd_render_rf(ckpt_path, input_path, render_out);
    if (bench_cmd->parsed()) {
      apply_config_file(bench_opt, bench_refs);
      return cmd_bench(bench_opt, bench_repeats, bench_items);
    }
    if (verify_cmd->parsed()) return cmd_verify();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
