#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "del/autodiff.hpp"
#include "del/densities.hpp"
#include "del/gamma.hpp"
#include "del/layers.hpp"
#include "del/rng.hpp"
#include "del/tensor.hpp"
#include "del/train.hpp"

namespace {

del::Tensor random_tensor(del::Rng& rng, std::vector<std::int64_t> shape, double lo,
                          double hi) {
  del::Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

void bm_gamma_rows_plain(benchmark::State& state) {
  const auto b = state.range(0);
  const std::int64_t n = 28;
  del::Rng rng(1);
  std::vector<del::Density> densities;
  for (std::int64_t i = 0; i < b * b; ++i)
    densities.emplace_back(del::LogisticDensity(rng.uniform(2.0, 26.0), 15.0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(del::build_gamma_1d(densities, n).entries.data());
  }
}
BENCHMARK(bm_gamma_rows_plain)->Arg(5)->Arg(15);

void bm_gamma_rows_taped(benchmark::State& state) {
  const auto b = state.range(0);
  const std::int64_t n = 28;
  del::Rng rng(1);
  const del::Tensor alpha = random_tensor(rng, {b * b}, -1.0, 1.0);
  const del::Tensor beta = random_tensor(rng, {b * b}, -3.5, -2.5);
  const del::SquashSpec mu = del::SquashSpec::appendix_mu(static_cast<double>(n));
  const del::SquashSpec s = del::SquashSpec::appendix_s(static_cast<double>(n));
  for (auto _ : state) {
    del::Tape tape;
    const del::Var rows =
        del::logistic_gamma_rows(tape, tape.leaf(alpha), tape.leaf(beta), mu, s, n);
    benchmark::DoNotOptimize(rows.value().data());
  }
}
BENCHMARK(bm_gamma_rows_taped)->Arg(5)->Arg(15);

void bm_el_forward_backward(benchmark::State& state) {
  const auto b = state.range(0);
  const std::int64_t batch = 64;
  del::ModelConfig cfg = del::preset(del::ModelKind::kLogisticEl, 28, 1, b, 0);
  del::Model model(cfg);
  del::init_params(model, 7);
  del::Rng rng(2);
  const del::Tensor images = random_tensor(rng, {batch, 1, 28, 28}, 0.0, 1.0);
  std::vector<int> labels(batch);
  for (auto& l : labels) l = static_cast<int>(rng.below(10));
  for (auto _ : state) {
    del::Tape tape;
    std::vector<del::Var> leaves;
    const del::Var logits = model.logits(tape, images, &leaves);
    const del::Var loss = tape.softmax_cross_entropy(logits, labels);
    tape.backward(loss);
    benchmark::DoNotOptimize(tape.grad(leaves.front()).data());
  }
}
BENCHMARK(bm_el_forward_backward)->Arg(5)->Arg(15);

void bm_micro_net_forward_backward(benchmark::State& state) {
  const std::int64_t batch = 64;
  del::ModelConfig cfg = del::preset(del::ModelKind::kLogisticElMnn, 28, 1, 10, 5);
  del::Model model(cfg);
  del::init_params(model, 7);
  del::Rng rng(3);
  const del::Tensor images = random_tensor(rng, {batch, 1, 28, 28}, 0.0, 1.0);
  std::vector<int> labels(batch);
  for (auto& l : labels) l = static_cast<int>(rng.below(10));
  for (auto _ : state) {
    del::Tape tape;
    std::vector<del::Var> leaves;
    const del::Var logits = model.logits(tape, images, &leaves);
    const del::Var loss = tape.softmax_cross_entropy(logits, labels);
    tape.backward(loss);
    benchmark::DoNotOptimize(tape.grad(leaves.front()).data());
  }
}
BENCHMARK(bm_micro_net_forward_backward);

void bm_adam_step(benchmark::State& state) {
  del::ModelConfig cfg = del::preset(del::ModelKind::kFc50, 28, 1, 0, 0);
  del::Model model(cfg);
  del::init_params(model, 7);
  del::AdamState adam = del::make_adam_state(model);
  del::Rng rng(4);
  std::vector<del::Tensor> grads;
  for (const auto& p : model.params())
    grads.push_back(random_tensor(rng, p.value.shape(), -0.01, 0.01));
  for (auto _ : state) {
    del::adam_step(adam, model, grads, 0.002);
    benchmark::DoNotOptimize(model.params().front().value.data());
  }
}
BENCHMARK(bm_adam_step);

}  // namespace

BENCHMARK_MAIN();
