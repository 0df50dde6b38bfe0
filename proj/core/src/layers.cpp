#include "del/layers.hpp"

#include <algorithm>
#include <cmath>

namespace del {

ModelKind model_kind_from_name(const std::string& name) {
  if (name == "fc0") return ModelKind::kFc0;
  if (name == "fc50") return ModelKind::kFc50;
  if (name == "logistic-el") return ModelKind::kLogisticEl;
  if (name == "logistic-el-mnn") return ModelKind::kLogisticElMnn;
  if (name == "adaptive-conv-demo") return ModelKind::kAdaptiveConvDemo;
  if (name == "adaptive-pool-demo") return ModelKind::kAdaptivePoolDemo;
  throw ParamError("unknown model '" + name +
                   "' (expected fc0, fc50, logistic-el, logistic-el-mnn, "
                   "adaptive-conv-demo, adaptive-pool-demo)");
}

std::string model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::kFc0: return "fc0";
    case ModelKind::kFc50: return "fc50";
    case ModelKind::kLogisticEl: return "logistic-el";
    case ModelKind::kLogisticElMnn: return "logistic-el-mnn";
    case ModelKind::kAdaptiveConvDemo: return "adaptive-conv-demo";
    case ModelKind::kAdaptivePoolDemo: return "adaptive-pool-demo";
  }
  throw ParamError("unhandled model kind");
}

ModelConfig preset(ModelKind kind, std::int64_t n, std::int64_t channels, std::int64_t b,
                   std::int64_t b0) {
  ModelConfig cfg;
  cfg.kind = kind;
  cfg.n = n;
  cfg.channels = channels;
  cfg.b = b;
  cfg.b0 = b0;
  cfg.rf_channels = channels > 1 ? channels : 1;
  return cfg;
}

SquashSpec mu_squash(const ModelConfig& cfg) {
  const double n = static_cast<double>(cfg.n);
  return cfg.squash == SquashForm::kAppendix ? SquashSpec::appendix_mu(n)
                                             : SquashSpec::main_text(n);
}

SquashSpec s_squash(const ModelConfig& cfg) {
  // Both forms share the live scale squash; they differ only in the
  // location gain.
  const double n = static_cast<double>(cfg.n);
  return cfg.squash == SquashForm::kAppendix ? SquashSpec::appendix_s(n)
                                             : SquashSpec::main_text(n);
}

namespace {

Var linear(Tape& tape, Var x, Var w, Var bias) {
  const std::int64_t batch = x.value().dim(0);
  const Var wx = tape.contract(x, w, ContractSpec::matmul());
  return tape.add(wx, tape.outer(tape.constant(Tensor::ones({batch})), bias));
}

/// [RF, B, B, 2] or [B, B, 2] logits -> pair of [RF, B*B] tensors for the
/// t axis (component 0) and u axis (component 1).
std::pair<Var, Var> split_axes(Tape& tape, Var logits, std::int64_t rf, std::int64_t b) {
  const std::int64_t u = b * b;
  const Var flat = tape.reshape(logits, {rf, u, 2});
  const Var t = tape.reshape(tape.slice_last(flat, 0, 1), {rf, u});
  const Var uu = tape.reshape(tape.slice_last(flat, 1, 2), {rf, u});
  return {t, uu};
}

std::int64_t rf_of(const Tensor& alpha, std::int64_t channels, const char* what) {
  if (alpha.rank() == 3) return 1;
  if (alpha.rank() == 4) {
    if (alpha.dim(0) != channels)
      throw TensorError(std::string(what) + ": per-channel logits for " +
                        std::to_string(alpha.dim(0)) + " channels applied to " +
                        std::to_string(channels) + "-channel input");
    return alpha.dim(0);
  }
  throw TensorError(std::string(what) + ": logits must be [B,B,2] or [C,B,B,2], got " +
                    alpha.shape_str());
}

}  // namespace

std::pair<Var, Var> logistic_el_rows(Tape& tape, Var alpha, Var beta, std::int64_t channels,
                                     std::int64_t n_cells, const SquashSpec& mu_spec,
                                     const SquashSpec& s_spec) {
  if (!alpha.value().same_shape(beta.value()))
    throw TensorError("alpha/beta shape mismatch: " + alpha.value().shape_str() + " vs " +
                      beta.value().shape_str());
  const std::int64_t rf = rf_of(alpha.value(), channels, "logistic_el_rows");
  const std::int64_t b = alpha.value().dim(alpha.value().rank() - 2);
  auto [alpha_t, alpha_u] = split_axes(tape, alpha, rf, b);
  auto [beta_t, beta_u] = split_axes(tape, beta, rf, b);
  return {logistic_gamma_rows(tape, alpha_t, beta_t, mu_spec, s_spec, n_cells),
          logistic_gamma_rows(tape, alpha_u, beta_u, mu_spec, s_spec, n_cells)};
}

Var logistic_el_forward(Tape& tape, Var alpha, Var beta, Var x, const SquashSpec& mu_spec,
                        const SquashSpec& s_spec) {
  const Tensor& xv = x.value();
  if (xv.rank() != 4) throw TensorError("logistic_el_forward expects x [batch, C, N, N], got " +
                                        xv.shape_str());
  const std::int64_t batch = xv.dim(0), c = xv.dim(1), n = xv.dim(2);
  if (xv.dim(3) != n)
    throw TensorError("logistic_el_forward expects square images, got " + xv.shape_str());
  const std::int64_t rf = rf_of(alpha.value(), c, "logistic_el_forward");
  const std::int64_t b = alpha.value().dim(alpha.value().rank() - 2);

  auto [gt, gu] = logistic_el_rows(tape, alpha, beta, c, n, mu_spec, s_spec);  // [RF,U,N]
  const std::int64_t u = b * b;

  Var grid;  // [batch, C, U]
  if (rf == 1) {
    const Var gt2 = tape.reshape(gt, {u, n});
    const Var gu2 = tape.reshape(gu, {u, n});
    // over columns: [batch, C, m, U]
    const Var t1 = tape.contract(x, gt2, {{{3, 1}}, {}});
    // over rows, per unit: [U, batch, C]
    const Var t2 = tape.contract(t1, gu2, {{{2, 1}}, {{3, 0}}});
    grid = tape.permute(t2, {1, 2, 0});
  } else {
    // per-channel: [C, batch, m, U]
    const Var t1 = tape.contract(x, gt, {{{3, 2}}, {{1, 0}}});
    // [C, U, batch]
    const Var t2 = tape.contract(t1, gu, {{{2, 2}}, {{0, 0}, {3, 1}}});
    grid = tape.permute(t2, {2, 0, 1});
  }
  return tape.reshape(grid, {batch, c, b, b});
}

std::pair<Var, Var> micro_net_rows(Tape& tape, Var inner_alpha, Var inner_beta, Var w,
                                   Var bias, Var outer_beta, Var x, const SquashSpec& mu_spec,
                                   const SquashSpec& s_spec) {
  const Tensor& xv = x.value();
  if (xv.rank() != 4) throw TensorError("micro_net_rows expects x [batch, C, N, N], got " +
                                        xv.shape_str());
  const std::int64_t batch = xv.dim(0), c = xv.dim(1), n = xv.dim(2);
  const std::int64_t rf = rf_of(outer_beta.value(), c, "micro_net_rows");
  if (rf == 1 && c != 1)
    throw TensorError("micro_net_rows with a shared receptive field supports single-channel "
                      "input only; use per-channel logits for C > 1");
  const std::int64_t b = outer_beta.value().dim(outer_beta.value().rank() - 2);
  const std::int64_t u = b * b;

  const Var h0 = logistic_el_forward(tape, inner_alpha, inner_beta, x, mu_spec, s_spec);
  const std::int64_t f0 = h0.value().size() / batch;
  if (w.value().rank() != 2 || w.value().dim(0) != f0 || w.value().dim(1) != 2 * rf * u)
    throw TensorError("micro-net linear map must be [" + std::to_string(f0) + ", " +
                      std::to_string(2 * rf * u) + "], got " + w.value().shape_str());

  const Var alpha_logits = linear(tape, tape.reshape(h0, {batch, f0}), w, bias);
  const Var alpha_t = tape.reshape(tape.slice_last(alpha_logits, 0, rf * u), {batch, rf, u});
  const Var alpha_u =
      tape.reshape(tape.slice_last(alpha_logits, rf * u, 2 * rf * u), {batch, rf, u});

  const Var ones_batch = tape.constant(Tensor::ones({batch}));
  auto [beta_t, beta_u] = split_axes(tape, outer_beta, rf, b);
  const Var beta_t_b = tape.outer(ones_batch, beta_t);  // [batch, RF, U]
  const Var beta_u_b = tape.outer(ones_batch, beta_u);

  return {logistic_gamma_rows(tape, alpha_t, beta_t_b, mu_spec, s_spec, n),
          logistic_gamma_rows(tape, alpha_u, beta_u_b, mu_spec, s_spec, n)};
}

Var micro_net_forward(Tape& tape, Var inner_alpha, Var inner_beta, Var w, Var bias,
                      Var outer_beta, Var x, const SquashSpec& mu_spec,
                      const SquashSpec& s_spec) {
  const Tensor& xv = x.value();
  if (xv.rank() != 4) throw TensorError("micro_net_forward expects x [batch, C, N, N], got " +
                                        xv.shape_str());
  const std::int64_t batch = xv.dim(0), c = xv.dim(1);
  const std::int64_t b = outer_beta.value().dim(outer_beta.value().rank() - 2);

  auto [gt, gu] =
      micro_net_rows(tape, inner_alpha, inner_beta, w, bias, outer_beta, x, mu_spec, s_spec);

  // [batch, C, m, U] then [batch, C, U]; Gamma is built per batch item
  const Var t1 = tape.contract(x, gt, {{{3, 3}}, {{0, 0}, {1, 1}}});
  const Var t2 = tape.contract(t1, gu, {{{2, 3}}, {{0, 0}, {1, 1}, {3, 2}}});
  return tape.reshape(t2, {batch, c, b, b});
}

Var adaptive_conv_forward(Tape& tape, std::int64_t n, std::int64_t k, std::int64_t s,
                          std::int64_t l, Var p, Var x, bool normalize) {
  if (x.value().rank() != 1 || x.value().dim(0) != n)
    throw TensorError("adaptive_conv_forward expects x [" + std::to_string(n) + "], got " +
                      x.value().shape_str());
  const Var gamma = adaptive_conv_gamma(tape, n, k, s, l, p, normalize);
  return tape.contract(gamma, x, ContractSpec::matvec());
}

Var adaptive_pool_forward(Tape& tape, Var x, Var beta, std::span<const Interval> intervals,
                          std::int64_t n_cells) {
  const Var gamma = adaptive_pool_gamma(tape, x, beta, intervals, n_cells);
  return tape.contract(gamma, x, ContractSpec::matvec());
}

Var bounded_amplitude(Tape& tape, Var lambda, double lo, double hi) {
  if (!(lo < hi))
    throw ParamError("amplitude bounds must satisfy lo < hi, got [" + std::to_string(lo) +
                     ", " + std::to_string(hi) + "]");
  return tape.shift(tape.scale(tape.sigmoid(lambda), hi - lo), lo);
}

Model::Model(ModelConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.n < 1 || cfg_.channels < 1 || cfg_.classes < 2)
    throw ParamError("model needs n >= 1, channels >= 1, classes >= 2");
  if (cfg_.rf_channels != 1 && cfg_.rf_channels != cfg_.channels)
    throw ParamError("rf_channels must be 1 (shared) or equal to channels, got " +
                     std::to_string(cfg_.rf_channels));
  const std::int64_t flat = cfg_.channels * cfg_.n * cfg_.n;
  const std::int64_t rf = cfg_.rf_channels;

  switch (cfg_.kind) {
    case ModelKind::kFc0:
      add_param("head.w", {flat, cfg_.classes}, InitKind::kUniformFanIn, flat);
      add_param("head.b", {cfg_.classes}, InitKind::kUniformFanIn, flat);
      break;

    case ModelKind::kFc50:
      if (cfg_.hidden < 1) throw ParamError("fc50 needs hidden >= 1");
      add_param("fc1.w", {flat, cfg_.hidden}, InitKind::kUniformFanIn, flat);
      add_param("fc1.b", {cfg_.hidden}, InitKind::kUniformFanIn, flat);
      add_param("head.w", {cfg_.hidden, cfg_.classes}, InitKind::kUniformFanIn, cfg_.hidden);
      add_param("head.b", {cfg_.classes}, InitKind::kUniformFanIn, cfg_.hidden);
      break;

    case ModelKind::kLogisticEl: {
      if (cfg_.b < 1) throw ParamError("logistic-el needs B >= 1");
      const std::vector<std::int64_t> shape =
          rf == 1 ? std::vector<std::int64_t>{cfg_.b, cfg_.b, 2}
                  : std::vector<std::int64_t>{rf, cfg_.b, cfg_.b, 2};
      add_param("el.alpha", shape, InitKind::kAlphaLogit);
      add_param("el.beta", shape, InitKind::kBetaLogit);
      const std::int64_t feat = cfg_.channels * cfg_.b * cfg_.b;
      add_param("head.w", {feat, cfg_.classes}, InitKind::kUniformFanIn, feat);
      add_param("head.b", {cfg_.classes}, InitKind::kUniformFanIn, feat);
      break;
    }

    case ModelKind::kLogisticElMnn: {
      if (cfg_.b < 1 || cfg_.b0 < 1) throw ParamError("logistic-el-mnn needs B >= 1 and B0 >= 1");
      if (rf == 1 && cfg_.channels != 1)
        throw ParamError("logistic-el-mnn needs per-channel receptive fields for C > 1");
      const auto el_shape = [rf](std::int64_t b) {
        return rf == 1 ? std::vector<std::int64_t>{b, b, 2}
                       : std::vector<std::int64_t>{rf, b, b, 2};
      };
      add_param("inner.alpha", el_shape(cfg_.b0), InitKind::kAlphaLogit);
      add_param("inner.beta", el_shape(cfg_.b0), InitKind::kBetaLogit);
      const std::int64_t f0 = cfg_.channels * cfg_.b0 * cfg_.b0;
      const std::int64_t logits_out = 2 * rf * cfg_.b * cfg_.b;
      add_param("mnn.w", {f0, logits_out}, InitKind::kUniformFanIn, f0);
      add_param("mnn.b", {logits_out}, InitKind::kUniformFanIn, f0);
      add_param("outer.beta", el_shape(cfg_.b), InitKind::kBetaLogit);
      const std::int64_t feat = cfg_.channels * cfg_.b * cfg_.b;
      add_param("head.w", {feat, cfg_.classes}, InitKind::kUniformFanIn, feat);
      add_param("head.b", {cfg_.classes}, InitKind::kUniformFanIn, feat);
      break;
    }

    case ModelKind::kAdaptiveConvDemo: {
      if (cfg_.b < 1 || cfg_.b > flat) throw ParamError("adaptive-conv-demo needs 1 <= B <= C*N*N");
      const std::int64_t k = cfg_.b, windows = flat / k;
      add_param("conv.lambda", {}, InitKind::kZero);
      add_param("conv.w", {k}, InitKind::kUniformFanIn, k);
      add_param("head.w", {windows, cfg_.classes}, InitKind::kUniformFanIn, windows);
      add_param("head.b", {cfg_.classes}, InitKind::kUniformFanIn, windows);
      break;
    }

    case ModelKind::kAdaptivePoolDemo: {
      if (cfg_.b < 1 || cfg_.b > flat) throw ParamError("adaptive-pool-demo needs 1 <= B <= C*N*N");
      add_param("pool.beta", {}, InitKind::kZero);
      add_param("head.w", {cfg_.b, cfg_.classes}, InitKind::kUniformFanIn, cfg_.b);
      add_param("head.b", {cfg_.classes}, InitKind::kUniformFanIn, cfg_.b);
      break;
    }
  }
}

void Model::add_param(std::string name, std::vector<std::int64_t> shape, InitKind init,
                      std::int64_t fan_in) {
  params_.push_back({std::move(name), Tensor::zeros(std::move(shape)), init, fan_in});
}

std::int64_t Model::param_count() const {
  std::int64_t count = 0;
  for (const auto& p : params_) count += p.value.size();
  return count;
}

std::int64_t param_count(const Model& model) { return model.param_count(); }

Tensor* Model::find(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return &p.value;
  return nullptr;
}

const Tensor* Model::find(const std::string& name) const {
  return const_cast<Model*>(this)->find(name);
}

Var Model::logits(Tape& tape, const Tensor& images, std::vector<Var>* leaves) const {
  if (images.rank() != 4 || images.dim(1) != cfg_.channels || images.dim(2) != cfg_.n ||
      images.dim(3) != cfg_.n)
    throw TensorError("expected images [batch, " + std::to_string(cfg_.channels) + ", " +
                      std::to_string(cfg_.n) + ", " + std::to_string(cfg_.n) + "], got " +
                      images.shape_str());
  const std::int64_t batch = images.dim(0);
  const std::int64_t flat = cfg_.channels * cfg_.n * cfg_.n;

  std::vector<Var> vars;
  vars.reserve(params_.size());
  for (const auto& p : params_) vars.push_back(tape.leaf(p.value));
  if (leaves) *leaves = vars;
  auto var_of = [&](const std::string& name) -> Var {
    for (std::size_t i = 0; i < params_.size(); ++i)
      if (params_[i].name == name) return vars[i];
    throw ParamError("missing parameter " + name);
  };

  const Var x = tape.constant(images);
  const Var xf = tape.reshape(x, {batch, flat});

  switch (cfg_.kind) {
    case ModelKind::kFc0:
      return linear(tape, xf, var_of("head.w"), var_of("head.b"));

    case ModelKind::kFc50: {
      const Var h = tape.vmax(linear(tape, xf, var_of("fc1.w"), var_of("fc1.b")),
                              tape.constant_scalar(0.0));
      return linear(tape, h, var_of("head.w"), var_of("head.b"));
    }

    case ModelKind::kLogisticEl: {
      const Var feat = logistic_el_forward(tape, var_of("el.alpha"), var_of("el.beta"), x,
                                           mu_squash(cfg_), s_squash(cfg_));
      const Var flat_feat = tape.reshape(feat, {batch, cfg_.channels * cfg_.b * cfg_.b});
      return linear(tape, flat_feat, var_of("head.w"), var_of("head.b"));
    }

    case ModelKind::kLogisticElMnn: {
      const Var feat = micro_net_forward(tape, var_of("inner.alpha"), var_of("inner.beta"),
                                         var_of("mnn.w"), var_of("mnn.b"), var_of("outer.beta"),
                                         x, mu_squash(cfg_), s_squash(cfg_));
      const Var flat_feat = tape.reshape(feat, {batch, cfg_.channels * cfg_.b * cfg_.b});
      return linear(tape, flat_feat, var_of("head.w"), var_of("head.b"));
    }

    case ModelKind::kAdaptiveConvDemo: {
      const std::int64_t k = cfg_.b, stride = k, windows = flat / k;
      const std::int64_t span = std::min(2 * k, flat);
      const Var p = bounded_amplitude(tape, var_of("conv.lambda"), 0.25,
                                      static_cast<double>(2 * k));
      // One window's operator; window l covers cells (l-1)*stride onward, so
      // gathering strided spans (zero-padded at the tail) reproduces every
      // Gamma^l at once.
      const Var gamma1 = adaptive_conv_gamma(tape, span, k, stride, 1, p);
      Tensor gathered({batch, windows, span});
      for (std::int64_t item = 0; item < batch; ++item) {
        const double* src = images.data() + item * flat;
        for (std::int64_t l = 0; l < windows; ++l) {
          double* dst = gathered.data() + (item * windows + l) * span;
          const std::int64_t base = l * stride;
          for (std::int64_t j = 0; j < span; ++j)
            dst[j] = base + j < flat ? src[base + j] : 0.0;
        }
      }
      // [K, batch, windows] -> dot with the kernel -> [batch, windows]
      const Var patches = tape.contract(gamma1, tape.constant(gathered), {{{1, 2}}, {}});
      const Var feat = tape.contract(var_of("conv.w"), patches, {{{0, 0}}, {}});
      return linear(tape, feat, var_of("head.w"), var_of("head.b"));
    }

    case ModelKind::kAdaptivePoolDemo: {
      const std::int64_t b = cfg_.b;
      std::vector<Interval> intervals(static_cast<std::size_t>(b));
      const double width = static_cast<double>(flat) / static_cast<double>(b);
      for (std::int64_t i = 0; i < b; ++i)
        intervals[static_cast<std::size_t>(i)] = {width * static_cast<double>(i),
                                                  width * static_cast<double>(i + 1)};
      const Tensor mask = interval_overlap_mask(intervals, flat);
      const Var weights = tape.exp(tape.mul(xf, var_of("pool.beta")));  // [batch, flat]
      // num[n, i, item] = mask[i, n] * weights[item, n]
      const Var num = tape.permute(
          tape.contract(tape.constant(mask), weights, {{}, {{1, 1}}}), {2, 1, 0});
      const Var den_inv = tape.reciprocal(tape.sum_last(num));  // [batch, b]
      const Var gamma =
          tape.mul(num, tape.outer(den_inv, tape.constant(Tensor::ones({flat}))));
      const Var feat = tape.contract(gamma, xf, {{{2, 1}}, {{0, 0}}});  // [batch, b]
      return linear(tape, feat, var_of("head.w"), var_of("head.b"));
    }
  }
  throw ParamError("unhandled model kind");
}

}  // namespace del
