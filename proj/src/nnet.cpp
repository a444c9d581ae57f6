#include "solarqr/nnet.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <numeric>

namespace solarqr::nnet {

PinballGradient pinball_subgradient(const Eigen::Ref<const vec>& y_hat, const Eigen::Ref<const vec>& y, real tau,
                                    real smoothing_eta) {
  require(y_hat.size() == y.size(), "pinball_subgradient: length mismatch");
  require(smoothing_eta >= 0, "pinball_subgradient: smoothing_eta must be non-negative");
  PinballGradient out;
  out.gradient.resize(y.size());
  real total = 0;
  for (index_t i = 0; i < y.size(); ++i) {
    const real e = y_hat[i] - y[i];
    if (smoothing_eta > 0 && std::abs(e) < smoothing_eta) {
      const real u = e + smoothing_eta;
      total += tau * smoothing_eta - tau * u + u * u / (4.0 * smoothing_eta);
      out.gradient[i] = -tau + u / (2.0 * smoothing_eta);
    } else if (e < 0) {
      total += -tau * e;
      out.gradient[i] = -tau;
    } else {
      total += (1.0 - tau) * e;
      out.gradient[i] = 1.0 - tau;
    }
  }
  out.loss = y.size() > 0 ? total / static_cast<real>(y.size()) : 0.0;
  return out;
}

void adam_step(Eigen::Ref<vec> params, const Eigen::Ref<const vec>& gradient, AdamState& state, real learning_rate,
               const AdamHyper& hyper) {
  require(params.size() == gradient.size() && state.m.size() == params.size(), "adam_step: size mismatch");
  ++state.step;
  state.m = hyper.beta1 * state.m + (1.0 - hyper.beta1) * gradient;
  state.v = hyper.beta2 * state.v + (1.0 - hyper.beta2) * gradient.cwiseAbs2();
  const real c1 = 1.0 - std::pow(hyper.beta1, static_cast<real>(state.step));
  const real c2 = 1.0 - std::pow(hyper.beta2, static_cast<real>(state.step));
  params.array() -= learning_rate * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + hyper.epsilon);
}

void glorot_uniform(Eigen::Ref<mat> W, std::mt19937_64& rng) {
  const real limit = std::sqrt(6.0 / static_cast<real>(W.rows() + W.cols()));
  std::uniform_real_distribution<real> dist(-limit, limit);
  for (index_t c = 0; c < W.cols(); ++c)
    for (index_t r = 0; r < W.rows(); ++r) W(r, c) = dist(rng);
}

DenseParams<real> init_dense(index_t out, index_t in, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  DenseParams<real> p{mat(out, in), vec::Zero(out)};
  glorot_uniform(p.W, rng);
  return p;
}

real grad_check(const ApplyFn& apply, const vec& params, const Eigen::Ref<const vec>& y, real tau,
                const Eigen::Ref<const vec>& analytic, real h) {
  require(h > 0, "grad_check: step must be positive");
  require(analytic.size() == params.size(), "grad_check: gradient size mismatch");
  real worst = 0;
  vec probe = params;
  for (index_t k = 0; k < params.size(); ++k) {
    probe[k] = params[k] + h;
    const vec up = apply(probe);
    probe[k] = params[k] - h;
    const vec down = apply(probe);
    probe[k] = params[k];
    const vec ru = up - y, rd = down - y;
    bool crosses = false;
    for (index_t i = 0; i < y.size() && !crosses; ++i)
      crosses = (ru[i] > 0) != (rd[i] > 0) || ru[i] == 0 || rd[i] == 0;
    if (crosses) continue;
    const real numeric =
        (pinball_subgradient(up, y, tau).loss - pinball_subgradient(down, y, tau).loss) / (2.0 * h);
    const real err = std::abs(numeric - analytic[k]) / std::max({std::abs(numeric), std::abs(analytic[k]), 1e-6});
    worst = std::max(worst, err);
  }
  return worst;
}

index_t ParamPack::add(std::string name, index_t rows, index_t cols) {
  for (const auto& b : blocks_) require(b.name != name, "ParamPack: duplicate block '" + name + "'");
  const index_t offset = values_.size();
  blocks_.push_back({std::move(name), offset, rows, cols});
  vec grown = vec::Zero(offset + rows * cols);
  grown.head(offset) = values_;
  values_ = std::move(grown);
  return offset;
}

const ParamPack::Block& ParamPack::block(std::string_view name) const {
  for (const auto& b : blocks_)
    if (b.name == name) return b;
  throw LookupError("ParamPack: no block named '" + std::string(name) + "'");
}

Eigen::Map<mat> ParamPack::view(std::string_view name, vec& storage) const {
  const auto& b = block(name);
  require(storage.size() == values_.size(), "ParamPack::view: storage size mismatch");
  return {storage.data() + b.offset, b.rows, b.cols};
}

Eigen::Map<const mat> ParamPack::view(std::string_view name, const vec& storage) const {
  const auto& b = block(name);
  require(storage.size() == values_.size(), "ParamPack::view: storage size mismatch");
  return {storage.data() + b.offset, b.rows, b.cols};
}

nlohmann::json to_json(const ParamPack& pack) {
  nlohmann::json arrays = nlohmann::json::array();
  for (const auto& b : pack.blocks()) {
    const auto* p = pack.values().data() + b.offset;
    arrays.push_back({{"name", b.name}, {"shape", {b.rows, b.cols}}, {"data", std::vector<real>(p, p + b.rows * b.cols)}});
  }
  return {{"version", kParamFormatVersion}, {"arrays", arrays}};
}

void load_json(ParamPack& pack, const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != kParamFormatVersion) throw ConfigError("unsupported parameter format version");
    for (const auto& a : j.at("arrays")) {
      const auto name = a.at("name").get<std::string>();
      const auto& b = pack.block(name);
      const auto shape = a.at("shape").get<std::vector<index_t>>();
      const auto data = a.at("data").get<std::vector<real>>();
      if (shape.size() != 2 || shape[0] != b.rows || shape[1] != b.cols ||
          static_cast<index_t>(data.size()) != b.rows * b.cols)
        throw ConfigError("parameter block '" + name + "' has the wrong shape");
      std::copy(data.begin(), data.end(), pack.values().data() + b.offset);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed parameter record: ") + e.what());
  }
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
  if (!(dropout_rate >= 0 && dropout_rate < 1)) throw ConfigError("dropout_rate must lie in [0, 1)");
  if (!(validation_fraction > 0 && validation_fraction < 0.5))
    throw ConfigError("validation_fraction must lie in (0, 0.5)");
  if (epochs < 0 || batch_size < 1 || early_stop_patience < 1) throw ConfigError("invalid epoch/batch/patience setting");
  if (smoothing_eta < 0 || clip_norm < 0) throw ConfigError("smoothing_eta and clip_norm must be non-negative");
}

mat dropout_mask(index_t rows, index_t cols, real rate, std::mt19937_64& rng) {
  if (rate <= 0) return mat::Ones(rows, cols);
  std::bernoulli_distribution keep(1.0 - rate);
  const real scale = 1.0 / (1.0 - rate);
  mat m(rows, cols);
  for (index_t c = 0; c < cols; ++c)
    for (index_t r = 0; r < rows; ++r) m(r, c) = keep(rng) ? scale : 0.0;
  return m;
}

TrainResult train(vec initial, index_t n_rows, const TrainConfig& config, const BatchObjective& objective,
                  const Evaluator& evaluate) {
  config.validate();
  require(n_rows >= 1, "train: no training rows");
  index_t n_valid = n_rows >= 2 ? std::max<index_t>(1, static_cast<index_t>(config.validation_fraction *
                                                                             static_cast<real>(n_rows)))
                                : 0;
  const index_t n_fit = n_rows - n_valid;
  std::vector<index_t> fit_rows(static_cast<std::size_t>(n_fit)), valid_rows(static_cast<std::size_t>(n_valid));
  std::iota(fit_rows.begin(), fit_rows.end(), index_t{0});
  std::iota(valid_rows.begin(), valid_rows.end(), n_fit);
  const auto& monitor = n_valid > 0 ? valid_rows : fit_rows;

  std::mt19937_64 rng(config.seed);
  vec params = std::move(initial);
  vec grad(params.size());
  AdamState adam(params.size());

  TrainResult result;
  result.params = params;
  result.validation_loss = evaluate(params, monitor);
  if (!std::isfinite(result.validation_loss)) throw TrainingError("training diverged at epoch 0 (non-finite loss)");

  int since_best = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(fit_rows.begin(), fit_rows.end(), rng);
    for (index_t start = 0; start < n_fit; start += config.batch_size) {
      const auto len = std::min(config.batch_size, n_fit - start);
      const std::span<const index_t> batch(fit_rows.data() + start, static_cast<std::size_t>(len));
      grad.setZero();
      const real loss = objective(params, batch, rng, grad);
      if (!std::isfinite(loss) || !grad.allFinite())
        throw TrainingError("training diverged at epoch " + std::to_string(epoch) + " (non-finite loss)");
      if (config.clip_norm > 0) {
        const real norm = grad.norm();
        if (norm > config.clip_norm) grad *= config.clip_norm / norm;
      }
      adam_step(params, grad, adam, config.learning_rate);
    }
    const real v = evaluate(params, monitor);
    if (!std::isfinite(v))
      throw TrainingError("training diverged at epoch " + std::to_string(epoch) + " (non-finite loss)");
    result.epochs_run = epoch;
    if (v < result.validation_loss) {
      result.validation_loss = v;
      result.params = params;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.early_stop_patience) {
      break;
    }
  }
  return result;
}

}  // namespace solarqr::nnet
