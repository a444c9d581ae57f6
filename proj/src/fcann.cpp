#include "solarqr/fcann.hpp"

#include "solarqr/parallel.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>

namespace solarqr::fcann {

using nnet::Activation;

nnet::ParamPack make_layout(index_t inputs, index_t hidden) {
  nnet::ParamPack pack;
  pack.add("W1", hidden, inputs);
  pack.add("b1", hidden);
  pack.add("W2", 1, hidden);
  pack.add("b2", 1);
  return pack;
}

namespace {

nnet::DenseParams<real> layer(const nnet::ParamPack& layout, const vec& params, const char* W, const char* b) {
  return {layout.view(W, params), layout.view(b, params)};
}

real empirical_quantile(vec y, real tau) {
  std::sort(y.data(), y.data() + y.size());
  // Lower tau-quantile: smallest value with empirical CDF >= tau.
  const auto k = static_cast<index_t>(std::ceil(tau * static_cast<real>(y.size()))) - 1;
  return y[std::clamp<index_t>(k, 0, y.size() - 1)];
}

}  // namespace

vec forward(const nnet::ParamPack& layout, const vec& params, const Eigen::Ref<const mat>& X) {
  const auto l1 = layer(layout, params, "W1", "b1");
  const auto l2 = layer(layout, params, "W2", "b2");
  if (X.cols() != l1.inputs())
    throw PreconditionError("FCANN: input has " + std::to_string(X.cols()) + " columns, model expects " +
                            std::to_string(l1.inputs()));
  const mat hidden = nnet::dense_forward(l1, X.transpose(), Activation::tanh);
  return nnet::dense_forward(l2, hidden, Activation::identity).transpose();
}

real loss_and_gradient(const nnet::ParamPack& layout, const vec& params, const Eigen::Ref<const mat>& X,
                       const Eigen::Ref<const vec>& y, real tau, const mat* hidden_mask, vec& gradient,
                       real smoothing_eta) {
  const auto l1 = layer(layout, params, "W1", "b1");
  const auto l2 = layer(layout, params, "W2", "b2");
  require(X.cols() == l1.inputs() && X.rows() == y.size(), "FCANN loss: shape mismatch");
  const mat xt = X.transpose();
  const mat hidden = nnet::dense_forward(l1, xt, Activation::tanh);
  const mat dropped = hidden_mask ? mat(hidden.cwiseProduct(*hidden_mask)) : hidden;
  const mat out = nnet::dense_forward(l2, dropped, Activation::identity);

  const auto pg = nnet::pinball_subgradient(out.row(0).transpose(), y, tau, smoothing_eta);
  const mat upstream = pg.gradient.transpose() / static_cast<real>(y.size());
  auto [g2, d_dropped] = nnet::backprop_dense(l2, dropped, out, upstream, Activation::identity);
  const mat d_hidden = hidden_mask ? mat(d_dropped.cwiseProduct(*hidden_mask)) : d_dropped;
  auto [g1, d_x] = nnet::backprop_dense(l1, xt, hidden, d_hidden, Activation::tanh);

  gradient.resize(params.size());
  layout.view("W1", gradient) = g1.dW;
  layout.view("b1", gradient) = g1.db;
  layout.view("W2", gradient) = g2.dW;
  layout.view("b2", gradient) = g2.db;
  return pg.loss;
}

FCANNModel fit_fcann(const Eigen::Ref<const mat>& X, const Eigen::Ref<const vec>& y, qcore::QuantileLevel tau,
                     const nnet::TrainConfig& config) {
  config.validate();
  require(X.rows() == y.size() && X.rows() > 0, "fit_fcann: empty or mismatched training data");
  FCANNModel model;
  model.tau = tau;
  model.config = config;
  model.params = make_layout(X.cols());

  std::mt19937_64 init_rng(config.seed);
  nnet::glorot_uniform(model.params.view("W1"), init_rng);
  model.params.view("b2")(0, 0) = empirical_quantile(y, tau);

  const mat Xc = X;
  const vec yc = y;
  const auto& layout = model.params;
  auto gather = [&](std::span<const index_t> rows, mat& Xb, vec& yb) {
    Xb.resize(static_cast<index_t>(rows.size()), Xc.cols());
    yb.resize(static_cast<index_t>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      Xb.row(static_cast<index_t>(i)) = Xc.row(rows[i]);
      yb[static_cast<index_t>(i)] = yc[rows[i]];
    }
  };

  const auto objective = [&](const vec& p, std::span<const index_t> rows, std::mt19937_64& rng, vec& grad) {
    mat Xb;
    vec yb;
    gather(rows, Xb, yb);
    const mat mask = nnet::dropout_mask(kHiddenUnits, Xb.rows(), config.dropout_rate, rng);
    return loss_and_gradient(layout, p, Xb, yb, tau, config.dropout_rate > 0 ? &mask : nullptr, grad,
                             config.smoothing_eta);
  };
  const auto evaluate = [&](const vec& p, std::span<const index_t> rows) {
    mat Xb;
    vec yb;
    gather(rows, Xb, yb);
    return qcore::mean_pinball(forward(layout, p, Xb), yb, tau.value());
  };

  auto result = nnet::train(model.params.values(), X.rows(), config, objective, evaluate);
  model.params.values() = std::move(result.params);
  model.final_validation_loss = result.validation_loss;
  return model;
}

FCANNModel fit_fcann(const features::SampleSet& samples, const features::FeatureSpec& spec, qcore::QuantileLevel tau,
                     const nnet::TrainConfig& config) {
  auto model = fit_fcann(spec.inputs(samples.X), samples.Y.col(spec.horizon), tau, config);
  model.horizon = spec.horizon;
  return model;
}

vec predict_fcann(const FCANNModel& model, const Eigen::Ref<const mat>& X) {
  return forward(model.params, model.params.values(), X).cwiseMax(0.0).cwiseMin(1.0);
}

FCANNFamily fit_fcann_family(const features::SampleSet& train, std::span<const features::FeatureSpec> specs,
                             const qcore::QuantileGrid& grid, const nnet::TrainConfig& config, std::size_t workers) {
  require(specs.size() == static_cast<std::size_t>(kHoursPerDay), "fit_fcann_family: need one FeatureSpec per horizon");
  FCANNFamily family;
  family.taus.assign(grid.levels().begin(), grid.levels().end());
  family.specs.assign(specs.begin(), specs.end());
  family.models.assign(kHoursPerDay, {});
  std::vector<mat> inputs(kHoursPerDay);
  for (int h = 0; h < kHoursPerDay; ++h) {
    family.zero_horizon[static_cast<std::size_t>(h)] = train.night.contains(h);
    if (family.zero_horizon[static_cast<std::size_t>(h)]) continue;
    features::validate(specs[static_cast<std::size_t>(h)], train.X.cols());
    inputs[static_cast<std::size_t>(h)] = specs[static_cast<std::size_t>(h)].inputs(train.X);
    family.models[static_cast<std::size_t>(h)].resize(static_cast<std::size_t>(grid.size()));
  }

  const auto nq = static_cast<std::size_t>(grid.size());
  parallel_for(kHoursPerDay * nq, workers, [&](std::size_t task) {
    const auto h = task / nq;
    const auto q = task % nq;
    if (family.zero_horizon[h]) return;
    auto cfg = config;
    cfg.seed = derive_seed(config.seed, task);
    try {
      auto model = fit_fcann(inputs[h], train.Y.col(static_cast<index_t>(h)),
                             qcore::QuantileLevel(grid[static_cast<index_t>(q)]), cfg);
      model.horizon = static_cast<int>(h);
      family.models[h][q] = std::move(model);
    } catch (const TrainingError& e) {
      throw TrainingError(std::string("FCANN horizon ") + std::to_string(h) + ", tau " +
                          std::to_string(grid[static_cast<index_t>(q)]) + ": " + e.what());
    }
  });
  return family;
}

std::vector<qcore::QuantileForecast> predict_fcann_family(const FCANNFamily& family,
                                                          const features::SampleSet& samples) {
  const auto nq = static_cast<index_t>(family.taus.size());
  std::vector<qcore::QuantileForecast> out(static_cast<std::size_t>(samples.rows()));
  for (std::size_t d = 0; d < out.size(); ++d) {
    out[d].day_index = samples.day_indices[d];
    out[d].estimates = mat::Zero(kHoursPerDay, nq);
  }
  for (int h = 0; h < kHoursPerDay; ++h) {
    if (family.zero_horizon[static_cast<std::size_t>(h)]) continue;
    const mat X = family.specs[static_cast<std::size_t>(h)].inputs(samples.X);
    for (index_t q = 0; q < nq; ++q) {
      const auto& m = family.models[static_cast<std::size_t>(h)][static_cast<std::size_t>(q)];
      const vec pred = forward(m.params, m.params.values(), X);
      for (std::size_t d = 0; d < out.size(); ++d) out[d].estimates(h, q) = pred[static_cast<index_t>(d)];
    }
  }
  return out;
}

nlohmann::json to_json(const FCANNModel& model) {
  auto j = nnet::to_json(model.params);
  j["tau"] = model.tau;
  j["horizon"] = model.horizon;
  j["final_validation_loss"] = model.final_validation_loss;
  return j;
}

FCANNModel fcann_model_from_json(const nlohmann::json& j) {
  FCANNModel m;
  try {
    m.tau = j.at("tau").get<real>();
    m.horizon = j.at("horizon").get<int>();
    m.final_validation_loss = j.at("final_validation_loss").get<real>();
    index_t inputs = -1;
    for (const auto& a : j.at("arrays"))
      if (a.at("name") == "W1") inputs = a.at("shape").at(1).get<index_t>();
    if (inputs < 0) throw ConfigError("FCANN record lacks W1");
    m.params = make_layout(inputs);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed FCANN record: ") + e.what());
  }
  nnet::load_json(m.params, j);
  return m;
}

}  // namespace solarqr::fcann
