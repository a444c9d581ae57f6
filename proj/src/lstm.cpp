#include "solarqr/lstm.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace solarqr::lstm {

using nnet::Activation;

namespace {

std::string block_name(const char* kind, std::size_t gate) { return std::string(kind) + "_" + kGateNames[gate]; }

mat sigmoid_slope(const mat& y) { return y.cwiseProduct((1.0 - y.array()).matrix()); }
mat tanh_slope(const mat& y) { return (1.0 - y.array().square()).matrix(); }

real lower_quantile(std::vector<real> values, real tau) {
  std::sort(values.begin(), values.end());
  const auto k = static_cast<std::ptrdiff_t>(std::ceil(tau * static_cast<real>(values.size()))) - 1;
  return values[static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(k, 0, static_cast<std::ptrdiff_t>(values.size()) - 1))];
}

}  // namespace

nnet::ParamPack make_layout(const LSTMShape& s) {
  nnet::ParamPack pack;
  for (std::size_t k = 0; k < 4; ++k) pack.add(block_name("W", k), s.hidden, s.inputs);
  for (std::size_t k = 0; k < 4; ++k) pack.add(block_name("U", k), s.hidden, s.hidden);
  for (std::size_t k = 0; k < 4; ++k) pack.add(block_name("b", k), s.hidden);
  pack.add("W_out", s.outputs, s.hidden);
  pack.add("b_out", s.outputs);
  return pack;
}

LSTMParams<real> unpack(const nnet::ParamPack& layout, const vec& flat) {
  LSTMParams<real> p;
  for (std::size_t k = 0; k < 4; ++k) {
    p.W[k] = layout.view(block_name("W", k), flat);
    p.U[k] = layout.view(block_name("U", k), flat);
    p.b[k] = layout.view(block_name("b", k), flat);
  }
  p.readout.W = layout.view("W_out", flat);
  p.readout.b = layout.view("b_out", flat);
  return p;
}

mat lstm_forward(const Eigen::Ref<const mat>& sequence, const LSTMParams<real>& p, const LSTMShape& shape,
                 bool all_sigmoid) {
  if (sequence.cols() != shape.steps)
    throw PreconditionError("lstm_forward: sequence has " + std::to_string(sequence.cols()) + " steps, expected " +
                            std::to_string(shape.steps));
  require(sequence.rows() == p.inputs(), "lstm_forward: input width mismatch");
  mat out(p.readout.outputs(), shape.steps);
  vec h = vec::Zero(p.hidden()), c = vec::Zero(p.hidden());
  for (index_t t = 0; t < shape.steps; ++t) {
    auto [h_next, c_next] = lstm_cell(sequence.col(t), h, c, p, all_sigmoid);
    h = std::move(h_next);
    c = std::move(c_next);
    out.col(t) = nnet::dense_forward(p.readout, h, Activation::identity);
  }
  return out;
}

real loss_and_gradient(const nnet::ParamPack& layout, const vec& flat, const LSTMShape& shape,
                       std::span<const mat> step_inputs, const Eigen::Ref<const mat>& targets,
                       std::span<const char> active_steps, std::span<const real> taus, std::span<const mat> dropout,
                       bool all_sigmoid, vec& gradient, real smoothing_eta) {
  const auto T = static_cast<std::size_t>(shape.steps);
  require(step_inputs.size() == T && active_steps.size() == T && targets.rows() == shape.steps,
          "lstm loss: step count mismatch");
  require(dropout.empty() || dropout.size() == T, "lstm loss: dropout mask count mismatch");
  require(static_cast<index_t>(taus.size()) == shape.outputs, "lstm loss: level count mismatch");
  const auto p = unpack(layout, flat);
  const index_t B = targets.cols();
  const index_t H = shape.hidden;
  const auto squash = all_sigmoid ? Activation::sigmoid : Activation::tanh;
  auto squash_slope = [&](const mat& y) { return all_sigmoid ? sigmoid_slope(y) : tanh_slope(y); };

  const auto n_active = std::count(active_steps.begin(), active_steps.end(), char{1});
  if (n_active == 0) throw PreconditionError("lstm loss: no active (non-night) steps");
  const real norm = static_cast<real>(B) * static_cast<real>(n_active) * static_cast<real>(shape.outputs);

  // Forward, keeping every activation for the backward pass.
  std::vector<std::array<mat, 4>> gates(T);
  std::vector<mat> cs(T + 1), hs(T + 1), squashed(T), hd(T), outs(T);
  cs[0] = mat::Zero(H, B);
  hs[0] = mat::Zero(H, B);
  for (std::size_t t = 0; t < T; ++t) {
    require(step_inputs[t].rows() == shape.inputs && step_inputs[t].cols() == B, "lstm loss: input batch mismatch");
    for (std::size_t k = 0; k < 4; ++k) {
      mat z = p.W[k] * step_inputs[t] + p.U[k] * hs[t];
      z.colwise() += p.b[k];
      gates[t][k] = nnet::apply_activation(z, k == kCell ? squash : Activation::sigmoid);
    }
    cs[t + 1] = gates[t][kForget].cwiseProduct(cs[t]) + gates[t][kInput].cwiseProduct(gates[t][kCell]);
    squashed[t] = nnet::apply_activation(cs[t + 1], squash);
    hs[t + 1] = gates[t][kOutput].cwiseProduct(squashed[t]);
    hd[t] = dropout.empty() ? hs[t + 1] : mat(hs[t + 1].cwiseProduct(dropout[t]));
  }

  gradient = vec::Zero(flat.size());
  auto dW_out = layout.view("W_out", gradient);
  auto db_out = layout.view("b_out", gradient);
  std::array<Eigen::Map<mat>, 4> dW{layout.view("W_i", gradient), layout.view("W_f", gradient),
                                    layout.view("W_o", gradient), layout.view("W_g", gradient)};
  std::array<Eigen::Map<mat>, 4> dU{layout.view("U_i", gradient), layout.view("U_f", gradient),
                                    layout.view("U_o", gradient), layout.view("U_g", gradient)};
  std::array<Eigen::Map<mat>, 4> db{layout.view("b_i", gradient), layout.view("b_f", gradient),
                                    layout.view("b_o", gradient), layout.view("b_g", gradient)};

  real total = 0;
  mat dh_next = mat::Zero(H, B), dc_next = mat::Zero(H, B);
  for (std::size_t tt = T; tt-- > 0;) {
    mat dh = dh_next;
    if (active_steps[tt]) {
      mat out = p.readout.W * hd[tt];
      out.colwise() += p.readout.b;
      mat d_out(shape.outputs, B);
      for (index_t q = 0; q < shape.outputs; ++q) {
        const auto pg = nnet::pinball_subgradient(out.row(q).transpose(), targets.row(static_cast<index_t>(tt)).transpose(),
                                                  taus[static_cast<std::size_t>(q)], smoothing_eta);
        total += pg.loss * static_cast<real>(B);
        d_out.row(q) = pg.gradient.transpose() / norm;
      }
      dW_out += d_out * hd[tt].transpose();
      db_out += d_out.rowwise().sum();
      mat d_hd = p.readout.W.transpose() * d_out;
      dh += dropout.empty() ? d_hd : mat(d_hd.cwiseProduct(dropout[tt]));
    }
    const auto& g = gates[tt];
    const mat d_o = dh.cwiseProduct(squashed[tt]);
    const mat dc = dh.cwiseProduct(g[kOutput]).cwiseProduct(squash_slope(squashed[tt])) + dc_next;
    std::array<mat, 4> dz;
    dz[kInput] = dc.cwiseProduct(g[kCell]).cwiseProduct(sigmoid_slope(g[kInput]));
    dz[kForget] = dc.cwiseProduct(cs[tt]).cwiseProduct(sigmoid_slope(g[kForget]));
    dz[kOutput] = d_o.cwiseProduct(sigmoid_slope(g[kOutput]));
    dz[kCell] = dc.cwiseProduct(g[kInput]).cwiseProduct(squash_slope(g[kCell]));
    dc_next = dc.cwiseProduct(g[kForget]);
    dh_next.setZero();
    for (std::size_t k = 0; k < 4; ++k) {
      dW[k] += dz[k] * step_inputs[tt].transpose();
      dU[k] += dz[k] * hs[tt].transpose();
      db[k] += dz[k].rowwise().sum();
      dh_next += p.U[k].transpose() * dz[k];
    }
  }
  return total / norm;
}

nnet::TrainConfig default_train_config() {
  nnet::TrainConfig c;
  c.batch_size = 16;
  c.clip_norm = 5.0;
  return c;
}

std::vector<mat> day_sequences(const features::SampleSet& samples) {
  std::vector<mat> out;
  out.reserve(static_cast<std::size_t>(samples.rows()));
  for (index_t d = 0; d < samples.rows(); ++d) {
    mat s(4, kHoursPerDay);
    for (int t = 0; t < kHoursPerDay; ++t) {
      s(0, t) = samples.X(d, features::lag_column(t));
      for (auto v : dataio::kVariables)
        s(1 + static_cast<index_t>(v), t) = samples.X(d, features::radiation_column(v, t));
    }
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

struct Prepared {
  std::vector<mat> sequences;  // standardized, per day
  std::vector<char> active;
};

Prepared prepare(const features::SampleSet& samples, const features::Standardizer& standardizer,
                 const dataio::NightMask& mask) {
  Prepared p;
  for (auto& s : day_sequences(samples)) p.sequences.push_back(standardizer.apply(s.transpose()).transpose());
  for (int t = 0; t < kHoursPerDay; ++t) p.active.push_back(mask.contains(t) ? 0 : 1);
  return p;
}

void gather(const Prepared& prep, const features::SampleSet& samples, std::span<const index_t> rows,
            std::vector<mat>& step_inputs, mat& targets) {
  const auto B = static_cast<index_t>(rows.size());
  step_inputs.assign(kHoursPerDay, mat(4, B));
  targets.resize(kHoursPerDay, B);
  for (index_t b = 0; b < B; ++b) {
    const auto d = rows[static_cast<std::size_t>(b)];
    for (int t = 0; t < kHoursPerDay; ++t) step_inputs[static_cast<std::size_t>(t)].col(b) = prep.sequences[static_cast<std::size_t>(d)].col(t);
    targets.col(b) = samples.Y.row(d).transpose();
  }
}

real eval_loss(const nnet::ParamPack& layout, const vec& flat, const LSTMShape& shape, const Prepared& prep,
               const features::SampleSet& samples, std::span<const index_t> rows, std::span<const real> taus,
               bool all_sigmoid) {
  const auto p = unpack(layout, flat);
  real total = 0;
  index_t count = 0;
  for (auto d : rows) {
    const mat out = lstm_forward(prep.sequences[static_cast<std::size_t>(d)], p, shape, all_sigmoid);
    for (int t = 0; t < kHoursPerDay; ++t) {
      if (!prep.active[static_cast<std::size_t>(t)]) continue;
      for (index_t q = 0; q < shape.outputs; ++q)
        total += qcore::pinball(out(q, t), samples.Y(d, t), taus[static_cast<std::size_t>(q)]);
      count += shape.outputs;
    }
  }
  return count > 0 ? total / static_cast<real>(count) : 0.0;
}

}  // namespace

LSTMModel fit_lstm(const features::SampleSet& samples, const dataio::NightMask& mask, const qcore::QuantileGrid& grid,
                   const nnet::TrainConfig& config, const LSTMOptions& options) {
  config.validate();
  require(samples.rows() >= 1, "fit_lstm: no training samples");
  LSTMModel model;
  model.shape = LSTMShape{4, options.hidden, kHoursPerDay, grid.size()};
  model.params = make_layout(model.shape);
  model.config = config;
  model.all_sigmoid = options.all_sigmoid;
  model.taus.assign(grid.levels().begin(), grid.levels().end());
  model.night = mask;

  std::vector<real> day_targets;
  for (int t = 0; t < kHoursPerDay; ++t)
    if (!mask.contains(t))
      for (index_t d = 0; d < samples.rows(); ++d) day_targets.push_back(samples.Y(d, t));
  if (day_targets.empty()) throw TrainingError("fit_lstm: every step is masked as night; nothing to train on");

  // Channel standardizer pooled over all steps of all training days.
  {
    const auto seqs = day_sequences(samples);
    mat pooled(static_cast<index_t>(seqs.size()) * kHoursPerDay, 4);
    for (std::size_t d = 0; d < seqs.size(); ++d)
      pooled.middleRows(static_cast<index_t>(d) * kHoursPerDay, kHoursPerDay) = seqs[d].transpose();
    model.input_standardizer = features::fit_standardizer(pooled);
  }
  const auto prep = prepare(samples, model.input_standardizer, mask);

  std::mt19937_64 init_rng(config.seed);
  for (std::size_t k = 0; k < 4; ++k) {
    nnet::glorot_uniform(model.params.view(block_name("W", k)), init_rng);
    nnet::glorot_uniform(model.params.view(block_name("U", k)), init_rng);
  }
  model.params.view("b_f").setConstant(options.forget_bias);
  nnet::glorot_uniform(model.params.view("W_out"), init_rng);
  for (index_t q = 0; q < grid.size(); ++q) model.params.view("b_out")(q, 0) = lower_quantile(day_targets, grid[q]);

  const auto& layout = model.params;
  const auto shape = model.shape;
  const std::span<const real> taus(model.taus);
  const auto objective = [&](const vec& p, std::span<const index_t> rows, std::mt19937_64& rng, vec& grad) {
    std::vector<mat> inputs;
    mat targets;
    gather(prep, samples, rows, inputs, targets);
    std::vector<mat> masks;
    if (config.dropout_rate > 0)
      for (int t = 0; t < kHoursPerDay; ++t)
        masks.push_back(nnet::dropout_mask(shape.hidden, targets.cols(), config.dropout_rate, rng));
    return loss_and_gradient(layout, p, shape, inputs, targets, prep.active, taus, masks, options.all_sigmoid, grad,
                             config.smoothing_eta);
  };
  const auto evaluate = [&](const vec& p, std::span<const index_t> rows) {
    return eval_loss(layout, p, shape, prep, samples, rows, taus, options.all_sigmoid);
  };

  std::vector<index_t> all_rows(static_cast<std::size_t>(samples.rows()));
  std::iota(all_rows.begin(), all_rows.end(), index_t{0});
  model.initial_training_loss = evaluate(model.params.values(), all_rows);

  auto result = nnet::train(model.params.values(), samples.rows(), config, objective, evaluate);
  model.params.values() = std::move(result.params);
  model.final_validation_loss = result.validation_loss;
  model.final_training_loss = evaluate(model.params.values(), all_rows);
  return model;
}

real training_loss(const LSTMModel& model, const features::SampleSet& samples) {
  const auto prep = prepare(samples, model.input_standardizer, model.night);
  std::vector<index_t> rows(static_cast<std::size_t>(samples.rows()));
  std::iota(rows.begin(), rows.end(), index_t{0});
  return eval_loss(model.params, model.params.values(), model.shape, prep, samples, rows, model.taus, model.all_sigmoid);
}

std::vector<qcore::QuantileForecast> predict_lstm(const LSTMModel& model, const features::SampleSet& samples) {
  require(samples.X.cols() == features::kRawFeatureCount, "predict_lstm: samples have the wrong width");
  const auto prep = prepare(samples, model.input_standardizer, model.night);
  const auto p = unpack(model.params, model.params.values());
  std::vector<qcore::QuantileForecast> out;
  for (index_t d = 0; d < samples.rows(); ++d) {
    qcore::QuantileForecast f;
    f.day_index = samples.day_indices[static_cast<std::size_t>(d)];
    f.estimates = lstm_forward(prep.sequences[static_cast<std::size_t>(d)], p, model.shape, model.all_sigmoid).transpose();
    for (int t = 0; t < kHoursPerDay; ++t)
      if (model.night.contains(t)) f.estimates.row(t).setZero();
    qcore::clip_and_repair(f);
    out.push_back(std::move(f));
  }
  return out;
}

nlohmann::json to_json(const LSTMModel& model) {
  auto j = nnet::to_json(model.params);
  j["hidden"] = model.shape.hidden;
  j["all_sigmoid"] = model.all_sigmoid;
  j["taus"] = model.taus;
  j["input_means"] = std::vector<real>(model.input_standardizer.means.data(),
                                       model.input_standardizer.means.data() + model.input_standardizer.means.size());
  j["input_scales"] = std::vector<real>(model.input_standardizer.scales.data(),
                                        model.input_standardizer.scales.data() + model.input_standardizer.scales.size());
  j["night_hours"] = model.night.night_hours();
  j["final_validation_loss"] = model.final_validation_loss;
  return j;
}

}  // namespace solarqr::lstm
