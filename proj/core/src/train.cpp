#include "rdt/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "rdt/error.hpp"
#include "rdt/rng.hpp"

namespace rdt {

void AslConfig::validate() const {
  if (gamma_pos < 0.0 || gamma_neg < 0.0)
    throw DomainError("loss config: negative focusing exponent");
  if (margin < 0.0 || margin >= 1.0)
    throw DomainError("loss config: margin must be in [0, 1)");
}

Tensor asl_loss(const Tensor& scores, const std::vector<MultiHotLabel>& labels,
                const AslConfig& cfg) {
  cfg.validate();
  if (scores.rank() != 2)
    throw ShapeError("asl_loss: expected N x classes scores, got " +
                     shape_str(scores.shape()));
  const int n = scores.dim(0);
  const int classes = scores.dim(1);
  if (static_cast<std::size_t>(n) != labels.size())
    throw ShapeError("asl_loss: " + std::to_string(n) + " score rows vs " +
                     std::to_string(labels.size()) + " labels");
  std::vector<double> y(static_cast<std::size_t>(n) * classes);
  for (int i = 0; i < n; ++i) {
    const MultiHotLabel& label = labels[static_cast<std::size_t>(i)];
    if (static_cast<int>(label.bits.size()) != classes)
      throw ShapeError("asl_loss: label width " +
                       std::to_string(label.bits.size()) + " vs " +
                       std::to_string(classes) + " classes");
    for (int j = 0; j < classes; ++j)
      y[static_cast<std::size_t>(i) * classes + j] =
          label.bits[static_cast<std::size_t>(j)];
  }
  for (double p : scores.data())
    if (!(p > 0.0) || !(p < 1.0))
      throw DomainError("asl_loss: score " + std::to_string(p) +
                        " outside (0, 1)");

  Tensor truth = Tensor::from_data({n, classes}, y);
  Tensor inverse_truth = add_const(scale(truth, -1.0), 1.0);

  // Positive-label term: (1-p)^{gamma_pos} * log p.
  Tensor one_minus_p = add_const(scale(scores, -1.0), 1.0);
  Tensor pos = mul(pow_const(one_minus_p, cfg.gamma_pos), log_elem(scores));

  // Negative-label term with the margin-shifted probability.
  Tensor shifted = relu(add_const(scores, -cfg.margin));
  Tensor one_minus_shifted = add_const(scale(shifted, -1.0), 1.0);
  Tensor neg =
      mul(pow_const(shifted, cfg.gamma_neg), log_elem(one_minus_shifted));

  Tensor combined = add(mul(truth, pos), mul(inverse_truth, neg));
  return scale(mean_all(combined), -1.0);
}

void OptimizerConfig::validate() const {
  if (lr <= 0.0) throw DomainError("optimizer config: non-positive lr");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
    throw DomainError("optimizer config: betas must be in [0, 1)");
  if (eps <= 0.0) throw DomainError("optimizer config: non-positive eps");
}

AdamState AdamState::for_params(const std::vector<Tensor>& params) {
  AdamState state;
  state.m.reserve(params.size());
  state.v.reserve(params.size());
  for (const Tensor& p : params) {
    state.m.emplace_back(p.size(), 0.0);
    state.v.emplace_back(p.size(), 0.0);
  }
  return state;
}

void adam_step(std::vector<Tensor>& params,
               const std::vector<std::vector<double>>& grads, AdamState& state,
               const OptimizerConfig& cfg) {
  cfg.validate();
  if (params.size() != grads.size() || params.size() != state.m.size() ||
      params.size() != state.v.size())
    throw ContractError("adam_step: params/grads/state length mismatch");
  const long long t = state.step + 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& data = params[i].mutable_data();
    const auto& g = grads[i];
    if (g.size() != data.size())
      throw ContractError("adam_step: gradient " + std::to_string(i) +
                          " size mismatch");
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < data.size(); ++k) {
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
      const double m_hat = m[k] / bc1;
      const double v_hat = v[k] / bc2;
      data[k] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
  state.step = t;
}

void adam_step_from_grads(std::vector<Tensor>& params, AdamState& state,
                          const OptimizerConfig& cfg) {
  std::vector<std::vector<double>> grads;
  grads.reserve(params.size());
  for (const Tensor& p : params) grads.push_back(p.grad());
  adam_step(params, grads, state, cfg);
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw DomainError("train config: batch size < 1");
  if (patience < 1) throw DomainError("train config: patience < 1");
  if (max_epochs < 1) throw DomainError("train config: max epochs < 1");
  if (target_train_loss < 0.0)
    throw DomainError("train config: negative target loss");
}

namespace {

// Mean ASL over a whole set, evaluated in batches so graphs stay small.
double evaluate_loss(const Model& model, const std::vector<Tensor>& images,
                     const std::vector<MultiHotLabel>& labels,
                     const AslConfig& asl, int batch_size) {
  double total = 0.0;
  std::size_t i = 0;
  while (i < images.size()) {
    const std::size_t end = std::min(images.size(),
                                     i + static_cast<std::size_t>(batch_size));
    std::vector<Tensor> rows;
    std::vector<MultiHotLabel> batch_labels;
    for (std::size_t k = i; k < end; ++k) {
      rows.push_back(model.forward(images[k]));
      batch_labels.push_back(labels[k]);
    }
    Tensor scores = concat_rows(rows);
    total += asl_loss(scores, batch_labels, asl).item() *
             static_cast<double>(end - i);
    i = end;
  }
  return total / static_cast<double>(images.size());
}

}  // namespace

TrainResult train_model(Model& model, const std::vector<Tensor>& train_images,
                        const std::vector<MultiHotLabel>& train_labels,
                        const std::vector<Tensor>& val_images,
                        const std::vector<MultiHotLabel>& val_labels,
                        const AslConfig& asl, const OptimizerConfig& opt,
                        const TrainConfig& cfg) {
  asl.validate();
  opt.validate();
  cfg.validate();
  if (train_images.empty() || val_images.empty())
    throw DomainError("training needs non-empty train and validation sets");
  if (train_images.size() != train_labels.size() ||
      val_images.size() != val_labels.size())
    throw DomainError("training: image/label count mismatch");

  if (cfg.freeze_extractor) model.set_extractor_frozen(true);
  std::vector<Tensor> all_params = model.parameters();
  std::vector<Tensor> params;
  for (const Tensor& p : all_params)
    if (p.requires_grad()) params.push_back(p);
  AdamState state = AdamState::for_params(params);

  // Validation runs with gradient recording switched off.
  auto quiesce = [&all_params]() {
    for (Tensor& p : all_params) p.set_requires_grad(false);
  };
  auto rearm = [&all_params, &params]() {
    for (Tensor& p : all_params) p.set_requires_grad(false);
    for (Tensor& p : params) p.set_requires_grad(true);
  };

  TrainResult result;
  result.best_val_loss = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> best_snapshot;
  for (const Tensor& p : all_params) best_snapshot.push_back(p.data());

  std::vector<std::size_t> order(train_images.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng shuffle_rng(cfg.seed);

  int since_improvement = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double train_total = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
      const std::size_t end =
          std::min(order.size(), i + static_cast<std::size_t>(cfg.batch_size));
      std::vector<Tensor> rows;
      std::vector<MultiHotLabel> batch_labels;
      for (std::size_t k = i; k < end; ++k) {
        rows.push_back(model.forward(train_images[order[k]]));
        batch_labels.push_back(train_labels[order[k]]);
      }
      Tensor scores = concat_rows(rows);
      Tensor loss = asl_loss(scores, batch_labels, asl);
      const double loss_value = loss.item();
      if (!std::isfinite(loss_value))
        throw NumericError("training diverged: non-finite loss at epoch " +
                           std::to_string(epoch));
      for (Tensor& p : params) p.zero_grad();
      backward(loss);
      adam_step_from_grads(params, state, opt);
      train_total += loss_value * static_cast<double>(end - i);
      i = end;
    }
    const double train_loss =
        train_total / static_cast<double>(order.size());

    quiesce();
    const double val_loss =
        evaluate_loss(model, val_images, val_labels, asl, cfg.batch_size);
    rearm();
    if (!std::isfinite(val_loss))
      throw NumericError("training diverged: non-finite validation loss at epoch " +
                         std::to_string(epoch));

    result.history.push_back({epoch, train_loss, val_loss});
    if (val_loss < result.best_val_loss) {
      result.best_val_loss = val_loss;
      result.best_epoch = epoch;
      for (std::size_t p = 0; p < all_params.size(); ++p)
        best_snapshot[p] = all_params[p].data();
      since_improvement = 0;
    } else {
      ++since_improvement;
    }

    if (cfg.target_train_loss > 0.0 && train_loss < cfg.target_train_loss) {
      result.hit_target = true;
      break;
    }
    if (since_improvement >= cfg.patience) break;
  }

  for (std::size_t p = 0; p < all_params.size(); ++p) {
    Tensor t = all_params[p];
    t.mutable_data() = best_snapshot[p];
  }
  return result;
}

std::vector<int> top3_ids(const ConfidenceVector& rho) {
  const int delta = static_cast<int>(rho.scores.size());
  if (delta < 3)
    throw DomainError("top-3 prediction needs at least 3 classes, got " +
                      std::to_string(delta));
  std::vector<bool> taken(static_cast<std::size_t>(delta), false);
  std::vector<int> ids;
  ids.reserve(3);
  for (int round = 0; round < 3; ++round) {
    int best = -1;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < delta; ++j) {
      if (taken[static_cast<std::size_t>(j)]) continue;
      if (rho.scores[static_cast<std::size_t>(j)] > best_score) {
        best_score = rho.scores[static_cast<std::size_t>(j)];
        best = j;
      }
    }
    taken[static_cast<std::size_t>(best)] = true;
    ids.push_back(best + 1);
  }
  return ids;
}

MultiHotLabel top3_predict(const ConfidenceVector& rho) {
  return MultiHotLabel::from_ids(top3_ids(rho),
                                 static_cast<int>(rho.scores.size()));
}

void write_history_csv(std::ostream& out,
                       const std::vector<EpochStats>& history) {
  out << "epoch,train_loss,val_loss\n";
  char buf[64];
  for (const EpochStats& e : history) {
    out << e.epoch;
    std::snprintf(buf, sizeof buf, ",%.17g", e.train_loss);
    out << buf;
    std::snprintf(buf, sizeof buf, ",%.17g", e.val_loss);
    out << buf << '\n';
  }
}

std::vector<EpochStats> read_history_csv(std::istream& in,
                                         const std::string& origin) {
  std::string line;
  if (!std::getline(in, line) || line != "epoch,train_loss,val_loss")
    throw ParseError(origin + ": missing history header");
  std::vector<EpochStats> history;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    EpochStats e;
    std::istringstream row(line);
    char c1 = 0, c2 = 0;
    if (!(row >> e.epoch >> c1 >> e.train_loss >> c2 >> e.val_loss) ||
        c1 != ',' || c2 != ',')
      throw ParseError(origin + ":" + std::to_string(lineno) +
                       ": malformed history row");
    history.push_back(e);
  }
  return history;
}

}  // namespace rdt
