#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "nsbm/model.hpp"

namespace nsbm {

struct TrainConfig {
  double lr = 1e-4;     // applied to the summed batch gradient
  int batch_size = 32;
  int max_epochs = 500;
  int patience = 25;    // epochs without validation improvement
  double val_fraction = 0.1;
  ModelDims dims;
  std::uint64_t seed = 0;
};

struct TrainedModel {
  ModelParams params;
  std::string scenario;  // "crash" or "non_crash"
  std::uint64_t seed = 0;
  double best_val_nll = 0.0;  // mean per event
  int epochs_run = 0;
  int best_epoch = 0;
  bool any_clamped = false;  // a support clamp fired at least once
  int lr_halvings = 0;       // halved-rate restarts taken before convergence
  std::size_t train_events = 0;
  std::size_t val_events = 0;
};

namespace detail {

// Deterministic holdout by sample id: all events of one sample land on the
// same side. Datasets with fewer than two samples validate on the training
// events themselves.
inline void split_by_sample(const std::vector<LabeledGraph>& dataset,
                            double val_fraction, Rng rng,
                            std::vector<LabeledGraph>& train,
                            std::vector<LabeledGraph>& val) {
  std::vector<std::string> ids;
  {
    std::set<std::string> uniq;
    for (const auto& item : dataset) uniq.insert(item.graph.sample_id);
    ids.assign(uniq.begin(), uniq.end());
  }
  if (ids.size() < 2) {
    train = dataset;
    val = dataset;
    return;
  }
  rng.shuffle(ids);
  const auto n_val = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(val_fraction * ids.size())));
  std::set<std::string> val_ids(ids.begin(), ids.begin() + n_val);
  for (const auto& item : dataset) {
    (val_ids.count(item.graph.sample_id) ? val : train).push_back(item);
  }
}

inline double mean_nll(const std::vector<LabeledGraph>& items, const ModelParams& p) {
  if (items.empty()) return 0.0;
  return batch_nll(items, p) / static_cast<double>(items.size());
}

}  // namespace detail

// Mini-batch gradient descent (plain update, no momentum) on the summed batch
// NLL, manual backprop throughout. Deterministic: seeded init, seeded epoch
// shuffles, fixed reduction order. Keeps the parameters with the lowest
// validation NLL; stops after `patience` epochs without improvement. The
// output head's bias starts at the training targets' pooled moments so the
// descent starts from the stationary solution. A non-finite loss — or a step
// that drives the parameter transforms out of floating-point range — restarts
// training from a fresh init with the rate halved, up to 5 times, then raises
// numerical_error. Restarting beats resuming from the best snapshot here:
// when descent is converging toward a likelihood cliff, the snapshot sits
// next to the cliff and any resumed trajectory falls straight back in, while
// a halved-rate restart explores a different path around it.
inline TrainedModel train(const std::vector<LabeledGraph>& dataset,
                          const TrainConfig& cfg, const std::string& scenario) {
  if (dataset.empty()) throw std::invalid_argument("training set is empty");
  if (!(cfg.lr > 0.0) || cfg.batch_size <= 0 || cfg.max_epochs <= 0) {
    throw std::invalid_argument("invalid training settings");
  }
  const Rng base(cfg.seed);
  std::vector<LabeledGraph> train_items, val_items;
  detail::split_by_sample(dataset, cfg.val_fraction, base.derive("split"), train_items,
                          val_items);

  double mean = 0.0;
  for (const auto& item : train_items) mean += item.z;
  mean /= static_cast<double>(train_items.size());
  double var = 0.0;
  for (const auto& item : train_items) var += (item.z - mean) * (item.z - mean);
  var /= static_cast<double>(train_items.size());
  const double sd = std::max(std::sqrt(var), 1e-4);

  for (int attempt = 0; attempt <= 5; ++attempt) {
    const double lr = cfg.lr / static_cast<double>(1 << attempt);
    ModelParams params = init_params(cfg.dims, cfg.seed);
    params.head_b(0) = 0.0;  // xi_raw: start at the Gumbel branch boundary
    params.head_b(1) = std::log(sd * std::sqrt(6.0) / 3.14159265358979323846);
    params.head_b(2) = mean;
    // Shrink (not zero: an exactly-zero shape row would never receive a
    // gradient through the Gumbel branch) the head row that emits xi_raw.
    // Xavier noise there puts per-graph shapes at ~+-0.3, close enough to a
    // support boundary that items several pooled deviations from the mean
    // start on a 1/s likelihood cliff whose gradient spike outruns every
    // learning-rate retry.
    params.head_w.row(0) *= 0.01;

    Rng shuffler = base.derive("shuffle");
    TrainedModel result;
    result.scenario = scenario;
    result.seed = cfg.seed;
    result.train_events = train_items.size();
    result.val_events = val_items.size();
    ModelParams best = params;
    double best_val = detail::mean_nll(val_items, params);
    int best_epoch = 0;
    bool diverged = false;

    std::vector<std::size_t> order(train_items.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    int epoch = 1;
    // A violent step can push a raw parameter far enough that exp/tanh leave
    // the valid range and the next evaluation throws invalid_argument; that
    // is divergence just like a non-finite loss, so it joins the retry path.
    try {
      for (; epoch <= cfg.max_epochs; ++epoch) {
        shuffler.shuffle(order);
        for (std::size_t begin = 0; begin < order.size() && !diverged;
             begin += static_cast<std::size_t>(cfg.batch_size)) {
          const std::size_t end =
              std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
          std::vector<LabeledGraph> batch;
          batch.reserve(end - begin);
          for (std::size_t i = begin; i < end; ++i) batch.push_back(train_items[order[i]]);
          ModelParams grad = zeros_like(params);
          const BatchLoss loss = loss_and_grads(batch, params, grad);
          result.any_clamped = result.any_clamped || loss.any_clamped;
          if (!std::isfinite(loss.total)) {
            diverged = true;
            break;
          }
          std::vector<double*> pd, gd;
          std::vector<Eigen::Index> sz;
          params.visit([&](const char*, auto& t) {
            pd.push_back(t.data());
            sz.push_back(t.size());
          });
          grad.visit([&](const char*, auto& t) { gd.push_back(t.data()); });
          for (std::size_t ti = 0; ti < pd.size(); ++ti) {
            for (Eigen::Index k = 0; k < sz[ti]; ++k) pd[ti][k] -= lr * gd[ti][k];
          }
        }
        if (diverged) break;
        const double val = detail::mean_nll(val_items, params);
        if (!std::isfinite(val)) {
          diverged = true;
          break;
        }
        if (val < best_val) {
          best_val = val;
          best = params;
          best_epoch = epoch;
        } else if (epoch - best_epoch >= cfg.patience) {
          break;
        }
      }
    } catch (const std::invalid_argument&) {
      diverged = true;
    }
    if (diverged) continue;
    result.params = best;
    result.best_val_nll = best_val;
    result.epochs_run = std::min(epoch, cfg.max_epochs);
    result.best_epoch = best_epoch;
    result.lr_halvings = attempt;
    return result;
  }
  throw numerical_error("training diverged after learning-rate retries");
}

inline nlohmann::json trained_model_to_json(const TrainedModel& m) {
  nlohmann::json j = params_to_json(m.params);
  j["format_version"] = 1;
  j["scenario"] = m.scenario;
  j["seed"] = m.seed;
  j["training"] = nlohmann::json{{"best_val_nll", m.best_val_nll},
                                 {"epochs_run", m.epochs_run},
                                 {"best_epoch", m.best_epoch},
                                 {"support_clamped", m.any_clamped},
                                 {"lr_halvings", m.lr_halvings},
                                 {"train_events", m.train_events},
                                 {"val_events", m.val_events}};
  return j;
}

inline TrainedModel trained_model_from_json(const nlohmann::json& j) {
  if (j.at("format_version").get<int>() != 1) {
    throw data_error("unsupported model format version");
  }
  TrainedModel m;
  m.params = params_from_json(j);
  m.scenario = j.at("scenario").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  const auto& t = j.at("training");
  m.best_val_nll = t.at("best_val_nll").get<double>();
  m.epochs_run = t.at("epochs_run").get<int>();
  m.best_epoch = t.at("best_epoch").get<int>();
  m.any_clamped = t.at("support_clamped").get<bool>();
  m.lr_halvings = t.at("lr_halvings").get<int>();
  m.train_events = t.at("train_events").get<std::size_t>();
  m.val_events = t.at("val_events").get<std::size_t>();
  return m;
}

}  // namespace nsbm
