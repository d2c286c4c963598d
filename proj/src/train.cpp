// Copyright 2026 The kwsnas Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "kwsnas/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>

#include "kwsnas/error.hpp"
#include "kwsnas/optim.hpp"

namespace kwsnas {

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(lr > 0)) throw ConfigError("train.lr must be > 0");
  if (momentum < 0 || momentum >= 1) throw ConfigError("train.momentum must be in [0, 1)");
  if (weight_decay < 0) throw ConfigError("train.weight_decay must be >= 0");
  if (!(decay > 0 && decay <= 1)) throw ConfigError("train.decay must be in (0, 1]");
  for (std::size_t i = 0; i < milestones.size(); ++i) {
    if (!(milestones[i] > 0 && milestones[i] <= 1)) {
      throw ConfigError("train.milestones entries must be in (0, 1]");
    }
    if (i && milestones[i] < milestones[i - 1]) {
      throw ConfigError("train.milestones must be non-decreasing");
    }
  }
}

Json to_json(const TrainConfig& c) {
  return Json{{"epochs", c.epochs},         {"batch_size", c.batch_size},
              {"lr", c.lr},                 {"momentum", c.momentum},
              {"weight_decay", c.weight_decay}, {"milestones", c.milestones},
              {"decay", c.decay},           {"seed", c.seed}};
}

TrainConfig train_from_json(const Json& j, const TrainConfig& base) {
  if (!j.is_object()) throw ConfigError("train must be an object");
  TrainConfig c = base;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "epochs") c.epochs = v.get<int>();
      else if (key == "batch_size") c.batch_size = v.get<int>();
      else if (key == "lr") c.lr = v.get<double>();
      else if (key == "momentum") c.momentum = v.get<double>();
      else if (key == "weight_decay") c.weight_decay = v.get<double>();
      else if (key == "milestones") c.milestones = v.get<std::vector<double>>();
      else if (key == "decay") c.decay = v.get<double>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else throw ConfigError("unknown key train." + key);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train: ") + e.what());
  }
  c.validate();
  return c;
}

double lr_at_epoch(const TrainConfig& c, int epoch) {
  double lr = c.lr;
  for (double m : c.milestones) {
    if (epoch >= static_cast<int>(std::floor(m * c.epochs))) lr *= c.decay;
  }
  return lr;
}

std::size_t argmax(std::span<const Real> values) {
  if (values.empty()) throw ShapeError("argmax of an empty row");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

namespace {

struct StateCopy {
  std::vector<std::vector<Real>> values;
};

StateCopy snapshot(const Model& model) {
  StateCopy s;
  for (const auto& t : model.named_parameters()) s.values.emplace_back(t.tensor.values().begin(), t.tensor.values().end());
  for (const auto& t : model.named_buffers()) s.values.emplace_back(t.tensor.values().begin(), t.tensor.values().end());
  return s;
}

void restore(Model& model, const StateCopy& s) {
  std::size_t i = 0;
  auto put = [&](const NamedTensor& t) {
    auto dst = Tensor(t.tensor).values();
    std::copy(s.values[i].begin(), s.values[i].end(), dst.begin());
    ++i;
  };
  for (const auto& t : model.named_parameters()) put(t);
  for (const auto& t : model.named_buffers()) put(t);
}

template <typename Fn>
void for_each_batch(const FeatureSplit& split, std::size_t batch_size, Fn&& fn) {
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < split.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, split.size() - start);
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), start);
    fn(make_batch(split, idx));
  }
}

std::vector<std::vector<Real>> logits_rows(const Tensor& logits) {
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  std::vector<std::vector<Real>> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].assign(logits.values().begin() + static_cast<std::ptrdiff_t>(i * k),
                  logits.values().begin() + static_cast<std::ptrdiff_t>((i + 1) * k));
  }
  return out;
}

}  // namespace

TrainResult train_model(Model& model, const FeatureDataset& data, const TrainConfig& config,
                        const std::function<void(const TrainEpochLog&)>& on_epoch) {
  config.validate();
  if (data.train.empty()) throw DataError("training split is empty");
  SgdMomentum opt(model.parameters(), static_cast<Real>(config.lr),
                  static_cast<Real>(config.momentum), static_cast<Real>(config.weight_decay));
  BatchStream stream(data.train, static_cast<std::size_t>(config.batch_size), true, config.seed);

  TrainResult result;
  StateCopy best;
  double last_finite = std::numeric_limits<double>::quiet_NaN();
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    TrainEpochLog log;
    log.epoch = epoch + 1;
    log.lr = lr_at_epoch(config, epoch);
    opt.set_lr(static_cast<Real>(log.lr));
    double loss_sum = 0;
    std::size_t seen = 0, correct = 0;
    while (true) {
      Batch b;
      try {
        b = stream.next();
      } catch (const EpochBoundary&) {
        stream.reset();
        break;
      }
      opt.zero_grad();
      Tape tape;
      const Tensor logits = model.forward(tape, b.inputs, true);
      const Tensor loss = cross_entropy(tape, logits, b.labels);
      const double l = loss.item();
      if (!std::isfinite(l)) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "training diverged in epoch %d (last finite loss %.6g)",
                      epoch + 1, last_finite);
        throw NumericError(buf);
      }
      last_finite = l;
      tape.backward(loss);
      opt.step();
      const auto rows = logits_rows(logits);
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (static_cast<int>(argmax(rows[i])) == b.labels[i]) ++correct;
      }
      loss_sum += l * static_cast<double>(b.labels.size());
      seen += b.labels.size();
    }
    log.train_loss = loss_sum / static_cast<double>(seen);
    log.train_accuracy = static_cast<double>(correct) / static_cast<double>(seen);
    if (!data.valid.empty()) {
      log.valid_loss = evaluate_loss(model, data.valid);
      log.valid_accuracy = evaluate_top1(model, data.valid);
    }
    if (result.best_epoch == 0 || data.valid.empty() ||
        log.valid_accuracy > result.best_valid_accuracy) {
      result.best_epoch = log.epoch;
      result.best_valid_accuracy = log.valid_accuracy;
      best = snapshot(model);
    }
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  if (result.best_epoch > 0) restore(model, best);
  return result;
}

std::vector<std::vector<Real>> predict_probabilities(Model& model, const FeatureSplit& split,
                                                     std::size_t batch_size) {
  std::vector<std::vector<Real>> out;
  out.reserve(split.size());
  for_each_batch(split, batch_size, [&](const Batch& b) {
    Tape tape(false);
    const Tensor p = softmax(tape, model.forward(tape, b.inputs, false));
    for (auto& row : logits_rows(p)) out.push_back(std::move(row));
  });
  return out;
}

double evaluate_loss(Model& model, const FeatureSplit& split, std::size_t batch_size) {
  if (split.empty()) throw DataError("cannot evaluate on an empty split");
  double total = 0;
  for_each_batch(split, batch_size, [&](const Batch& b) {
    Tape tape(false);
    const Tensor loss = cross_entropy(tape, model.forward(tape, b.inputs, false), b.labels);
    total += loss.item() * static_cast<double>(b.labels.size());
  });
  return total / static_cast<double>(split.size());
}

double top1_from_scores(std::span<const std::vector<Real>> scores, std::span<const int> labels) {
  if (scores.empty()) throw DataError("cannot evaluate on an empty split");
  if (scores.size() != labels.size()) throw ShapeError("top1: score and label counts differ");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (static_cast<int>(argmax(scores[i])) == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(scores.size());
}

double evaluate_top1(Model& model, const FeatureSplit& split, std::size_t batch_size) {
  if (split.empty()) throw DataError("cannot evaluate on an empty split");
  std::size_t correct = 0;
  for_each_batch(split, batch_size, [&](const Batch& b) {
    Tape tape(false);
    const auto rows = logits_rows(model.forward(tape, b.inputs, false));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (static_cast<int>(argmax(rows[i])) == b.labels[i]) ++correct;
    }
  });
  return static_cast<double>(correct) / static_cast<double>(split.size());
}

std::vector<RocPoint> roc_from_scores(std::span<const std::vector<Real>> probabilities,
                                      std::span<const int> labels,
                                      std::span<const double> thresholds) {
  if (probabilities.size() != labels.size()) throw ShapeError("roc: score and label counts differ");
  struct Item {
    double score;
    bool positive;
    bool correct;
  };
  std::vector<Item> items;
  std::size_t n_pos = 0, n_neg = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto& p = probabilities[i];
    if (p.size() < static_cast<std::size_t>(kNumKeywords)) {
      throw ShapeError("roc: probability rows need at least the keyword classes");
    }
    const auto kw = std::span<const Real>(p).first(static_cast<std::size_t>(kNumKeywords));
    Item it{static_cast<double>(*std::max_element(kw.begin(), kw.end())), is_keyword(labels[i]),
            static_cast<int>(argmax(p)) == labels[i]};
    (it.positive ? n_pos : n_neg)++;
    items.push_back(it);
  }
  if (n_pos == 0 || n_neg == 0) {
    throw DataError("roc needs both keyword and non-keyword clips");
  }
  std::vector<double> sweep(thresholds.begin(), thresholds.end());
  if (sweep.empty()) {
    std::set<double> uniq{0.0, std::nextafter(1.0, 2.0)};
    for (const auto& it : items) uniq.insert(it.score);
    sweep.assign(uniq.rbegin(), uniq.rend());
  }
  std::vector<RocPoint> out;
  out.reserve(sweep.size());
  for (double t : sweep) {
    std::size_t tp = 0, fp = 0;
    for (const auto& it : items) {
      const bool fire = it.score >= t;
      if (it.positive) tp += fire && it.correct;
      else fp += fire;
    }
    out.push_back({t, static_cast<double>(fp) / static_cast<double>(n_neg),
                   static_cast<double>(n_pos - tp) / static_cast<double>(n_pos)});
  }
  return out;
}

std::vector<RocPoint> compute_roc(Model& model, const FeatureSplit& split,
                                  std::span<const double> thresholds) {
  if (split.empty()) throw DataError("roc on an empty split");
  const auto probs = predict_probabilities(model, split);
  return roc_from_scores(probs, split.labels, thresholds);
}

void write_metrics_csv(std::ostream& os, std::span<const RunMetrics> runs) {
  os << "run_id,seed,top1,params,madds\n";
  char buf[64];
  for (const auto& r : runs) {
    std::snprintf(buf, sizeof(buf), "%.17g", r.top1);
    os << r.run_id << ',' << r.seed << ',' << buf << ',' << r.params << ',' << r.madds << '\n';
  }
}

void write_roc_csv(std::ostream& os, std::span<const RocPoint> roc) {
  os << "threshold,fpr,fnr\n";
  char buf[128];
  for (const auto& p : roc) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", p.threshold, p.fpr, p.fnr);
    os << buf;
  }
}

}  // namespace kwsnas
