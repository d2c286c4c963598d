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

#include "kwsnas/search.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "kwsnas/error.hpp"
#include "kwsnas/train.hpp"

namespace kwsnas {

SearchOptimizers::SearchOptimizers(const Supernet& net, const SearchConfig& c)
    : arch(net.alpha().tensors(), static_cast<Real>(c.alpha_lr), static_cast<Real>(c.alpha_beta1),
           static_cast<Real>(c.alpha_beta2), static_cast<Real>(c.alpha_eps)),
      weights(net.parameters(), static_cast<Real>(c.w_lr), static_cast<Real>(c.w_momentum),
              static_cast<Real>(c.w_weight_decay)) {}

namespace {

std::vector<Real> flatten(const std::vector<Tensor>& ts) {
  std::vector<Real> out;
  for (const auto& t : ts) out.insert(out.end(), t.values().begin(), t.values().end());
  return out;
}

double drift(const std::vector<Real>& before, const std::vector<Tensor>& ts) {
  double total = 0;
  std::size_t i = 0;
  for (const auto& t : ts) {
    for (Real v : t.values()) total += std::fabs(static_cast<double>(v - before[i++]));
  }
  return total;
}

void set_trainable(const std::vector<Tensor>& ts, bool on) {
  for (auto t : ts) t.set_requires_grad(on);
}

void check_finite(double loss, const char* what) {
  if (!std::isfinite(loss)) {
    throw NumericError(std::string("search diverged: non-finite ") + what + " loss");
  }
}

}  // namespace

StepReport search_step(Supernet& net, const Batch& train, const Batch& valid,
                       SearchOptimizers& opt) {
  const SearchConfig& cfg = net.search_config();
  const auto& weights = opt.weights.params();
  const auto& alphas = opt.arch.params();
  StepReport report;

  // Each half freezes the other group so the backward pass skips its grads.
  auto arch_half = [&] {
    const auto before = flatten(weights);
    set_trainable(weights, false);
    opt.arch.zero_grad();
    Tape tape;
    const Tensor logits = net.forward(tape, valid.inputs, true);
    Tensor loss = cross_entropy(tape, logits, valid.labels);
    if (cfg.method == SearchMethod::kFairDarts) {
      const auto rows = net.alpha().tensors();
      const Tensor aux = fairdarts_aux_loss(tape, rows);
      report.aux_loss = aux.item();
      loss = add(tape, loss, scale(tape, aux, static_cast<Real>(cfg.w01_weight)));
    }
    report.arch_loss = loss.item();
    check_finite(report.arch_loss, "architecture");
    tape.backward(loss);
    opt.arch.step();
    set_trainable(weights, true);
    report.weight_drift_in_arch_step = drift(before, weights);
  };
  auto weight_half = [&] {
    const auto before = flatten(alphas);
    set_trainable(alphas, false);
    opt.weights.zero_grad();
    Tape tape;
    const Tensor logits = net.forward(tape, train.inputs, true);
    const Tensor loss = cross_entropy(tape, logits, train.labels);
    report.weight_loss = loss.item();
    check_finite(report.weight_loss, "weight");
    tape.backward(loss);
    opt.weights.step();
    set_trainable(alphas, true);
    report.alpha_drift_in_weight_step = drift(before, alphas);
    const std::size_t k = logits.dim(1);
    for (std::size_t i = 0; i < train.labels.size(); ++i) {
      const auto row = logits.values().subspan(i * k, k);
      if (static_cast<int>(argmax(row)) == train.labels[i]) ++report.train_correct;
    }
  };

  if (cfg.arch_step_first) {
    arch_half();
    weight_half();
  } else {
    weight_half();
    arch_half();
  }
  return report;
}

namespace {

void split_train_half(const FeatureSplit& in, FeatureSplit& a, FeatureSplit& b) {
  a.n_mfcc = b.n_mfcc = in.n_mfcc;
  a.frames = b.frames = in.frames;
  for (std::size_t i = 0; i < in.size(); ++i) {
    FeatureSplit& dst = (i % 2 == 0) ? a : b;
    dst.features.push_back(in.features[i]);
    dst.labels.push_back(in.labels[i]);
  }
}

Batch next_cycling(BatchStream& s) {
  try {
    return s.next();
  } catch (const EpochBoundary&) {
    s.reset();
    return s.next();
  }
}

void gate_summary(const AlphaTable& alpha, EpochLog& log) {
  double total = 0;
  int skips = 0;
  for (std::size_t l = 0; l < alpha.num_layers(); ++l) {
    const auto g = alpha.gates(l);
    const std::size_t best = argmax(g);
    total += static_cast<double>(g[best]);
    if (alpha.candidates()[best].is_skip()) ++skips;
  }
  log.mean_max_gate = total / static_cast<double>(alpha.num_layers());
  log.skip_argmax_layers = skips;
}

}  // namespace

SearchResult run_search(const SearchSpaceConfig& space, const SearchConfig& config,
                        const FeatureDataset& data, const SearchObserver& observer) {
  config.validate();
  FeatureSplit w_split, a_split;
  const FeatureSplit* w_data = &data.train;
  const FeatureSplit* a_data = &data.valid;
  if (config.valid_source == ValidSource::kTrainHalf) {
    split_train_half(data.train, w_split, a_split);
    w_data = &w_split;
    a_data = &a_split;
  }
  if (w_data->empty()) throw DataError("search needs a non-empty training split");
  if (a_data->empty()) throw DataError("search needs a non-empty validation split");

  SearchResult result;
  result.supernet = std::make_unique<Supernet>(space, config);
  Supernet& net = *result.supernet;
  SearchOptimizers opt(net, config);
  const auto bs = static_cast<std::size_t>(config.batch_size);
  BatchStream w_stream(*w_data, bs, true, config.seed ^ 0x747261696eULL);
  BatchStream a_stream(*a_data, bs, true, config.seed ^ 0x76616c6964ULL);

  result.trajectory.push_back(net.alpha().clone());
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    EpochLog log;
    log.epoch = epoch + 1;
    double loss_sum = 0, arch_sum = 0;
    std::size_t seen = 0, correct = 0, steps = 0;
    while (true) {
      Batch train;
      try {
        train = w_stream.next();
      } catch (const EpochBoundary&) {
        w_stream.reset();
        break;
      }
      const Batch valid = next_cycling(a_stream);
      const StepReport r = search_step(net, train, valid, opt);
      if (observer.on_step) observer.on_step(r);
      loss_sum += r.weight_loss * static_cast<double>(train.labels.size());
      arch_sum += r.arch_loss;
      seen += train.labels.size();
      correct += r.train_correct;
      ++steps;
    }
    log.train_loss = loss_sum / static_cast<double>(seen);
    log.train_accuracy = static_cast<double>(correct) / static_cast<double>(seen);
    log.arch_loss = arch_sum / static_cast<double>(steps);
    log.valid_accuracy = evaluate_top1(net, *a_data);
    gate_summary(net.alpha(), log);
    result.trajectory.push_back(net.alpha().clone());
    result.log.push_back(log);
    if (observer.on_epoch) observer.on_epoch(log);
  }
  return result;
}

Derivation derive_genotype(const AlphaTable& alpha, double threshold) {
  Derivation d;
  for (std::size_t l = 0; l < alpha.num_layers(); ++l) {
    const auto& idx = alpha.row_candidates(l);
    const auto row = alpha.row(l).values();
    for (Real v : row) {
      if (!std::isfinite(static_cast<double>(v))) {
        throw NumericError("alpha row " + std::to_string(l) + " is not finite");
      }
    }
    // Argmax on raw alpha: monotone in both gates, so it matches the gate argmax.
    std::size_t best = 0;
    for (std::size_t j = 1; j < row.size(); ++j) {
      if (row[j] > row[best]) best = j;
    }
    std::vector<CandidateSpec> entry;
    if (alpha.method() == SearchMethod::kFairDarts) {
      const auto gates = alpha.gates(l);
      for (int c : idx) {
        if (gates[static_cast<std::size_t>(c)] >= threshold) {
          entry.push_back(alpha.candidates()[static_cast<std::size_t>(c)]);
        }
      }
      if (entry.empty()) d.fallback_layers.push_back(static_cast<int>(l));
    }
    if (entry.empty()) entry.push_back(alpha.candidates()[static_cast<std::size_t>(idx[best])]);
    d.genotype.layers.push_back(std::move(entry));
  }
  return d;
}

Genotype random_sample_genotype(const SearchSpaceConfig& space, std::mt19937_64& rng) {
  space.validate();
  Genotype g;
  for (int l = 0; l < space.num_layers; ++l) {
    const auto idx = space.available_candidates(l);
    std::uniform_int_distribution<std::size_t> pick(0, idx.size() - 1);
    g.layers.push_back({space.candidate_set[static_cast<std::size_t>(idx[pick(rng)])]});
  }
  return g;
}

std::uint64_t search_space_cardinality(std::span<const std::size_t> counts) {
  std::uint64_t total = 1;
  for (std::size_t c : counts) {
    if (c == 0) return 0;
    if (total > std::numeric_limits<std::uint64_t>::max() / c) {
      throw ConfigError("search space cardinality overflows 64 bits");
    }
    total *= c;
  }
  return total;
}

std::uint64_t search_space_cardinality(const SearchSpaceConfig& space) {
  space.validate();
  std::vector<std::size_t> counts;
  for (int l = 0; l < space.num_layers; ++l) counts.push_back(space.available_candidates(l).size());
  return search_space_cardinality(counts);
}

void write_alpha_trajectory(std::ostream& os, std::span<const AlphaTable> trajectory) {
  os << "epoch,layer,candidate,raw_alpha,gate_value\n";
  char buf[96];
  for (std::size_t e = 0; e < trajectory.size(); ++e) {
    const auto& a = trajectory[e];
    for (std::size_t l = 0; l < a.num_layers(); ++l) {
      const auto gates = a.gates(l);
      for (int c : a.row_candidates(l)) {
        const auto ci = static_cast<std::size_t>(c);
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g", static_cast<double>(a.raw(l, ci)),
                      static_cast<double>(gates[ci]));
        os << e << ',' << l << ',' << a.candidates()[ci].label() << ',' << buf << '\n';
      }
    }
  }
}

void write_alpha_trajectory(const std::string& path, std::span<const AlphaTable> trajectory) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path);
  write_alpha_trajectory(os, trajectory);
  if (!os) throw Error("write failed: " + path);
}

std::vector<AlphaTable> read_alpha_trajectory(std::istream& is, const SearchSpaceConfig& space,
                                              SearchMethod method) {
  std::map<std::string, std::size_t> by_label;
  for (std::size_t i = 0; i < space.candidate_set.size(); ++i) {
    by_label[space.candidate_set[i].label()] = i;
  }
  std::string line;
  std::size_t offset = 0;
  if (!std::getline(is, line) || line != "epoch,layer,candidate,raw_alpha,gate_value") {
    throw ParseError("alpha csv: missing header", 0);
  }
  offset += line.size() + 1;
  std::vector<AlphaTable> out;
  while (std::getline(is, line)) {
    const std::size_t line_offset = offset;
    offset += line.size() + 1;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 5) throw ParseError("alpha csv: expected 5 fields", line_offset);
    std::size_t epoch = 0, layer = 0;
    double raw = 0;
    try {
      epoch = std::stoul(f[0]);
      layer = std::stoul(f[1]);
      raw = std::stod(f[3]);
    } catch (const std::exception&) {
      throw ParseError("alpha csv: bad number", line_offset);
    }
    if (epoch > out.size()) throw ParseError("alpha csv: epochs must be contiguous from 0", line_offset);
    if (epoch == out.size()) out.emplace_back(space, method);
    const auto it = by_label.find(f[2]);
    if (it == by_label.end()) throw ConfigError("alpha csv: candidate " + f[2] + " not in the space");
    if (layer >= out[epoch].num_layers()) {
      throw ConfigError("alpha csv: layer " + f[1] + " outside the space");
    }
    out[epoch].set_raw(layer, it->second, static_cast<Real>(raw));
  }
  if (out.empty()) throw ParseError("alpha csv: no rows", offset);
  return out;
}

std::vector<AlphaTable> read_alpha_trajectory(const std::string& path,
                                              const SearchSpaceConfig& space,
                                              SearchMethod method) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path);
  return read_alpha_trajectory(is, space, method);
}

}  // namespace kwsnas
