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

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "kwsnas/search.hpp"
#include "kwsnas/supernet.hpp"
#include "test_util.hpp"

using namespace kwsnas;
using kwsnas::testing::check_gradients;
using kwsnas::testing::random_split;
using kwsnas::testing::random_tensor;

namespace {

double rel_diff(const Tensor& a, const Tensor& b) {
  double d = 0, n = 0;
  const auto va = a.values();
  const auto vb = b.values();
  for (std::size_t i = 0; i < va.size(); ++i) {
    d += (va[i] - vb[i]) * (va[i] - vb[i]);
    n += static_cast<double>(vb[i]) * vb[i];
  }
  return std::sqrt(d) / std::max(std::sqrt(n), 1e-300);
}

std::vector<int> cycling_labels(std::size_t n) {
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<int>(i % kNumClasses);
  return out;
}

// Random features on a short time axis keep the desk-scale supernet cheap.
FeatureDataset tiny_dataset(std::uint64_t seed, std::size_t n_train = 48,
                            std::size_t n_valid = 24) {
  FeatureDataset d;
  d.train = random_split(cycling_labels(n_train), 40, 32, seed);
  d.valid = random_split(cycling_labels(n_valid), 40, 32, seed + 1);
  d.test = random_split(cycling_labels(12), 40, 32, seed + 2);
  return d;
}

Batch whole(const FeatureSplit& s) {
  std::vector<std::size_t> idx(s.size());
  std::iota(idx.begin(), idx.end(), 0);
  return make_batch(s, idx);
}

SearchConfig quick_config(SearchMethod m, std::uint64_t seed = 3) {
  SearchConfig c;
  c.method = m;
  c.epochs = 2;
  c.batch_size = 16;
  c.alpha_lr = 3e-3;
  c.seed = seed;
  return c;
}

// Mixed-layer input for layer 1 of the desk space (stride 1, 8 -> 8 channels).
Tensor layer1_input(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return random_tensor({3, 8, 20}, rng);
}

TcBlock& mutable_block(Supernet& net, std::size_t layer, std::size_t cand) {
  // Blocks are only read in inference mode here; the handle is non-const
  // because forward() records onto a tape.
  return const_cast<TcBlock&>(*net.candidate_block(layer, cand));
}

}  // namespace

TEST_SUITE("supernet") {
  TEST_CASE("alpha table covers every layer and candidate") {
    const auto space = SearchSpaceConfig::standard();
    const AlphaTable a(space, SearchMethod::kDarts);
    CHECK(a.num_layers() == 9);
    CHECK(a.num_candidates() == 9);
    for (std::size_t l = 0; l < 9; ++l) {
      const bool stride2 = space.strides[l] != 1 || space.in_channels(static_cast<int>(l)) !=
                                                        space.channels[l];
      CHECK(a.row(l).numel() == (stride2 ? 8u : 9u));
      CHECK(a.available(l, 8) == !stride2);
      for (std::size_t c = 0; c < 9; ++c) {
        if (a.available(l, c)) CHECK(a.raw(l, c) == 0.0);
      }
    }
  }

  TEST_CASE("uniform gates at initialization") {
    const auto space = SearchSpaceConfig::standard();
    const AlphaTable soft(space, SearchMethod::kDarts);
    const AlphaTable fair(space, SearchMethod::kFairDarts);
    for (std::size_t l = 0; l < 9; ++l) {
      const auto g = soft.gates(l);
      const double n = static_cast<double>(soft.row(l).numel());
      for (std::size_t c = 0; c < 9; ++c) {
        CHECK(g[c] == doctest::Approx(soft.available(l, c) ? 1.0 / n : 0.0).epsilon(1e-12));
        CHECK(fair.gates(l)[c] == doctest::Approx(fair.available(l, c) ? 0.5 : 0.0));
      }
    }
    // Layer 1 has all nine candidates.
    CHECK(soft.gates(1)[0] == doctest::Approx(1.0 / 9.0).epsilon(1e-12));
  }

  TEST_CASE("softmax saturation selects one candidate") {
    const auto space = SearchSpaceConfig::desk_scale();
    for (std::size_t pick : {0u, 3u, 7u}) {
      Supernet net(space, quick_config(SearchMethod::kDarts));
      for (std::size_t c = 0; c < 9; ++c) net.alpha().set_raw(1, c, c == pick ? 20 : -20);
      const Tensor x = layer1_input(pick);
      Tape tape(false);
      const Tensor mixed = net.mixed_layer_forward(tape, 1, x, false);
      const Tensor single = mutable_block(net, 1, pick).forward(tape, x, false);
      CHECK(rel_diff(mixed, single) < 1e-6);
    }
  }

  TEST_CASE("fairdarts gates at -40 silence the layer") {
    const auto space = SearchSpaceConfig::desk_scale();
    Supernet net(space, quick_config(SearchMethod::kFairDarts));
    for (std::size_t c = 0; c < 9; ++c) net.alpha().set_raw(1, c, -40);
    Tape tape(false);
    const Tensor y = net.mixed_layer_forward(tape, 1, layer1_input(5), false);
    for (Real v : y.values()) CHECK(std::abs(v) < 1e-12);
  }

  TEST_CASE("softmax mixing ignores a constant shift, sigmoid mixing does not") {
    const auto space = SearchSpaceConfig::desk_scale();
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-2, 2);
    std::vector<Real> raw(9);
    for (auto& r : raw) r = u(rng);
    for (auto method : {SearchMethod::kDarts, SearchMethod::kFairDarts}) {
      Supernet net(space, quick_config(method));
      const Tensor x = layer1_input(9);
      for (std::size_t c = 0; c < 9; ++c) net.alpha().set_raw(1, c, raw[c]);
      Tape tape(false);
      const Tensor y0 = net.mixed_layer_forward(tape, 1, x, false);
      for (std::size_t c = 0; c < 9; ++c) net.alpha().set_raw(1, c, raw[c] + 1.7);
      const Tensor y1 = net.mixed_layer_forward(tape, 1, x, false);
      if (method == SearchMethod::kDarts) {
        CHECK(rel_diff(y1, y0) < 1e-12);
      } else {
        CHECK(rel_diff(y1, y0) > 1e-3);
      }
    }
  }

  TEST_CASE("gate weights match softmax and sigmoid") {
    const Tensor row = Tensor::from_values({4}, {0.5, -1.0, 2.0, 0.0});
    Tape tape(false);
    const Tensor soft = gate_weights(tape, row, SearchMethod::kNoisyDarts);
    const Tensor fair = gate_weights(tape, row, SearchMethod::kFairDarts);
    const auto s = soft.values();
    const double z = std::exp(0.5) + std::exp(-1.0) + std::exp(2.0) + 1.0;
    CHECK(s[2] == doctest::Approx(std::exp(2.0) / z).epsilon(1e-12));
    const auto f = fair.values();
    CHECK(f[1] == doctest::Approx(1.0 / (1.0 + std::exp(1.0))).epsilon(1e-12));
  }

  TEST_CASE("noisy skip with zero noise is the identity") {
    std::mt19937_64 rng(1), data(2);
    const Tensor x = random_tensor({2, 3, 5}, data);
    Tape tape;
    const Tensor y = noisy_skip_forward(tape, x, 0.0, 0.0, rng);
    CHECK(y.same_as(x));
  }

  TEST_CASE("noisy skip noise statistics") {
    std::mt19937_64 rng(7);
    const Tensor x = Tensor::zeros({10000});
    Tape tape(false);
    const Tensor noisy = noisy_skip_forward(tape, x, 0.0, 0.1, rng);
    const auto y = noisy.values();
    double mean = 0, sq = 0;
    for (Real v : y) mean += v;
    mean /= static_cast<double>(y.size());
    for (Real v : y) sq += (v - mean) * (v - mean);
    const double sd = std::sqrt(sq / static_cast<double>(y.size() - 1));
    CHECK(std::abs(mean) < 0.005);
    CHECK(std::abs(sd - 0.1) < 0.005);
  }

  TEST_CASE("noisy skip gradient is the identity") {
    std::mt19937_64 rng(3), data(4);
    const Tensor x = random_tensor({4, 6}, data, -1, 1, true);
    Tape tape;
    tape.backward(sum(tape, noisy_skip_forward(tape, x, 0.0, 0.1, rng)));
    for (Real g : x.grad()) CHECK(g == 1.0);
  }

  TEST_CASE("noisy skip rejects a negative deviation") {
    std::mt19937_64 rng(3);
    Tape tape;
    CHECK_THROWS_AS(noisy_skip_forward(tape, Tensor::zeros({2}), 0.0, -0.1, rng), ConfigError);
  }

  TEST_CASE("zero-one loss values") {
    Tape tape(false);
    const std::vector<Tensor> zero = {Tensor::zeros({9}), Tensor::zeros({8})};
    CHECK(fairdarts_aux_loss(tape, zero).item() == 0.0);
    std::vector<Real> big(9);
    for (std::size_t i = 0; i < 9; ++i) big[i] = (i % 2 == 0) ? 60 : -60;
    const std::vector<Tensor> sat = {Tensor::from_values({9}, big)};
    CHECK(fairdarts_aux_loss(tape, sat).item() == doctest::Approx(-0.25).epsilon(1e-12));
    // Oracle: direct evaluation of -(1/N) sum (sigmoid - 1/2)^2.
    const std::vector<Real> r = {0.3, -1.2, 2.5};
    double want = 0;
    for (Real v : r) want += std::pow(1 / (1 + std::exp(-v)) - 0.5, 2);
    const std::vector<Tensor> mixed = {Tensor::from_values({3}, r)};
    CHECK(fairdarts_aux_loss(tape, mixed).item() == doctest::Approx(-want / 3).epsilon(1e-12));
  }

  TEST_CASE("alpha-side ops pass the gradient check") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      std::mt19937_64 rng(seed);
      const Tensor a = random_tensor({9}, rng, -2, 2, true);
      const Tensor b = random_tensor({8}, rng, -2, 2, true);
      for (auto m : {SearchMethod::kDarts, SearchMethod::kFairDarts}) {
        const auto g = check_gradients({a}, [&](Tape& t) { return gate_weights(t, a, m); }, seed);
        CHECK(g.all_finite);
        CHECK(g.max_rel_error < 1e-6);
      }
      const auto g = check_gradients(
          {a, b},
          [&](Tape& t) {
            const std::vector<Tensor> rows = {a, b};
            return fairdarts_aux_loss(t, rows);
          },
          seed);
      CHECK(g.max_rel_error < 1e-6);
    }
  }

  TEST_CASE("mixed layer gradient reaches alpha and input") {
    const auto space = SearchSpaceConfig::desk_scale();
    for (auto method : {SearchMethod::kDarts, SearchMethod::kFairDarts}) {
      Supernet net(space, quick_config(method));
      std::mt19937_64 rng(17);
      const Tensor x = random_tensor({2, 8, 12}, rng, -1, 1, true);
      const Tensor row = net.alpha().row(1);
      for (std::size_t c = 0; c < 9; ++c) net.alpha().set_raw(1, c, static_cast<Real>(0.2 * c));
      const auto g = check_gradients(
          {row, x}, [&](Tape& t) { return net.mixed_layer_forward(t, 1, x, false); }, 5, 1e-5);
      CHECK(g.all_finite);
      CHECK(g.max_rel_error < 1e-5);
    }
  }

  TEST_CASE("parameter partition between weights and alpha") {
    Supernet net(SearchSpaceConfig::desk_scale(), quick_config(SearchMethod::kDarts));
    const auto weights = net.named_parameters();
    for (const auto& row : net.alpha().tensors()) {
      for (const auto& w : weights) CHECK_FALSE(w.tensor.same_as(row));
    }
    CHECK(weights.size() > 20);
  }

  TEST_CASE("method names") {
    CHECK(parse_method("FairDARTS") == SearchMethod::kFairDarts);
    CHECK(method_name(SearchMethod::kNoisyDarts) == "noisydarts");
    try {
      parse_method("enas");
      FAIL("no throw");
    } catch (const ConfigError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("darts") != std::string::npos);
      CHECK(msg.find("fairdarts") != std::string::npos);
      CHECK(msg.find("noisydarts") != std::string::npos);
    }
  }

  TEST_CASE("search config json round trip and validation") {
    SearchConfig c = quick_config(SearchMethod::kNoisyDarts, 99);
    c.noise_std = 0.25;
    c.valid_source = ValidSource::kTrainHalf;
    const SearchConfig back = search_from_json(to_json(c));
    CHECK(to_json(back) == to_json(c));
    SearchConfig bad = c;
    bad.noise_std = -1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.batch_size = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }
}

TEST_SUITE("search") {
  TEST_CASE("each half of a step leaves the other group untouched") {
    const auto data = tiny_dataset(1);
    for (auto m : {SearchMethod::kDarts, SearchMethod::kFairDarts, SearchMethod::kNoisyDarts}) {
      for (bool arch_first : {true, false}) {
        SearchConfig cfg = quick_config(m);
        cfg.arch_step_first = arch_first;
        Supernet net(SearchSpaceConfig::desk_scale(), cfg);
        SearchOptimizers opt(net, cfg);
        const auto alpha0 = net.alpha().clone();
        const auto rep = search_step(net, whole(data.train), whole(data.valid), opt);
        CHECK(rep.weight_drift_in_arch_step == 0.0);
        CHECK(rep.alpha_drift_in_weight_step == 0.0);
        CHECK(std::isfinite(rep.weight_loss));
        // The arch half did move alpha.
        double moved = 0;
        for (std::size_t l = 0; l < 9; ++l)
          for (std::size_t c = 0; c < 9; ++c)
            moved += std::abs(net.alpha().raw(l, c) - alpha0.raw(l, c));
        CHECK(moved > 0);
        // Every sigmoid gate starts at 1/2, where the zero-one loss is 0.
        if (m == SearchMethod::kFairDarts) CHECK(rep.aux_loss == 0.0);
      }
    }
  }

  TEST_CASE("weight steps overfit one batch") {
    const auto data = tiny_dataset(2);
    SearchConfig cfg = quick_config(SearchMethod::kDarts);
    cfg.w_lr = 0.01;
    Supernet net(SearchSpaceConfig::desk_scale(), cfg);
    SearchOptimizers opt(net, cfg);
    const Batch b = whole(data.train);
    double prev = 1e300;
    int increases = 0;
    double first = 0, last = 0;
    for (int step = 0; step < 50; ++step) {
      opt.weights.zero_grad();
      Tape tape;
      const Tensor loss = cross_entropy(tape, net.forward(tape, b.inputs, true), b.labels);
      if (step == 0) first = loss.item();
      last = loss.item();
      if (loss.item() > prev) ++increases;
      prev = loss.item();
      tape.backward(loss);
      opt.weights.step();
    }
    CHECK(increases == 0);
    CHECK(last < first);
  }

  TEST_CASE("steps are deterministic for a seed") {
    const auto data = tiny_dataset(3);
    auto run = [&] {
      SearchConfig cfg = quick_config(SearchMethod::kNoisyDarts, 21);
      Supernet net(SearchSpaceConfig::desk_scale(), cfg);
      SearchOptimizers opt(net, cfg);
      std::vector<double> out;
      for (int i = 0; i < 3; ++i) {
        const auto r = search_step(net, whole(data.train), whole(data.valid), opt);
        out.push_back(r.arch_loss);
        out.push_back(r.weight_loss);
      }
      for (std::size_t c = 0; c < 9; ++c) out.push_back(net.alpha().raw(4, c));
      return out;
    };
    CHECK(run() == run());
  }

  TEST_CASE("softmax gates sum to one through a two-epoch search") {
    const auto data = tiny_dataset(4);
    for (auto m : {SearchMethod::kDarts, SearchMethod::kNoisyDarts}) {
      SearchConfig cfg = quick_config(m);
      Supernet net(SearchSpaceConfig::desk_scale(), cfg);
      SearchOptimizers opt(net, cfg);
      BatchStream tr(data.train, 16, true, 1), va(data.valid, 16, true, 2);
      double worst = 0;
      for (int epoch = 0; epoch < 2; ++epoch) {
        tr.reset();
        va.reset();
        for (std::size_t s = 0; s < tr.batches_per_epoch(); ++s) {
          Batch vb;
          try {
            vb = va.next();
          } catch (const EpochBoundary&) {
            va.reset();
            vb = va.next();
          }
          search_step(net, tr.next(), vb, opt);
          for (std::size_t l = 0; l < 9; ++l) {
            const auto g = net.alpha().gates(l);
            worst = std::max(worst, std::abs(std::accumulate(g.begin(), g.end(), 0.0) - 1.0));
          }
        }
      }
      CHECK(worst < 1e-6);
    }
  }

  TEST_CASE("run_search records one alpha snapshot per epoch plus the start") {
    const auto data = tiny_dataset(5);
    int steps = 0, epochs = 0;
    SearchObserver obs;
    obs.on_step = [&](const StepReport& r) {
      ++steps;
      CHECK(r.weight_drift_in_arch_step == 0.0);
      CHECK(r.alpha_drift_in_weight_step == 0.0);
    };
    obs.on_epoch = [&](const EpochLog&) { ++epochs; };
    const auto cfg = quick_config(SearchMethod::kDarts);
    const auto res = run_search(SearchSpaceConfig::desk_scale(), cfg, data, obs);
    CHECK(res.trajectory.size() == 3);
    CHECK(res.log.size() == 2);
    CHECK(epochs == 2);
    CHECK(steps == 6);  // 48 clips, batch 16
    for (std::size_t c = 0; c < 9; ++c) {
      if (res.trajectory[0].available(2, c)) CHECK(res.trajectory[0].raw(2, c) == 0.0);
    }
    CHECK(res.supernet != nullptr);
  }

  TEST_CASE("noisydarts with zero noise reproduces darts exactly") {
    const auto data = tiny_dataset(6);
    SearchConfig d = quick_config(SearchMethod::kDarts, 8);
    SearchConfig n = d;
    n.method = SearchMethod::kNoisyDarts;
    n.noise_std = 0;
    n.noise_mean = 0;
    const auto a = run_search(SearchSpaceConfig::desk_scale(), d, data);
    const auto b = run_search(SearchSpaceConfig::desk_scale(), n, data);
    REQUIRE(a.trajectory.size() == b.trajectory.size());
    for (std::size_t e = 0; e < a.trajectory.size(); ++e)
      for (std::size_t l = 0; l < 9; ++l)
        for (std::size_t c = 0; c < 9; ++c)
          CHECK(a.trajectory[e].raw(l, c) == b.trajectory[e].raw(l, c));
    const auto wa = a.supernet->named_parameters();
    const auto wb = b.supernet->named_parameters();
    REQUIRE(wa.size() == wb.size());
    for (std::size_t i = 0; i < wa.size(); ++i) {
      const auto x = wa[i].tensor.values();
      const auto y = wb[i].tensor.values();
      CHECK(std::equal(x.begin(), x.end(), y.begin()));
    }
  }

  TEST_CASE("noise changes the noisydarts trajectory") {
    const auto data = tiny_dataset(6);
    SearchConfig d = quick_config(SearchMethod::kDarts, 8);
    SearchConfig n = d;
    n.method = SearchMethod::kNoisyDarts;
    const auto a = run_search(SearchSpaceConfig::desk_scale(), d, data);
    const auto b = run_search(SearchSpaceConfig::desk_scale(), n, data);
    double diff = 0;
    for (std::size_t l = 0; l < 9; ++l)
      for (std::size_t c = 0; c < 9; ++c)
        diff += std::abs(a.trajectory.back().raw(l, c) - b.trajectory.back().raw(l, c));
    CHECK(diff > 0);
  }

  TEST_CASE("argmax derivation") {
    AlphaTable a(SearchSpaceConfig::desk_scale(), SearchMethod::kDarts);
    // Layer 0: clear winner. Layer 1: tie between 2 and 5. Others all equal.
    a.set_raw(0, 4, 1.0);
    a.set_raw(1, 2, 0.5);
    a.set_raw(1, 5, 0.5);
    a.set_raw(3, 8, 2.0);
    const auto d = derive_genotype(a);
    CHECK(d.fallback_layers.empty());
    REQUIRE(d.genotype.layers.size() == 9);
    const auto set = default_candidate_set();
    CHECK(d.genotype.layers[0] == std::vector<CandidateSpec>{set[4]});
    CHECK(d.genotype.layers[1] == std::vector<CandidateSpec>{set[2]});
    CHECK(d.genotype.layers[2] == std::vector<CandidateSpec>{set[0]});
    CHECK(d.genotype.layers[3] == std::vector<CandidateSpec>{CandidateSpec::skip()});
    // A uniform shift of every row leaves the result unchanged.
    AlphaTable shifted = a.clone();
    for (std::size_t l = 0; l < 9; ++l)
      for (std::size_t c = 0; c < 9; ++c)
        if (a.available(l, c)) shifted.set_raw(l, c, a.raw(l, c) - 3.25);
    CHECK(derive_genotype(shifted).genotype == d.genotype);
  }

  TEST_CASE("masked skip is never derived") {
    AlphaTable a(SearchSpaceConfig::desk_scale(), SearchMethod::kDarts);
    for (std::size_t l = 0; l < 9; ++l)
      for (std::size_t c = 0; c < 8; ++c)
        if (a.available(l, c)) a.set_raw(l, c, -5);
    const auto g = derive_genotype(a).genotype;
    const auto space = SearchSpaceConfig::desk_scale();
    for (int l = 0; l < 9; ++l) {
      CHECK(g.layers[static_cast<std::size_t>(l)][0].is_skip() == space.skip_allowed(l));
    }
    validate_genotype(g, space);
  }

  TEST_CASE("threshold derivation with fallback") {
    AlphaTable a(SearchSpaceConfig::desk_scale(), SearchMethod::kFairDarts);
    for (std::size_t l = 0; l < 9; ++l)
      for (std::size_t c = 0; c < 9; ++c)
        if (a.available(l, c)) a.set_raw(l, c, -3);
    // sigmoid(2) = 0.881 >= 0.8; sigmoid(1.2) = 0.769 < 0.8.
    a.set_raw(0, 1, 2.0);
    a.set_raw(0, 6, 2.5);
    a.set_raw(1, 3, 1.2);
    a.set_raw(1, 5, 1.1);
    const auto d = derive_genotype(a, 0.8);
    const auto set = default_candidate_set();
    CHECK(d.genotype.layers[0] == std::vector<CandidateSpec>{set[1], set[6]});
    CHECK(d.genotype.layers[1] == std::vector<CandidateSpec>{set[3]});
    CHECK(std::find(d.fallback_layers.begin(), d.fallback_layers.end(), 0) ==
          d.fallback_layers.end());
    CHECK(d.fallback_layers.size() == 8);
    CHECK(d.fallback_layers.front() == 1);
    validate_genotype(d.genotype, SearchSpaceConfig::desk_scale());
  }

  TEST_CASE("random alpha always derives a buildable genotype") {
    const auto space = SearchSpaceConfig::desk_scale();
    std::mt19937_64 rng(12);
    std::normal_distribution<double> nd(0, 3);
    for (int trial = 0; trial < 100; ++trial) {
      for (auto m : {SearchMethod::kDarts, SearchMethod::kFairDarts}) {
        AlphaTable a(space, m);
        for (std::size_t l = 0; l < 9; ++l)
          for (std::size_t c = 0; c < 9; ++c)
            if (a.available(l, c)) a.set_raw(l, c, static_cast<Real>(nd(rng)));
        const auto g = derive_genotype(a).genotype;
        CHECK_NOTHROW(validate_genotype(g, space));
        for (const auto& layer : g.layers) CHECK_FALSE(layer.empty());
      }
    }
  }

  TEST_CASE("random sampling is uniform over available candidates") {
    const auto space = SearchSpaceConfig::standard();
    std::mt19937_64 rng(2024);
    std::vector<std::map<std::string, int>> counts(9);
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
      const auto g = random_sample_genotype(space, rng);
      validate_genotype(g, space);
      for (std::size_t l = 0; l < 9; ++l) ++counts[l][g.layers[l][0].label()];
    }
    for (std::size_t l = 0; l < 9; ++l) {
      const auto avail = space.available_candidates(static_cast<int>(l));
      CHECK(counts[l].size() == avail.size());
      for (const auto& [label, k] : counts[l]) {
        CHECK(std::abs(static_cast<double>(k) / n - 1.0 / static_cast<double>(avail.size())) <
              0.02);
      }
    }
    std::mt19937_64 r1(5), r2(5);
    CHECK(random_sample_genotype(space, r1) == random_sample_genotype(space, r2));
  }

  TEST_CASE("search space cardinality") {
    const std::vector<std::size_t> six(9, 6), nine(9, 9), one(9, 1);
    CHECK(search_space_cardinality(six) == 10077696ULL);
    CHECK(search_space_cardinality(nine) == 387420489ULL);
    CHECK(search_space_cardinality(one) == 1ULL);
    // Four layers change shape and cannot take skip.
    CHECK(search_space_cardinality(SearchSpaceConfig::standard()) == 4096ULL * 59049ULL);
    const std::vector<std::size_t> huge(40, 9);
    CHECK_THROWS_AS(search_space_cardinality(huge), ConfigError);
  }

  TEST_CASE("alpha trajectory csv round trip") {
    const auto space = SearchSpaceConfig::desk_scale();
    std::mt19937_64 rng(31);
    std::normal_distribution<double> nd(0, 1);
    std::vector<AlphaTable> traj;
    for (int e = 0; e < 3; ++e) {
      AlphaTable a(space, SearchMethod::kFairDarts);
      for (std::size_t l = 0; l < 9; ++l)
        for (std::size_t c = 0; c < 9; ++c)
          if (a.available(l, c)) a.set_raw(l, c, static_cast<Real>(nd(rng) / 3.0));
      traj.push_back(a);
    }
    std::stringstream ss;
    write_alpha_trajectory(ss, traj);
    std::string header;
    std::getline(ss, header);
    CHECK(header == "epoch,layer,candidate,raw_alpha,gate_value");
    ss.seekg(0);
    const auto back = read_alpha_trajectory(ss, space, SearchMethod::kFairDarts);
    REQUIRE(back.size() == 3);
    for (std::size_t e = 0; e < 3; ++e)
      for (std::size_t l = 0; l < 9; ++l)
        for (std::size_t c = 0; c < 9; ++c) CHECK(back[e].raw(l, c) == traj[e].raw(l, c));

    std::stringstream bad("epoch,layer,candidate,raw_alpha,gate_value\n0,0,C3,abc,0.5\n");
    CHECK_THROWS_AS(read_alpha_trajectory(bad, space, SearchMethod::kDarts), ParseError);
    std::stringstream off("epoch,layer,candidate,raw_alpha,gate_value\n0,42,0,1,0.5\n");
    CHECK_THROWS_AS(read_alpha_trajectory(off, space, SearchMethod::kDarts), ConfigError);
  }

  TEST_CASE("non-finite loss raises a numeric error") {
    auto data = tiny_dataset(7);
    data.train.features[0][0] = std::numeric_limits<Real>::quiet_NaN();
    const auto cfg = quick_config(SearchMethod::kDarts);
    Supernet net(SearchSpaceConfig::desk_scale(), cfg);
    SearchOptimizers opt(net, cfg);
    CHECK_THROWS_AS(search_step(net, whole(data.train), whole(data.valid), opt), NumericError);
  }
}
