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
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "doctest.h"
#include "kwsnas/checkpoint.hpp"
#include "kwsnas/protocol.hpp"
#include "kwsnas/search.hpp"
#include "kwsnas/train.hpp"
#include "test_util.hpp"

using namespace kwsnas;
using kwsnas::testing::random_split;
using kwsnas::testing::random_tensor;
using kwsnas::testing::TempDir;

namespace {

// Emits a fixed logit row per example; the row index is carried in the
// first feature value of each input.
class TableModel : public Model {
 public:
  explicit TableModel(std::vector<std::vector<Real>> rows) : rows_(std::move(rows)) {}
  Tensor forward(Tape&, const Tensor& inputs, bool) override {
    const std::size_t n = inputs.dim(0);
    const std::size_t stride = inputs.numel() / n;
    const std::size_t k = rows_.front().size();
    std::vector<Real> out;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& r = rows_.at(static_cast<std::size_t>(inputs.values()[i * stride]));
      out.insert(out.end(), r.begin(), r.end());
    }
    return Tensor::from_values({n, k}, std::move(out));
  }
  std::vector<NamedTensor> named_parameters() const override { return {}; }

 private:
  std::vector<std::vector<Real>> rows_;
};

// Split of `n` examples whose first feature is the example index.
FeatureSplit indexed_split(const std::vector<int>& labels) {
  FeatureSplit s;
  s.n_mfcc = 1;
  s.frames = 2;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    s.features.push_back({static_cast<Real>(i), 0});
    s.labels.push_back(labels[i]);
  }
  return s;
}

std::vector<Real> one_hot(int c, Real hi = 5) {
  std::vector<Real> r(kNumClasses, 0);
  r[static_cast<std::size_t>(c)] = hi;
  return r;
}

std::vector<int> cycling_labels(std::size_t n) {
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<int>(i % kNumClasses);
  return out;
}

SearchSpaceConfig two_layer_space() {
  SearchSpaceConfig s = SearchSpaceConfig::desk_scale();
  s.num_layers = 2;
  s.channels = {16, 16};
  s.strides = {2, 1};
  s.stem_channels = 16;
  return s;
}

FeatureSplit synth_features(int n_clips, std::uint64_t seed) {
  const auto clips = synth_dataset({40, n_clips, seed});
  MfccExtractor ex;
  return featurize(clips, ex);
}

}  // namespace

TEST_SUITE("train") {
  TEST_CASE("step schedule") {
    TrainConfig c;
    c.epochs = 10;
    CHECK(lr_at_epoch(c, 0) == doctest::Approx(0.1));
    CHECK(lr_at_epoch(c, 5) == doctest::Approx(0.1));
    CHECK(lr_at_epoch(c, 6) == doctest::Approx(0.01));
    CHECK(lr_at_epoch(c, 8) == doctest::Approx(0.001));
    double prev = 1e9;
    for (int e = 0; e < 10; ++e) {
      CHECK(lr_at_epoch(c, e) <= prev);
      prev = lr_at_epoch(c, e);
    }
    TrainConfig bad = c;
    bad.decay = 2;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.epochs = -1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    CHECK(to_json(train_from_json(to_json(c))) == to_json(c));
  }

  TEST_CASE("two-layer network overfits 64 clips") {
    FeatureDataset data;
    data.train = synth_features(64, 5);
    const auto space = two_layer_space();
    std::mt19937_64 rng(1);
    const Genotype g = genotype_from_string("C3 C5");
    auto net = build_network(g, space, 1);
    TrainConfig cfg;
    cfg.epochs = 100;
    cfg.batch_size = 16;
    cfg.seed = 2;
    const auto res = train_model(*net, data, cfg);
    const bool reached = std::any_of(res.log.begin(), res.log.end(),
                                     [](const TrainEpochLog& l) { return l.train_accuracy == 1.0; });
    CHECK(reached);
    CHECK(evaluate_top1(*net, data.train) == 1.0);
  }

  TEST_CASE("untrained network sits at chance") {
    const auto space = SearchSpaceConfig::desk_scale();
    const FeatureSplit split = random_split(cycling_labels(240), 40, 98, 77);
    std::mt19937_64 rng(4);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      auto net = build_network(random_sample_genotype(space, rng), space, seed);
      const double acc = evaluate_top1(*net, split);
      CHECK(acc >= 1.0 / 12 - 0.05);
      CHECK(acc <= 1.0 / 12 + 0.05);
    }
  }

  TEST_CASE("oracle model scores 1") {
    const auto labels = cycling_labels(36);
    std::vector<std::vector<Real>> rows;
    for (int l : labels) rows.push_back(one_hot(l));
    TableModel oracle(rows);
    CHECK(evaluate_top1(oracle, indexed_split(labels)) == 1.0);
  }

  TEST_CASE("top-1 equals the confusion-matrix trace on a 24-clip fixture") {
    const auto labels = cycling_labels(24);
    // Predictions written out by hand; seven of them are wrong
    // (positions 2, 5, 9, 13, 14, 20, 23).
    const std::vector<int> pred = {0, 1, 7, 3, 4, 11, 6, 7, 8, 0, 10, 11,
                                   0, 4, 10, 3, 4, 5, 6, 7, 9, 9, 10, 2};
    std::vector<std::vector<Real>> rows;
    for (int p : pred) rows.push_back(one_hot(p));
    std::vector<std::vector<int>> confusion(12, std::vector<int>(12, 0));
    for (std::size_t i = 0; i < 24; ++i) ++confusion[labels[i]][pred[i]];
    int trace = 0;
    for (int c = 0; c < 12; ++c) trace += confusion[c][c];
    CHECK(trace == 17);
    TableModel m(rows);
    CHECK(evaluate_top1(m, indexed_split(labels)) == doctest::Approx(17.0 / 24.0).epsilon(1e-15));
  }

  TEST_CASE("argmax ties go to the lowest class index") {
    std::vector<Real> tie(kNumClasses, 0);
    tie[3] = tie[7] = 2;
    CHECK(argmax(tie) == 3);
    TableModel m({tie, tie});
    CHECK(evaluate_top1(m, indexed_split({3, 7})) == 0.5);
  }

  TEST_CASE("top-1 ignores the order of the split") {
    const auto space = SearchSpaceConfig::desk_scale();
    auto net = build_network(genotype_from_string("C3 C5 C7 C9 C3 C5 C7 C9 C3"), space, 3);
    FeatureSplit s = random_split(cycling_labels(60), 40, 98, 5);
    const double base = evaluate_top1(*net, s, 16);
    std::vector<std::size_t> perm(s.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(6);
    std::shuffle(perm.begin(), perm.end(), rng);
    FeatureSplit p = s;
    for (std::size_t i = 0; i < perm.size(); ++i) {
      p.features[i] = s.features[perm[i]];
      p.labels[i] = s.labels[perm[i]];
    }
    CHECK(evaluate_top1(*net, p, 7) == base);
  }

  TEST_CASE("empty split is an error") {
    TableModel m({one_hot(0)});
    FeatureSplit empty;
    CHECK_THROWS_AS(evaluate_top1(m, empty), DataError);
    CHECK_THROWS_AS(compute_roc(m, empty), DataError);
  }

  TEST_CASE("training is deterministic and leaves the data alone") {
    FeatureDataset data;
    data.train = random_split(cycling_labels(48), 40, 32, 9);
    data.valid = random_split(cycling_labels(24), 40, 32, 10);
    data.test = random_split(cycling_labels(24), 40, 32, 11);
    const FeatureDataset copy = data;
    const auto space = SearchSpaceConfig::desk_scale();
    const Genotype g = genotype_from_string("C3 C5SE C7 skip C9 C3 C5 skip C3");
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 16;
    cfg.seed = 4;
    auto run = [&] {
      auto net = build_network(g, space, 4);
      const auto res = train_model(*net, data, cfg);
      std::vector<double> out;
      for (const auto& l : res.log) {
        out.push_back(l.train_loss);
        out.push_back(l.valid_loss);
      }
      out.push_back(evaluate_top1(*net, data.test));
      return out;
    };
    const auto a = run();
    CHECK(a == run());
    CHECK(data.train.features == copy.train.features);
    CHECK(data.train.labels == copy.train.labels);
    CHECK(data.valid.features == copy.valid.features);
  }

  TEST_CASE("best checkpoint by validation accuracy is restored") {
    FeatureDataset data;
    data.train = synth_features(96, 12);
    data.valid = synth_features(48, 13);
    const auto space = two_layer_space();
    auto net = build_network(genotype_from_string("C3 C3"), space, 8);
    TrainConfig cfg;
    cfg.epochs = 6;
    cfg.batch_size = 16;
    const auto res = train_model(*net, data, cfg);
    double best = 0;
    for (const auto& l : res.log) best = std::max(best, l.valid_accuracy);
    CHECK(res.best_valid_accuracy == best);
    CHECK(evaluate_top1(*net, data.valid) == doctest::Approx(best).epsilon(1e-12));
  }

  TEST_CASE("divergence reports the epoch and last finite loss") {
    // Finite for the first three batches, NaN afterwards.
    class Diverging : public Model {
     public:
      Tensor forward(Tape& tape, const Tensor& inputs, bool) override {
        const Tensor logits = linear(tape, global_avg_pool(tape, inputs), w_, b_);
        if (++calls_ <= 3) return logits;
        const std::vector<Real> nan(logits.numel(), std::nan(""));
        return add_constant(tape, logits, nan);
      }
      std::vector<NamedTensor> named_parameters() const override {
        return {{"w", w_}, {"b", b_}};
      }

     private:
      // Zero weights make the first losses exactly ln 12.
      Tensor w_ = Tensor::zeros({static_cast<std::size_t>(kNumClasses), 1}, true);
      Tensor b_ = Tensor::zeros({static_cast<std::size_t>(kNumClasses)}, true);
      int calls_ = 0;
    };
    FeatureDataset data;
    data.train = random_split(cycling_labels(48), 1, 2, 3);
    Diverging m;
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 12;
    cfg.lr = 1e-12;  // keep the loss at ln 12 until the NaN appears
    try {
      train_model(m, data, cfg);
      FAIL("no throw");
    } catch (const NumericError& e) {
      const std::string msg = e.what();
      INFO(msg);
      CHECK(msg.find("epoch 1") != std::string::npos);
      CHECK(msg.find("2.48491") != std::string::npos);  // ln 12
    }
  }
}

TEST_SUITE("roc") {
  // 30 clips: labels cycle over all twelve classes, posteriors drawn at
  // random and normalized.
  struct RocFixture {
    std::vector<int> labels = cycling_labels(30);
    std::vector<std::vector<Real>> probs;
    RocFixture() {
      std::mt19937_64 rng(2718);
      std::gamma_distribution<double> g(0.4, 1.0);
      for (std::size_t i = 0; i < labels.size(); ++i) {
        std::vector<Real> p(kNumClasses);
        double z = 0;
        for (auto& v : p) z += (v = g(rng));
        for (auto& v : p) v /= z;
        // Bias about half of the rows toward the true class.
        if (i % 2 == 0) {
          p[labels[i]] += 0.5;
          for (auto& v : p) v /= 1.5;
        }
        probs.push_back(p);
      }
    }
  };

  // Direct recount at one threshold, clip by clip.
  std::pair<double, double> recount(const RocFixture& f, double t) {
    int neg = 0, pos = 0, fp = 0, missed = 0;
    for (std::size_t i = 0; i < f.labels.size(); ++i) {
      const auto& p = f.probs[i];
      double score = 0;
      for (int c = 0; c < 10; ++c) score = std::max(score, static_cast<double>(p[c]));
      int best = 0;
      for (int c = 1; c < 12; ++c)
        if (p[c] > p[best]) best = c;
      if (f.labels[i] < 10) {
        ++pos;
        if (!(score >= t && best == f.labels[i])) ++missed;
      } else {
        ++neg;
        if (score >= t) ++fp;
      }
    }
    return {static_cast<double>(fp) / neg, static_cast<double>(missed) / pos};
  }

  TEST_CASE("sweep matches a brute-force recount exactly") {
    const RocFixture f;
    const auto roc = roc_from_scores(f.probs, f.labels);
    std::set<double> scores;
    for (const auto& p : f.probs) scores.insert(*std::max_element(p.begin(), p.begin() + 10));
    CHECK(roc.size() >= scores.size());
    for (const auto& pt : roc) {
      const auto [fpr, fnr] = recount(f, pt.threshold);
      CHECK(pt.fpr == fpr);
      CHECK(pt.fnr == fnr);
    }
    // Every distinct score is one of the swept thresholds.
    std::set<double> swept;
    for (const auto& pt : roc) swept.insert(pt.threshold);
    for (double s : scores) CHECK(swept.count(s) == 1);
  }

  TEST_CASE("endpoints") {
    const RocFixture f;
    const std::vector<double> ends = {0.0, 1.5};
    const auto roc = roc_from_scores(f.probs, f.labels, ends);
    int wrong_keywords = 0, keywords = 0;
    for (std::size_t i = 0; i < f.labels.size(); ++i) {
      if (f.labels[i] >= 10) continue;
      ++keywords;
      if (static_cast<int>(argmax(f.probs[i])) != f.labels[i]) ++wrong_keywords;
    }
    CHECK(roc[0].fpr == 1.0);
    CHECK(roc[0].fnr == static_cast<double>(wrong_keywords) / keywords);
    CHECK(roc[1].fpr == 0.0);
    CHECK(roc[1].fnr == 1.0);
  }

  TEST_CASE("fpr falls as the threshold rises") {
    const RocFixture f;
    auto roc = roc_from_scores(f.probs, f.labels);
    std::sort(roc.begin(), roc.end(),
              [](const RocPoint& a, const RocPoint& b) { return a.threshold < b.threshold; });
    for (std::size_t i = 1; i < roc.size(); ++i) {
      CHECK(roc[i].fpr <= roc[i - 1].fpr);
      CHECK(roc[i].fnr >= roc[i - 1].fnr);
      CHECK(roc[i].fpr >= 0);
      CHECK(roc[i].fnr <= 1);
    }
  }

  TEST_CASE("roc needs both classes of clip") {
    std::vector<std::vector<Real>> p(3, std::vector<Real>(kNumClasses, 1.0 / 12));
    const std::vector<int> only_kw = {0, 1, 2};
    CHECK_THROWS_AS(roc_from_scores(p, only_kw), DataError);
    const std::vector<int> only_neg = {10, 11, 10};
    CHECK_THROWS_AS(roc_from_scores(p, only_neg), DataError);
  }

  TEST_CASE("compute_roc uses softmax posteriors of the model") {
    const auto labels = cycling_labels(24);
    std::vector<std::vector<Real>> logits;
    for (int l : labels) logits.push_back(one_hot(l, 3));
    TableModel m(logits);
    const double top = std::exp(3.0) / (std::exp(3.0) + 11.0);
    const double low = 1.0 / (std::exp(3.0) + 11.0);
    // Keyword clips score `top`, silence and unknown clips score `low`.
    const std::vector<double> cut = {top - 1e-9, low - 1e-9};
    const auto roc = compute_roc(m, indexed_split(labels), cut);
    CHECK(roc[0].fnr == 0.0);
    CHECK(roc[0].fpr == 0.0);
    CHECK(roc[1].fnr == 0.0);
    CHECK(roc[1].fpr == 1.0);
  }

  TEST_CASE("csv writers") {
    std::ostringstream m, r;
    const std::vector<RunMetrics> runs = {{"a", 1, 0.5, 10, 20, {}}};
    write_metrics_csv(m, runs);
    CHECK(m.str() == "run_id,seed,top1,params,madds\na,1,0.5,10,20\n");
    const std::vector<RocPoint> pts = {{0.5, 0.25, 0.125}};
    write_roc_csv(r, pts);
    CHECK(r.str() == "threshold,fpr,fnr\n0.5,0.25,0.125\n");
  }
}

TEST_SUITE("protocol") {
  TEST_CASE("seven-run mean and sample deviation") {
    const std::vector<double> runs = {0.9650, 0.9671, 0.9632, 0.9689, 0.9645, 0.9660, 0.9654};
    const auto s = summarize_accuracy(runs);
    // Hand computation: sum 6.7601, mean 0.965728571...; squared
    // deviations sum to 2.0554286e-5, so s = sqrt(2.0554286e-5 / 6).
    CHECK(s.runs == 7);
    CHECK(s.mean == doctest::Approx(0.9657285714285714).epsilon(1e-12));
    CHECK(s.std == doctest::Approx(0.00185087).epsilon(1e-5));
    CHECK(s.best == 0.9689);
    CHECK(format_mean_std(s) == "96.57±0.19");
  }

  TEST_CASE("single run has zero deviation") {
    const std::vector<double> one = {0.5};
    const auto s = summarize_accuracy(one);
    CHECK(s.std == 0.0);
    CHECK(format_mean_std(s) == "50.00±0.00");
    CHECK_THROWS(summarize_accuracy(std::vector<double>{}));
  }

  TEST_CASE("eight-model averaging") {
    std::vector<RunMetrics> runs;
    const std::int64_t params[] = {100000, 110000, 120000, 130000, 90000, 95000, 105000, 150000};
    const std::int64_t madds[] = {4000000, 4200000, 3800000, 5000000,
                                  4100000, 3900000, 4400000, 4600000};
    const double acc[] = {0.95, 0.96, 0.94, 0.97, 0.95, 0.96, 0.95, 0.96};
    for (int i = 0; i < 8; ++i) runs.push_back({"m" + std::to_string(i), 0, acc[i], params[i], madds[i], {}});
    const auto a = average_models(runs);
    // 900000 / 8 and 34000000 / 8.
    CHECK(a.mean_params == 112500.0);
    CHECK(a.mean_madds == 4250000.0);
    CHECK(a.accuracy.runs == 8);
    CHECK(a.accuracy.mean == doctest::Approx(0.955).epsilon(1e-12));
    // Deviations are +-0.005 six times and +-0.015 twice: squared sum 6e-4.
    CHECK(a.accuracy.std == doctest::Approx(std::sqrt(0.0006 / 7)).epsilon(1e-9));
    CHECK(a.accuracy.best == 0.97);
    CHECK(format_table_row("Fixture", a) == "Fixture | 112K | 4.25M | 95.50±0.93 | 97.0");
  }

  TEST_CASE("count formatting") {
    CHECK(format_count(305000) == "305K");
    CHECK(format_count(13400000) == "13.4M");
    CHECK(format_count(66500) == "66.5K");
    CHECK(format_count(950) == "950");
    CHECK(format_count(12.5) == "12.5");
    CHECK(format_count(3.14159) == "3.14");
  }
}

TEST_SUITE("checkpoint") {
  TEST_CASE("network round trip is bit exact") {
    TempDir dir("ckpt");
    const auto space = SearchSpaceConfig::desk_scale();
    auto net = build_network(genotype_from_string("C3SE C5 C7+C9SE skip C9 C3 C5SE skip C7"), space,
                             21);
    // Move the batch-norm statistics off their initial values.
    {
      std::mt19937_64 rng(2);
      Tape tape(false);
      net->forward(tape, random_tensor({4, 40, 98}, rng), true);
    }
    const std::string path = (dir.path() / "net.ckpt").string();
    save_checkpoint(path, *net);
    auto back = load_network(path);
    CHECK(back->genotype() == net->genotype());
    CHECK(back->space() == space);
    auto same = [](const std::vector<NamedTensor>& a, const std::vector<NamedTensor>& b) {
      REQUIRE(a.size() == b.size());
      for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].name == b[i].name);
        const auto x = a[i].tensor.values();
        const auto y = b[i].tensor.values();
        REQUIRE(x.size() == y.size());
        CHECK(std::memcmp(x.data(), y.data(), x.size_bytes()) == 0);
      }
    };
    same(net->named_parameters(), back->named_parameters());
    same(net->named_buffers(), back->named_buffers());
    std::mt19937_64 rng(3);
    const Tensor x = random_tensor({2, 40, 98}, rng);
    Tape tape(false);
    const Tensor y0 = net->forward(tape, x, false);
    const Tensor y1 = back->forward(tape, x, false);
    CHECK(std::equal(y0.values().begin(), y0.values().end(), y1.values().begin()));
    // Saving again yields the same bytes.
    const std::string again = (dir.path() / "again.ckpt").string();
    save_checkpoint(again, *back);
    std::ifstream a(path, std::ios::binary), b(again, std::ios::binary);
    const std::string ba((std::istreambuf_iterator<char>(a)), {});
    const std::string bb((std::istreambuf_iterator<char>(b)), {});
    CHECK(ba == bb);
  }

  TEST_CASE("supernet round trip keeps alpha") {
    TempDir dir("ckpt");
    SearchConfig cfg;
    cfg.method = SearchMethod::kFairDarts;
    cfg.seed = 5;
    Supernet net(SearchSpaceConfig::desk_scale(), cfg);
    net.alpha().set_raw(3, 2, 0.125);
    net.alpha().set_raw(0, 7, -1.0 / 3.0);
    const std::string path = (dir.path() / "super.ckpt").string();
    save_checkpoint(path, net);
    auto back = load_supernet(path);
    CHECK(back->search_config().method == SearchMethod::kFairDarts);
    for (std::size_t l = 0; l < 9; ++l)
      for (std::size_t c = 0; c < 9; ++c) CHECK(back->alpha().raw(l, c) == net.alpha().raw(l, c));
    CHECK_THROWS_AS(load_network(path), ConfigError);
  }

  TEST_CASE("corrupt files are rejected") {
    TempDir dir("ckpt");
    const auto space = SearchSpaceConfig::desk_scale();
    auto net = build_network(genotype_from_string("C3 C3 C3 C3 C3 C3 C3 C3 C3"), space, 1);
    const std::string path = (dir.path() / "net.ckpt").string();
    save_checkpoint(path, *net);
    std::ifstream in(path, std::ios::binary);
    const std::string bytes((std::istreambuf_iterator<char>(in)), {});
    auto write = [&](const std::string& name, const std::string& content) {
      const std::string p = (dir.path() / name).string();
      std::ofstream(p, std::ios::binary) << content;
      return p;
    };
    std::string magic = bytes;
    magic[0] = 'X';
    CHECK_THROWS_AS(read_checkpoint(write("magic", magic)), ParseError);
    CHECK_THROWS_AS(read_checkpoint(write("short", bytes.substr(0, bytes.size() - 5))),
                    ParseError);
    CHECK_THROWS_AS(read_checkpoint(write("long", bytes + "x")), ParseError);
    CHECK_THROWS_AS(read_checkpoint(write("empty", "")), ParseError);
    CHECK_THROWS_AS(read_checkpoint((dir.path() / "missing").string()), DataError);
  }
}
