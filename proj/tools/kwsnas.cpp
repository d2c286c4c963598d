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

// kwsnas: search, derive, train and evaluate keyword-spotting networks.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "kwsnas/blocks.hpp"
#include "kwsnas/checkpoint.hpp"
#include "kwsnas/error.hpp"
#include "kwsnas/experiment.hpp"
#include "kwsnas/protocol.hpp"
#include "kwsnas/search.hpp"
#include "kwsnas/train.hpp"

namespace fs = std::filesystem;
using namespace kwsnas;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct Common {
  std::string config;
  std::string output_dir;
  std::optional<std::uint64_t> seed;
};

ExperimentConfig load_config(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_experiment(c.config);
  if (!c.output_dir.empty()) cfg.output_dir = c.output_dir;
  return cfg;
}

Genotype load_genotype(const std::string& path, const SearchSpaceConfig& space) {
  const GenotypeFile f = parse_genotype(read_text_file(path));
  if (!f.config_hash.empty() && f.config_hash != space.hash()) {
    std::cerr << "warning: " << path << " was derived for a different search space (hash "
              << f.config_hash << ", current " << space.hash() << ")\n";
  }
  validate_genotype(f.genotype, space);
  return f.genotype;
}

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), format, v);
  return buf;
}

const FeatureSplit& pick_split(const FeatureDataset& d, const std::string& name) {
  if (name == "train") return d.train;
  if (name == "valid") return d.valid;
  if (name == "test") return d.test;
  throw ConfigError("unknown split '" + name + "'; valid splits: train, valid, test");
}

// ---------------------------------------------------------------------------

struct SearchArgs {
  Common common;
  std::string method;
  std::optional<int> epochs;
  std::optional<double> noise_std;
  std::optional<double> alpha_lr;
};

int cmd_search(const SearchArgs& a) {
  ExperimentConfig cfg = load_config(a.common);
  if (!a.method.empty()) cfg.search.method = parse_method(a.method);
  if (a.epochs) cfg.search.epochs = *a.epochs;
  if (a.noise_std) cfg.search.noise_std = *a.noise_std;
  if (a.alpha_lr) cfg.search.alpha_lr = *a.alpha_lr;
  if (a.common.seed) cfg.search.seed = *a.common.seed;
  cfg.search.validate();
  const fs::path out = resolve_output_dir(cfg);

  const FeatureDataset data = load_features(cfg.data);
  std::cerr << "search: " << method_name(cfg.search.method) << ", " << data.train.size()
            << " train / " << data.valid.size() << " valid clips\n";
  SearchObserver obs;
  obs.on_epoch = [](const EpochLog& l) {
    std::cerr << "epoch " << l.epoch << " train_loss " << fmt("%.4f", l.train_loss)
              << " train_acc " << fmt("%.4f", l.train_accuracy) << " val_loss "
              << fmt("%.4f", l.arch_loss) << " val_acc " << fmt("%.4f", l.valid_accuracy)
              << " mean_max_gate " << fmt("%.4f", l.mean_max_gate) << " skip_argmax "
              << l.skip_argmax_layers << "\n";
  };
  const SearchResult r = run_search(cfg.space, cfg.search, data, obs);
  const Derivation d = derive_genotype(r.supernet->alpha(), cfg.search.threshold);
  for (int l : d.fallback_layers) {
    std::cerr << "warning: layer " << l << " has no gate >= " << cfg.search.threshold
              << "; falling back to the argmax\n";
  }

  fs::create_directories(out);
  write_resolved_config(out, cfg);
  write_alpha_trajectory((out / "alpha.csv").string(), r.trajectory);
  write_text_file(out / "genotype.json", serialize_genotype(d.genotype, cfg.space));
  save_checkpoint((out / "supernet.ckpt").string(), *r.supernet);
  std::ostringstream log;
  log << "epoch,train_loss,train_accuracy,val_loss,val_accuracy,mean_max_gate,skip_argmax\n";
  for (const auto& l : r.log) {
    log << l.epoch << ',' << fmt("%.17g", l.train_loss) << ',' << fmt("%.17g", l.train_accuracy)
        << ',' << fmt("%.17g", l.arch_loss) << ',' << fmt("%.17g", l.valid_accuracy) << ','
        << fmt("%.17g", l.mean_max_gate) << ',' << l.skip_argmax_layers << '\n';
  }
  write_text_file(out / "search_log.csv", log.str());
  std::cout << genotype_to_string(d.genotype) << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct DeriveArgs {
  Common common;
  std::string alpha;
  std::string checkpoint;
  std::string method;
  double threshold = 0.8;
  std::string out;
};

int cmd_derive(const DeriveArgs& a) {
  if (a.alpha.empty() == a.checkpoint.empty()) {
    throw ConfigError("derive needs exactly one of --alpha or --checkpoint");
  }
  SearchSpaceConfig space;
  AlphaTable alpha;
  if (!a.checkpoint.empty()) {
    auto net = load_supernet(a.checkpoint);
    space = net->space();
    alpha = net->alpha().clone();
  } else {
    // The space comes from --config, else the config.json written beside the CSV.
    Common c = a.common;
    if (c.config.empty()) {
      const fs::path beside = fs::path(a.alpha).parent_path() / "config.json";
      if (fs::exists(beside)) c.config = beside.string();
    }
    const ExperimentConfig cfg = load_config(c);
    space = cfg.space;
    const SearchMethod m = a.method.empty() ? cfg.search.method : parse_method(a.method);
    alpha = read_alpha_trajectory(a.alpha, space, m).back();
  }
  if (!a.method.empty() && !a.checkpoint.empty()) {
    // Re-gate the stored alpha under the requested method.
    AlphaTable re(space, parse_method(a.method));
    for (std::size_t l = 0; l < alpha.num_layers(); ++l) {
      for (int c : alpha.row_candidates(l)) {
        re.set_raw(l, static_cast<std::size_t>(c), alpha.raw(l, static_cast<std::size_t>(c)));
      }
    }
    alpha = re;
  }
  const Derivation d = derive_genotype(alpha, a.threshold);
  for (int l : d.fallback_layers) {
    std::cerr << "warning: layer " << l << " has no gate >= " << a.threshold
              << "; falling back to the argmax\n";
  }
  const std::string text = serialize_genotype(d.genotype, space);
  if (a.out.empty()) {
    std::cout << text;
  } else {
    write_text_file(a.out, text);
    std::cout << genotype_to_string(d.genotype) << "\n";
  }
  return kOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  Common common;
  std::string genotype;
  std::optional<int> epochs;
  int seeds = 1;
};

int cmd_train(const TrainArgs& a) {
  ExperimentConfig cfg = load_config(a.common);
  if (a.epochs) cfg.train.epochs = *a.epochs;
  if (a.common.seed) cfg.train.seed = *a.common.seed;
  cfg.train.validate();
  if (a.seeds < 1) throw ConfigError("--seeds must be >= 1");
  const Genotype g = load_genotype(a.genotype, cfg.space);
  const fs::path out = resolve_output_dir(cfg);
  const FeatureDataset data = load_features(cfg.data);
  if (data.test.empty()) throw DataError("test split is empty");

  std::vector<RunMetrics> runs;
  for (int s = 0; s < a.seeds; ++s) {
    TrainConfig tc = cfg.train;
    tc.seed = cfg.train.seed + static_cast<std::uint64_t>(s);
    auto net = build_network(g, cfg.space, tc.seed);
    std::cerr << "train: seed " << tc.seed << ", " << genotype_to_string(g) << "\n";
    const TrainResult tr = train_model(*net, data, tc, [](const TrainEpochLog& l) {
      std::cerr << "epoch " << l.epoch << " lr " << fmt("%.4g", l.lr) << " train_loss "
                << fmt("%.4f", l.train_loss) << " train_acc " << fmt("%.4f", l.train_accuracy)
                << " val_loss " << fmt("%.4f", l.valid_loss) << " val_acc "
                << fmt("%.4f", l.valid_accuracy) << "\n";
    });
    RunMetrics m;
    m.run_id = "run" + std::to_string(s);
    m.seed = tc.seed;
    m.top1 = evaluate_top1(*net, data.test);
    m.params = count_params(*net);
    m.madds = count_madds(*net, data.test.frames);
    m.roc = compute_roc(*net, data.test);
    std::cerr << "best epoch " << tr.best_epoch << ", test top-1 " << fmt("%.4f", m.top1) << "\n";
    const fs::path dir = a.seeds == 1 ? out : out / m.run_id;
    fs::create_directories(dir);
    save_checkpoint((dir / "model.ckpt").string(), *net);
    std::ostringstream roc;
    write_roc_csv(roc, m.roc);
    write_text_file(dir / "roc.csv", roc.str());
    runs.push_back(std::move(m));
  }
  fs::create_directories(out);
  write_resolved_config(out, cfg);
  std::ostringstream metrics;
  write_metrics_csv(metrics, runs);
  write_text_file(out / "metrics.csv", metrics.str());
  const ModelAverage avg = average_models(runs);
  const std::string row = format_table_row(genotype_to_string(g), avg);
  write_text_file(out / "summary.txt", row + "\n");
  std::cout << row << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  Common common;
  std::string checkpoint;
  std::string split = "test";
  std::string out;  // roc only
};

int cmd_eval(const EvalArgs& a) {
  const ExperimentConfig cfg = load_config(a.common);
  auto net = load_network(a.checkpoint);
  const FeatureDataset data = load_features(cfg.data);
  const double top1 = evaluate_top1(*net, pick_split(data, a.split));
  std::cout << "top1 " << fmt("%.6f", top1) << "\n";
  return kOk;
}

int cmd_roc(const EvalArgs& a) {
  const ExperimentConfig cfg = load_config(a.common);
  auto net = load_network(a.checkpoint);
  const FeatureDataset data = load_features(cfg.data);
  const auto roc = compute_roc(*net, pick_split(data, a.split));
  std::ostringstream os;
  write_roc_csv(os, roc);
  if (a.out.empty()) std::cout << os.str();
  else write_text_file(a.out, os.str());
  return kOk;
}

// ---------------------------------------------------------------------------

struct CountArgs {
  Common common;
  std::string baseline;
  std::string genotype;
  double multiplier = 1.5;
  int frames = 98;
};

int cmd_count(const CountArgs& a) {
  std::unique_ptr<Network> net;
  if (!a.baseline.empty()) {
    if (a.baseline != "tc-resnet-14") {
      throw ConfigError("unknown baseline '" + a.baseline + "'; valid baselines: tc-resnet-14");
    }
    net = build_tc_resnet14(a.multiplier);
  } else if (!a.genotype.empty()) {
    const ExperimentConfig cfg = load_config(a.common);
    net = build_network(load_genotype(a.genotype, cfg.space), cfg.space, 0);
  } else {
    throw ConfigError("count needs --baseline or --genotype");
  }
  if (a.frames < 1) throw ConfigError("--frames must be >= 1");
  const auto frames = static_cast<std::size_t>(a.frames);
  std::cout << "params " << count_params(*net) << " (" << format_count(static_cast<double>(count_params(*net)))
            << ")\nmadds " << count_madds(*net, frames) << " ("
            << format_count(static_cast<double>(count_madds(*net, frames))) << ")\nmacs "
            << count_macs(*net, frames) << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string out;
  int clips = 480;
  int speakers = 40;
  std::uint64_t seed = 0;
};

int cmd_synth(const SynthArgs& a) {
  SynthSpec spec;
  spec.n_clips = a.clips;
  spec.n_speakers = a.speakers;
  spec.seed = a.seed;
  const auto clips = synth_dataset(spec);
  const fs::path p(a.out);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  write_manifest(p, clips);
  std::cout << clips.size() << " clips\n";
  return kOk;
}

struct RandomArgs {
  Common common;
  int n = 8;
};

int cmd_random(const RandomArgs& a) {
  const ExperimentConfig cfg = load_config(a.common);
  if (a.n < 1) throw ConfigError("-n must be >= 1");
  std::mt19937_64 rng(a.common.seed.value_or(0));
  const fs::path out = a.common.output_dir.empty() && a.common.config.empty()
                           ? fs::path()
                           : resolve_output_dir(cfg);
  for (int i = 0; i < a.n; ++i) {
    const Genotype g = random_sample_genotype(cfg.space, rng);
    std::cout << genotype_to_string(g) << "\n";
    if (!out.empty()) {
      char name[32];
      std::snprintf(name, sizeof(name), "random_%03d.json", i);
      write_text_file(out / name, serialize_genotype(g, cfg.space));
    }
  }
  return kOk;
}

void add_common(CLI::App* sub, Common& c, bool with_seed = true) {
  sub->add_option("-c,--config", c.config, "experiment config (JSON)");
  sub->add_option("-o,--output-dir", c.output_dir, "output directory (overrides the config)");
  if (with_seed) sub->add_option("--seed", c.seed, "random seed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentiable architecture search for TC-ResNet keyword spotting"};
  app.require_subcommand(1);

  SearchArgs search;
  auto* s = app.add_subcommand("search", "run a supernet search and derive a genotype");
  add_common(s, search.common);
  s->add_option("-m,--method", search.method, "darts | fairdarts | noisydarts");
  s->add_option("--epochs", search.epochs, "search epochs");
  s->add_option("--noise-std", search.noise_std, "NoisyDARTS noise standard deviation");
  s->add_option("--alpha-lr", search.alpha_lr, "architecture learning rate");

  DeriveArgs derive;
  auto* d = app.add_subcommand("derive", "derive a genotype from alpha values");
  add_common(d, derive.common, false);
  d->add_option("--alpha", derive.alpha, "alpha trajectory CSV (last epoch is used)");
  d->add_option("--checkpoint", derive.checkpoint, "supernet checkpoint");
  d->add_option("-m,--method", derive.method, "darts | fairdarts | noisydarts");
  d->add_option("--threshold", derive.threshold, "FairDARTS gate threshold")->check(CLI::Range(0.0, 1.0));
  d->add_option("--out", derive.out, "genotype file to write");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "train a genotype from scratch and evaluate it");
  add_common(t, train.common);
  t->add_option("-g,--genotype", train.genotype, "genotype file")->required();
  t->add_option("--epochs", train.epochs, "training epochs");
  t->add_option("--seeds", train.seeds, "independent runs with seeds seed, seed+1, ...");

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "top-1 accuracy of a trained checkpoint");
  add_common(e, eval.common, false);
  e->add_option("--checkpoint", eval.checkpoint, "network checkpoint")->required();
  e->add_option("--split", eval.split, "train | valid | test");

  EvalArgs roc;
  auto* r = app.add_subcommand("roc", "keyword detection ROC of a trained checkpoint");
  add_common(r, roc.common, false);
  r->add_option("--checkpoint", roc.checkpoint, "network checkpoint")->required();
  r->add_option("--split", roc.split, "train | valid | test");
  r->add_option("--out", roc.out, "CSV file to write (default: stdout)");

  CountArgs count;
  auto* c = app.add_subcommand("count", "parameter and multiply-add counts");
  add_common(c, count.common, false);
  c->add_option("--baseline", count.baseline, "tc-resnet-14");
  c->add_option("-g,--genotype", count.genotype, "genotype file");
  c->add_option("--multiplier", count.multiplier, "baseline channel multiplier");
  c->add_option("--frames", count.frames, "input frames");

  SynthArgs synth;
  auto* y = app.add_subcommand("synth", "write a synthetic dataset manifest");
  y->add_option("--out", synth.out, "manifest CSV")->required();
  y->add_option("--clips", synth.clips, "number of clips");
  y->add_option("--speakers", synth.speakers, "number of speakers");
  y->add_option("--seed", synth.seed, "random seed");

  RandomArgs random;
  auto* rnd = app.add_subcommand("random", "sample uniform random genotypes");
  add_common(rnd, random.common);
  rnd->add_option("-n", random.n, "number of genotypes");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*s) return cmd_search(search);
    if (*d) return cmd_derive(derive);
    if (*t) return cmd_train(train);
    if (*e) return cmd_eval(eval);
    if (*r) return cmd_roc(roc);
    if (*c) return cmd_count(count);
    if (*y) return cmd_synth(synth);
    if (*rnd) return cmd_random(random);
  } catch (const DataError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kData;
  } catch (const NumericError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kNumeric;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
