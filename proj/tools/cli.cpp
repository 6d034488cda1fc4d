// Copyright 2026 The asymoe Authors. All Rights Reserved.
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


#include "cli.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "asymoe/branch_bias.hpp"
#include "asymoe/datagen.hpp"
#include "asymoe/errors.hpp"
#include "asymoe/gradcheck_suite.hpp"
#include "asymoe/rank.hpp"
#include "asymoe/training.hpp"
#include "json.hpp"

#ifndef ASYMOE_VERSION
#define ASYMOE_VERSION "unknown"
#endif

namespace asymoe::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("config file '" + path.string() + "': " + e.what(), e.byte);
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

/// Owns the run directory and its manifest.
class Run {
 public:
  Run(std::string command, const fs::path& dir) : dir_(dir), start_(std::chrono::steady_clock::now()) {
    fs::create_directories(dir_);
    manifest_ = {{"command", std::move(command)},
                 {"version", ASYMOE_VERSION},
                 {"status", "running"},
                 {"config", nullptr},
                 {"seed", nullptr},
                 {"outputs", json::array()},
                 {"timings", {{"started", utc_now()}}}};
    flush();
  }

  void resolved(const json& config, std::uint64_t seed) {
    manifest_["config"] = config;
    manifest_["seed"] = seed;
    flush();
  }

  fs::path output(const std::string& name) {
    manifest_["outputs"].push_back(name);
    return dir_ / name;
  }

  void finish(const std::optional<json>& error) {
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    manifest_["timings"]["finished"] = utc_now();
    manifest_["timings"]["wall_seconds"] = wall;
    manifest_["status"] = error ? "failed" : "ok";
    if (error) manifest_["error"] = *error;
    flush();
  }

 private:
  void flush() { write_text(dir_ / "manifest.json", manifest_.dump(2) + "\n"); }

  fs::path dir_;
  json manifest_;
  std::chrono::steady_clock::time_point start_;
};

std::string env_name(const std::string& flag) {
  std::string s = "ASYMOE_";
  for (char c : flag.substr(2)) s += c == '-' ? '_' : static_cast<char>(std::toupper(c));
  return s;
}

template <typename T>
CLI::Option* flag(CLI::App* app, const std::string& name, T& target, const std::string& help) {
  return app->add_option(name, target, help)->envname(env_name(name));
}

struct Common {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int precision = 64;
};

void add_common(CLI::App* app, Common& c, const std::string& default_out) {
  c.out = default_out;
  flag(app, "--config", c.config, "JSON config file");
  flag(app, "--seed", c.seed, "Seed override");
  flag(app, "--out", c.out, "Run directory")->capture_default_str();
  flag(app, "--precision", c.precision, "Float width of written tensors")
      ->check(CLI::IsMember({32, 64}))
      ->capture_default_str();
}

struct TrainFlags {
  std::optional<std::size_t> shots, batch_size, epochs, warmup_epochs, log_every;
  std::optional<double> lr, momentum, weight_decay, lambda_bias, lambda_bal, grad_clip;
  std::optional<std::size_t> experts, rank, layers, hidden, shared_dim;
  std::optional<double> alpha, tau;
  std::optional<std::string> orientation, balance_scope;
  std::optional<bool> learn_tau, image_adapters, text_adapters;
};

void add_train_flags(CLI::App* app, TrainFlags& f) {
  flag(app, "--shots", f.shots, "Samples per class");
  flag(app, "--batch-size", f.batch_size, "Batch size");
  flag(app, "--epochs", f.epochs, "Epochs");
  flag(app, "--lr", f.lr, "Base learning rate");
  flag(app, "--momentum", f.momentum, "SGD momentum");
  flag(app, "--weight-decay", f.weight_decay, "Weight decay on adapter matrices");
  flag(app, "--warmup-epochs", f.warmup_epochs, "Linear warmup epochs");
  flag(app, "--log-every", f.log_every, "Steps between metrics records");
  flag(app, "--lambda-bias", f.lambda_bias, "Weight of the dampening term");
  flag(app, "--lambda-bal", f.lambda_bal, "Weight of the balancing term");
  flag(app, "--grad-clip", f.grad_clip, "Global gradient-norm clip, 0 disables");
  flag(app, "--experts", f.experts, "Experts per adapter");
  flag(app, "--rank", f.rank, "Adapter bottleneck width");
  flag(app, "--alpha", f.alpha, "Adapter residual scale");
  flag(app, "--layers", f.layers, "Encoder layers");
  flag(app, "--hidden", f.hidden, "Encoder width");
  flag(app, "--shared-dim", f.shared_dim, "Shared embedding width");
  flag(app, "--tau", f.tau, "Classifier temperature");
  flag(app, "--learn-tau", f.learn_tau, "Train the temperature");
  flag(app, "--orientation", f.orientation, "one-down-many-ups or many-downs-one-up");
  flag(app, "--balance-scope", f.balance_scope, "both, image or text");
  flag(app, "--image-adapters", f.image_adapters, "Adapters in the image branch");
  flag(app, "--text-adapters", f.text_adapters, "Adapters in the text branch");
}

template <typename T, typename U>
void apply(const std::optional<T>& v, U& target) {
  if (v) target = static_cast<U>(*v);
}

TrainConfig resolve_train(const Common& c, const TrainFlags& f) {
  TrainConfig t;
  if (c.config) from_json(read_json_file(*c.config), t);
  apply(c.seed, t.seed);
  apply(f.shots, t.shots);
  apply(f.batch_size, t.batch_size);
  apply(f.epochs, t.epochs);
  apply(f.warmup_epochs, t.warmup_epochs);
  apply(f.log_every, t.log_every);
  apply(f.lr, t.lr);
  apply(f.momentum, t.momentum);
  apply(f.weight_decay, t.weight_decay);
  apply(f.lambda_bias, t.weights.lambda_bias);
  apply(f.lambda_bal, t.weights.lambda_bal);
  apply(f.grad_clip, t.grad_clip);
  apply(f.experts, t.model.experts);
  apply(f.rank, t.model.rank);
  apply(f.alpha, t.model.alpha);
  apply(f.layers, t.model.layers);
  apply(f.hidden, t.model.hidden);
  apply(f.shared_dim, t.model.shared_dim);
  apply(f.tau, t.model.tau);
  apply(f.learn_tau, t.model.learn_tau);
  apply(f.image_adapters, t.model.image_adapters);
  apply(f.text_adapters, t.model.text_adapters);
  if (f.orientation) t.model.orientation = orientation_from_string(*f.orientation);
  if (f.balance_scope) t.balance_scope = balance_scope_from_string(*f.balance_scope);
  t.validate();
  return t;
}

/// Adopts the dataset's input shape so the recorded config is re-runnable.
TrainConfig fit_to_dataset(TrainConfig t, const Dataset& d) {
  t.model.raw_width = d.config.token_width;
  t.model.image_tokens = d.config.tokens_per_sample;
  t.model.text_tokens = d.config.prompt_tokens;
  t.validate();
  return t;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

// gen ------------------------------------------------------------------------

struct GenFlags {
  std::optional<std::size_t> num_classes, tokens, prompt_tokens, token_width, train_per_class,
      test_per_class;
  std::optional<double> separation, noise, ood_shift, base_fraction;
  std::optional<std::string> ood_kind;
};

void cmd_gen(Run& run, const Common& c, const GenFlags& f, std::ostream& out) {
  SyntheticTaskConfig t;
  if (c.config) from_json(read_json_file(*c.config), t);
  apply(c.seed, t.seed);
  apply(f.num_classes, t.num_classes);
  apply(f.tokens, t.tokens_per_sample);
  apply(f.prompt_tokens, t.prompt_tokens);
  apply(f.token_width, t.token_width);
  apply(f.train_per_class, t.train_per_class);
  apply(f.test_per_class, t.test_per_class);
  apply(f.separation, t.class_separation);
  apply(f.noise, t.noise_scale);
  apply(f.ood_shift, t.ood_shift);
  apply(f.base_fraction, t.base_fraction);
  if (f.ood_kind) from_json(json{{"ood_kind", *f.ood_kind}}, t);
  t.validate();
  run.resolved(t, t.seed);
  const Dataset d = generate(t);
  write_dataset(d, run.output("dataset.bin"));
  out << "dataset: " << d.base_classes.size() << " base, " << d.novel_classes.size()
      << " novel classes; " << d.base_train.size() << " train samples\n";
}

// train ----------------------------------------------------------------------

void write_metrics(const fs::path& path, const std::vector<MetricsRecord>& log) {
  std::string text;
  for (const MetricsRecord& r : log) text += json(r).dump() + "\n";
  write_text(path, text);
}

void cmd_train(Run& run, const Common& c, const TrainFlags& f, const std::string& dataset_path,
               std::ostream& out) {
  const Dataset d = read_dataset(dataset_path);
  const TrainConfig t = fit_to_dataset(resolve_train(c, f), d);
  const json snapshot = {{"train", t}, {"dataset", dataset_path}, {"task", d.config}};
  run.resolved(snapshot, t.seed);

  TrainResult r;
  try {
    r = train_from_scratch(d, t);
  } catch (const DivergenceError& e) {
    write_metrics(run.output("metrics.ndjson"), e.log());
    throw;
  }
  write_metrics(run.output("metrics.ndjson"), r.log);
  save_checkpoint(r.model, run.output("checkpoint.bin"), io::precision_from_bits(c.precision),
                  {{"train_config", t}});
  const EvalSummary s = evaluate(r.model, d);
  json summary = s;
  summary["final_loss"] = r.log.empty() ? json(nullptr) : json(r.log.back().loss);
  write_text(run.output("summary.json"), summary.dump(2) + "\n");
  out << "base " << s.base_accuracy << "  novel " << s.novel_accuracy << "  hm " << s.hm
      << "  ood " << s.ood_accuracy << "\n";
}

// gradcheck ------------------------------------------------------------------

int cmd_gradcheck(Run& run, const Common& c, const std::string& scope, std::size_t instances,
                  double epsilon, double tolerance, std::ostream& out) {
  if (c.precision != 64) throw UsageError("gradcheck requires --precision 64");
  GradCheckSuiteConfig g;
  g.scope = gradcheck_scope_from_string(scope);
  g.seed = c.seed.value_or(0);
  g.instances = instances;
  g.check.epsilon = epsilon;
  g.check.tolerance = tolerance;
  run.resolved({{"scope", scope},
                {"instances", instances},
                {"epsilon", epsilon},
                {"tolerance", tolerance},
                {"seed", g.seed}},
               g.seed);
  const GradCheckReport report = run_gradcheck(g);
  write_text(run.output("gradcheck.json"), json(report).dump(2) + "\n");
  for (const BlockReport& b : report.blocks)
    out << (b.passed ? "PASS " : "FAIL ") << std::left << std::setw(40) << b.block << " "
        << std::scientific << std::setprecision(3) << b.max_relative_error << std::defaultfloat
        << "  params " << b.parameters << "  instances " << b.instances << "\n";
  if (!report.passed()) {
    std::string names;
    for (const std::string& n : report.failed_blocks()) names += (names.empty() ? "" : ", ") + n;
    throw NumericError("gradient check failed for: " + names);
  }
  return kExitOk;
}

// rank -----------------------------------------------------------------------

struct RankFlags {
  std::size_t hidden = 16, rank = 2, experts = 3, probes = 32, trials = 100;
  double router_gain = 4.0;
  bool zero_up = false;
};

void cmd_rank(Run& run, const Common& c, const RankFlags& f, std::ostream& out) {
  RankTrialConfig cfg;
  cfg.shape = {f.hidden, f.rank, f.experts};
  cfg.shape.validate();
  cfg.probes = f.probes;
  cfg.router_gain = f.router_gain;
  cfg.zero_up = f.zero_up;
  const std::uint64_t seed = c.seed.value_or(0);
  run.resolved({{"hidden", f.hidden},
                {"rank", f.rank},
                {"experts", f.experts},
                {"probes", f.probes},
                {"trials", f.trials},
                {"router_gain", f.router_gain},
                {"zero_up", f.zero_up}},
               seed);
  std::string csv = "trial,seed,one_down_many_ups,many_downs_one_up\n";
  std::size_t greater = 0, equal = 0, max_inverted = 0;
  for (std::size_t i = 0; i < f.trials; ++i) {
    const RankComparison r = compare_orientation_ranks(cfg, seed + i);
    csv += std::to_string(i) + "," + std::to_string(seed + i) + "," +
           std::to_string(r.one_down_many_ups) + "," + std::to_string(r.many_downs_one_up) + "\n";
    greater += r.one_down_many_ups > r.many_downs_one_up;
    equal += r.one_down_many_ups == r.many_downs_one_up;
    max_inverted = std::max(max_inverted, r.many_downs_one_up);
  }
  write_text(run.output("rank.csv"), csv);
  const json summary = {{"trials", f.trials},
                        {"one_down_greater", greater},
                        {"equal", equal},
                        {"max_many_downs_one_up_rank", max_inverted}};
  write_text(run.output("rank.json"), summary.dump(2) + "\n");
  out << "one-down-many-ups rank higher in " << greater << "/" << f.trials
      << " trials; max many-downs-one-up rank " << max_inverted << "\n";
}

// bias -----------------------------------------------------------------------

void cmd_bias(Run& run, const Common& c, const std::vector<std::string>& checkpoints,
              const std::string& dataset_path, const std::string& split_name,
              const std::string& divergence, std::ostream& out) {
  const DivergenceKind kind = divergence_kind_from_string(divergence);
  const Dataset d = read_dataset(dataset_path);
  const Split* split = nullptr;
  const std::vector<std::size_t>* classes = &d.base_classes;
  if (split_name == "ood") split = &d.ood_test;
  else if (split_name == "base") split = &d.base_test;
  else if (split_name == "novel") split = &d.novel_test, classes = &d.novel_classes;
  else throw UsageError("unknown split '" + split_name + "' (ood, base, novel)");
  if (split->empty()) throw DegenerateInputError("bias: split '" + split_name + "' is empty");
  run.resolved({{"checkpoints", checkpoints},
                {"dataset", dataset_path},
                {"split", split_name},
                {"divergence", divergence}},
               c.seed.value_or(0));

  std::vector<Tensor> prompts;
  for (std::size_t k : *classes) prompts.push_back(d.prompts.at(k));
  std::vector<const Tensor*> images;
  std::vector<std::size_t> labels;
  for (const Sample& s : *split) {
    images.push_back(&s.tokens);
    labels.push_back(static_cast<std::size_t>(
        std::find(classes->begin(), classes->end(), s.label) - classes->begin()));
  }

  struct Entry {
    LoadedCheckpoint ckpt;
    json config;
    double lambda;
    std::uint64_t seed;
  };
  std::vector<Entry> entries;
  for (const std::string& p : checkpoints) {
    LoadedCheckpoint ck = load_checkpoint(p);
    const json cfg = ck.extra.value("train_config", json(nullptr));
    const double lambda =
        cfg.is_null() ? std::nan("") : cfg.at("weights").at("lambda_bias").get<double>();
    const std::uint64_t seed = cfg.is_null() ? 0 : cfg.value("seed", std::uint64_t{0});
    entries.push_back({std::move(ck), cfg, lambda, seed});
  }

  json reports = json::array();
  std::string csv = bias_csv_header() + "\n";
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const BranchBiasReport r = branch_bias_report(entries[i].ckpt.model, prompts, images, labels, kind);
    reports.push_back({{"checkpoint", checkpoints[i]}, {"lambda_bias", entries[i].lambda}, {"report", r}});
    csv += bias_csv_row(entries[i].seed, entries[i].lambda, r) + "\n";
    out << checkpoints[i] << ": c_v " << r.c_v << "  c_t " << r.c_t << "  bias " << r.divergence
        << "\n";
  }
  json result = {{"reports", reports}};
  if (entries.size() == 2) {
    if (entries[0].config.is_null() || entries[1].config.is_null())
      throw ConfigError("bias: checkpoints lack a training config, cannot pair them");
    const bool first_with = entries[0].lambda >= entries[1].lambda;
    const Entry& w = entries[first_with ? 0 : 1];
    const Entry& wo = entries[first_with ? 1 : 0];
    const SuppressionReport s = suppression_report(w.ckpt.model, w.config, wo.ckpt.model, wo.config,
                                                   prompts, images, labels, kind);
    result["suppression"] = s;
    out << "suppression: c_v(" << s.lambda_with << ") " << s.with_uaad.c_v << " vs c_v("
        << s.lambda_without << ") " << s.without_uaad.c_v << " -> "
        << (s.inequality_holds ? "holds" : "does not hold") << "\n";
  }
  write_text(run.output("bias.json"), result.dump(2) + "\n");
  write_text(run.output("bias.csv"), csv);
}

// sweep ----------------------------------------------------------------------

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("--values: cannot parse '" + item + "'");
    }
  }
  if (out.empty()) throw UsageError("--values is empty");
  return out;
}

void cmd_sweep(Run& run, const Common& c, const TrainFlags& f, const std::string& dataset_path,
               const std::optional<std::string>& axis_name, const std::optional<std::string>& values,
               const std::optional<std::string>& preset, std::ostream& out) {
  SweepAxis axis;
  std::vector<double> grid;
  if (preset) {
    if (values) throw UsageError("use either --preset or --values");
    std::tie(axis, grid) = sweep_preset(*preset);
    if (axis_name && sweep_axis_from_string(*axis_name) != axis)
      throw UsageError("--axis disagrees with the preset");
  } else {
    if (!axis_name || !values) throw UsageError("sweep needs --axis and --values, or --preset");
    axis = sweep_axis_from_string(*axis_name);
    grid = parse_values(*values);
  }
  const Dataset d = read_dataset(dataset_path);
  const TrainConfig base = fit_to_dataset(resolve_train(c, f), d);
  run.resolved({{"train", base},
                {"dataset", dataset_path},
                {"task", d.config},
                {"axis", to_string(axis)},
                {"values", grid}},
               base.seed);
  const std::vector<SweepRow> rows = sweep(axis, grid, base, d);
  std::string csv = "value,base,novel,hm\n";
  json table = json::array();
  for (const SweepRow& r : rows) {
    csv += fmt(r.value) + "," + fmt(r.summary.base_accuracy) + "," + fmt(r.summary.novel_accuracy) +
           "," + fmt(r.summary.hm) + "\n";
    table.push_back({{"value", r.value}, {"summary", r.summary}});
    out << to_string(axis) << "=" << r.value << "  base " << r.summary.base_accuracy << "  novel "
        << r.summary.novel_accuracy << "  hm " << r.summary.hm << "\n";
  }
  write_text(run.output("sweep.csv"), csv);
  write_text(run.output("sweep.json"), json{{"axis", to_string(axis)}, {"rows", table}}.dump(2) + "\n");
}

json error_record(const std::exception& e, int code) {
  json j = {{"message", e.what()}, {"exit_code", code}};
  if (const auto* p = dynamic_cast<const ParseError*>(&e)) j["byte_offset"] = p->offset();
  if (dynamic_cast<const UsageError*>(&e)) j["type"] = "usage";
  else if (dynamic_cast<const ConfigError*>(&e)) j["type"] = "config";
  else if (dynamic_cast<const ParseError*>(&e)) j["type"] = "parse";
  else if (dynamic_cast<const NumericError*>(&e)) j["type"] = "numeric";
  else if (dynamic_cast<const DimensionError*>(&e)) j["type"] = "dimension";
  else if (dynamic_cast<const DegenerateInputError*>(&e)) j["type"] = "degenerate-input";
  else j["type"] = "runtime";
  return j;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e) || dynamic_cast<const ConfigError*>(&e)) return kExitUsage;
  return kExitFailure;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Asymmetric mixture-of-experts adapters for dual encoders"};
  app.require_subcommand(1);
  app.set_version_flag("--version", ASYMOE_VERSION);

  Common common;
  TrainFlags train_flags;

  auto* gen = app.add_subcommand("gen", "Generate a synthetic few-shot dataset");
  GenFlags gen_flags;
  add_common(gen, common, "runs/gen");
  flag(gen, "--num-classes", gen_flags.num_classes, "Classes");
  flag(gen, "--tokens", gen_flags.tokens, "Tokens per sample");
  flag(gen, "--prompt-tokens", gen_flags.prompt_tokens, "Tokens per class prompt");
  flag(gen, "--token-width", gen_flags.token_width, "Raw token width");
  flag(gen, "--train-per-class", gen_flags.train_per_class, "Training samples per base class");
  flag(gen, "--test-per-class", gen_flags.test_per_class, "Test samples per class and split");
  flag(gen, "--separation", gen_flags.separation, "Distance of class centroids from the origin");
  flag(gen, "--noise", gen_flags.noise, "Per-token noise scale");
  flag(gen, "--ood-shift", gen_flags.ood_shift, "Shift magnitude of the OOD split");
  flag(gen, "--ood-kind", gen_flags.ood_kind, "additive or rotational");
  flag(gen, "--base-fraction", gen_flags.base_fraction, "Share of base classes");

  std::string dataset;
  auto* train_cmd = app.add_subcommand("train", "Train adapters and evaluate");
  add_common(train_cmd, common, "runs/train");
  add_train_flags(train_cmd, train_flags);
  flag(train_cmd, "--dataset", dataset, "Dataset file")->required();

  auto* gc = app.add_subcommand("gradcheck", "Compare every backward pass with finite differences");
  std::string scope = "all";
  std::size_t instances = 20;
  double epsilon = 1e-5, tolerance = 1e-4;
  add_common(gc, common, "runs/gradcheck");
  flag(gc, "--scope", scope, "adapter, encoder, losses or all")->capture_default_str();
  flag(gc, "--instances", instances, "Random instances per block")->capture_default_str();
  flag(gc, "--epsilon", epsilon, "Central-difference step")->capture_default_str();
  flag(gc, "--tolerance", tolerance, "Maximum relative error")->capture_default_str();

  auto* rank = app.add_subcommand("rank", "Output-span rank of both adapter orientations");
  RankFlags rank_flags;
  add_common(rank, common, "runs/rank");
  flag(rank, "--hidden", rank_flags.hidden, "Hidden width")->capture_default_str();
  flag(rank, "--rank", rank_flags.rank, "Bottleneck width")->capture_default_str();
  flag(rank, "--experts", rank_flags.experts, "Experts")->capture_default_str();
  flag(rank, "--probes", rank_flags.probes, "Probe inputs per trial")->capture_default_str();
  flag(rank, "--trials", rank_flags.trials, "Seeded trials")->capture_default_str();
  flag(rank, "--router-gain", rank_flags.router_gain, "Router init scale")->capture_default_str();
  rank->add_flag("--zero-up", rank_flags.zero_up, "Zero all up-projections")
      ->envname("ASYMOE_ZERO_UP");

  auto* bias = app.add_subcommand("bias", "Branch contributions and branch-bias reports");
  std::vector<std::string> checkpoints;
  std::string split = "ood", divergence = "kl";
  add_common(bias, common, "runs/bias");
  bias->add_option("--checkpoint", checkpoints, "Checkpoint file, repeatable")->required();
  flag(bias, "--dataset", dataset, "Dataset file")->required();
  flag(bias, "--split", split, "ood, base or novel")->capture_default_str();
  flag(bias, "--divergence", divergence, "kl or tv")->capture_default_str();

  auto* sw = app.add_subcommand("sweep", "Train once per value of one hyperparameter");
  std::optional<std::string> axis, values, preset;
  add_common(sw, common, "runs/sweep");
  add_train_flags(sw, train_flags);
  flag(sw, "--dataset", dataset, "Dataset file")->required();
  flag(sw, "--axis", axis, "n, r, alpha, lambda_bias or lambda_bal");
  flag(sw, "--values", values, "Comma-separated values");
  flag(sw, "--preset", preset, "grid-n, grid-r, grid-alpha, grid-lambda_bias, grid-lambda_bal");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << ASYMOE_VERSION << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << json{{"type", "usage"}, {"message", e.what()}, {"exit_code", kExitUsage}}.dump() << "\n";
    return kExitUsage;
  }

  CLI::App* cmd = app.get_subcommands().front();
  std::optional<Run> run;
  try {
    run.emplace(cmd->get_name(), common.out);
    if (cmd == gen) cmd_gen(*run, common, gen_flags, out);
    else if (cmd == train_cmd) cmd_train(*run, common, train_flags, dataset, out);
    else if (cmd == gc) cmd_gradcheck(*run, common, scope, instances, epsilon, tolerance, out);
    else if (cmd == rank) cmd_rank(*run, common, rank_flags, out);
    else if (cmd == bias) cmd_bias(*run, common, checkpoints, dataset, split, divergence, out);
    else cmd_sweep(*run, common, train_flags, dataset, axis, values, preset, out);
    run->finish(std::nullopt);
    return kExitOk;
  } catch (const std::exception& e) {
    const int code = exit_code_for(e);
    const json record = error_record(e, code);
    err << record.dump() << "\n";
    if (run) {
      try {
        run->finish(record);
      } catch (const std::exception&) {
      }
    }
    return code;
  }
}

}  // namespace asymoe::cli
