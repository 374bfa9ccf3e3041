#include "adx/cli/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <functional>
#include <map>

#include "adx/core/errors.hpp"
#include "adx/train/trainer.hpp"
#include "commands.hpp"

namespace adx::cli {

namespace fs = std::filesystem;
using namespace detail;

namespace {

constexpr const char* kOutputDirEnv = "ADX_OUTPUT_DIR";
constexpr const char* kThreadsEnv = "ADX_THREADS";

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--seed", c.seed, "Master seed; every random stream is derived from it")->capture_default_str();
  sub->add_option("--output-dir", c.output_dir, "Directory for outputs without an explicit path")
      ->envname(kOutputDirEnv)
      ->capture_default_str();
  sub->add_option("--threads", c.threads, "Worker threads for neighbour search")
      ->envname(kThreadsEnv)
      ->check(CLI::Range(std::size_t{1}, std::size_t{256}))
      ->capture_default_str();
  sub->add_option("--manifest", c.manifest, "Manifest path (default: next to the primary output)");
  sub->add_flag("--quiet", c.quiet, "Suppress progress output");
}

template <typename T>
CLI::Option* opt(CLI::App* sub, const std::string& name, T& value, const std::string& help) {
  return sub->add_option(name, value, help)->capture_default_str();
}

struct Args {
  SynthArgs synth;
  IngestArgs ingest;
  ResampleArgs resample;
  TrainArgs train;
  EvalArgs eval;
  GradcamArgs gradcam;
  CompareArgs compare;
  std::string replay_manifest;
  bool replay_quiet = false;
};

void setup_synth(CLI::App& app, SynthArgs& a) {
  auto* s = app.add_subcommand("synth", "Generate the planted-feature synthetic dataset");
  add_common(s, a.common);
  opt(s, "--classes", a.classes, "Number of classes (the generator has 4)");
  opt(s, "--per-class", a.per_class, "Samples per class");
  s->add_option("--counts", a.counts, "Explicit per-class counts, overriding --per-class")->delimiter(',');
  opt(s, "--size", a.size, "Image height and width");
  s->add_option("--height", a.height, "Image height, overriding --size");
  s->add_option("--width", a.width, "Image width, overriding --size");
  opt(s, "--pattern", a.pattern, "Planted feature")->check(CLI::IsMember({"quadrant_blob", "stripes"}));
  opt(s, "--noise", a.noise, "Gaussian pixel noise standard deviation")->check(CLI::NonNegativeNumber);
  s->add_option("--out", a.out, "Dataset file (default synth.imds)");
}

void setup_ingest(CLI::App& app, IngestArgs& a) {
  auto* s = app.add_subcommand("ingest", "Convert a folder of class subfolders of PNG/JPEG images");
  add_common(s, a.common);
  s->add_option("--root", a.root, "Folder with one subfolder per class")->required();
  opt(s, "--size", a.size, "Target height and width");
  s->add_option("--height", a.height, "Target height, overriding --size");
  s->add_option("--width", a.width, "Target width, overriding --size");
  opt(s, "--channels", a.channels, "1 (grayscale) or 3 (RGB)")->check(CLI::IsMember({1, 3}));
  s->add_option("--out", a.out, "Dataset file (default dataset.imds)");
}

void setup_resample(CLI::App& app, ResampleArgs& a) {
  auto* s = app.add_subcommand("resample", "Balance a dataset with SMOTE followed by Tomek-link removal");
  add_common(s, a.common);
  s->add_option("--in", a.in, "Input dataset")->required();
  s->add_option("--out", a.out, "Balanced dataset (default resampled.imds)");
  s->add_option("--report", a.report, "Per-class count CSV (default resample_report.csv)");
  opt(s, "--k", a.k, "Nearest neighbours used for interpolation")->check(CLI::PositiveNumber);
  opt(s, "--link-removal", a.link_removal, "Which member of a Tomek link is dropped")
      ->check(CLI::IsMember({"majority_only", "both"}));
  s->add_option("--target", a.target, "Per-class target counts (default: the majority count)")->delimiter(',');
}

void setup_train(CLI::App& app, TrainArgs& a) {
  auto* s = app.add_subcommand("train", "Train a classifier with early stopping");
  add_common(s, a.common);
  s->add_option("--data", a.data, "Dataset to split into train/validation/test")->required();
  opt(s, "--arch", a.arch, "Architecture")->check(CLI::IsMember({"addnet", "bayescnn", "unet"}));
  opt(s, "--lr", a.lr, "Adam learning rate")->check(CLI::NonNegativeNumber);
  opt(s, "--batch-size", a.batch_size, "Minibatch size")->check(CLI::PositiveNumber);
  opt(s, "--dropout", a.dropout, "Dropout rate of every dropout layer")->check(CLI::Range(0.0, 0.999999));
  opt(s, "--patience", a.patience, "Early-stopping patience in epochs")->check(CLI::PositiveNumber);
  opt(s, "--epochs", a.epochs, "Maximum epochs")->check(CLI::PositiveNumber);
  opt(s, "--split", a.split, "Fractions train,val,test or train,test");
  s->add_flag("--resample", a.resample, "Apply SMOTE-Tomek to the training part");
  opt(s, "--k", a.k, "SMOTE neighbours")->check(CLI::PositiveNumber);
  opt(s, "--link-removal", a.link_removal, "Tomek-link policy")->check(CLI::IsMember({"majority_only", "both"}));
  opt(s, "--kl-weighting", a.kl_weighting, "KL weight per minibatch (Bayesian models)")
      ->check(CLI::IsMember({"uniform", "blundell", "constant"}));
  opt(s, "--kl-weight", a.kl_weight, "KL weight when --kl-weighting=constant")->check(CLI::NonNegativeNumber);
  opt(s, "--mc-samples", a.mc_samples, "Predictive samples of a Bayesian model")->check(CLI::PositiveNumber);
  s->add_flag("--plateau", a.plateau, "Reduce the learning rate when validation loss plateaus");
  opt(s, "--plateau-factor", a.plateau_factor, "Learning-rate multiplier on a plateau");
  opt(s, "--plateau-patience", a.plateau_patience, "Epochs without improvement before reducing");
  opt(s, "--min-lr", a.min_lr, "Learning-rate floor");
  s->add_option("--filters", a.filters, "Filters per conv block (default depends on --arch)")->delimiter(',');
  opt(s, "--padding", a.padding, "Conv padding for addnet and bayescnn")->check(CLI::IsMember({"valid", "same"}));
  opt(s, "--kernel", a.kernel, "Conv kernel size")->check(CLI::PositiveNumber);
  opt(s, "--dense-units", a.dense_units, "Hidden dense width of addnet")->check(CLI::PositiveNumber);
  opt(s, "--leaky-slope", a.leaky_slope, "LeakyReLU negative slope");
  opt(s, "--unet-depth", a.unet_depth, "U-Net encoder stages")->check(CLI::PositiveNumber);
  opt(s, "--unet-base-filters", a.unet_base_filters, "U-Net filters of the first stage")->check(CLI::PositiveNumber);
  opt(s, "--prior", a.prior, "Weight prior of Bayesian layers")
      ->check(CLI::IsMember({"standard_normal", "scale_mixture"}));
  opt(s, "--prior-pi", a.prior_pi, "Scale-mixture weight of the first component");
  opt(s, "--prior-sigma1", a.prior_sigma1, "Scale-mixture first standard deviation");
  opt(s, "--prior-sigma2", a.prior_sigma2, "Scale-mixture second standard deviation");
  opt(s, "--rho-init", a.rho_init, "Initial rho; sigma = softplus(rho)");
  opt(s, "--kl-samples", a.kl_samples, "Monte Carlo draws per KL evaluation (scale-mixture prior)")
      ->check(CLI::PositiveNumber);
  s->add_option("--checkpoint", a.checkpoint, "Checkpoint path (default <arch>.ckpt)");
  s->add_option("--history", a.history, "History CSV (default <arch>_history.csv)");
  s->add_option("--test-out", a.test_out, "Held-out test set (default <arch>_test.imds)");
  s->add_option("--resample-report", a.resample_report, "Resampling report (default <arch>_resample_report.csv)");
}

void setup_eval(CLI::App& app, EvalArgs& a) {
  auto* s = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  add_common(s, a.common);
  s->add_option("--checkpoint", a.checkpoint, "Checkpoint to evaluate")->required();
  s->add_option("--data", a.data, "Test dataset")->required();
  s->add_option("--report", a.report, "Metrics CSV (default <checkpoint stem>_report.csv)");
  s->add_option("--confusion", a.confusion, "Confusion matrix CSV (default <checkpoint stem>_confusion.csv)");
  s->add_option("--model-name", a.model_name, "Value of the model column (default: architecture)");
  opt(s, "--resampled", a.resampled, "Value of the resampled column; auto reads the checkpoint")
      ->check(CLI::IsMember({"auto", "true", "false"}));
  s->add_option("--mc-samples", a.mc_samples, "Predictive samples (default: as trained)");
}

void setup_gradcam(CLI::App& app, GradcamArgs& a) {
  auto* s = app.add_subcommand("gradcam", "Write Grad-CAM overlays as PNG files");
  add_common(s, a.common);
  s->add_option("--checkpoint", a.checkpoint, "Trained checkpoint")->required();
  s->add_option("--data", a.data, "Dataset holding the images")->required();
  s->add_option("--indices", a.indices, "Sample indices (default: --count samples, round-robin over classes)")
      ->delimiter(',');
  opt(s, "--count", a.count, "Samples when --indices is not given")->check(CLI::PositiveNumber);
  opt(s, "--target", a.target, "Explained class: true label, prediction or all")
      ->check(CLI::IsMember({"true", "pred", "all"}));
  s->add_option("--layer", a.layer, "Conv layer (default: last conv)");
  opt(s, "--alpha", a.alpha, "Heatmap opacity")->check(CLI::Range(0.0, 1.0));
  opt(s, "--mode", a.mode, "Bayesian models: posterior means or averaged sampled maps")
      ->check(CLI::IsMember({"mean_weights", "mean", "averaged"}));
  opt(s, "--samples", a.samples, "Passes for --mode averaged")->check(CLI::PositiveNumber);
  s->add_option("--out-dir", a.out_dir, "Overlay directory (default <output-dir>/gradcam)");
}

void setup_compare(CLI::App& app, CompareArgs& a) {
  auto* s = app.add_subcommand("compare", "Merge evaluation reports into one table");
  add_common(s, a.common);
  s->add_option("--reports", a.reports, "Report CSVs, in row order")->required()->expected(2, -1);
  s->add_option("--out", a.out, "Merged CSV (default comparison.csv)");
}

void setup_replay(CLI::App& app, Args& a) {
  auto* s = app.add_subcommand("replay", "Re-run a recorded command and verify its outputs");
  s->add_option("manifest", a.replay_manifest, "Manifest written by an earlier run")->required();
  s->add_flag("--quiet", a.replay_quiet, "Suppress progress output");
}

// Scoped environment override, restored on exit.
class EnvOverride {
 public:
  EnvOverride(const char* name, const std::string& value) : name_(name) {
    if (const char* old = std::getenv(name)) old_ = old;
    ::setenv(name, value.c_str(), 1);
  }
  ~EnvOverride() {
    if (old_) {
      ::setenv(name_, old_->c_str(), 1);
    } else {
      ::unsetenv(name_);
    }
  }
  EnvOverride(const EnvOverride&) = delete;
  EnvOverride& operator=(const EnvOverride&) = delete;

 private:
  const char* name_;
  std::optional<std::string> old_;
};

class CwdOverride {
 public:
  explicit CwdOverride(const fs::path& dir) : old_(fs::current_path()) { fs::current_path(dir); }
  ~CwdOverride() {
    std::error_code ec;
    fs::current_path(old_, ec);
  }
  CwdOverride(const CwdOverride&) = delete;
  CwdOverride& operator=(const CwdOverride&) = delete;

 private:
  fs::path old_;
};

fs::path default_replay_manifest(const fs::path& original) {
  fs::path p = original;
  std::string name = p.filename().string();
  const std::string suffix = ".json";
  if (name.size() > suffix.size() && name.ends_with(suffix)) name.resize(name.size() - suffix.size());
  return p.replace_filename(name + ".replay.json");
}

int replay(const std::string& manifest_arg, bool quiet, std::ostream& out, std::ostream& err) {
  const fs::path manifest_path = fs::absolute(manifest_arg);
  const RunManifest recorded = RunManifest::load(manifest_path);
  if (recorded.command == "replay") throw DataError("manifest records a replay; replay the original instead");
  for (const auto& in : recorded.inputs) {
    if (!fs::is_regular_file(in.path)) throw DataError("replay: input '" + in.path + "' is missing");
    if (git_blob_sha1_file(in.path) != in.sha1) throw DataError("replay: input '" + in.path + "' has changed");
  }
  std::vector<std::string> args = recorded.args;
  if (quiet && std::find(args.begin(), args.end(), "--quiet") == args.end()) args.push_back("--quiet");

  const fs::path inner_manifest = default_replay_manifest(manifest_path);
  int code = 0;
  {
    CwdOverride cwd(recorded.cwd);
    EnvOverride out_dir(kOutputDirEnv, recorded.output_dir);
    EnvOverride threads(kThreadsEnv, std::to_string(recorded.threads));
    code = run(args, out, err, inner_manifest);
  }
  if (code != recorded.exit_code) {
    err << "replay: exit code " << code << ", recorded " << recorded.exit_code << '\n';
    return kExitData;
  }
  std::size_t mismatches = 0;
  for (const auto& o : recorded.outputs) {
    const std::string now = fs::is_regular_file(o.path) ? git_blob_sha1_file(o.path) : "missing";
    if (now != o.sha1) {
      err << "replay: " << o.path << " differs (" << now << " vs " << o.sha1 << ")\n";
      ++mismatches;
    }
  }
  if (mismatches > 0) return kExitData;
  if (!quiet) out << "replay: " << recorded.outputs.size() << " outputs reproduced bitwise\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  return run(args, out, err, std::nullopt);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
        const std::optional<fs::path>& manifest_path) {
  CLI::App app{"Alzheimer's MRI classification toolkit: synthetic data, resampling, training, evaluation, Grad-CAM"};
  app.name("adx");
  app.set_config("--config", "", "TOML configuration file; a [command] section holds that command's options");
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", "adx 1.0.0");

  Args a;
  setup_synth(app, a.synth);
  setup_ingest(app, a.ingest);
  setup_resample(app, a.resample);
  setup_train(app, a.train);
  setup_eval(app, a.eval);
  setup_gradcam(app, a.gradcam);
  setup_compare(app, a.compare);
  setup_replay(app, a);

  std::vector<const char*> argv{"adx"};
  for (const auto& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string command = sub->get_name();
  if (command == "replay") {
    try {
      return replay(a.replay_manifest, a.replay_quiet, out, err);
    } catch (const std::exception& e) {
      err << "error: " << e.what() << '\n';
      return kExitData;
    }
  }

  // Dispatch table: command -> (common options, primary output, body).
  using Body = std::function<void(RunContext&)>;
  using Primary = std::function<fs::path(const RunContext&)>;
  struct Entry {
    Common* common;
    Primary primary;
    Body body;
  };
  std::map<std::string, Entry> table{
      {"synth", {&a.synth.common, [&](const RunContext& c) { return primary_output(a.synth, c); },
                 [&](RunContext& c) { cmd_synth(a.synth, c); }}},
      {"ingest", {&a.ingest.common, [&](const RunContext& c) { return primary_output(a.ingest, c); },
                  [&](RunContext& c) { cmd_ingest(a.ingest, c); }}},
      {"resample", {&a.resample.common, [&](const RunContext& c) { return primary_output(a.resample, c); },
                    [&](RunContext& c) { cmd_resample(a.resample, c); }}},
      {"train", {&a.train.common, [&](const RunContext& c) { return primary_output(a.train, c); },
                 [&](RunContext& c) { cmd_train(a.train, c); }}},
      {"eval", {&a.eval.common, [&](const RunContext& c) { return primary_output(a.eval, c); },
                [&](RunContext& c) { cmd_eval(a.eval, c); }}},
      {"gradcam", {&a.gradcam.common, [&](const RunContext& c) { return primary_output(a.gradcam, c) / "x"; },
                   [&](RunContext& c) { cmd_gradcam(a.gradcam, c); }}},
      {"compare", {&a.compare.common, [&](const RunContext& c) { return primary_output(a.compare, c); },
                   [&](RunContext& c) { cmd_compare(a.compare, c); }}},
  };
  const Entry& entry = table.at(command);
  const Common& common = *entry.common;

  RunManifest manifest;
  manifest.command = command;
  manifest.args = args;
  manifest.cwd = fs::current_path().string();
  manifest.output_dir = common.output_dir;
  manifest.threads = common.threads;
  manifest.seed = common.seed;
  manifest.config = sub->config_to_str(true, false);
  manifest.started_at = utc_timestamp();

  RunContext ctx(common, manifest, out, err);
  fs::path target;
  if (manifest_path) {
    target = *manifest_path;
  } else if (!common.manifest.empty()) {
    target = common.manifest;
  } else {
    const fs::path primary = entry.primary(ctx);
    // gradcam's primary output is a directory; its manifest goes inside it.
    target = command == "gradcam" ? primary.parent_path() / "gradcam.manifest.json"
                                  : fs::path(primary.string() + ".manifest.json");
  }

  int code = kExitOk;
  try {
    entry.body(ctx);
  } catch (const DivergenceError& e) {
    code = kExitDivergence;
    manifest.error = e.what();
  } catch (const ShapeError& e) {
    code = kExitData;
    manifest.error = e.what();
  } catch (const DataError& e) {
    code = kExitData;
    manifest.error = e.what();
  } catch (const std::invalid_argument& e) {
    code = kExitUsage;
    manifest.error = e.what();
  } catch (const std::exception& e) {
    code = kExitData;
    manifest.error = e.what();
  }
  if (code != kExitOk) err << "error: " << manifest.error << '\n';

  manifest.exit_code = code;
  manifest.finished_at = utc_timestamp();
  try {
    manifest.finalize_outputs();
    manifest.save(target);
  } catch (const std::exception& e) {
    err << "error: cannot write manifest: " << e.what() << '\n';
    if (code == kExitOk) code = kExitData;
  }
  return code;
}

}  // namespace adx::cli
