#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "adx/core/errors.hpp"
#include "adx/core/ops.hpp"
#include "adx/core/rng.hpp"
#include "adx/data/dataset.hpp"
#include "adx/data/image_io.hpp"
#include "adx/gradcam/gradcam.hpp"
#include "adx/models/checkpoint.hpp"
#include "adx/models/zoo.hpp"
#include "adx/train/metrics.hpp"
#include "adx/train/trainer.hpp"

namespace adx::cli::detail {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::ofstream open_text(const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot open '" + path.string() + "' for writing");
  return f;
}

void close_checked(std::ofstream& f, const fs::path& path) {
  f.close();
  if (!f) throw DataError("write to '" + path.string() + "' failed");
}

std::vector<double> parse_fractions(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw std::invalid_argument("--split: '" + item + "' is not a number");
    }
  }
  return out;
}

std::string format_metric(double v) {
  if (!std::isfinite(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

// Rows of a CSV file without quoting support; report files never quote.
std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open report '" + path.string() + "'");
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      fields.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    rows.push_back(std::move(fields));
  }
  return rows;
}

std::vector<std::size_t> pick_samples(const data::LabeledImageSet& ds, std::size_t count) {
  // Round-robin over classes, lowest index first within each class.
  std::vector<std::vector<std::size_t>> by_class(ds.n_classes());
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.labels[i]].push_back(i);
  std::vector<std::size_t> picked;
  for (std::size_t round = 0; picked.size() < count; ++round) {
    bool any = false;
    for (const auto& members : by_class) {
      if (round < members.size() && picked.size() < count) {
        picked.push_back(members[round]);
        any = true;
      }
    }
    if (!any) break;
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

void require_same_classes(const std::vector<std::string>& model_classes, const data::LabeledImageSet& ds) {
  if (model_classes != ds.class_names) {
    std::string a, b;
    for (const auto& c : model_classes) a += (a.empty() ? "" : ",") + c;
    for (const auto& c : ds.class_names) b += (b.empty() ? "" : ",") + c;
    throw DataError("class mismatch: checkpoint has [" + a + "], dataset has [" + b + "]");
  }
}

std::size_t stored_mc_samples(const models::CheckpointMeta& meta) {
  if (meta.extra.contains("train")) return meta.extra["train"].value("mc_samples", std::size_t{10});
  return 10;
}

}  // namespace

fs::path RunContext::resolve(const std::string& explicit_path, const std::string& default_name) const {
  if (!explicit_path.empty()) return explicit_path;
  return fs::path(common_.output_dir) / default_name;
}

fs::path RunContext::input(const std::string& path) {
  if (!fs::is_regular_file(path)) throw DataError("input '" + path + "' does not exist");
  manifest_.add_input(path);
  inputs_.push_back(fs::weakly_canonical(path));
  return path;
}

fs::path RunContext::output(const fs::path& path) {
  const fs::path canonical = fs::weakly_canonical(path);
  for (const auto& in : inputs_) {
    if (in == canonical) throw std::invalid_argument("output '" + path.string() + "' would overwrite an input");
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  manifest_.add_output(path);
  return path;
}

void RunContext::info(const std::string& line) {
  if (!common_.quiet) out_ << line << '\n';
}

// ---------------------------------------------------------------------------

fs::path primary_output(const SynthArgs& a, const RunContext& ctx) { return ctx.resolve(a.out, "synth.imds"); }
fs::path primary_output(const IngestArgs& a, const RunContext& ctx) { return ctx.resolve(a.out, "dataset.imds"); }
fs::path primary_output(const ResampleArgs& a, const RunContext& ctx) {
  return ctx.resolve(a.out, "resampled.imds");
}
fs::path primary_output(const TrainArgs& a, const RunContext& ctx) {
  return ctx.resolve(a.checkpoint, a.arch + ".ckpt");
}
fs::path primary_output(const EvalArgs& a, const RunContext& ctx) {
  return ctx.resolve(a.report, fs::path(a.checkpoint).stem().string() + "_report.csv");
}
fs::path primary_output(const GradcamArgs& a, const RunContext& ctx) { return ctx.resolve(a.out_dir, "gradcam"); }
fs::path primary_output(const CompareArgs& a, const RunContext& ctx) { return ctx.resolve(a.out, "comparison.csv"); }

void cmd_synth(const SynthArgs& a, RunContext& ctx) {
  if (a.classes != 4) throw std::invalid_argument("synth: the generator has exactly 4 classes");
  std::vector<std::size_t> counts = a.counts.empty() ? std::vector<std::size_t>(a.classes, a.per_class) : a.counts;
  if (counts.size() != a.classes) throw std::invalid_argument("synth: --counts needs one value per class");
  const std::size_t h = a.height ? a.height : a.size;
  const std::size_t w = a.width ? a.width : a.size;
  const auto kind = data::pattern_kind_from_string(a.pattern);
  const auto ds = data::synth_dataset(counts, h, w, kind, a.noise, a.common.seed);

  const fs::path out = ctx.output(primary_output(a, ctx));
  data::save_imds(out, ds);
  ctx.manifest().details = {{"counts", counts},     {"height", h},          {"width", w},
                            {"pattern", a.pattern}, {"noise", a.noise}};
  ctx.info("wrote " + std::to_string(ds.size()) + " samples to " + out.string());
}

void cmd_ingest(const IngestArgs& a, RunContext& ctx) {
  data::LoadOptions opts;
  opts.height = a.height ? a.height : a.size;
  opts.width = a.width ? a.width : a.size;
  opts.channels = a.channels;
  data::LoadReport report;
  const auto ds = data::load_image_folder(a.root, opts, &report);
  // Hash every regular file under the root so a replay notices changes.
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(a.root)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) ctx.input(f.string());

  const fs::path out = ctx.output(primary_output(a, ctx));
  data::save_imds(out, ds);
  for (const auto& s : report.skipped) ctx.err() << "warning: skipped undecodable file " << s << '\n';
  ctx.manifest().details = {{"height", opts.height},
                            {"width", opts.width},
                            {"channels", opts.channels},
                            {"class_names", ds.class_names},
                            {"skipped", report.skipped}};
  ctx.info("wrote " + std::to_string(ds.size()) + " samples to " + out.string());
}

void cmd_resample(const ResampleArgs& a, RunContext& ctx) {
  const fs::path in = ctx.input(a.in);
  const auto ds = data::load_imds(in);
  resample::ResamplePlan plan;
  plan.k_neighbors = a.k;
  plan.target_counts = a.target;
  plan.link_removal = resample::link_removal_from_string(a.link_removal);
  plan.seed = derive_seed(a.common.seed, "resample");
  plan.threads = a.common.threads;

  const fs::path out = ctx.output(primary_output(a, ctx));
  const fs::path report_path = ctx.output(ctx.resolve(a.report, "resample_report.csv"));
  const auto res = data::smote_tomek(ds, plan);
  data::save_imds(out, res.data);
  auto f = open_text(report_path);
  res.report.write_csv(f, ds.class_names);
  close_checked(f, report_path);
  for (const auto& w : res.report.warnings) ctx.err() << "warning: " << w << '\n';

  ctx.manifest().details = {{"k_neighbors", plan.k_neighbors},
                            {"target_counts", plan.target_counts},
                            {"link_removal", a.link_removal},
                            {"before", res.report.before},
                            {"after_smote", res.report.after_smote},
                            {"after_tomek", res.report.after_tomek}};
  ctx.info("resampled " + std::to_string(ds.size()) + " -> " + std::to_string(res.data.size()) + " samples");
}

void cmd_train(const TrainArgs& a, RunContext& ctx) {
  const fs::path data_path = ctx.input(a.data);
  const auto ds = data::load_imds(data_path);

  models::ModelSpec spec;
  spec.architecture = models::architecture_from_string(a.arch);
  spec.height = ds.height();
  spec.width = ds.width();
  spec.channels = ds.channels();
  spec.n_classes = ds.n_classes();
  spec.filters = a.filters;
  spec.kernel = a.kernel;
  spec.padding = a.padding == "same" ? Padding::same : Padding::valid;
  spec.dropout = a.dropout;
  spec.leaky_slope = a.leaky_slope;
  spec.dense_units = a.dense_units;
  spec.unet_depth = a.unet_depth;
  spec.unet_base_filters = a.unet_base_filters;
  spec.bayes.prior.kind = bayes::prior_kind_from_string(a.prior);
  spec.bayes.prior.pi = a.prior_pi;
  spec.bayes.prior.sigma1 = a.prior_sigma1;
  spec.bayes.prior.sigma2 = a.prior_sigma2;
  spec.bayes.rho_init = a.rho_init;
  spec.bayes.kl_samples = a.kl_samples;
  spec.validate();

  train::TrainConfig cfg;
  cfg.learning_rate = a.lr;
  cfg.batch_size = a.batch_size;
  cfg.max_epochs = a.epochs;
  cfg.patience = a.patience;
  cfg.kl_weighting = train::kl_weighting_from_string(a.kl_weighting);
  cfg.kl_weight = a.kl_weight;
  cfg.reduce_on_plateau = a.plateau;
  cfg.plateau.factor = a.plateau_factor;
  cfg.plateau.patience = a.plateau_patience;
  cfg.plateau.min_lr = a.min_lr;
  cfg.mc_samples = a.mc_samples;
  cfg.seed = a.common.seed;
  cfg.validate();

  data::SplitSpec split_spec;
  split_spec.fractions = parse_fractions(a.split);
  split_spec.seed = derive_seed(a.common.seed, "split");
  split_spec.validate();
  auto split = data::stratified_split(ds, split_spec);
  // Two-way splits validate on the held-out part.
  if (!split_spec.three_way()) split.val = split.test;

  const std::string arch_name = to_string(spec.architecture);
  const fs::path ckpt_path = ctx.output(primary_output(a, ctx));
  const fs::path history_path = ctx.output(ctx.resolve(a.history, a.arch + "_history.csv"));
  const fs::path test_path = ctx.output(ctx.resolve(a.test_out, a.arch + "_test.imds"));
  fs::path resample_path;
  if (a.resample) resample_path = ctx.output(ctx.resolve(a.resample_report, a.arch + "_resample_report.csv"));

  data::LabeledImageSet train_set = std::move(split.train);
  if (a.resample) {
    resample::ResamplePlan plan;
    plan.k_neighbors = a.k;
    plan.link_removal = resample::link_removal_from_string(a.link_removal);
    plan.seed = derive_seed(a.common.seed, "resample");
    plan.threads = a.common.threads;
    auto res = data::smote_tomek(train_set, plan);
    auto f = open_text(resample_path);
    res.report.write_csv(f, ds.class_names);
    close_checked(f, resample_path);
    for (const auto& w : res.report.warnings) ctx.err() << "warning: " << w << '\n';
    ctx.info("resampled training part " + std::to_string(train_set.size()) + " -> " +
             std::to_string(res.data.size()));
    train_set = std::move(res.data);
  }
  data::save_imds(test_path, split.test);

  auto model = models::build_model(spec, a.common.seed);
  ctx.info(arch_name + ": " + std::to_string(model->parameter_count()) + " parameters, " +
           std::to_string(train_set.size()) + " train / " + std::to_string(split.val.size()) + " val / " +
           std::to_string(split.test.size()) + " test");

  models::CheckpointMeta meta;
  meta.spec = spec;
  meta.class_names = ds.class_names;
  meta.seed = a.common.seed;
  meta.extra = {{"train", train::to_json(cfg)}, {"split", split_spec.fractions}, {"resampled", a.resample}};

  auto save_outputs = [&](const train::TrainHistory& history) {
    meta.extra["best_epoch"] = history.best_epoch;
    meta.extra["stopped_early"] = history.stopped_early;
    models::save_checkpoint(ckpt_path, *model, meta);
    auto f = open_text(history_path);
    history.write_csv(f);
    close_checked(f, history_path);
  };

  auto on_epoch = [&](const train::EpochRecord& r) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "epoch %zu  train_loss %.4f  val_loss %.4f  train_acc %.4f  val_acc %.4f  lr %g",
                  r.epoch, r.train_loss, r.val_loss, r.train_acc, r.val_acc, r.lr);
    ctx.info(buf);
  };

  train::TrainHistory history;
  try {
    history = train::fit(*model, train_set, split.val, cfg, on_epoch);
  } catch (const train::TrainingDiverged& e) {
    meta.extra["diverged"] = true;
    save_outputs(e.history());
    throw;
  }
  save_outputs(history);
  ctx.manifest().details = {{"model", models::to_json(spec)},
                            {"train", train::to_json(cfg)},
                            {"best_epoch", history.best_epoch},
                            {"epochs_run", history.epochs.size()}};
  ctx.info("best epoch " + std::to_string(history.best_epoch) + ", checkpoint " + ckpt_path.string());
}

void cmd_eval(const EvalArgs& a, RunContext& ctx) {
  const fs::path ckpt_path = ctx.input(a.checkpoint);
  const fs::path data_path = ctx.input(a.data);
  auto loaded = models::load_checkpoint(ckpt_path);
  const auto ds = data::load_imds(data_path);
  require_same_classes(loaded.meta.class_names, ds);

  const fs::path report_path = ctx.output(primary_output(a, ctx));
  const fs::path confusion_path =
      ctx.output(ctx.resolve(a.confusion, fs::path(a.checkpoint).stem().string() + "_confusion.csv"));

  train::PredictOptions opts;
  opts.mc_samples = a.mc_samples ? a.mc_samples : stored_mc_samples(loaded.meta);
  opts.seed = derive_seed(a.common.seed, "eval");
  const auto ev = train::evaluate(*loaded.model, ds, opts);

  bool resampled = false;
  if (a.resampled == "auto") {
    resampled = loaded.meta.extra.value("resampled", false);
  } else {
    resampled = a.resampled == "true";
  }
  train::ReportRow row{a.model_name.empty() ? models::to_string(loaded.meta.spec.architecture) : a.model_name,
                       resampled, ev.metrics};
  auto f = open_text(report_path);
  train::write_report_csv(f, {row}, ds.class_names);
  close_checked(f, report_path);
  auto c = open_text(confusion_path);
  train::write_confusion_csv(c, ev.metrics.confusion, ds.class_names);
  close_checked(c, confusion_path);

  ctx.manifest().details = {{"model", row.model}, {"resampled", resampled}, {"mc_samples", opts.mc_samples}};
  ctx.info(row.model + (resampled ? " (resampled)" : "") + "  accuracy " + format_metric(ev.metrics.accuracy) +
           "  recall " + format_metric(ev.metrics.macro_recall) + "  precision " +
           format_metric(ev.metrics.macro_precision) + "  f1 " + format_metric(ev.metrics.macro_f1) + "  auc " +
           format_metric(ev.metrics.auc_macro));
}

void cmd_gradcam(const GradcamArgs& a, RunContext& ctx) {
  if (a.target != "true" && a.target != "pred" && a.target != "all") {
    throw std::invalid_argument("--target must be true, pred or all");
  }
  const fs::path ckpt_path = ctx.input(a.checkpoint);
  const fs::path data_path = ctx.input(a.data);
  auto loaded = models::load_checkpoint(ckpt_path);
  const auto ds = data::load_imds(data_path);
  require_same_classes(loaded.meta.class_names, ds);
  nn::Model& model = *loaded.model;
  const bool bayesian = model.is_bayesian();
  const auto mode = cam::bayes_mode_from_string(a.mode);
  const std::string layer = a.layer.empty() ? cam::default_layer(model) : a.layer;

  std::vector<std::size_t> samples = a.indices.empty() ? pick_samples(ds, a.count) : a.indices;
  for (std::size_t i : samples) {
    if (i >= ds.size()) throw std::invalid_argument("--indices: " + std::to_string(i) + " is out of range");
  }
  const fs::path dir = primary_output(a, ctx);
  const fs::path index_path = ctx.output(dir / "gradcam_index.csv");
  auto index = open_text(index_path);
  index << "sample,index,label,target,layer,raw_max,file\n";

  for (std::size_t i : samples) {
    const Tensor image = ds.subset({i}).images;
    std::vector<std::size_t> targets;
    if (a.target == "true") {
      targets = {ds.labels[i]};
    } else if (a.target == "pred") {
      train::PredictOptions popts;
      popts.batch_size = 1;
      popts.mc_samples = stored_mc_samples(loaded.meta);
      popts.seed = derive_seed(a.common.seed, "gradcam-predict", i);
      targets = {train::argmax_rows(train::predict_proba(model, image, popts))[0]};
    } else {
      for (std::size_t c = 0; c < ds.n_classes(); ++c) targets.push_back(c);
    }
    char id[32];
    std::snprintf(id, sizeof id, "s%05zu", i);
    for (std::size_t c : targets) {
      const cam::Heatmap hm =
          bayesian ? cam::bayes_gradcam(model, image, c, layer, mode, a.samples, derive_seed(a.common.seed, "gradcam", i))
                   : cam::gradcam(model, image, c, layer);
      const std::string name = cam::overlay_filename(id, ds.class_names[c], layer);
      const fs::path png = ctx.output(dir / name);
      data::write_png(png, cam::colorize_overlay(hm, image, a.alpha));
      char raw[32];
      std::snprintf(raw, sizeof raw, "%.17g", hm.raw_max);
      index << id << ',' << i << ',' << ds.class_names[ds.labels[i]] << ',' << ds.class_names[c] << ',' << layer
            << ',' << raw << ',' << name << '\n';
    }
  }
  close_checked(index, index_path);
  ctx.manifest().details = {{"layer", layer},
                            {"target", a.target},
                            {"alpha", a.alpha},
                            {"mode", bayesian ? cam::to_string(mode) : "deterministic"},
                            {"samples", samples}};
  ctx.info("wrote Grad-CAM overlays for " + std::to_string(samples.size()) + " samples to " + dir.string());
}

void cmd_compare(const CompareArgs& a, RunContext& ctx) {
  static const std::vector<std::string> kRequired = {"model", "resampled", "accuracy", "recall",
                                                     "precision", "f1", "auc_macro"};
  if (a.reports.size() < 2) throw std::invalid_argument("compare: give at least two reports");
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  for (const auto& report : a.reports) {
    const fs::path path = ctx.input(report);
    const auto table = read_csv(path);
    if (table.empty()) throw DataError("report '" + report + "' is empty");
    const auto& h = table.front();
    for (const auto& col : kRequired) {
      if (std::find(h.begin(), h.end(), col) == h.end()) {
        throw DataError("report '" + report + "' has no '" + col + "' column");
      }
    }
    if (header.empty()) {
      header = h;
    } else if (h != header) {
      throw DataError("report '" + report + "' has different metric columns from '" + a.reports.front() + "'");
    }
    for (std::size_t r = 1; r < table.size(); ++r) {
      if (table[r].size() != header.size()) {
        throw DataError("report '" + report + "' row " + std::to_string(r) + " has " +
                        std::to_string(table[r].size()) + " fields, expected " + std::to_string(header.size()));
      }
      for (std::size_t c = 0; c < header.size(); ++c) {
        if (table[r][c].empty()) {
          throw DataError("report '" + report + "' row " + std::to_string(r) + " has no value for '" + header[c] +
                          "'");
        }
      }
      rows.push_back(table[r]);
    }
  }
  const fs::path out = ctx.output(primary_output(a, ctx));
  auto f = open_text(out);
  for (const auto& row : std::vector<std::vector<std::string>>{header}) {
    for (std::size_t c = 0; c < row.size(); ++c) f << (c ? "," : "") << row[c];
    f << '\n';
  }
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) f << (c ? "," : "") << row[c];
    f << '\n';
  }
  close_checked(f, out);
  ctx.manifest().details = {{"rows", rows.size()}};
  ctx.info("wrote " + std::to_string(rows.size()) + " rows to " + out.string());
}

}  // namespace adx::cli::detail
