#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "adx/cli/manifest.hpp"

namespace adx::cli::detail {

struct Common {
  std::uint64_t seed = 0;
  std::string output_dir = ".";
  std::size_t threads = 1;
  std::string manifest;
  bool quiet = false;
};

/// Path bookkeeping for one command: inputs are hashed when registered,
/// outputs are created under the output directory unless given explicitly.
class RunContext {
 public:
  RunContext(const Common& common, RunManifest& manifest, std::ostream& out, std::ostream& err)
      : common_(common), manifest_(manifest), out_(out), err_(err) {}

  /// Explicit path as given, otherwise output_dir / default_name.
  std::filesystem::path resolve(const std::string& explicit_path, const std::string& default_name) const;
  /// Throws DataError if the file is missing.
  std::filesystem::path input(const std::string& path);
  /// Registers an output, creating its parent directory. Throws
  /// std::invalid_argument if it names one of the inputs.
  std::filesystem::path output(const std::filesystem::path& path);

  const Common& common() const { return common_; }
  RunManifest& manifest() { return manifest_; }
  std::ostream& out() { return out_; }
  std::ostream& err() { return err_; }
  /// Progress line on stdout unless --quiet.
  void info(const std::string& line);

 private:
  const Common& common_;
  RunManifest& manifest_;
  std::ostream& out_;
  std::ostream& err_;
  std::vector<std::filesystem::path> inputs_;
};

struct SynthArgs {
  Common common;
  std::size_t classes = 4;
  std::size_t per_class = 200;
  std::vector<std::size_t> counts;
  std::size_t size = 64;
  std::size_t height = 0;
  std::size_t width = 0;
  std::string pattern = "quadrant_blob";
  double noise = 0.05;
  std::string out;
};

struct IngestArgs {
  Common common;
  std::string root;
  std::size_t size = 64;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;
  std::string out;
};

struct ResampleArgs {
  Common common;
  std::string in;
  std::string out;
  std::string report;
  std::size_t k = 5;
  std::string link_removal = "majority_only";
  std::vector<std::size_t> target;
};

struct TrainArgs {
  Common common;
  std::string data;
  std::string arch = "addnet";
  double lr = 0.01;
  std::size_t batch_size = 16;
  double dropout = 0.3;
  std::size_t patience = 10;
  std::size_t epochs = 100;
  std::string split = "0.6,0.2,0.2";
  bool resample = false;
  std::size_t k = 5;
  std::string link_removal = "majority_only";
  std::string kl_weighting = "uniform";
  double kl_weight = 1.0;
  std::size_t mc_samples = 10;
  bool plateau = false;
  double plateau_factor = 0.1;
  std::size_t plateau_patience = 5;
  double min_lr = 1e-6;
  std::vector<std::size_t> filters;
  std::string padding = "valid";
  std::size_t kernel = 3;
  std::size_t dense_units = 128;
  double leaky_slope = 0.01;
  std::size_t unet_depth = 3;
  std::size_t unet_base_filters = 16;
  std::string prior = "standard_normal";
  double prior_pi = 0.5;
  double prior_sigma1 = 1.0;
  double prior_sigma2 = 0.0025;
  double rho_init = -3.0;
  std::size_t kl_samples = 1;
  std::string checkpoint;
  std::string history;
  std::string test_out;
  std::string resample_report;
};

struct EvalArgs {
  Common common;
  std::string checkpoint;
  std::string data;
  std::string report;
  std::string confusion;
  std::string model_name;
  std::string resampled = "auto";
  /// 0 takes the value stored with the checkpoint's training config.
  std::size_t mc_samples = 0;
};

struct GradcamArgs {
  Common common;
  std::string checkpoint;
  std::string data;
  std::vector<std::size_t> indices;
  std::size_t count = 8;
  std::string target = "true";
  std::string layer;
  double alpha = 0.5;
  std::string mode = "mean_weights";
  std::size_t samples = 10;
  std::string out_dir;
};

struct CompareArgs {
  Common common;
  std::vector<std::string> reports;
  std::string out;
};

// Default primary output of each command; the manifest is written next to it.
std::filesystem::path primary_output(const SynthArgs& a, const RunContext& ctx);
std::filesystem::path primary_output(const IngestArgs& a, const RunContext& ctx);
std::filesystem::path primary_output(const ResampleArgs& a, const RunContext& ctx);
std::filesystem::path primary_output(const TrainArgs& a, const RunContext& ctx);
std::filesystem::path primary_output(const EvalArgs& a, const RunContext& ctx);
std::filesystem::path primary_output(const GradcamArgs& a, const RunContext& ctx);
std::filesystem::path primary_output(const CompareArgs& a, const RunContext& ctx);

void cmd_synth(const SynthArgs& a, RunContext& ctx);
void cmd_ingest(const IngestArgs& a, RunContext& ctx);
void cmd_resample(const ResampleArgs& a, RunContext& ctx);
void cmd_train(const TrainArgs& a, RunContext& ctx);
void cmd_eval(const EvalArgs& a, RunContext& ctx);
void cmd_gradcam(const GradcamArgs& a, RunContext& ctx);
void cmd_compare(const CompareArgs& a, RunContext& ctx);

}  // namespace adx::cli::detail
