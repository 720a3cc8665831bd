// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "visnet/evalkit.hpp"
#include "visnet/grad_check.hpp"
#include "visnet/schedule.hpp"

namespace visnet::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitAssertion = 1,
  kExitInput = 2,
  kExitNumerical = 3,
};

/// Parses `args` (without the program name) and runs the selected subcommand.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// param-count ---------------------------------------------------------------

struct ParamCountOptions {
  std::string spec_path;  // empty: built-in layout
  bool assert_reference = false;
};
int cmd_param_count(const ParamCountOptions& opts, std::ostream& out, std::ostream& err);

// grad-check ----------------------------------------------------------------

struct GradCheckOptions {
  std::uint64_t seed = 0;
  std::size_t batch = 4;  // must be even: two images per identity
  std::array<std::size_t, 4> stage_channels{4, 5, 6, 7};
  std::size_t height = 16;  // stage-1 extent; later stages halve it
  std::size_t width = 8;
  std::size_t dim = 6;
  std::size_t attention_hidden = 4;
  std::size_t classes = 3;
  double step = 1e-5;
  double tolerance = 1e-4;
  bool corrupt_gradient = false;  // negative control
  void validate() const;
};

struct GradCheckCase {
  std::string name;
  visnet::GradCheckReport report;
};

struct GradCheckSuite {
  std::vector<GradCheckCase> cases;
  double max_rel_err = 0.0;
};

/// Fusion, both heads and every loss on a seeded toy instance.
GradCheckSuite run_grad_check_suite(const GradCheckOptions& opts);
void write_grad_check_report(std::ostream& out, const GradCheckSuite& suite);
int cmd_grad_check(const GradCheckOptions& opts, std::ostream& out, std::ostream& err);

// train-demo ----------------------------------------------------------------

struct TrainDemoOptions {
  std::uint64_t seed = 1;
  std::size_t identities = 20;
  std::size_t images_per_identity = 30;
  std::size_t query_per_identity = 2;
  std::size_t gallery_per_identity = 10;
  std::size_t cameras = 6;
  std::size_t p = 8;
  std::size_t k = 12;
  std::size_t steps = 300;
  double learning_rate = 0.05;
  std::array<std::size_t, 4> stage_channels{8, 16, 32, 64};
  std::size_t dim = 32;
  std::size_t attention_hidden = 16;
  std::array<std::size_t, 2> semantic_hidden{32, 16};
  double dropout = 0.1;
  double label_smoothing = 0.1;
  double fidi_alpha = 2.0;
  double fidi_scale = 0.25;
  double fidi_margin = 1.0;
  std::size_t dwa_window = 50;
  double dwa_temperature = 2.0;
  double pixel_noise = 12.0;  // stddev in 8-bit intensity levels
  std::string out_dir;        // empty: nothing written
  void validate() const;
};

struct StepRecord {
  std::size_t step = 0;  // 1-based
  visnet::TaskLosses losses{};
  visnet::TaskWeights weights{};
  double total = 0.0;  // sum_i w_i L_i
  double attention_min = 0.0;
  double attention_max = 0.0;
};

struct TrainDemoResult {
  std::vector<StepRecord> steps;
  visnet::RankingReport report;
  bool diverged = false;
  std::size_t last_good_step = 0;
};

/// Runs the synthetic training demo; throws EvaluationError on divergence.
TrainDemoResult run_train_demo(const TrainDemoOptions& opts, std::ostream* log = nullptr);
int cmd_train_demo(const TrainDemoOptions& opts, std::ostream& out, std::ostream& err);

// eval ----------------------------------------------------------------------

struct EvalOptions {
  std::string query_path;
  std::string gallery_path;
  std::string manifest_path;
  std::string ap_out;
};
int cmd_eval(const EvalOptions& opts, std::ostream& out, std::ostream& err);

// augment -------------------------------------------------------------------

struct AugmentOptions {
  std::vector<std::string> inputs;  // color images; masks are <stem>_mask.pgm
  std::string out_dir;
  std::size_t count = 1;
  std::uint64_t seed = 0;
  std::array<double, 6> probability{0.5, 0.5, 0.5, 0.5, 0.5, 0.5};
  std::array<double, 6> strength{1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
  std::array<double, 2> hue{30.0, 150.0};
  std::array<double, 2> saturation{1.0, 2.0};
  std::array<double, 2> brightness{0.7, 1.3};
  std::array<double, 2> noise_var{0.01, 0.05};
  double salt_pepper = 0.02;
  bool train_preview = false;  // also write the training transform of each output
  std::array<double, 3> mean{0.485, 0.456, 0.406};
  std::array<double, 3> stddev{0.229, 0.224, 0.225};
};
int cmd_augment(const AugmentOptions& opts, std::ostream& out, std::ostream& err);

// sample --------------------------------------------------------------------

struct SampleOptions {
  std::string manifest_path;
  std::size_t p = 8;
  std::size_t k = 4;
  std::uint64_t seed = 0;
  std::size_t batches = 0;  // 0: one epoch
  std::string split = "train";
};
int cmd_sample(const SampleOptions& opts, std::ostream& out, std::ostream& err);

}  // namespace visnet::cli
