// SPDX-License-Identifier: Apache-2.0
#include <CLI11.hpp>
#include <algorithm>
#include <array>
#include <ostream>

#include "commands/commands.hpp"

namespace visnet::cli {
namespace {

template <typename T, std::size_t N>
std::vector<T> as_vector(const std::array<T, N>& a) {
  return {a.begin(), a.end()};
}

template <std::size_t N, typename T>
void copy_into(const std::vector<T>& from, std::array<T, N>& to) {
  if (!from.empty()) std::copy_n(from.begin(), N, to.begin());
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"visnet: multi-scale re-identification toolkit"};
  app.set_config("--config", "", "TOML/INI config file; command-line values take precedence");
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  ParamCountOptions pc;
  auto* pc_cmd = app.add_subcommand("param-count", "Per-component parameter table");
  pc_cmd->add_option("--spec", pc.spec_path, "Architecture description file (default: built-in layout)");
  pc_cmd->add_flag("--assert-table3", pc.assert_reference, "Exit 1 if a derivable reference row differs");

  GradCheckOptions gc;
  std::vector<std::size_t> gc_channels = as_vector(gc.stage_channels);
  auto* gc_cmd = app.add_subcommand("grad-check", "Finite-difference check of every differentiable component");
  gc_cmd->add_option("--seed", gc.seed);
  gc_cmd->add_option("--batch", gc.batch);
  gc_cmd->add_option("--stage-channels", gc_channels)->expected(4);
  gc_cmd->add_option("--height", gc.height);
  gc_cmd->add_option("--width", gc.width);
  gc_cmd->add_option("--dim", gc.dim);
  gc_cmd->add_option("--attention-hidden", gc.attention_hidden);
  gc_cmd->add_option("--classes", gc.classes);
  gc_cmd->add_option("--step", gc.step);
  gc_cmd->add_option("--tolerance", gc.tolerance);
  gc_cmd->add_flag("--corrupt-gradient", gc.corrupt_gradient)->group("");

  TrainDemoOptions td;
  std::vector<std::size_t> td_channels = as_vector(td.stage_channels), td_semantic = as_vector(td.semantic_hidden);
  auto* td_cmd = app.add_subcommand("train-demo", "Train fusion and heads on a synthetic banded dataset");
  td_cmd->add_option("--seed", td.seed);
  td_cmd->add_option("--identities", td.identities);
  td_cmd->add_option("--images-per-identity", td.images_per_identity);
  td_cmd->add_option("--query-per-identity", td.query_per_identity);
  td_cmd->add_option("--gallery-per-identity", td.gallery_per_identity);
  td_cmd->add_option("--cameras", td.cameras);
  td_cmd->add_option("--p", td.p, "Identities per batch");
  td_cmd->add_option("--k", td.k, "Images per identity in a batch");
  td_cmd->add_option("--steps", td.steps);
  td_cmd->add_option("--lr", td.learning_rate);
  td_cmd->add_option("--stage-channels", td_channels)->expected(4);
  td_cmd->add_option("--dim", td.dim);
  td_cmd->add_option("--attention-hidden", td.attention_hidden);
  td_cmd->add_option("--semantic-hidden", td_semantic)->expected(2);
  td_cmd->add_option("--dropout", td.dropout);
  td_cmd->add_option("--label-smoothing", td.label_smoothing);
  td_cmd->add_option("--alpha", td.fidi_alpha);
  td_cmd->add_option("--fidi-scale", td.fidi_scale);
  td_cmd->add_option("--fidi-margin", td.fidi_margin);
  td_cmd->add_option("--dwa-window", td.dwa_window);
  td_cmd->add_option("--temperature", td.dwa_temperature);
  td_cmd->add_option("--pixel-noise", td.pixel_noise);
  td_cmd->add_option("--out", td.out_dir, "Directory for logs, embeddings and the report");

  EvalOptions ev;
  auto* ev_cmd = app.add_subcommand("eval", "CMC and mAP of query against gallery embeddings");
  ev_cmd->add_option("--query", ev.query_path)->required();
  ev_cmd->add_option("--gallery", ev.gallery_path)->required();
  ev_cmd->add_option("--manifest", ev.manifest_path)->required();
  ev_cmd->add_option("--ap-out", ev.ap_out, "Per-query average precision file");

  AugmentOptions au;
  std::vector<double> au_hue = as_vector(au.hue), au_sat = as_vector(au.saturation), au_bri = as_vector(au.brightness);
  std::vector<double> au_noise = as_vector(au.noise_var), au_mean = as_vector(au.mean), au_std = as_vector(au.stddev);
  auto* au_cmd = app.add_subcommand("augment", "Mask-aware background augmentation");
  au_cmd->add_option("inputs", au.inputs, "Color images (.ppm); masks are <stem>_mask.pgm")->required();
  au_cmd->add_option("--out", au.out_dir);
  au_cmd->add_option("--count", au.count, "Augmented copies per image");
  au_cmd->add_option("--seed", au.seed);
  static constexpr const char* kNames[] = {"color", "texture", "noise", "blur", "pattern", "gradient"};
  for (std::size_t i = 0; i < 6; ++i) {
    au_cmd->add_option(std::string("--") + kNames[i] + "-p", au.probability[i]);
    au_cmd->add_option(std::string("--") + kNames[i] + "-strength", au.strength[i]);
  }
  au_cmd->add_option("--hue", au_hue, "Hue rotation range in degrees")->expected(2);
  au_cmd->add_option("--saturation", au_sat)->expected(2);
  au_cmd->add_option("--brightness", au_bri)->expected(2);
  au_cmd->add_option("--noise-var", au_noise)->expected(2);
  au_cmd->add_option("--salt-pepper", au.salt_pepper);
  au_cmd->add_flag("--train-preview", au.train_preview, "Also write the training transform of each output");
  au_cmd->add_option("--mean", au_mean, "Channel means for normalization")->expected(3);
  au_cmd->add_option("--std", au_std, "Channel standard deviations for normalization")->expected(3);

  SampleOptions sa;
  auto* sa_cmd = app.add_subcommand("sample", "Dump PK batch composition");
  sa_cmd->add_option("--manifest", sa.manifest_path)->required();
  sa_cmd->add_option("--p", sa.p);
  sa_cmd->add_option("--k", sa.k);
  sa_cmd->add_option("--seed", sa.seed);
  sa_cmd->add_option("--split", sa.split, "Manifest split to sample from");
  sa_cmd->add_option("--batches", sa.batches, "Batches to emit (default: one epoch)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  if (*pc_cmd) return cmd_param_count(pc, out, err);
  if (*gc_cmd) {
    copy_into(gc_channels, gc.stage_channels);
    return cmd_grad_check(gc, out, err);
  }
  if (*td_cmd) {
    copy_into(td_channels, td.stage_channels);
    copy_into(td_semantic, td.semantic_hidden);
    return cmd_train_demo(td, out, err);
  }
  if (*ev_cmd) return cmd_eval(ev, out, err);
  if (*au_cmd) {
    copy_into(au_hue, au.hue);
    copy_into(au_sat, au.saturation);
    copy_into(au_bri, au.brightness);
    copy_into(au_noise, au.noise_var);
    copy_into(au_mean, au.mean);
    copy_into(au_std, au.stddev);
    return cmd_augment(au, out, err);
  }
  if (*sa_cmd) return cmd_sample(sa, out, err);
  return kExitInput;
}

}  // namespace visnet::cli
