// SPDX-License-Identifier: Apache-2.0
#include <filesystem>
#include <ostream>

#include "commands/commands.hpp"
#include "visnet/augment.hpp"
#include "visnet/error.hpp"

namespace visnet::cli {
namespace {

Image denormalize(const Tensor& chw, const TransformConfig& cfg) {
  const std::size_t h = chw.dim(1), w = chw.dim(2);
  Image img(w, h, 3);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        img.at(x, y, c) = to_u8((chw[(c * h + y) * w + x] * cfg.stddev[c] + cfg.mean[c]) * 255.0);
      }
    }
  }
  return img;
}

}  // namespace

int cmd_augment(const AugmentOptions& opts, std::ostream& out, std::ostream& err) {
  AugmentConfig cfg;
  for (std::size_t i = 0; i < kNumCategories; ++i) cfg.categories[i] = {opts.probability[i], opts.strength[i]};
  cfg.hue_min = opts.hue[0];
  cfg.hue_max = opts.hue[1];
  cfg.saturation_min = opts.saturation[0];
  cfg.saturation_max = opts.saturation[1];
  cfg.brightness_min = opts.brightness[0];
  cfg.brightness_max = opts.brightness[1];
  cfg.noise_var_min = opts.noise_var[0];
  cfg.noise_var_max = opts.noise_var[1];
  cfg.salt_pepper_max = opts.salt_pepper;
  cfg.seed = opts.seed;
  TransformConfig tcfg;
  tcfg.mean = opts.mean;
  tcfg.stddev = opts.stddev;
  try {
    cfg.validate();
    if (opts.count == 0) throw ConfigError("count: must be positive");
    if (opts.inputs.empty()) throw ConfigError("inputs: no images given");
    for (double s : tcfg.stddev) {
      if (!(s > 0.0)) throw ConfigError("std: must be positive");
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }

  try {
    const std::filesystem::path out_dir(opts.out_dir.empty() ? "." : opts.out_dir);
    std::filesystem::create_directories(out_dir);
    for (std::size_t i = 0; i < opts.inputs.size(); ++i) {
      const std::filesystem::path src(opts.inputs[i]);
      const auto mask_path = src.parent_path() / (src.stem().string() + "_mask.pgm");
      MaskedImage mi{load_pnm(src.string()), mask_from_image(load_pnm(mask_path.string()))};
      if (mi.image.channels != 3) throw InvalidInputError(src.string() + ": expected a color image");
      if (mi.mask.size() != mi.image.width * mi.image.height) {
        throw InvalidInputError(mask_path.string() + ": mask extent differs from the image");
      }
      for (std::size_t n = 0; n < opts.count; ++n) {
        auto rng = image_rng(opts.seed, i * opts.count + n);
        const Image aug = augment_pipeline(mi, cfg, rng);
        const auto stem = src.stem().string() + "_aug" + std::to_string(n);
        save_pnm((out_dir / (stem + ".ppm")).string(), aug);
        out << "wrote " << (out_dir / (stem + ".ppm")).string() << '\n';
        if (opts.train_preview) {
          TransformTrace trace;
          const Tensor t = train_transforms(aug, tcfg, rng, &trace);
          save_pnm((out_dir / (stem + "_train.ppm")).string(), denormalize(t, tcfg));
          out << "wrote " << (out_dir / (stem + "_train.ppm")).string() << " flipped=" << trace.flipped
              << " erased=" << trace.erased << '\n';
        }
      }
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitOk;
}

}  // namespace visnet::cli
