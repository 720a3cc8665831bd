// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "commands/commands.hpp"
#include "visnet/error.hpp"
#include "visnet/fusion.hpp"
#include "visnet/image.hpp"
#include "visnet/losses.hpp"
#include "visnet/ops.hpp"
#include "visnet/sampling.hpp"
#include "visnet/semantics.hpp"

namespace visnet::cli {
namespace {

constexpr std::size_t kImageHeight = 64;
constexpr std::size_t kImageWidth = 32;

// Band layout of the rendered person, in image rows/columns.
constexpr std::size_t kPersonTop = 4, kPersonBottom = 62;
constexpr std::size_t kPersonLeft = 8, kPersonRight = 24;

struct SyntheticSample {
  Image image;
  std::int64_t pid = 0;
  std::int64_t camid = 0;
  Split split = Split::kTrain;
};

// Each identity owns three band colors (upper 40%, middle 40%, lower 20% of
// the person box). Images add per-image band jitter, a horizontal shift, a
// random flat background and pixel noise.
std::vector<SyntheticSample> synthesize(const TrainDemoOptions& o, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> color(20, 235), any(0, 255), shift(-2, 2);
  std::uniform_int_distribution<std::int64_t> cam(1, static_cast<std::int64_t>(o.cameras));
  std::normal_distribution<double> band_jitter(0.0, 8.0), noise(0.0, o.pixel_noise);
  const std::size_t person_h = kPersonBottom - kPersonTop;
  const std::size_t upper_end = kPersonTop + person_h * 4 / 10;
  const std::size_t lower_end = kPersonTop + person_h * 8 / 10;

  std::vector<SyntheticSample> out;
  for (std::size_t id = 0; id < o.identities; ++id) {
    std::array<std::array<double, 3>, 3> bands;
    for (auto& b : bands) {
      for (auto& c : b) c = color(rng);
    }
    for (std::size_t j = 0; j < o.images_per_identity; ++j) {
      SyntheticSample s;
      s.pid = static_cast<std::int64_t>(id);
      s.camid = cam(rng);
      const std::size_t held = o.images_per_identity - o.query_per_identity - o.gallery_per_identity;
      s.split = j < held ? Split::kTrain : (j < held + o.query_per_identity ? Split::kQuery : Split::kGallery);

      std::array<std::array<double, 3>, 3> jittered = bands;
      for (auto& b : jittered) {
        for (auto& c : b) c += band_jitter(rng);
      }
      const std::array<double, 3> bg{static_cast<double>(any(rng)), static_cast<double>(any(rng)),
                                     static_cast<double>(any(rng))};
      const int dx = shift(rng);
      s.image = Image(kImageWidth, kImageHeight, 3);
      for (std::size_t y = 0; y < kImageHeight; ++y) {
        for (std::size_t x = 0; x < kImageWidth; ++x) {
          const long px = static_cast<long>(x) - dx;
          const bool person = y >= kPersonTop && y < kPersonBottom && px >= static_cast<long>(kPersonLeft) &&
                              px < static_cast<long>(kPersonRight);
          const auto& base = !person ? bg : jittered[y < upper_end ? 0 : (y < lower_end ? 1 : 2)];
          for (std::size_t c = 0; c < 3; ++c) s.image.at(x, y, c) = to_u8(base[c] + noise(rng));
        }
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

// Frozen stem: average pooling to strides 4/8/16/32 followed by a fixed random
// 1x1 projection and ReLU. Outputs one flattened [C,h,w] block per stage.
class Stem {
 public:
  Stem(const std::array<std::size_t, kNumScales>& channels, std::mt19937_64& rng) : channels_(channels) {
    std::normal_distribution<double> w(0.0, 1.0), b(0.0, 0.3);
    for (std::size_t s = 0; s < kNumScales; ++s) {
      weights_[s].resize(channels[s] * 3);
      biases_[s].resize(channels[s]);
      for (auto& v : weights_[s]) v = w(rng);
      for (auto& v : biases_[s]) v = b(rng);
    }
  }

  std::array<std::vector<double>, kNumScales> operator()(const Image& img) const {
    std::array<std::vector<double>, kNumScales> out;
    for (std::size_t s = 0; s < kNumScales; ++s) {
      const std::size_t stride = kResNetStageStrides[s];
      const std::size_t h = height(s), w = width(s);
      std::vector<double> pooled(3 * h * w, 0.0);
      for (std::size_t y = 0; y < kImageHeight; ++y) {
        for (std::size_t x = 0; x < kImageWidth; ++x) {
          for (std::size_t c = 0; c < 3; ++c) {
            pooled[(c * h + y / stride) * w + x / stride] += (img.at(x, y, c) / 255.0 - 0.5) / 0.25;
          }
        }
      }
      for (auto& v : pooled) v /= static_cast<double>(stride * stride);
      auto& f = out[s];
      f.assign(channels_[s] * h * w, 0.0);
      for (std::size_t o = 0; o < channels_[s]; ++o) {
        for (std::size_t i = 0; i < h * w; ++i) {
          double acc = biases_[s][o];
          for (std::size_t c = 0; c < 3; ++c) acc += weights_[s][o * 3 + c] * pooled[c * h * w + i];
          f[o * h * w + i] = std::max(acc, 0.0);
        }
      }
    }
    return out;
  }

  static std::size_t height(std::size_t s) { return kImageHeight / kResNetStageStrides[s]; }
  static std::size_t width(std::size_t s) { return kImageWidth / kResNetStageStrides[s]; }

 private:
  std::array<std::size_t, kNumScales> channels_;
  std::array<std::vector<double>, kNumScales> weights_;
  std::array<std::vector<double>, kNumScales> biases_;
};

using StemFeatures = std::array<std::vector<double>, kNumScales>;

FeaturePyramid gather(const std::vector<StemFeatures>& features, std::span<const std::size_t> rows,
                      const std::array<std::size_t, kNumScales>& channels) {
  FeaturePyramid p;
  for (std::size_t s = 0; s < kNumScales; ++s) {
    const std::size_t block = channels[s] * Stem::height(s) * Stem::width(s);
    std::vector<double> v;
    v.reserve(rows.size() * block);
    for (auto r : rows) v.insert(v.end(), features[r][s].begin(), features[r][s].end());
    p.stages[s] = Tensor({rows.size(), channels[s], Stem::height(s), Stem::width(s)}, std::move(v));
  }
  return p;
}

struct Model {
  FusionParams fusion;
  IdentityHeadParams head;
  SemanticHeadParams semantic;

  std::vector<NamedParam> named() {
    auto all = fusion.named();
    for (auto& p : head.named()) all.push_back(p);
    for (auto& p : semantic.named()) all.push_back(p);
    return all;
  }
};

EmbeddingSet embed(Model& m, const std::vector<StemFeatures>& features, const std::vector<SyntheticSample>& samples,
                   const std::vector<std::size_t>& rows, const std::array<std::size_t, kNumScales>& channels) {
  EmbeddingSet set;
  set.count = rows.size();
  set.dim = m.head.neck.channels();
  constexpr std::size_t kChunk = 64;
  for (std::size_t start = 0; start < rows.size(); start += kChunk) {
    const std::span<const std::size_t> chunk(rows.data() + start, std::min(kChunk, rows.size() - start));
    Tape tape;
    auto fo = fusion_forward(tape, gather(features, chunk, channels), m.fusion, Mode::kEval);
    auto id = identity_head(tape, fo.fused, m.head, Mode::kEval);
    const auto v = id.embedding.value().data();
    set.values.insert(set.values.end(), v.begin(), v.end());
  }
  for (auto r : rows) {
    set.pids.push_back(samples[r].pid);
    set.camids.push_back(samples[r].camid);
  }
  return set;
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw InvalidInputError("cannot write '" + p.string() + "'");
  return f;
}

}  // namespace

void TrainDemoOptions::validate() const {
  if (identities < 2) throw ConfigError("identities: need at least 2");
  if (cameras < 2) throw ConfigError("cameras: need at least 2");
  if (query_per_identity == 0 || gallery_per_identity == 0) {
    throw ConfigError("query_per_identity/gallery_per_identity: must be positive");
  }
  if (images_per_identity <= query_per_identity + gallery_per_identity) {
    throw ConfigError("images_per_identity: must exceed query_per_identity + gallery_per_identity");
  }
  if (p < 2 || p > identities) throw ConfigError("p: must be in [2, identities]");
  if (k < 2) throw ConfigError("k: must be at least 2");
  if (steps == 0) throw ConfigError("steps: must be positive");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate: must be positive");
  for (auto c : stage_channels) {
    if (c == 0) throw ConfigError("stage_channels: must be positive");
  }
  if (dim < 2 || attention_hidden == 0 || semantic_hidden[0] == 0 || semantic_hidden[1] == 0) {
    throw ConfigError("dim/attention_hidden/semantic_hidden: must be positive");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout: must be in [0,1)");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) throw ConfigError("label_smoothing: must be in [0,1)");
  if (!(pixel_noise >= 0.0)) throw ConfigError("pixel_noise: must be nonnegative");
  FidiConfig{fidi_alpha, fidi_scale, fidi_margin}.validate();
  DWAConfig{dwa_window, dwa_temperature}.validate();
}

TrainDemoResult run_train_demo(const TrainDemoOptions& o, std::ostream* log) {
  o.validate();
  std::mt19937_64 data_rng(o.seed);
  std::mt19937_64 model_rng(o.seed + 1);
  std::mt19937_64 dropout_rng(o.seed + 3);

  const auto samples = synthesize(o, data_rng);
  const Stem stem(o.stage_channels, model_rng);
  std::vector<StemFeatures> features;
  features.reserve(samples.size());
  for (const auto& s : samples) features.push_back(stem(s.image));

  DatasetManifest manifest;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::ostringstream name;
    name << "synthetic/" << std::setw(4) << std::setfill('0') << samples[i].pid << "_c" << samples[i].camid << "_"
         << std::setw(4) << i << ".ppm";
    manifest.records.push_back({name.str(), samples[i].pid, samples[i].camid, samples[i].split});
  }

  FusionConfig fc;
  fc.stage_channels = o.stage_channels;
  fc.dim = o.dim;
  fc.attention_hidden = o.attention_hidden;
  SemanticHeadConfig sc;
  sc.input = o.dim;
  sc.hidden = o.semantic_hidden;
  sc.dropout = o.dropout;
  Model model{FusionParams(fc, model_rng), IdentityHeadParams(o.dim, o.identities, model_rng),
              SemanticHeadParams(sc, model_rng)};
  auto params = model.named();

  PkSampler sampler(manifest, o.p, o.k, o.seed + 2);
  const FidiConfig fidi_cfg{o.fidi_alpha, o.fidi_scale, o.fidi_margin};
  DWAState dwa(DWAConfig{o.dwa_window, o.dwa_temperature});

  TrainDemoResult result;
  for (std::size_t step = 1; step <= o.steps; ++step) {
    const BatchSpec batch = sampler.next();
    std::vector<std::int64_t> pids;
    std::vector<std::size_t> targets;
    for (auto r : batch.samples) {
      pids.push_back(samples[r].pid);
      targets.push_back(static_cast<std::size_t>(samples[r].pid));
    }

    Tape tape;
    auto fo = fusion_forward(tape, gather(features, batch.samples, o.stage_channels), model.fusion, Mode::kTrain);
    auto id = identity_head(tape, fo.fused, model.head, Mode::kTrain);
    const PseudoLabelMap labels = pseudo_labels(fo.fused.value());
    Var sem = semantic_head_forward(tape, fo.fused, model.semantic, Mode::kTrain, dropout_rng);
    const std::array<Var, kNumTasks> losses{fidi_loss(id.embedding, pids, fidi_cfg).loss,
                                            ce_label_smoothing(id.logits, targets, o.label_smoothing),
                                            semantic_loss(sem, labels)};

    StepRecord rec;
    rec.step = step;
    for (std::size_t t = 0; t < kNumTasks; ++t) rec.losses[t] = losses[t].value().item();
    for (double l : rec.losses) {
      if (!std::isfinite(l)) {
        result.diverged = true;
        throw EvaluationError("non-finite loss at step " + std::to_string(step) + ", last good step " +
                              std::to_string(result.last_good_step));
      }
    }
    rec.weights = dwa.update(rec.losses);
    Var total = total_loss(losses, rec.weights);
    rec.total = total.value().item();
    const auto att = fo.attention.value().data();
    rec.attention_min = *std::min_element(att.begin(), att.end());
    rec.attention_max = *std::max_element(att.begin(), att.end());

    tape.backward(total);
    for (auto& p : params) {
      if (!p.tensor->has_grad()) continue;
      const auto& g = p.tensor->grad();
      for (std::size_t i = 0; i < g.size(); ++i) (*p.tensor)[i] -= o.learning_rate * g[i];
    }

    if (log) {
      *log << std::setprecision(9) << "step=" << step << " loss_fidi=" << rec.losses[0]
           << " loss_ce=" << rec.losses[1] << " loss_semantic=" << rec.losses[2] << " total=" << rec.total
           << " w_fidi=" << rec.weights[0] << " w_ce=" << rec.weights[1] << " w_semantic=" << rec.weights[2]
           << " attention_min=" << rec.attention_min << " attention_max=" << rec.attention_max << '\n';
    }
    result.steps.push_back(rec);
    result.last_good_step = step;
  }

  const auto query_rows = manifest.indices_of(Split::kQuery);
  const auto gallery_rows = manifest.indices_of(Split::kGallery);
  const EmbeddingSet query = embed(model, features, samples, query_rows, o.stage_channels);
  const EmbeddingSet gallery = embed(model, features, samples, gallery_rows, o.stage_channels);
  result.report = evaluate(query, gallery);

  if (!o.out_dir.empty()) {
    const std::filesystem::path dir(o.out_dir);
    std::filesystem::create_directories(dir);
    save_embeddings((dir / "query.vneb").string(), query.count, query.dim, query.values);
    save_embeddings((dir / "gallery.vneb").string(), gallery.count, gallery.dim, gallery.values);
    DatasetManifest held;
    for (auto r : query_rows) held.records.push_back(manifest.records[r]);
    for (auto r : gallery_rows) held.records.push_back(manifest.records[r]);
    auto mf = open_out(dir / "heldout_manifest.csv");
    write_manifest(mf, held);
    auto wf = open_out(dir / "dwa_weights.log");
    for (const auto& s : result.steps) write_weight_log_line(wf, s.step, s.weights);
    auto rf = open_out(dir / "report.txt");
    write_report_rows(rf, result.report);
  }
  return result;
}

int cmd_train_demo(const TrainDemoOptions& opts, std::ostream& out, std::ostream& err) {
  try {
    opts.validate();
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }
  std::ofstream log_file;
  std::ostream* log = &out;
  if (!opts.out_dir.empty()) {
    std::filesystem::create_directories(opts.out_dir);
    log_file.open(std::filesystem::path(opts.out_dir) / "train.log");
    if (!log_file) {
      err << "error: cannot write " << opts.out_dir << "/train.log\n";
      return kExitInput;
    }
    log = &log_file;
  }
  TrainDemoResult r;
  try {
    r = run_train_demo(opts, log);
  } catch (const EvaluationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }
  const auto& first = r.steps.front();
  const auto& last = r.steps.back();
  out << std::setprecision(6) << "steps=" << r.steps.size() << " first_total=" << first.total
      << " final_total=" << last.total << '\n';
  write_report_rows(out, r.report);
  return kExitOk;
}

}  // namespace visnet::cli
