// SPDX-License-Identifier: Apache-2.0
#include "visnet/semantics.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

#include "visnet/error.hpp"

namespace visnet {

SemanticClass spatial_class(double y_norm) {
  if (!(y_norm >= 0.0 && y_norm < 1.0)) {
    throw InvalidInputError("spatial_class: normalized row coordinate " + std::to_string(y_norm) +
                            " outside [0,1)");
  }
  if (y_norm < 0.4) return kUpperBody;
  if (y_norm < 0.8) return kLowerBody;
  return kShoes;
}

ForegroundMask foreground_mask(const Tensor& fused) {
  require_rank(fused, 4, "foreground_mask input");
  const std::size_t B = fused.dim(0), C = fused.dim(1), H = fused.dim(2), W = fused.dim(3), S = H * W;
  ForegroundMask m;
  m.batch = B;
  m.height = H;
  m.width = W;
  m.foreground.assign(B * S, 0);
  m.magnitude.assign(B * S, 0.0);
  m.mean.assign(B, 0.0);
  m.stddev.assign(B, 0.0);
  const auto& v = fused.values();
  for (std::size_t b = 0; b < B; ++b) {
    double* mag = m.magnitude.data() + b * S;
    for (std::size_t c = 0; c < C; ++c) {
      const double* src = v.data() + (b * C + c) * S;
      for (std::size_t s = 0; s < S; ++s) mag[s] += src[s] * src[s];
    }
    for (std::size_t s = 0; s < S; ++s) mag[s] = std::sqrt(mag[s]);
    // Accumulate relative to the minimum so a flat map yields mu == min and sigma == 0 exactly.
    const double lo = *std::min_element(mag, mag + S);
    double mu = 0.0;
    for (std::size_t s = 0; s < S; ++s) mu += mag[s] - lo;
    mu = lo + mu / static_cast<double>(S);
    double var = 0.0;
    for (std::size_t s = 0; s < S; ++s) var += (mag[s] - mu) * (mag[s] - mu);
    const double sigma = std::sqrt(var / static_cast<double>(S));
    m.mean[b] = mu;
    m.stddev[b] = sigma;
    const double threshold = mu + 0.5 * sigma;
    for (std::size_t s = 0; s < S; ++s) m.foreground[b * S + s] = mag[s] > threshold ? 1 : 0;
  }
  return m;
}

PseudoLabelMap pseudo_labels(const Tensor& fused) {
  ForegroundMask fg = foreground_mask(fused);
  PseudoLabelMap out;
  out.batch = fg.batch;
  out.height = fg.height;
  out.width = fg.width;
  out.foreground = std::move(fg.foreground);
  out.mean = std::move(fg.mean);
  out.stddev = std::move(fg.stddev);
  out.labels.resize(out.foreground.size());
  for (std::size_t b = 0; b < out.batch; ++b)
    for (std::size_t y = 0; y < out.height; ++y) {
      const SemanticClass row_class = spatial_class(static_cast<double>(y) / static_cast<double>(out.height));
      for (std::size_t x = 0; x < out.width; ++x) {
        const auto k = (b * out.height + y) * out.width + x;
        out.labels[k] = out.foreground[k] ? row_class : kBackground;
      }
    }
  return out;
}

void write_label_ppm(std::ostream& out, const PseudoLabelMap& labels, std::size_t image) {
  if (image >= labels.batch) throw InvalidInputError("label map has no image " + std::to_string(image));
  static constexpr unsigned char kPalette[4][3] = {{255, 0, 0}, {0, 255, 0}, {0, 0, 255}, {0, 0, 0}};
  out << "P6\n" << labels.width << ' ' << labels.height << "\n255\n";
  for (std::size_t y = 0; y < labels.height; ++y)
    for (std::size_t x = 0; x < labels.width; ++x) {
      const auto* rgb = kPalette[labels.label(image, y, x)];
      out.write(reinterpret_cast<const char*>(rgb), 3);
    }
}

SemanticHeadParams::SemanticHeadParams(const SemanticHeadConfig& config, std::mt19937_64& rng)
    : fc1(config.input, config.hidden[0], true, rng),
      bn1(config.hidden[0]),
      fc2(config.hidden[0], config.hidden[1], true, rng),
      bn2(config.hidden[1]),
      fc3(config.hidden[1], kNumSemanticClasses, true, rng),
      dropout(config.dropout) {}

std::vector<NamedParam> SemanticHeadParams::named() {
  std::vector<NamedParam> out;
  fc1.collect("semantic.fc1", out);
  bn1.collect("semantic.bn1", out);
  fc2.collect("semantic.fc2", out);
  bn2.collect("semantic.bn2", out);
  fc3.collect("semantic.fc3", out);
  return out;
}

Var semantic_head_forward(Tape& tape, Var fused, SemanticHeadParams& p, Mode mode, std::mt19937_64& rng) {
  require_rank(fused.value(), 4, "semantic head input");
  if (fused.dim(1) != p.fc1.in()) {
    throw DimensionError("semantic head expects " + std::to_string(p.fc1.in()) + " channels, fused map has " +
                         std::to_string(fused.dim(1)));
  }
  Var x = ops::nchw_to_rows(fused);
  x = ops::dropout(ops::relu(p.bn1.apply(tape, p.fc1.apply_dense(tape, x), mode)), p.dropout, mode, rng);
  x = ops::dropout(ops::relu(p.bn2.apply(tape, p.fc2.apply_dense(tape, x), mode)), p.dropout, mode, rng);
  return p.fc3.apply_dense(tape, x);
}

}  // namespace visnet
