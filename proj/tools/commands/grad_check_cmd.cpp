// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <set>

#include "commands/commands.hpp"
#include "visnet/error.hpp"
#include "visnet/fusion.hpp"
#include "visnet/losses.hpp"
#include "visnet/ops.hpp"
#include "visnet/semantics.hpp"

namespace visnet::cli {
namespace {

std::vector<NamedParam> without(std::vector<NamedParam> params, const std::set<std::string>& names) {
  std::erase_if(params, [&](const NamedParam& p) { return names.count(p.name) > 0; });
  return params;
}

visnet::GradCheckOptions check_options(const GradCheckOptions& opts) {
  visnet::GradCheckOptions o;
  o.step = opts.step;
  if (opts.corrupt_gradient) {
    o.analytic_hook = [](std::string_view, std::vector<double>& g) {
      if (!g.empty()) g[0] = g[0] * 1.1 + 1e-3;
    };
  }
  return o;
}

}  // namespace

void GradCheckOptions::validate() const {
  if (batch < 4 || batch % 2 != 0) throw ConfigError("batch: must be an even number of at least 4");
  if (height < 8 || width < 8) throw ConfigError("height/width: stage-1 extent must be at least 8");
  for (auto c : stage_channels) {
    if (c == 0) throw ConfigError("stage_channels: must be positive");
  }
  if (dim == 0 || attention_hidden == 0) throw ConfigError("dim/attention_hidden: must be positive");
  if (classes < batch / 2) throw ConfigError("classes: must cover batch/2 identities");
  if (!(step > 0.0)) throw ConfigError("step: must be positive");
  if (!(tolerance > 0.0)) throw ConfigError("tolerance: must be positive");
}

GradCheckSuite run_grad_check_suite(const GradCheckOptions& opts) {
  opts.validate();
  std::mt19937_64 rng(opts.seed);
  const auto check = check_options(opts);
  GradCheckSuite suite;
  auto add = [&](std::string name, GradCheckReport report) {
    suite.max_rel_err = std::max(suite.max_rel_err, report.max_rel_err);
    suite.cases.push_back({std::move(name), std::move(report)});
  };

  // Full model: fusion, identity head, semantic head and all three losses.
  {
    FeaturePyramid pyramid;
    std::size_t h = opts.height, w = opts.width;
    for (std::size_t i = 0; i < kNumScales; ++i) {
      pyramid.stages[i] = Tensor::randn({opts.batch, opts.stage_channels[i], h, w}, rng);
      h = (h + 1) / 2;
      w = (w + 1) / 2;
    }
    FusionConfig fc;
    fc.stage_channels = opts.stage_channels;
    fc.dim = opts.dim;
    fc.attention_hidden = opts.attention_hidden;
    FusionParams fusion(fc, rng);
    IdentityHeadParams head(opts.dim, opts.classes, rng);
    SemanticHeadConfig sc;
    sc.input = opts.dim;
    sc.hidden = {opts.dim, std::max<std::size_t>(opts.dim - 1, 1)};
    SemanticHeadParams semantic(sc, rng);

    std::vector<std::int64_t> ids(opts.batch);
    std::vector<std::size_t> targets(opts.batch);
    for (std::size_t b = 0; b < opts.batch; ++b) {
      ids[b] = static_cast<std::int64_t>(b / 2);
      targets[b] = b / 2;
    }
    // Pseudo-labels are detached; fixing them at the base point keeps the
    // objective smooth under perturbation.
    PseudoLabelMap labels;
    {
      Tape tape;
      labels = pseudo_labels(fusion_forward(tape, pyramid, fusion, Mode::kTrain).fused.value());
    }
    const std::uint64_t dropout_seed = opts.seed + 17;
    const FidiConfig fidi_cfg;

    auto objective = [&](Mode mode) {
      return [&, mode](Tape& tape) {
        auto fo = fusion_forward(tape, pyramid, fusion, mode);
        auto id = identity_head(tape, fo.fused, head, mode);
        std::mt19937_64 drop(dropout_seed);
        Var sem = semantic_head_forward(tape, fo.fused, semantic, mode, drop);
        const std::array<Var, kNumTasks> losses{fidi_loss(id.embedding, ids, fidi_cfg).loss,
                                                ce_label_smoothing(id.logits, targets, 0.1),
                                                semantic_loss(sem, labels)};
        return total_loss(losses, {1.0 / 3, 1.0 / 3, 1.0 / 3});
      };
    };

    std::vector<NamedParam> all = fusion.named();
    for (auto& p : head.named()) all.push_back(p);
    for (auto& p : semantic.named()) all.push_back(p);

    // A bias feeding a train-mode batch norm has an identically zero gradient,
    // so its finite difference is pure rounding noise. Those biases are
    // covered by the eval-mode pass, where the normalization is affine.
    std::set<std::string> pre_bn{"semantic.fc1.bias", "semantic.fc2.bias"};
    for (std::size_t i = 1; i <= kNumScales; ++i) pre_bn.insert("fusion.proj" + std::to_string(i) + ".conv.bias");
    const auto train_params = without(all, pre_bn);
    add("model/train", grad_check(objective(Mode::kTrain), train_params, check));
    add("model/eval", grad_check(objective(Mode::kEval), all, check));
  }

  // Losses on direct inputs.
  {
    Tensor emb = Tensor::randn({8, opts.dim}, rng);
    const std::vector<std::int64_t> ids{0, 0, 1, 1, 2, 2, 3, 3};
    const FidiConfig cfg;
    const NamedParam p{"embeddings", &emb};
    add("fidi", grad_check([&](Tape& t) { return fidi_loss(t.leaf(emb), ids, cfg).loss; }, {&p, 1}, check));
  }
  {
    Tensor logits = Tensor::randn({opts.batch, opts.classes}, rng, 2.0);
    std::vector<std::size_t> targets(opts.batch);
    for (std::size_t b = 0; b < opts.batch; ++b) targets[b] = b % opts.classes;
    const NamedParam p{"logits", &logits};
    add("ce_label_smoothing",
        grad_check([&](Tape& t) { return ce_label_smoothing(t.leaf(logits), targets, 0.1); }, {&p, 1}, check));
  }
  {
    const PseudoLabelMap labels = pseudo_labels(Tensor::randn({2, 3, 4, 2}, rng));
    Tensor logits = Tensor::randn({labels.size(), kNumSemanticClasses}, rng, 2.0);
    const NamedParam p{"logits", &logits};
    add("semantic_ce", grad_check([&](Tape& t) { return semantic_loss(t.leaf(logits), labels); }, {&p, 1}, check));
  }
  return suite;
}

void write_grad_check_report(std::ostream& out, const GradCheckSuite& suite) {
  const auto flags = out.flags();
  const auto prec = out.precision();
  out << std::setprecision(3) << std::scientific;
  for (const auto& c : suite.cases) {
    for (const auto& p : c.report.params) {
      out << "case=" << c.name << " param=" << p.name << " numel=" << p.numel << " max_rel_err=" << p.max_rel_err
          << " worst_index=" << p.worst_index << " analytic=" << p.analytic << " numeric=" << p.numeric << '\n';
    }
  }
  out << "max_rel_err=" << suite.max_rel_err << '\n';
  out.flags(flags);
  out.precision(prec);
}

int cmd_grad_check(const GradCheckOptions& opts, std::ostream& out, std::ostream& err) {
  try {
    opts.validate();
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }
  GradCheckSuite suite;
  try {
    suite = run_grad_check_suite(opts);
  } catch (const EvaluationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
  write_grad_check_report(out, suite);
  const bool pass = suite.max_rel_err <= opts.tolerance;
  out << "tolerance=" << opts.tolerance << " result=" << (pass ? "PASS" : "FAIL") << '\n';
  return pass ? kExitOk : kExitNumerical;
}

}  // namespace visnet::cli
