// SPDX-License-Identifier: Apache-2.0
#include <ostream>

#include "commands/commands.hpp"
#include "visnet/error.hpp"
#include "visnet/sampling.hpp"

namespace visnet::cli {

int cmd_sample(const SampleOptions& opts, std::ostream& out, std::ostream& err) {
  try {
    if (opts.p == 0 || opts.k == 0) throw ConfigError("p/k: must be positive");
    const auto split = parse_split(opts.split);
    if (!split) throw ConfigError("split: expected train, query or gallery, got '" + opts.split + "'");
    const DatasetManifest manifest = load_manifest(opts.manifest_path);
    PkSampler sampler(manifest, opts.p, opts.k, opts.seed, *split);
    const std::size_t n = opts.batches == 0 ? sampler.batches_per_epoch() : opts.batches;
    for (std::size_t b = 0; b < n; ++b) {
      const BatchSpec batch = sampler.next();
      for (std::size_t i = 0; i < batch.identities.size(); ++i) {
        out << "batch=" << b << " pid=" << batch.identities[i] << " records=";
        for (std::size_t j = 0; j < batch.k; ++j) {
          out << (j ? "," : "") << batch.samples[i * batch.k + j];
        }
        out << '\n';
      }
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitOk;
}

}  // namespace visnet::cli
