// SPDX-License-Identifier: Apache-2.0
#include <fstream>
#include <iomanip>
#include <ostream>

#include "commands/commands.hpp"
#include "visnet/error.hpp"
#include "visnet/sampling.hpp"

namespace visnet::cli {
namespace {

EmbeddingSet attach(const EmbeddingFile& f, const DatasetManifest& m, const std::vector<std::size_t>& rows,
                    const std::string& path, std::string_view split) {
  if (f.count != rows.size()) {
    throw InvalidInputError(path + ": holds " + std::to_string(f.count) + " embeddings but the manifest lists " +
                            std::to_string(rows.size()) + " " + std::string(split) + " entries");
  }
  EmbeddingSet s{f.count, f.dim, f.values, {}, {}};
  for (auto r : rows) {
    s.pids.push_back(m.records[r].pid);
    s.camids.push_back(m.records[r].camid);
  }
  return s;
}

}  // namespace

int cmd_eval(const EvalOptions& opts, std::ostream& out, std::ostream& err) {
  RankingReport report;
  std::vector<std::size_t> query_rows;
  DatasetManifest manifest;
  try {
    manifest = load_manifest(opts.manifest_path);
    const auto qf = load_embeddings(opts.query_path);
    const auto gf = load_embeddings(opts.gallery_path);
    if (qf.dim != gf.dim) {
      throw DimensionError(opts.query_path + " has dim " + std::to_string(qf.dim) + " but " + opts.gallery_path +
                           " has dim " + std::to_string(gf.dim));
    }
    query_rows = manifest.indices_of(Split::kQuery);
    const auto q = attach(qf, manifest, query_rows, opts.query_path, "query");
    const auto g = attach(gf, manifest, manifest.indices_of(Split::kGallery), opts.gallery_path, "gallery");
    report = evaluate(q, g);
  } catch (const DegenerateBatchError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }

  write_report_text(out, report);
  if (!opts.ap_out.empty()) {
    std::ofstream f(opts.ap_out);
    if (!f) {
      err << "error: cannot write " << opts.ap_out << '\n';
      return kExitInput;
    }
    f << std::setprecision(10);
    for (const auto& pq : report.per_query) {
      const auto& rec = manifest.records[query_rows[pq.query]];
      f << "query=" << pq.query << " path=" << rec.path << " pid=" << rec.pid << " camid=" << rec.camid
        << " ap=" << pq.average_precision << " first_hit=" << pq.first_hit + 1 << '\n';
    }
  }
  return kExitOk;
}

}  // namespace visnet::cli
