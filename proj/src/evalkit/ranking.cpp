// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <string>

#include "visnet/error.hpp"
#include "visnet/evalkit.hpp"

namespace visnet {

void EmbeddingSet::validate() const {
  if (values.size() != count * dim) {
    throw DimensionError("embedding set holds " + std::to_string(values.size()) + " values, expected " +
                         std::to_string(count) + "x" + std::to_string(dim));
  }
  if ((!pids.empty() && pids.size() != count) || (!camids.empty() && camids.size() != count)) {
    throw InvalidInputError("embedding metadata does not align with " + std::to_string(count) + " rows");
  }
}

EmbeddingSet l2_normalize(const EmbeddingSet& e) {
  e.validate();
  EmbeddingSet out = e;
  for (std::size_t i = 0; i < e.count; ++i) {
    double sq = 0.0;
    for (double v : e.row(i)) sq += v * v;
    const double n = std::sqrt(sq);
    if (!(n > 0.0)) throw DegenerateBatchError("embedding row " + std::to_string(i) + " has zero norm");
    for (std::size_t d = 0; d < e.dim; ++d) out.values[i * e.dim + d] = e.values[i * e.dim + d] / n;
  }
  return out;
}

DistanceMatrix distance_matrix(const EmbeddingSet& query, const EmbeddingSet& gallery) {
  query.validate();
  gallery.validate();
  if (query.dim != gallery.dim) {
    throw DimensionError("query dim " + std::to_string(query.dim) + " differs from gallery dim " +
                         std::to_string(gallery.dim));
  }
  DistanceMatrix m{query.count, gallery.count, std::vector<double>(query.count * gallery.count)};
  for (std::size_t q = 0; q < query.count; ++q) {
    const auto a = query.row(q);
    for (std::size_t g = 0; g < gallery.count; ++g) {
      const auto b = gallery.row(g);
      double sq = 0.0;
      for (std::size_t d = 0; d < query.dim; ++d) {
        const double diff = a[d] - b[d];
        sq += diff * diff;
      }
      m.values[q * gallery.count + g] = std::sqrt(sq);
    }
  }
  return m;
}

double RankingReport::cmc_at(std::size_t k) const {
  if (cmc.empty() || k == 0) return 0.0;
  return cmc[std::min(k, cmc.size()) - 1];
}

RankingReport cmc_map(const DistanceMatrix& dist, std::span<const std::int64_t> query_pids,
                      std::span<const std::int64_t> query_cams, std::span<const std::int64_t> gallery_pids,
                      std::span<const std::int64_t> gallery_cams) {
  if (query_pids.size() != dist.rows || query_cams.size() != dist.rows || gallery_pids.size() != dist.cols ||
      gallery_cams.size() != dist.cols || dist.values.size() != dist.rows * dist.cols) {
    throw InvalidInputError("ranking metadata does not align with the " + std::to_string(dist.rows) + "x" +
                            std::to_string(dist.cols) + " distance matrix");
  }
  RankingReport report;
  std::vector<std::size_t> hits_at(dist.cols, 0);
  std::vector<std::size_t> order;
  for (std::size_t q = 0; q < dist.rows; ++q) {
    order.clear();
    for (std::size_t g = 0; g < dist.cols; ++g) {
      if (gallery_pids[g] < 0) continue;
      if (gallery_pids[g] == query_pids[q] && gallery_cams[g] == query_cams[q]) continue;
      order.push_back(g);
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return dist(q, a) < dist(q, b); });

    std::size_t relevant = 0;
    for (auto g : order) relevant += gallery_pids[g] == query_pids[q];
    if (relevant == 0 || query_pids[q] < 0) {
      ++report.skipped_queries;
      continue;
    }
    double ap = 0.0;
    std::size_t found = 0;
    std::size_t first = order.size();
    for (std::size_t r = 0; r < order.size() && found < relevant; ++r) {
      if (gallery_pids[order[r]] != query_pids[q]) continue;
      if (found == 0) first = r;
      ++found;
      ap += static_cast<double>(found) / static_cast<double>(r + 1);
    }
    ap /= static_cast<double>(relevant);
    report.per_query.push_back({q, ap, first});
    ++hits_at[first];
  }
  report.valid_queries = report.per_query.size();
  report.cmc.assign(dist.cols, 0.0);
  if (report.valid_queries > 0) {
    std::size_t cumulative = 0;
    for (std::size_t r = 0; r < dist.cols; ++r) {
      cumulative += hits_at[r];
      report.cmc[r] = static_cast<double>(cumulative) / static_cast<double>(report.valid_queries);
    }
    double total = 0.0;
    for (const auto& pq : report.per_query) total += pq.average_precision;
    report.mean_ap = total / static_cast<double>(report.valid_queries);
  }
  return report;
}

RankingReport evaluate(const EmbeddingSet& query, const EmbeddingSet& gallery) {
  if (query.pids.size() != query.count || gallery.pids.size() != gallery.count) {
    throw InvalidInputError("evaluation needs pid/camid metadata for every row");
  }
  const auto q = l2_normalize(query);
  const auto g = l2_normalize(gallery);
  return cmc_map(distance_matrix(q, g), q.pids, q.camids, g.pids, g.camids);
}

double ap_oracle(std::span<const int> relevance) {
  const auto positives = static_cast<std::size_t>(std::count(relevance.begin(), relevance.end(), 1));
  if (positives == 0) throw InvalidInputError("average precision is undefined without relevant entries");
  double sum = 0.0;
  for (std::size_t k = 0; k < relevance.size(); ++k) {
    if (relevance[k] != 1) continue;
    std::size_t hits = 0;
    for (std::size_t j = 0; j <= k; ++j) hits += relevance[j] == 1;
    sum += static_cast<double>(hits) / static_cast<double>(k + 1);
  }
  return sum / static_cast<double>(positives);
}

void write_report_text(std::ostream& out, const RankingReport& r) {
  const auto flags = out.flags();
  out << std::fixed << std::setprecision(2);
  out << "Rank-1  " << std::setw(7) << 100.0 * r.cmc_at(1) << " %\n";
  out << "Rank-5  " << std::setw(7) << 100.0 * r.cmc_at(5) << " %\n";
  out << "Rank-10 " << std::setw(7) << 100.0 * r.cmc_at(10) << " %\n";
  out << "Rank-20 " << std::setw(7) << 100.0 * r.cmc_at(20) << " %\n";
  out << "mAP     " << std::setw(7) << 100.0 * r.mean_ap << " %\n";
  out << "queries " << r.valid_queries << " scored, " << r.skipped_queries << " skipped\n";
  out.flags(flags);
}

void write_report_rows(std::ostream& out, const RankingReport& r) {
  const auto flags = out.flags();
  const auto prec = out.precision();
  out << std::setprecision(10);
  for (std::size_t k : {1, 5, 10, 20}) out << "cmc_rank" << k << '=' << r.cmc_at(k) << '\n';
  out << "map=" << r.mean_ap << '\n';
  out << "valid_queries=" << r.valid_queries << '\n';
  out << "skipped_queries=" << r.skipped_queries << '\n';
  out.flags(flags);
  out.precision(prec);
}

}  // namespace visnet
