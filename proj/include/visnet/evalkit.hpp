// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace visnet {

/// Row-major [count, dim] embeddings with per-row identity and camera.
struct EmbeddingSet {
  std::size_t count = 0;
  std::size_t dim = 0;
  std::vector<double> values;
  std::vector<std::int64_t> pids;
  std::vector<std::int64_t> camids;

  std::span<const double> row(std::size_t i) const { return {values.data() + i * dim, dim}; }
  void validate() const;
};

/// Scales every row to unit L2 norm. Throws DegenerateBatchError naming a zero row.
EmbeddingSet l2_normalize(const EmbeddingSet& e);

/// Row-major distance matrix for metadata-free embeddings.
struct DistanceMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double operator()(std::size_t q, std::size_t g) const { return values[q * cols + g]; }
};

/// Euclidean distances between every query and gallery row.
DistanceMatrix distance_matrix(const EmbeddingSet& query, const EmbeddingSet& gallery);

struct QueryResult {
  std::size_t query = 0;
  double average_precision = 0.0;
  /// 0-based rank of the first relevant entry after exclusions.
  std::size_t first_hit = 0;
};

struct RankingReport {
  /// cmc[k-1] = fraction of valid queries with a relevant entry in the top k.
  std::vector<double> cmc;
  double mean_ap = 0.0;
  std::vector<QueryResult> per_query;
  std::size_t valid_queries = 0;
  std::size_t skipped_queries = 0;

  /// CMC at rank k (1-based), saturating past the end of the curve.
  double cmc_at(std::size_t k) const;
};

/// Ranking protocol: gallery entries that share both identity and camera with
/// the query, and entries with negative identity, are removed; the rest are
/// sorted by ascending distance with ties broken by gallery index. Queries
/// with no remaining same-identity entry are skipped and counted.
RankingReport cmc_map(const DistanceMatrix& dist, std::span<const std::int64_t> query_pids,
                      std::span<const std::int64_t> query_cams, std::span<const std::int64_t> gallery_pids,
                      std::span<const std::int64_t> gallery_cams);

RankingReport evaluate(const EmbeddingSet& query, const EmbeddingSet& gallery);

/// Average precision of a ranked binary relevance list, summed directly as
/// sum_k rel_k * precision@k / num_relevant. Throws InvalidInputError if
/// nothing is relevant.
double ap_oracle(std::span<const int> relevance);

void write_report_text(std::ostream& out, const RankingReport& report);
void write_report_rows(std::ostream& out, const RankingReport& report);

/// Binary embedding file: "VNEB", u32 version = 1, u32 count, u32 dim, then
/// count*dim little-endian float32 values, row-major.
void write_embeddings(std::ostream& out, std::size_t count, std::size_t dim, std::span<const double> values);
void save_embeddings(const std::string& path, std::size_t count, std::size_t dim, std::span<const double> values);

struct EmbeddingFile {
  std::size_t count = 0;
  std::size_t dim = 0;
  std::vector<double> values;
};

/// Throws ParseError describing the first defect (magic, version, truncation).
EmbeddingFile read_embeddings(std::istream& in, const std::string& name = "<stream>");
EmbeddingFile load_embeddings(const std::string& path);

}  // namespace visnet
