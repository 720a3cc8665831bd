// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace visnet {

enum class Split { kTrain, kQuery, kGallery };

std::string_view split_name(Split s);
std::optional<Split> parse_split(std::string_view text);

/// pid -1 marks a junk image (never scored); every other id is nonnegative.
struct ManifestRecord {
  std::string path;
  std::int64_t pid = 0;
  std::int64_t camid = 0;
  Split split = Split::kTrain;
};

struct DatasetManifest {
  std::vector<ManifestRecord> records;

  std::vector<std::size_t> indices_of(Split split) const;
};

struct MarketName {
  std::int64_t pid;
  std::int64_t camid;
};

/// Parses Market-1501 style file names ("0002_c1s1_000451_03.jpg", "-1_c3s2_...").
std::optional<MarketName> parse_market_name(std::string_view path);

/// CSV with header `path,pid,camid,split`. Empty pid/camid fields are filled
/// from the file name. Throws ParseError (with line) or InvalidInputError.
DatasetManifest parse_manifest(std::istream& in);
DatasetManifest load_manifest(const std::string& path);
void write_manifest(std::ostream& out, const DatasetManifest& manifest);

struct BatchSpec {
  /// Record indices, identity-major: slots [i*K, (i+1)*K) belong to identities[i].
  std::vector<std::size_t> samples;
  std::vector<std::int64_t> identities;
  std::size_t p = 0;
  std::size_t k = 0;
};

/// Identity-balanced batches: P identities per batch, K images each.
///
/// An epoch shuffles the identities and emits ceil(num_ids / P) batches; the
/// last group is topped up with identities already used in that epoch.
/// Identities with fewer than K images cycle through shuffled copies of
/// their images, so no image repeats more than ceil(K / count) times.
class PkSampler {
 public:
  PkSampler(const DatasetManifest& manifest, std::size_t p, std::size_t k, std::uint64_t seed,
            Split split = Split::kTrain);

  BatchSpec next();
  std::vector<BatchSpec> epoch();

  std::size_t num_identities() const { return identity_ids_.size(); }
  std::size_t batches_per_epoch() const { return (identity_ids_.size() + p_ - 1) / p_; }

 private:
  void start_epoch();
  std::vector<std::size_t> draw_images(std::size_t identity);

  std::size_t p_, k_;
  std::mt19937_64 rng_;
  std::vector<std::int64_t> identity_ids_;
  std::vector<std::vector<std::size_t>> images_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t batch_in_epoch_ = 0;
};

/// Convenience: the first `count` batches of a fresh sampler.
std::vector<BatchSpec> pk_batches(const DatasetManifest& manifest, std::size_t p, std::size_t k, std::uint64_t seed,
                                  std::size_t count);

}  // namespace visnet
