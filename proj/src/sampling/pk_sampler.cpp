// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <map>

#include "visnet/error.hpp"
#include "visnet/sampling.hpp"

namespace visnet {

PkSampler::PkSampler(const DatasetManifest& manifest, std::size_t p, std::size_t k, std::uint64_t seed, Split split)
    : p_(p), k_(k), rng_(seed) {
  if (p == 0 || k == 0) throw ConfigError("P and K must be positive");
  std::map<std::int64_t, std::vector<std::size_t>> by_id;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const auto& r = manifest.records[i];
    if (r.split == split && r.pid >= 0) by_id[r.pid].push_back(i);
  }
  if (by_id.size() < p) {
    throw ConfigError("PK sampling needs at least P=" + std::to_string(p) + " identities, manifest has " +
                      std::to_string(by_id.size()));
  }
  for (auto& [id, imgs] : by_id) {
    identity_ids_.push_back(id);
    images_.push_back(std::move(imgs));
  }
  cursor_ = identity_ids_.size();
}

void PkSampler::start_epoch() {
  order_.resize(identity_ids_.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  std::shuffle(order_.begin(), order_.end(), rng_);
  cursor_ = 0;
  batch_in_epoch_ = 0;
}

std::vector<std::size_t> PkSampler::draw_images(std::size_t identity) {
  std::vector<std::size_t> pool = images_[identity];
  std::vector<std::size_t> out;
  out.reserve(k_);
  while (out.size() < k_) {
    std::shuffle(pool.begin(), pool.end(), rng_);
    const std::size_t take = std::min(pool.size(), k_ - out.size());
    out.insert(out.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take));
  }
  return out;
}

BatchSpec PkSampler::next() {
  if (cursor_ >= identity_ids_.size()) start_epoch();
  std::vector<std::size_t> group;
  while (group.size() < p_ && cursor_ < order_.size()) group.push_back(order_[cursor_++]);
  if (group.size() < p_) {
    std::vector<std::size_t> used(order_.begin(), order_.begin() + static_cast<std::ptrdiff_t>(cursor_ - group.size()));
    std::shuffle(used.begin(), used.end(), rng_);
    for (std::size_t i = 0; group.size() < p_; ++i) group.push_back(used[i]);
  }
  ++batch_in_epoch_;

  BatchSpec batch;
  batch.p = p_;
  batch.k = k_;
  for (auto id : group) {
    batch.identities.push_back(identity_ids_[id]);
    for (auto s : draw_images(id)) batch.samples.push_back(s);
  }
  return batch;
}

std::vector<BatchSpec> PkSampler::epoch() {
  if (cursor_ != 0 && cursor_ < identity_ids_.size()) {
    throw ConfigError("epoch() called in the middle of an epoch");
  }
  std::vector<BatchSpec> out;
  const std::size_t n = batches_per_epoch();
  for (std::size_t i = 0; i < n; ++i) out.push_back(next());
  return out;
}

std::vector<BatchSpec> pk_batches(const DatasetManifest& manifest, std::size_t p, std::size_t k, std::uint64_t seed,
                                  std::size_t count) {
  PkSampler sampler(manifest, p, k, seed);
  std::vector<BatchSpec> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(sampler.next());
  return out;
}

}  // namespace visnet
