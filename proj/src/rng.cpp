#include "basinlab/rng.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "basinlab/errors.hpp"
#include "basinlab/hash.hpp"

namespace basinlab::rng {

std::string_view stream_name(Stream s) {
  switch (s) {
    case Stream::init: return "init";
    case Stream::shuffle: return "shuffle";
    case Stream::dropout: return "dropout";
    case Stream::data_synth: return "data_synth";
  }
  return "init";
}

Stream parse_stream(std::string_view name) {
  for (Stream s : {Stream::init, Stream::shuffle, Stream::dropout, Stream::data_synth}) {
    if (stream_name(s) == name) return s;
  }
  throw InvalidArgument("unknown rng stream '" + std::string(name) + "'");
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t mix(const StreamKey& key) {
  const std::uint64_t name_hash = fnv1a(stream_name(key.stream));
  const std::uint64_t lane = splitmix64(key.master_seed ^ name_hash);
  return splitmix64(lane ^ key.counter);
}

double draw_uniform(const StreamKey& key) {
  return static_cast<double>(mix(key) >> 11) * 0x1.0p-53;
}

double draw_gaussian(const StreamKey& key) {
  const double u1 = draw_uniform(key);
  const double u2 = draw_uniform(key.offset(1));
  // 1 - u1 lies in (0, 1], so the log is finite.
  const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
  return r * std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<std::size_t> shuffle_indices(const StreamKey& key, std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  if (n < 2) return idx;
  std::uint64_t c = key.counter;
  for (std::size_t i = n - 1; i > 0; --i, ++c) {
    auto j = static_cast<std::size_t>(draw_uniform(key.at(c)) * static_cast<double>(i + 1));
    if (j > i) j = i;
    std::swap(idx[i], idx[j]);
  }
  return idx;
}

std::uint64_t shuffle_counter(std::uint64_t epoch) { return epoch << 32; }

std::uint64_t dropout_counter(std::uint64_t epoch, std::uint64_t batch, std::uint64_t layer) {
  return ((((epoch & 0xFFFF) << 16 | (batch & 0xFFFF)) << 8 | (layer & 0xFF)) << 24);
}

std::vector<double> dropout_mask(const StreamKey& key, std::size_t count, double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw InvalidArgument("dropout rate must lie in [0, 1)");
  std::vector<double> mask(count);
  for (std::size_t i = 0; i < count; ++i) {
    mask[i] = draw_uniform(key.offset(i)) >= rate ? 1.0 : 0.0;
  }
  return mask;
}

std::uint64_t SeedPlan::seed_for(Stream s) const {
  auto it = overrides.find(s);
  return it == overrides.end() ? master_seed : it->second;
}

}  // namespace basinlab::rng
