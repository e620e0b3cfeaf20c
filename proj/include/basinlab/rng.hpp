#pragma once

// Counter-based random streams.
//
// Every draw is a pure function of (master_seed, stream name, counter), so two
// runs that share a seed see the same initialization, shuffles and dropout
// masks no matter how many gradient evaluations each optimizer performs.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string_view>
#include <vector>

namespace basinlab::rng {

enum class Stream : std::uint8_t { init, shuffle, dropout, data_synth };

std::string_view stream_name(Stream s);
Stream parse_stream(std::string_view name);

struct StreamKey {
  std::uint64_t master_seed = 0;
  Stream stream = Stream::init;
  std::uint64_t counter = 0;

  [[nodiscard]] StreamKey at(std::uint64_t c) const { return {master_seed, stream, c}; }
  [[nodiscard]] StreamKey offset(std::uint64_t d) const { return {master_seed, stream, counter + d}; }
};

std::uint64_t splitmix64(std::uint64_t x);

/// Raw 64-bit output for a key.
std::uint64_t mix(const StreamKey& key);

/// Uniform in [0, 1) with 53 bits of resolution.
double draw_uniform(const StreamKey& key);

/// Standard normal via Box-Muller on counters (c, c+1); only the cosine branch is used.
double draw_gaussian(const StreamKey& key);

/// Fisher-Yates permutation of 0..n-1 consuming counters c .. c+n-2.
std::vector<std::size_t> shuffle_indices(const StreamKey& key, std::size_t n);

/// Counter layout for the shuffle stream: one block of 2^32 draws per epoch.
std::uint64_t shuffle_counter(std::uint64_t epoch);

/// Counter layout for the dropout stream: (epoch:16 | batch:16 | layer:8 | entry:24).
std::uint64_t dropout_counter(std::uint64_t epoch, std::uint64_t batch, std::uint64_t layer);

/// Keep-mask of 0/1 values: entry i is kept when its uniform draw is >= rate.
std::vector<double> dropout_mask(const StreamKey& key, std::size_t count, double rate);

/// Master seed plus optional per-stream seed overrides.
struct SeedPlan {
  std::uint64_t master_seed = 0;
  std::map<Stream, std::uint64_t> overrides;

  [[nodiscard]] std::uint64_t seed_for(Stream s) const;
  [[nodiscard]] StreamKey key(Stream s, std::uint64_t counter = 0) const {
    return {seed_for(s), s, counter};
  }
};

}  // namespace basinlab::rng
