#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "basinlab/rng.hpp"
#include "basinlab/tensor.hpp"

namespace basinlab {

struct Dataset {
  Tensor inputs;            // [n, dim]
  std::vector<int> labels;  // n entries in [0, classes)
  std::size_t classes = 0;

  [[nodiscard]] std::size_t size() const { return labels.size(); }
  [[nodiscard]] bool empty() const { return labels.empty(); }
  [[nodiscard]] std::size_t dim() const { return inputs.cols(); }

  /// The first n examples (all of them when n is 0 or too large).
  [[nodiscard]] Dataset head(std::size_t n) const;
  [[nodiscard]] Dataset slice(std::size_t begin, std::size_t end) const;
  [[nodiscard]] Dataset gather(std::span<const std::size_t> indices) const;
};

/// Parses an IDX image file (magic 0x00000803) and label file (0x00000801).
/// Pixels are scaled to [0, 1]; `limit` keeps the first N examples (0 = all).
Dataset load_mnist(const std::filesystem::path& images, const std::filesystem::path& labels, std::size_t limit = 0);

/// Looks for the standard train/t10k file names inside `dir`.
Dataset load_mnist_dir(const std::filesystem::path& dir, bool train, std::size_t limit = 0);
bool mnist_available(const std::filesystem::path& dir);

struct SynthSpec {
  std::size_t classes = 10;
  std::size_t per_class = 1000;
  std::size_t dim = 784;
  double scale = 1.0;   // class c is centred at scale * e_c
  double sigma = 1.0;   // isotropic noise
  /// Map [-6 sigma, scale + 6 sigma] affinely onto [0, 1] (clamped), like pixel intensities.
  bool unit_range = false;

  friend bool operator==(const SynthSpec&, const SynthSpec&) = default;
};

/// Gaussian blobs drawn from the data_synth stream. Examples cycle through the
/// classes (label i % classes), so any prefix is class-balanced. Throws if
/// dim < classes.
Dataset synth_dataset(const SynthSpec& spec, const rng::StreamKey& key);

}  // namespace basinlab
