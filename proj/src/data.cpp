#include "basinlab/data.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <string>

#include "basinlab/errors.hpp"

namespace basinlab {

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
  end = std::min(end, size());
  begin = std::min(begin, end);
  const std::size_t d = dim();
  Dataset out;
  out.classes = classes;
  auto first = inputs.storage().begin() + static_cast<std::ptrdiff_t>(begin * d);
  auto last = inputs.storage().begin() + static_cast<std::ptrdiff_t>(end * d);
  out.inputs = Tensor({end - begin, d}, std::vector<double>(first, last));
  out.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(begin), labels.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

Dataset Dataset::head(std::size_t n) const {
  if (n == 0 || n >= size()) return *this;
  return slice(0, n);
}

Dataset Dataset::gather(std::span<const std::size_t> indices) const {
  const std::size_t d = dim();
  Dataset out;
  out.classes = classes;
  std::vector<double> data(indices.size() * d);
  out.labels.resize(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t src = indices[i];
    if (src >= size()) throw InvalidArgument("gather: index out of range");
    std::copy_n(inputs.storage().begin() + static_cast<std::ptrdiff_t>(src * d), d,
                data.begin() + static_cast<std::ptrdiff_t>(i * d));
    out.labels[i] = labels[src];
  }
  out.inputs = Tensor({indices.size(), d}, std::move(data));
  return out;
}

// ---- IDX ------------------------------------------------------------------

namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off, const std::filesystem::path& path) {
  if (off + 4 > b.size()) {
    throw FormatError(path.string() + ": truncated header at offset " + std::to_string(off));
  }
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         std::uint32_t{b[off + 3]};
}

void expect_magic(const std::vector<unsigned char>& b, std::uint32_t magic, const std::filesystem::path& path) {
  const std::uint32_t got = be32(b, 0, path);
  if (got != magic) {
    char buf[96];
    std::snprintf(buf, sizeof buf, ": bad magic 0x%08x at offset 0 (expected 0x%08x)", got, magic);
    throw FormatError(path.string() + buf);
  }
}

}  // namespace

Dataset load_mnist(const std::filesystem::path& images, const std::filesystem::path& labels, std::size_t limit) {
  const auto ib = read_file(images);
  const auto lb = read_file(labels);
  expect_magic(ib, 0x00000803, images);
  expect_magic(lb, 0x00000801, labels);

  const std::size_t n_img = be32(ib, 4, images);
  const std::size_t rows = be32(ib, 8, images);
  const std::size_t cols = be32(ib, 12, images);
  const std::size_t n_lab = be32(lb, 4, labels);
  if (n_img != n_lab) {
    throw FormatError("image count " + std::to_string(n_img) + " does not match label count " + std::to_string(n_lab));
  }
  const std::size_t pixels = rows * cols;
  if (ib.size() < 16 + n_img * pixels) {
    throw FormatError(images.string() + ": truncated pixel data at offset " + std::to_string(ib.size()));
  }
  if (lb.size() < 8 + n_lab) {
    throw FormatError(labels.string() + ": truncated label data at offset " + std::to_string(lb.size()));
  }

  const std::size_t n = (limit == 0 || limit > n_img) ? n_img : limit;
  Dataset ds;
  ds.classes = 10;
  std::vector<double> data(n * pixels);
  for (std::size_t i = 0; i < n * pixels; ++i) data[i] = static_cast<double>(ib[16 + i]) / 255.0;
  ds.inputs = Tensor({n, pixels}, std::move(data));
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = lb[8 + i];
    if (y > 9) throw FormatError(labels.string() + ": label out of range at offset " + std::to_string(8 + i));
    ds.labels[i] = y;
  }
  return ds;
}

namespace {
std::pair<std::filesystem::path, std::filesystem::path> mnist_names(const std::filesystem::path& dir, bool train) {
  const std::string prefix = train ? "train" : "t10k";
  return {dir / (prefix + "-images-idx3-ubyte"), dir / (prefix + "-labels-idx1-ubyte")};
}
}  // namespace

Dataset load_mnist_dir(const std::filesystem::path& dir, bool train, std::size_t limit) {
  auto [img, lab] = mnist_names(dir, train);
  return load_mnist(img, lab, limit);
}

bool mnist_available(const std::filesystem::path& dir) {
  if (dir.empty()) return false;
  auto [img, lab] = mnist_names(dir, true);
  std::error_code ec;
  return std::filesystem::is_regular_file(img, ec) && std::filesystem::is_regular_file(lab, ec);
}

// ---- synthetic ------------------------------------------------------------

Dataset synth_dataset(const SynthSpec& spec, const rng::StreamKey& key) {
  if (spec.classes < 2) throw InvalidArgument("synthetic data needs at least 2 classes");
  if (spec.dim < spec.classes) throw InvalidArgument("synthetic data needs dim >= classes");
  if (!(spec.sigma >= 0.0)) throw InvalidArgument("synthetic sigma must be non-negative");

  const std::size_t n = spec.classes * spec.per_class;
  const std::size_t d = spec.dim;
  Dataset ds;
  ds.classes = spec.classes;
  ds.labels.resize(n);
  std::vector<double> data(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = i % spec.classes;
    ds.labels[i] = static_cast<int>(c);
    for (std::size_t j = 0; j < d; ++j) {
      const double centre = j == c ? spec.scale : 0.0;
      data[i * d + j] = centre + spec.sigma * rng::draw_gaussian(key.offset(2 * (i * d + j)));
    }
  }
  if (spec.unit_range) {
    // fixed map of [-6 sigma, scale + 6 sigma] onto [0, 1], clamped
    const double lo = std::min(0.0, spec.scale) - 6.0 * spec.sigma;
    const double hi = std::max(0.0, spec.scale) + 6.0 * spec.sigma;
    const double width = hi > lo ? hi - lo : 1.0;
    for (double& v : data) v = std::clamp((v - lo) / width, 0.0, 1.0);
  }
  ds.inputs = Tensor({n, d}, std::move(data));
  return ds;
}

}  // namespace basinlab
