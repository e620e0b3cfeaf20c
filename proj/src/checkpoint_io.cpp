#include "basinlab/checkpoint_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <string>

#include "basinlab/config.hpp"
#include "basinlab/errors.hpp"

namespace basinlab {

using nlohmann::json;

namespace {

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

bool get_u64(std::istream& in, std::uint64_t& v) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) return false;
  v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{b[i]} << (8 * i);
  return true;
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_or_inf(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  json layout = json::array();
  for (const auto& e : ckpt.params.layout().entries()) {
    layout.push_back({{"name", e.name}, {"shape", e.shape}, {"offset", e.offset}});
  }
  json bn = json::array();
  for (const auto& l : ckpt.bn.layers) bn.push_back({{"mean", l.mean}, {"var", l.var}});
  const json header{{"format", "basinlab-checkpoint"},
                    {"version", kCheckpointVersion},
                    {"config_hash", ckpt.config_hash()},
                    {"model", to_json(ckpt.model)},
                    {"optimizer", ckpt.optimizer},
                    {"epoch", ckpt.epoch},
                    {"master_seed", ckpt.master_seed},
                    {"run_hash", ckpt.run_hash},
                    {"parameter_count", ckpt.params.size()},
                    {"layout", layout},
                    {"bn_stats", bn},
                    {"eval_loss", finite_or_null(ckpt.eval_loss)},
                    {"eval_accuracy", ckpt.eval_accuracy},
                    {"run_config", ckpt.run_config.empty() ? json(nullptr) : json::parse(ckpt.run_config)}};
  out << header.dump() << '\n';
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  put_u64(out, ckpt.params.size());
  for (double v : ckpt.params.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write checkpoint " + path.string());
  write_checkpoint(out, ckpt);
  if (!out) throw FormatError("write failed for checkpoint " + path.string());
}

Checkpoint read_checkpoint(std::istream& in, const ModelSpec* expected) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("checkpoint: missing header");
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: malformed header: ") + e.what());
  }

  Checkpoint c;
  try {
    if (header.at("format").get<std::string>() != "basinlab-checkpoint") throw FormatError("checkpoint: unknown format");
    if (header.at("version").get<int>() != kCheckpointVersion) throw FormatError("checkpoint: unsupported version");
    c.model = model_spec_from_json(header.at("model"));
    c.optimizer = header.at("optimizer").get<std::string>();
    c.epoch = header.at("epoch").get<std::size_t>();
    c.master_seed = header.at("master_seed").get<std::uint64_t>();
    c.run_hash = header.at("run_hash").get<std::string>();
    c.eval_loss = number_or_inf(header.at("eval_loss"));
    c.eval_accuracy = header.at("eval_accuracy").get<double>();
    if (header.contains("run_config") && !header.at("run_config").is_null()) c.run_config = header.at("run_config").dump();
    for (const auto& l : header.at("bn_stats")) {
      c.bn.layers.push_back({l.at("mean").get<std::vector<double>>(), l.at("var").get<std::vector<double>>()});
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: bad header field: ") + e.what());
  }

  const auto stored_hash = header.at("config_hash").get<std::string>();
  if (stored_hash != c.model.hash()) {
    throw IncompatibleError("checkpoint: config hash " + stored_hash + " does not match its model spec");
  }
  if (expected && expected->hash() != stored_hash) {
    throw IncompatibleError("checkpoint: config hash " + stored_hash + " does not match the requested model " +
                            expected->hash());
  }

  const Model model(c.model);
  const auto count = header.at("parameter_count").get<std::uint64_t>();
  if (count != model.parameter_count()) throw FormatError("checkpoint: parameter count does not match the layout");
  const auto& entries = model.layout()->entries();
  const auto& stored = header.at("layout");
  if (stored.size() != entries.size()) throw FormatError("checkpoint: layout table does not match the model");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (stored[i].at("name").get<std::string>() != entries[i].name ||
        stored[i].at("shape").get<Shape>() != entries[i].shape ||
        stored[i].at("offset").get<std::size_t>() != entries[i].offset) {
      throw FormatError("checkpoint: layout entry " + std::to_string(i) + " does not match the model");
    }
  }
  const auto fresh = model.initial_bn_stats();
  if (c.bn.layers.size() != fresh.layers.size()) throw FormatError("checkpoint: batch-norm statistics count");
  for (std::size_t i = 0; i < fresh.layers.size(); ++i) {
    if (c.bn.layers[i].mean.size() != fresh.layers[i].mean.size() ||
        c.bn.layers[i].var.size() != fresh.layers[i].var.size()) {
      throw FormatError("checkpoint: batch-norm statistics width");
    }
  }

  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw FormatError("checkpoint: payload magic mismatch (expected LSCHKPT1)");
  }
  std::uint64_t length = 0;
  if (!get_u64(in, length)) throw FormatError("checkpoint: truncated payload length");
  if (length != count) {
    throw FormatError("checkpoint: payload length " + std::to_string(length) + " does not match parameter count " +
                      std::to_string(count));
  }
  std::vector<double> data(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    if (!get_u64(in, bits)) throw FormatError("checkpoint: payload shorter than its length field");
    data[i] = std::bit_cast<double>(bits);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("checkpoint: trailing bytes after payload");

  c.params = ParameterVector(model.layout(), model.config_hash(), std::move(data));
  return c;
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelSpec* expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  return read_checkpoint(in, expected);
}

}  // namespace basinlab
