#include "basinlab/emit.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>

#include "basinlab/errors.hpp"
#include "json.hpp"

namespace basinlab {

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw Error("format_number: conversion failed");
  return std::string(buf, end);
}

namespace {

std::string optional_number(const std::optional<double>& v) { return v ? format_number(*v) : std::string(); }

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  return out;
}

}  // namespace

void write_surface(std::ostream& out, std::span<const landscape::SurfaceSample> samples) {
  out << "alpha,beta,train_loss,train_acc,test_loss,test_acc\n";
  for (const auto& s : samples) {
    out << format_number(s.alpha) << ',' << optional_number(s.beta) << ',' << format_number(s.train_loss) << ','
        << format_number(s.train_accuracy) << ',' << optional_number(s.test_loss) << ','
        << optional_number(s.test_accuracy) << '\n';
  }
}

void write_series(std::ostream& out, std::span<const EpochRecord> records) {
  out << "epoch,train_loss,train_acc,test_acc,dist_from_init,weight_norm,optimizer\n";
  for (const auto& r : records) {
    out << r.epoch << ',' << format_number(r.train_loss) << ',' << format_number(r.train_accuracy) << ','
        << optional_number(r.test_accuracy) << ',' << format_number(r.dist_from_init) << ','
        << format_number(r.weight_norm) << ',' << r.optimizer << '\n';
  }
}

void write_report(std::ostream& out, std::span<const analysis::ComparisonReport> reports) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(format_number(v)); };
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : reports) {
    arr.push_back({{"path_id", r.path_id},
                   {"functional_distance", num(r.functional_distance)},
                   {"disagreement_rate", num(r.disagreement_rate)},
                   {"bump_height", num(r.bump_height)},
                   {"endpoint_losses", {num(r.endpoint_losses.first), num(r.endpoint_losses.second)}}});
  }
  out << arr.dump(2) << '\n';
}

void emit_surface(const std::filesystem::path& path, std::span<const landscape::SurfaceSample> samples) {
  auto out = open_output(path);
  write_surface(out, samples);
}

void emit_series(const std::filesystem::path& path, std::span<const EpochRecord> records) {
  auto out = open_output(path);
  write_series(out, records);
}

void emit_report(const std::filesystem::path& path, std::span<const analysis::ComparisonReport> reports) {
  auto out = open_output(path);
  write_report(out, reports);
}

}  // namespace basinlab
