#pragma once

// Delimited-text and JSON emission of results.
//
// surface: alpha,beta,train_loss,train_acc,test_loss,test_acc
//          (beta blank for 1-D sweeps, test columns blank when not evaluated,
//           diverged points keep their row with loss `inf`)
// series:  epoch,train_loss,train_acc,test_acc,dist_from_init,weight_norm,optimizer
// report:  JSON array of comparison reports

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>

#include "basinlab/analysis.hpp"
#include "basinlab/landscape.hpp"
#include "basinlab/training.hpp"

namespace basinlab {

/// Shortest text that reads back to the same double; "inf", "-inf", "nan" otherwise.
std::string format_number(double v);

void write_surface(std::ostream& out, std::span<const landscape::SurfaceSample> samples);
void write_series(std::ostream& out, std::span<const EpochRecord> records);
void write_report(std::ostream& out, std::span<const analysis::ComparisonReport> reports);

void emit_surface(const std::filesystem::path& path, std::span<const landscape::SurfaceSample> samples);
void emit_series(const std::filesystem::path& path, std::span<const EpochRecord> records);
void emit_report(const std::filesystem::path& path, std::span<const analysis::ComparisonReport> reports);

}  // namespace basinlab
