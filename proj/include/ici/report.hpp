#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ici/selftrain.hpp"

namespace ici::report {

/// FNV-1a 64-bit of the file bytes, as "fnv1a:<hex>". Cheap content
/// fingerprint for report headers (not cryptographic).
std::string fnv1a_file(const std::filesystem::path& path);
std::string fnv1a_string(const std::string& bytes);

struct RunHeader {
    std::map<std::string, std::string> config;  // effective option values
    std::uint64_t master_seed = 0;
    std::string input_file;
    std::string input_hash;
};

/// JSON report: header (config echo, seed, input hash), one section per
/// named strategy with per-episode accuracies, aggregate mean +- CI and
/// per-iteration selection precision. Deterministic byte-for-byte given the
/// same inputs (no timestamps, fixed key order).
std::string run_report_json(
    const RunHeader& header,
    const std::vector<std::pair<std::string, loop::AccuracyReport>>& sections);

/// Flat CSV alternative: one row per (strategy, episode).
std::string run_report_csv(
    const RunHeader& header,
    const std::vector<std::pair<std::string, loop::AccuracyReport>>& sections);

void write_text(const std::string& content, const std::filesystem::path& path);

}  // namespace ici::report
