#include "ici/report.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace ici::report {

namespace {

std::uint64_t fnv1a(const char* data, std::size_t len) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= static_cast<unsigned char>(data[i]);
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

nlohmann::json section_json(const loop::AccuracyReport& rep) {
    nlohmann::json j;
    j["episodes"] = rep.episodes;
    j["mean_accuracy"] = rep.mean_accuracy;
    j["ci95"] = rep.ci95;
    j["mean_base_accuracy"] = rep.mean_base_accuracy;
    j["per_episode_accuracy"] = rep.per_episode;
    j["selection_precision_by_iter"] = rep.selection_precision_by_iter;
    j["selected_by_iter"] = rep.selected_by_iter;
    j["nonconverged_grid_points"] = rep.nonconverged_grid_points;
    j["total_grid_points"] = rep.total_grid_points;
    return j;
}

}  // namespace

std::string fnv1a_string(const std::string& bytes) {
    return "fnv1a:" + hex64(fnv1a(bytes.data(), bytes.size()));
}

std::string fnv1a_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string() + " for hashing");
    std::ostringstream ss;
    ss << in.rdbuf();
    return fnv1a_string(ss.str());
}

std::string run_report_json(
    const RunHeader& header,
    const std::vector<std::pair<std::string, loop::AccuracyReport>>& sections) {
    nlohmann::json j;
    j["header"]["config"] = header.config;
    j["header"]["master_seed"] = header.master_seed;
    j["header"]["input_file"] = header.input_file;
    j["header"]["input_hash"] = header.input_hash;
    for (const auto& [name, rep] : sections) {
        j["results"][name] = section_json(rep);
    }
    if (sections.size() == 2) {
        j["comparison"]["mean_accuracy_delta"] =
            sections[0].second.mean_accuracy - sections[1].second.mean_accuracy;
    }
    return j.dump(2) + "\n";
}

std::string run_report_csv(
    const RunHeader& header,
    const std::vector<std::pair<std::string, loop::AccuracyReport>>& sections) {
    std::ostringstream out;
    out.precision(17);
    out << "# master_seed=" << header.master_seed << " input=" << header.input_file
        << " input_hash=" << header.input_hash << "\n";
    for (const auto& [k, v] : header.config) out << "# " << k << "=" << v << "\n";
    out << "strategy,episode,accuracy\n";
    for (const auto& [name, rep] : sections) {
        for (std::size_t e = 0; e < rep.per_episode.size(); ++e) {
            out << name << ',' << e << ',' << rep.per_episode[e] << '\n';
        }
    }
    for (const auto& [name, rep] : sections) {
        out << "# " << name << " mean=" << rep.mean_accuracy << " ci95=" << rep.ci95
            << "\n";
    }
    return out.str();
}

void write_text(const std::string& content, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << content;
    if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace ici::report
