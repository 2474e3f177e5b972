// SPDX-License-Identifier: Apache-2.0
#include "unetgan/metrics.hpp"

#include <stdexcept>

#include <json.hpp>

namespace unetgan {

namespace {

nlohmann::json to_json(const MetricsRecord& r) {
    nlohmann::json j;
    j["type"] = r.is_eval() ? "eval" : "step";
    j["iteration"] = r.iteration;
    j["losses"] = r.losses;
    if (r.fid) j["fid"] = *r.fid;
    if (r.is) j["is"] = *r.is;
    j["wall_time"] = r.wall_time;
    return j;
}

}  // namespace

std::string to_json_line(const MetricsRecord& record) { return to_json(record).dump(); }

MetricsRecord parse_metrics_line(const std::string& line) {
    const auto j = nlohmann::json::parse(line);
    MetricsRecord r;
    r.iteration = j.at("iteration").get<int64_t>();
    if (j.contains("losses")) r.losses = j.at("losses").get<std::map<std::string, double>>();
    if (j.contains("fid")) r.fid = j.at("fid").get<double>();
    if (j.contains("is")) r.is = j.at("is").get<double>();
    r.wall_time = j.value("wall_time", 0.0);
    return r;
}

MetricsWriter::MetricsWriter(const std::filesystem::path& path, const std::string& config_text) {
    const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
    out_.open(path, std::ios::app);
    if (!out_) throw std::runtime_error("cannot open metrics file " + path.string());
    if (fresh) out_ << nlohmann::json{{"type", "config"}, {"config", config_text}}.dump() << "\n" << std::flush;
}

void MetricsWriter::append(const MetricsRecord& record) { out_ << to_json_line(record) << "\n" << std::flush; }

std::vector<MetricsRecord> MetricsFile::evaluations() const {
    std::vector<MetricsRecord> out;
    for (const auto& r : records)
        if (r.is_eval()) out.push_back(r);
    return out;
}

MetricsFile read_metrics(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("metrics file not found: " + path.string());
    MetricsFile file;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        if (j.value("type", "") == "config") file.config_text = j.at("config").get<std::string>();
        else file.records.push_back(parse_metrics_line(line));
    }
    return file;
}

}  // namespace unetgan
