// SPDX-License-Identifier: Apache-2.0
#ifndef UNETGAN_METRICS_HPP
#define UNETGAN_METRICS_HPP

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace unetgan {

/// One line of metrics.ndjson. Training writes a record per iteration;
/// evaluation iterations additionally carry fid and is.
struct MetricsRecord {
    int64_t iteration = 0;
    std::map<std::string, double> losses;
    std::optional<double> fid;
    std::optional<double> is;
    double wall_time = 0.0;

    bool is_eval() const { return fid.has_value(); }
};

std::string to_json_line(const MetricsRecord& record);
MetricsRecord parse_metrics_line(const std::string& line);

/// Append-only newline-delimited metrics file. The first line of a fresh
/// file is {"type": "config", "config": <resolved config text>}.
class MetricsWriter {
public:
    MetricsWriter(const std::filesystem::path& path, const std::string& config_text);
    void append(const MetricsRecord& record);

private:
    std::ofstream out_;
};

struct MetricsFile {
    std::string config_text;
    std::vector<MetricsRecord> records;

    std::vector<MetricsRecord> evaluations() const;
};

MetricsFile read_metrics(const std::filesystem::path& path);

}  // namespace unetgan

#endif
