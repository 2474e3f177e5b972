// SPDX-License-Identifier: Apache-2.0
#ifndef UNETGAN_TOOLS_COMMANDS_HPP
#define UNETGAN_TOOLS_COMMANDS_HPP

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "unetgan/config.hpp"

namespace unetgan::cli {

enum ExitCode : int { kSuccess = 0, kRuntimeFailure = 1, kUsageError = 2 };

/// Entry point shared by the executable and the tests. Normal output goes to
/// `out`; errors are written to `err` as one JSON object per line.
int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

struct AblationRow {
    std::string name;
    Config config;
};

/// The cumulative ladder: encoder-only discriminator, then the decoder
/// head, then CutMix with consistency. Rows differ only in the loss flags.
std::vector<AblationRow> ablation_ladder(const Config& base);

struct AblationResult {
    std::string name;
    std::optional<double> fid;
    std::optional<double> is;
    int64_t iterations = 0;
    std::string error;
};

/// Tab-separated table with header `config  proxy_fid  is_proxy  iterations`.
std::string ablation_table(const std::vector<AblationResult>& rows);

}  // namespace unetgan::cli

#endif
