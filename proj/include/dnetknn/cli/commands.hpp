#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace dnetknn::cli {

enum ExitCode : int {
    kOk = 0,
    kConfigError = 2,
    kDataError = 3,
    kNumericError = 4,
};

// Entry point of the `dnetknn` tool. Subcommands: pretrain, finetune, eval,
// embed, split. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace dnetknn::cli
