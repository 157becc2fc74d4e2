// Command-line surface. Exit codes: 0 ok, 2 config error, 3 data error,
// 4 estimation failure.
#pragma once

#include <string>
#include <vector>

namespace seqci {

int cli_main(int argc, const char* const* argv);
int cli_main(const std::vector<std::string>& args);  // args without argv[0]

}  // namespace seqci
