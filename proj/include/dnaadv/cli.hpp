#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dnaadv {

/// Exit codes: 0 success, 1 domain error, 2 usage error.
int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace dnaadv
