#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace embnmt::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDataError = 1;
inline constexpr int kExitUsage = 2;

// Flat key=value file. '#' starts a comment; blank lines are ignored; keys are
// long option names without the leading dashes.
std::map<std::string, std::string> parse_config_file(const std::filesystem::path& path);

// Worker count for parallel decoding: EMB_NMT_THREADS when set, else 1.
std::size_t thread_limit();

// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace embnmt::cli
