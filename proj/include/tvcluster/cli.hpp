// Apache License, Version 2.0, refer to LICENSE.txt
//
// Command-line front end. Exit codes: 0 success, 1 runtime or numerical
// failure, 2 invalid input.

#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace tvc::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitInvalid = 2;

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace tvc::cli
