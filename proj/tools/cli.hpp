#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace walkex::cli {

enum ExitCode : int { kOk = 0, kConfigError = 2, kRuntimeError = 3 };

/// Default output directory when --out is not given.
inline constexpr const char* kOutDirEnv = "WALKEX_OUT_DIR";

/// Entry point of the walkex tool; args[0] is the program name.
int main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Lower-case hex SHA-256 of a file's bytes.
std::string sha256File(const std::string& path);

}  // namespace walkex::cli
