#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace climreg::cli {

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitCompute = 3;

// Runs one invocation; args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::string& path);

struct RenderOptions {
    std::string field = "region_id";
    std::optional<int> year;
    std::optional<double> resolution;
    std::string title;
};

// SVG 1.1 document with one rectangle per grid cell.
std::string render_map_svg(std::istream& values_csv, const RenderOptions& options);

}  // namespace climreg::cli
