#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace vvtrack {

// Shortest round-trip decimal form; identical bytes on every conforming platform.
std::string format_double(double v);
double parse_double(std::string_view s);

// Writes to a sibling temp file and renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

// Line reader for the versioned text formats. Tracks line numbers for error messages.
class LineReader {
public:
    LineReader(std::istream& in, std::string source);

    // Next non-empty line split on whitespace; throws DataError at EOF.
    std::vector<std::string> tokens();
    // Next line must start with `key`; returns the remaining tokens.
    std::vector<std::string> expect(std::string_view key);
    // Throws unless the next line is exactly "<magic> v<version>".
    void expect_header(std::string_view magic, int version);

    [[noreturn]] void fail(const std::string& what) const;

    static long to_long(const std::string& tok);

private:
    std::istream& in_;
    std::string source_;
    long line_ = 0;
};

}  // namespace vvtrack
