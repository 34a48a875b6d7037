#include "vvtrack/textio.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <system_error>

#include "vvtrack/error.hpp"

namespace vvtrack {

std::string format_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{}) throw InvalidArgument("format_double failed");
    return std::string(buf, end);
}

double parse_double(std::string_view s) {
    double v = 0;
    auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || end != s.data() + s.size())
        throw DataError("not a number: '" + std::string(s) + "'");
    return v;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw DataError("write failed: " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw DataError("cannot rename " + tmp.string() + ": " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

LineReader::LineReader(std::istream& in, std::string source)
    : in_(in), source_(std::move(source)) {}

std::vector<std::string> LineReader::tokens() {
    std::string line;
    while (std::getline(in_, line)) {
        ++line_;
        std::istringstream ss(line);
        std::vector<std::string> toks;
        for (std::string t; ss >> t;) toks.push_back(std::move(t));
        if (!toks.empty()) return toks;
    }
    fail("unexpected end of file");
}

std::vector<std::string> LineReader::expect(std::string_view key) {
    auto toks = tokens();
    if (toks.front() != key) fail("expected '" + std::string(key) + "', got '" + toks.front() + "'");
    toks.erase(toks.begin());
    return toks;
}

void LineReader::expect_header(std::string_view magic, int version) {
    auto toks = tokens();
    const std::string want = "v" + std::to_string(version);
    if (toks.size() != 2 || toks[0] != magic || toks[1] != want)
        fail("bad header, expected '" + std::string(magic) + " " + want + "'");
}

void LineReader::fail(const std::string& what) const {
    throw DataError(source_ + ":" + std::to_string(line_) + ": " + what);
}

long LineReader::to_long(const std::string& tok) {
    long v = 0;
    auto [end, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || end != tok.data() + tok.size())
        throw DataError("not an integer: '" + tok + "'");
    return v;
}

}  // namespace vvtrack
