#include "oukit/io.hpp"

#include <unistd.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <system_error>

#include "oukit/error.hpp"

namespace oukit::io {

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

double parse_double(std::string_view field, std::size_t line) {
    double v = 0.0;
    const char* first = field.data();
    const char* last = field.data() + field.size();
    if (!field.empty() && field.front() == '+') ++first;
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc{} || res.ptr != last || first == last) {
        throw ParseError(line, "expected a number, got '" + std::string(field) + "'");
    }
    return v;
}

std::size_t parse_size(std::string_view field, std::size_t line) {
    std::size_t v = 0;
    const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
    if (res.ec != std::errc{} || res.ptr != field.data() + field.size() || field.empty()) {
        throw ParseError(line, "expected a non-negative integer, got '" + std::string(field) + "'");
    }
    return v;
}

std::vector<std::string_view> split_csv_line(std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
    namespace fs = std::filesystem;
    std::error_code ec;
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path(), ec);
        if (ec) throw IoError(path.string(), "cannot create parent directory: " + ec.message());
    }
    fs::path tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError(path.string(), "cannot open temporary file for writing");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        out.flush();
        if (!out) {
            out.close();
            fs::remove(tmp, ec);
            throw IoError(path.string(), "write failed");
        }
    }
    fs::rename(tmp, path, ec);
    if (ec) {
        std::error_code ignored;
        fs::remove(tmp, ignored);
        throw IoError(path.string(), "rename failed: " + ec.message());
    }
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path.string(), "cannot open for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return std::move(ss).str();
}

std::string pathset_to_csv(const PathSet& paths) {
    std::string out = "t";
    for (std::size_t p = 0; p < paths.n_paths(); ++p) out += ",path_" + std::to_string(p);
    out += '\n';
    for (std::size_t k = 0; k < paths.n_cols(); ++k) {
        out += format_double(paths.grid().time_at(k));
        for (std::size_t p = 0; p < paths.n_paths(); ++p) {
            out += ',';
            out += format_double(paths.at(p, k));
        }
        out += '\n';
    }
    return out;
}

void write_pathset_csv(const PathSet& paths, const std::filesystem::path& path) {
    write_file_atomic(path, pathset_to_csv(paths));
}

PathSet pathset_from_csv(std::string_view text, std::uint64_t seed) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t nl = text.find('\n', start);
        if (nl == std::string_view::npos) nl = text.size();
        lines.push_back(text.substr(start, nl - start));
        start = nl + 1;
    }
    while (!lines.empty() && (lines.back().empty() || lines.back() == "\r")) lines.pop_back();
    if (lines.empty()) throw ParseError(1, "empty file");

    const auto header = split_csv_line(lines[0]);
    if (header.size() < 2 || header[0] != "t") throw ParseError(1, "header must be 't,path_0,...'");
    for (std::size_t p = 1; p < header.size(); ++p) {
        if (header[p] != "path_" + std::to_string(p - 1)) {
            throw ParseError(1, "expected column 'path_" + std::to_string(p - 1) + "'");
        }
    }
    const std::size_t n_paths = header.size() - 1;
    const std::size_t n_rows = lines.size() - 1;
    if (n_rows < 2) throw ParseError(lines.size(), "need at least two time points");

    std::vector<double> times(n_rows);
    std::vector<double> values(n_paths * n_rows);
    for (std::size_t r = 0; r < n_rows; ++r) {
        const std::size_t line_no = r + 2;
        const auto fields = split_csv_line(lines[r + 1]);
        if (fields.size() != header.size()) {
            throw ParseError(line_no, "expected " + std::to_string(header.size()) + " fields, got " +
                                          std::to_string(fields.size()));
        }
        times[r] = parse_double(fields[0], line_no);
        for (std::size_t p = 0; p < n_paths; ++p) {
            const double v = parse_double(fields[p + 1], line_no);
            if (!std::isfinite(v)) throw ParseError(line_no, "non-finite path value");
            values[p * n_rows + r] = v;
        }
    }

    const double dt = times[1] - times[0];
    if (!(dt > 0.0)) throw ParseError(3, "time column must be strictly increasing");
    for (std::size_t r = 0; r < n_rows; ++r) {
        const double expected = times[0] + static_cast<double>(r) * dt;
        if (std::abs(times[r] - expected) > 1e-9 * std::max(1.0, std::abs(expected))) {
            throw ParseError(r + 2, "time column is not uniformly spaced");
        }
    }
    return PathSet(TimeGrid{n_rows - 1, dt}, n_paths, std::move(values), seed);
}

PathSet read_pathset_csv(const std::filesystem::path& path, std::uint64_t seed) {
    return pathset_from_csv(read_file(path), seed);
}

}  // namespace oukit::io
