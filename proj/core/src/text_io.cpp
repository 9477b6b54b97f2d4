#include "pssgm/text_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace pssgm {

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw Error(ErrorKind::invalid_argument, "cannot format double");
    return std::string(buf, ptr);
}

double parse_double(std::string_view token) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
    if (ec != std::errc() || ptr != token.data() + token.size() || token.empty()) {
        throw Error(ErrorKind::schema_violation, "expected a number, got '" + std::string(token) + "'");
    }
    return v;
}

std::size_t parse_size(std::string_view token) {
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
    if (ec != std::errc() || ptr != token.data() + token.size() || token.empty()) {
        throw Error(ErrorKind::schema_violation, "expected an integer, got '" + std::string(token) + "'");
    }
    return v;
}

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw Error(ErrorKind::io, "read failed for " + path.string());
    return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorKind::io, "cannot open " + tmp.string() + " for writing");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw Error(ErrorKind::io, "write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error(ErrorKind::io, "cannot rename onto " + path.string() + ": " + ec.message());
}

std::string samples_to_csv(const SampleMatrix& samples) {
    std::string out;
    for (std::size_t j = 0; j < samples.dim(); ++j) {
        if (j) out += ',';
        out += 'x';
        out += std::to_string(j);
    }
    out += '\n';
    for (std::size_t i = 0; i < samples.rows(); ++i) {
        const auto r = samples.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) {
            if (j) out += ',';
            out += format_double(r[j]);
        }
        out += '\n';
    }
    return out;
}

SampleMatrix samples_from_csv(std::string_view text) {
    auto next_line = [&text]() -> std::string_view {
        const auto pos = text.find('\n');
        std::string_view line = text.substr(0, pos);
        text = pos == std::string_view::npos ? std::string_view{} : text.substr(pos + 1);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        return line;
    };
    auto split = [](std::string_view line) {
        std::vector<std::string_view> cells;
        std::size_t start = 0;
        while (true) {
            const auto pos = line.find(',', start);
            cells.push_back(line.substr(start, pos - start));
            if (pos == std::string_view::npos) break;
            start = pos + 1;
        }
        return cells;
    };
    const auto header = split(next_line());
    const std::size_t dim = header.size();
    for (std::size_t j = 0; j < dim; ++j) {
        if (header[j] != "x" + std::to_string(j)) {
            throw Error(ErrorKind::schema_violation, "sample header column " + std::to_string(j) +
                                                         " should be x" + std::to_string(j));
        }
    }
    std::vector<double> data;
    std::size_t line_no = 1;
    while (!text.empty()) {
        const auto line = next_line();
        ++line_no;
        if (line.empty()) continue;
        const auto cells = split(line);
        if (cells.size() != dim) {
            throw Error(ErrorKind::schema_violation,
                        "line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                            " columns, expected " + std::to_string(dim));
        }
        for (auto c : cells) data.push_back(parse_double(c));
    }
    return SampleMatrix(dim, std::move(data));
}

void write_samples_csv(const std::filesystem::path& path, const SampleMatrix& samples) {
    write_file(path, samples_to_csv(samples));
}

SampleMatrix read_samples_csv(const std::filesystem::path& path) {
    return samples_from_csv(read_file(path));
}

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
    auto p = path;
    p += ".meta.json";
    return p;
}

}  // namespace pssgm
