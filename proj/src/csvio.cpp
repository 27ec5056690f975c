#include "cvqkd/csvio.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cvqkd::io {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_batch_csv(const std::string& path, const BatchFile& batch) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot open for writing: " + path);
    const bool dbl = batch.mode == ModulationMode::Double;
    out << (dbl ? "m1,m2,b" : "m,b") << '\n';
    const std::size_t n = batch.b.size();
    if (batch.m1.size() != n || (dbl && batch.m2.size() != n))
        throw std::runtime_error("write_batch_csv: column length mismatch");
    for (std::size_t i = 0; i < n; ++i) {
        out << fmt(batch.m1.values[i]);
        if (dbl)
            out << ',' << fmt(batch.m2.values[i]);
        out << ',' << fmt(batch.b.values[i]) << '\n';
    }
}

namespace {

double parse_cell(const std::string& cell, std::size_t line_no) {
    double v = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last)
        throw std::runtime_error("non-numeric value '" + cell + "' on line " +
                                 std::to_string(line_no));
    if (!std::isfinite(v))
        throw std::runtime_error("non-finite value on line " + std::to_string(line_no));
    return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            cells.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    cells.push_back(cur);
    return cells;
}

} // namespace

BatchFile read_batch_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open: " + path);
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error("empty input file: " + path);

    BatchFile batch;
    const auto header = split_csv_line(line);
    if (header == std::vector<std::string>{"m", "b"}) {
        batch.mode = ModulationMode::Single;
    } else if (header == std::vector<std::string>{"m1", "m2", "b"}) {
        batch.mode = ModulationMode::Double;
    } else {
        throw std::runtime_error("unrecognized header '" + line +
                                 "' (expected 'm,b' or 'm1,m2,b'): " + path);
    }
    const std::size_t want = batch.mode == ModulationMode::Double ? 3 : 2;

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r")
            continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != want)
            throw std::runtime_error("expected " + std::to_string(want) + " columns, got " +
                                     std::to_string(cells.size()) + " on line " +
                                     std::to_string(line_no));
        batch.m1.values.push_back(parse_cell(cells[0], line_no));
        if (want == 3)
            batch.m2.values.push_back(parse_cell(cells[1], line_no));
        batch.b.values.push_back(parse_cell(cells[want - 1], line_no));
    }
    if (batch.b.values.empty())
        throw std::runtime_error("no data rows in: " + path);
    return batch;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open: " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

} // namespace cvqkd::io
