#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cvqkd/channel.hpp"
#include "cvqkd/params.hpp"

namespace cvqkd::io {

/// Full-precision double formatting for CSV cells ('%.17g', '.' decimal).
std::string fmt(double v);

// Column-oriented quadrature batches: header "m,b" (single) or "m1,m2,b"
// (double). LF line endings, UTF-8, no thousands separators.
struct BatchFile {
    ModulationMode mode = ModulationMode::Single;
    channel::QuadratureBatch m1;
    channel::QuadratureBatch m2; // empty in single mode
    channel::QuadratureBatch b;
};

void write_batch_csv(const std::string& path, const BatchFile& batch);

/// Parses a batch CSV; throws std::runtime_error naming the offending line
/// for non-numeric rows, column-count mismatches, or an empty file.
BatchFile read_batch_csv(const std::string& path);

/// Whole-file read (byte comparisons in determinism checks).
std::string read_file(const std::string& path);

} // namespace cvqkd::io
