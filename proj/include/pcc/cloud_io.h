#pragma once

#include <string>

#include "pcc/geometry.h"

namespace pcc {

// Reads ASCII PLY (element vertex with x,y,z properties; extra properties
// ignored) or whitespace-separated XYZ, sniffed by the leading "ply" line.
// File order is preserved. Throws ParseError with a line number.
PointCloud parse_cloud(const std::string& path);

// Writes by extension: ".ply" emits ASCII PLY, anything else XYZ. Coordinates
// round-trip exactly through the text form.
void write_cloud(const std::string& path, const PointCloud& cloud);

}  // namespace pcc
