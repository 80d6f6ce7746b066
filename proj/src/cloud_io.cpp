#include "pcc/cloud_io.h"

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

#include "pcc/common.h"

namespace pcc {

namespace {

bool parse_double(const std::string& tok, double& out) {
  const char* s = tok.c_str();
  char* end = nullptr;
  out = std::strtod(s, &end);
  return end != s && *end == '\0';
}

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream iss(line);
  std::string tok;
  while (iss >> tok) out.push_back(tok);
  return out;
}

PointCloud parse_xyz(std::istream& in) {
  PointCloud cloud;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto toks = split_ws(line);
    if (toks.empty() || toks[0][0] == '#') continue;
    if (toks.size() < 3) throw ParseError("expected three coordinates", line_no);
    Vec3 p;
    if (!parse_double(toks[0], p.x) || !parse_double(toks[1], p.y) || !parse_double(toks[2], p.z))
      throw ParseError("non-numeric coordinate", line_no);
    cloud.points.push_back(p);
  }
  if (cloud.points.empty()) throw ParseError("no points in file");
  return cloud;
}

PointCloud parse_ply(std::istream& in) {
  std::string line;
  int line_no = 1;  // the "ply" line was already consumed
  bool ascii = false;
  long vertex_count = -1;
  long skip_rows = 0;  // data rows of elements declared before vertex
  std::vector<std::string> vertex_props;
  std::string cur_element;
  bool header_done = false;

  while (std::getline(in, line)) {
    ++line_no;
    const auto toks = split_ws(line);
    if (toks.empty() || toks[0] == "comment") continue;
    if (toks[0] == "format") {
      if (toks.size() < 2 || toks[1] != "ascii")
        throw ParseError("only ASCII PLY is supported", line_no);
      ascii = true;
    } else if (toks[0] == "element") {
      if (toks.size() < 3) throw ParseError("malformed element line", line_no);
      cur_element = toks[1];
      long count = 0;
      double cnt;
      if (!parse_double(toks[2], cnt) || cnt < 0) throw ParseError("bad element count", line_no);
      count = static_cast<long>(cnt);
      if (cur_element == "vertex") {
        if (vertex_count >= 0) throw ParseError("duplicate vertex element", line_no);
        vertex_count = count;
      } else if (vertex_count < 0) {
        skip_rows += count;
      }
    } else if (toks[0] == "property") {
      if (toks.size() >= 2 && toks[1] == "list") {
        if (cur_element != "vertex" && vertex_count < 0)
          throw ParseError("list property before vertex element is unsupported", line_no);
        continue;
      }
      if (cur_element == "vertex") {
        if (toks.size() < 3) throw ParseError("malformed property line", line_no);
        vertex_props.push_back(toks.back());
      }
    } else if (toks[0] == "end_header") {
      header_done = true;
      break;
    }
  }
  if (!header_done) throw ParseError("missing end_header", line_no);
  if (!ascii) throw ParseError("missing format line", line_no);
  if (vertex_count <= 0) throw ParseError("missing or empty vertex element", line_no);

  int ix = -1, iy = -1, iz = -1;
  for (size_t i = 0; i < vertex_props.size(); ++i) {
    if (vertex_props[i] == "x") ix = static_cast<int>(i);
    if (vertex_props[i] == "y") iy = static_cast<int>(i);
    if (vertex_props[i] == "z") iz = static_cast<int>(i);
  }
  if (ix < 0 || iy < 0 || iz < 0) throw ParseError("vertex element lacks x,y,z", line_no);

  for (long s = 0; s < skip_rows; ++s) {
    if (!std::getline(in, line)) throw ParseError("truncated data section", line_no);
    ++line_no;
  }

  PointCloud cloud;
  cloud.points.reserve(static_cast<size_t>(vertex_count));
  for (long v = 0; v < vertex_count; ++v) {
    if (!std::getline(in, line)) throw ParseError("truncated vertex data", line_no);
    ++line_no;
    const auto toks = split_ws(line);
    if (toks.size() < vertex_props.size())
      throw ParseError("vertex row has too few fields", line_no);
    Vec3 p;
    if (!parse_double(toks[static_cast<size_t>(ix)], p.x) ||
        !parse_double(toks[static_cast<size_t>(iy)], p.y) ||
        !parse_double(toks[static_cast<size_t>(iz)], p.z))
      throw ParseError("non-numeric vertex coordinate", line_no);
    cloud.points.push_back(p);
  }
  return cloud;
}

}  // namespace

PointCloud parse_cloud(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::string first;
  if (!std::getline(in, first)) throw ParseError("empty file: " + path, 1);
  // Strip a trailing CR so DOS files sniff correctly.
  if (!first.empty() && first.back() == '\r') first.pop_back();
  if (first == "ply") return parse_ply(in);
  in.clear();
  in.seekg(0);
  return parse_xyz(in);
}

void write_cloud(const std::string& path, const PointCloud& cloud) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open " + path + " for writing");
  char buf[96];
  const bool ply = path.size() >= 4 && path.compare(path.size() - 4, 4, ".ply") == 0;
  if (ply) {
    out << "ply\nformat ascii 1.0\nelement vertex " << cloud.points.size()
        << "\nproperty double x\nproperty double y\nproperty double z\nend_header\n";
  }
  for (const Vec3& p : cloud.points) {
    std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g\n", p.x, p.y, p.z);
    out << buf;
  }
  if (!out) throw ParseError("write failed: " + path);
}

}  // namespace pcc
