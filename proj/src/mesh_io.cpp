#include "geonodal/mesh_io.hpp"

#include "geonodal/errors.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace geonodal {

namespace {

// Next non-empty, non-comment line.
bool next_line(std::istream& in, std::string& line) {
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
  }
  return false;
}

}  // namespace

SurfacePtr read_off(std::istream& in) {
  std::string line;
  if (!next_line(in, line)) throw GeometryError("OFF: empty input");
  std::istringstream head(line);
  std::string magic;
  head >> magic;
  if (magic != "OFF") throw GeometryError("OFF: missing header");
  long nv = -1, nf = -1, ne = 0;
  if (!(head >> nv)) {
    if (!next_line(in, line)) throw GeometryError("OFF: missing counts");
    std::istringstream counts(line);
    counts >> nv >> nf >> ne;
  } else {
    head >> nf >> ne;
  }
  if (nv <= 0 || nf <= 0) throw GeometryError("OFF: invalid counts");
  std::vector<Vec3> vertices;
  vertices.reserve(static_cast<std::size_t>(nv));
  for (long i = 0; i < nv; ++i) {
    if (!next_line(in, line)) throw GeometryError("OFF: truncated vertex list");
    std::istringstream ls(line);
    double x, y, z;
    if (!(ls >> x >> y >> z)) throw GeometryError("OFF: malformed vertex record");
    vertices.emplace_back(x, y, z);
  }
  std::vector<Tri> tris;
  tris.reserve(static_cast<std::size_t>(nf));
  for (long i = 0; i < nf; ++i) {
    if (!next_line(in, line)) throw GeometryError("OFF: truncated face list");
    std::istringstream ls(line);
    int k;
    if (!(ls >> k)) throw GeometryError("OFF: malformed face record");
    if (k != 3) throw GeometryError("OFF: non-triangular face (" + std::to_string(k) + " vertices)");
    Tri t;
    if (!(ls >> t[0] >> t[1] >> t[2])) throw GeometryError("OFF: malformed face record");
    tris.push_back(t);
  }
  return Surface::triangle_mesh(std::move(vertices), std::move(tris));
}

SurfacePtr read_obj(std::istream& in) {
  std::vector<Vec3> vertices;
  std::vector<Tri> tris;
  std::string line;
  while (next_line(in, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "v") {
      double x, y, z;
      if (!(ls >> x >> y >> z)) throw GeometryError("OBJ: malformed vertex record");
      vertices.emplace_back(x, y, z);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ls >> tok) {
        const int i = std::stoi(tok.substr(0, tok.find('/')));
        idx.push_back(i > 0 ? i - 1 : static_cast<int>(vertices.size()) + i);
      }
      if (idx.size() != 3)
        throw GeometryError("OBJ: non-triangular face (" + std::to_string(idx.size()) + " vertices)");
      tris.push_back({idx[0], idx[1], idx[2]});
    }
  }
  return Surface::triangle_mesh(std::move(vertices), std::move(tris));
}

SurfacePtr read_mesh(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw GeometryError("cannot open mesh file " + path);
  std::string ext = path.substr(path.find_last_of('.') + 1);
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == "off") return read_off(in);
  if (ext == "obj") return read_obj(in);
  throw GeometryError("unsupported mesh extension ." + ext);
}

void write_off(std::ostream& out, const Surface& surface) {
  out << "OFF\n" << surface.vertex_count() << ' ' << surface.triangle_count() << " 0\n";
  out << std::setprecision(17);
  for (const auto& p : surface.vertices()) out << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
  for (const auto& t : surface.triangles()) out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
}

}  // namespace geonodal
