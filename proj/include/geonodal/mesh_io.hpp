#pragma once

#include "geonodal/surface.hpp"

#include <iosfwd>
#include <string>

namespace geonodal {

/// ASCII OFF. Non-triangular faces are rejected.
SurfacePtr read_off(std::istream& in);
/// ASCII OBJ, `v` and `f` records only (`f a/b/c` index forms accepted, texture/normal parts ignored).
SurfacePtr read_obj(std::istream& in);
/// Dispatch on the file extension (.off / .obj).
SurfacePtr read_mesh(const std::string& path);

void write_off(std::ostream& out, const Surface& surface);

}  // namespace geonodal
