#pragma once

// Path export.  CSV has a header "t,Z1,...,ZN" and one row per grid point.
// The binary dump is
//
//   "QDPB1"  u32 n_sensors  u64 n_points  f64 dt  u64 seed  u32 path_index
//   f64 samples[n_points * n_sensors]   (step-major)
//
// with every field little-endian regardless of the host.

#include <iosfwd>
#include <string>

#include "qdetect/sde_sim.hpp"

namespace qdetect {

void write_path_csv(const PathBundle& path, std::ostream& out);
void write_path_binary(const PathBundle& path, std::ostream& out);

// Reads back samples, dt, seed and index; drift samples are not stored and
// come back empty.  Throws ConfigError on malformed input.
PathBundle read_path_binary(std::istream& in);
PathBundle read_path_csv(std::istream& in);

// Dispatches on the first bytes of the file (binary magic or CSV header).
PathBundle read_path_file(const std::string& filename);

}  // namespace qdetect
