#include "qdetect/path_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "qdetect/errors.hpp"
#include "qdetect/format.hpp"

namespace qdetect {

namespace {

constexpr std::array<char, 5> kMagic = {'Q', 'D', 'P', 'B', '1'};

template <class U>
void put_le(std::ostream& out, U v) {
  std::array<char, sizeof(U)> b;
  for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b.data(), b.size());
}

template <class U>
U get_le(std::istream& in) {
  std::array<unsigned char, sizeof(U)> b;
  if (!in.read(reinterpret_cast<char*>(b.data()), b.size())) throw ConfigError("truncated path file");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(b[i]) << (8 * i);
  return v;
}

void put_f64(std::ostream& out, double x) { put_le(out, std::bit_cast<std::uint64_t>(x)); }
double get_f64(std::istream& in) { return std::bit_cast<double>(get_le<std::uint64_t>(in)); }

}  // namespace

void write_path_csv(const PathBundle& path, std::ostream& out) {
  out << "t";
  for (std::size_t i = 0; i < path.n_sensors; ++i) out << ",Z" << (i + 1);
  out << '\n';
  for (std::size_t k = 0; k < path.n_points; ++k) {
    out << num(path.dt * static_cast<double>(k));
    for (std::size_t i = 0; i < path.n_sensors; ++i) out << ',' << num(path.z(i, k));
    out << '\n';
  }
}

void write_path_binary(const PathBundle& path, std::ostream& out) {
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(path.n_sensors));
  put_le<std::uint64_t>(out, path.n_points);
  put_f64(out, path.dt);
  put_le<std::uint64_t>(out, path.rng_seed);
  put_le<std::uint32_t>(out, path.path_index);
  for (double x : path.samples) put_f64(out, x);
}

PathBundle read_path_binary(std::istream& in) {
  std::array<char, 5> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw ConfigError("not a QDPB1 path file");
  PathBundle p;
  p.n_sensors = get_le<std::uint32_t>(in);
  p.n_points = get_le<std::uint64_t>(in);
  p.dt = get_f64(in);
  p.rng_seed = get_le<std::uint64_t>(in);
  p.path_index = get_le<std::uint32_t>(in);
  if (p.n_sensors == 0 || p.n_points == 0 || !(p.dt > 0.0)) throw ConfigError("QDPB1 header is inconsistent");
  if (p.n_points > (std::uint64_t{1} << 40) / p.n_sensors) throw ConfigError("QDPB1 path is implausibly large");
  p.samples.resize(p.n_points * p.n_sensors);
  for (double& x : p.samples) x = get_f64(in);
  return p;
}

PathBundle read_path_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("t,", 0) != 0) throw ConfigError("path CSV needs a 't,Z1,...' header");
  PathBundle p;
  for (char ch : line) p.n_sensors += ch == ',';
  std::vector<double> times;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    std::size_t col = 0;
    while (std::getline(row, cell, ',')) {
      double v;
      try {
        v = std::stod(cell);
      } catch (const std::exception&) {
        throw ConfigError("bad number in path CSV: '" + cell + "'");
      }
      (col == 0 ? times.push_back(v) : p.samples.push_back(v));
      ++col;
    }
    if (col != p.n_sensors + 1) throw ConfigError("path CSV row has the wrong number of columns");
  }
  p.n_points = times.size();
  if (p.n_points < 2) throw ConfigError("path CSV needs at least two rows");
  p.dt = times[1] - times[0];
  if (!(p.dt > 0.0)) throw ConfigError("path CSV times must increase");
  return p;
}

PathBundle read_path_file(const std::string& filename) {
  std::ifstream in(filename, std::ios::binary);
  if (!in) throw ConfigError("cannot open path file " + filename);
  const int first = in.peek();
  if (first == 'Q') return read_path_binary(in);
  return read_path_csv(in);
}

}  // namespace qdetect
