#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

#include "covshape/sde.hpp"

namespace covshape::io {

// All numeric CSV output carries full double precision.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Columnar CSV: path_id, t, state components, status.
inline void write_ensemble_csv(const sde::PathEnsemble& ens, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "path_id,t";
  for (int k = 0; k < ens.dimension; ++k) out << ",state_" << k;
  out << ",status\n";
  for (std::size_t p = 0; p < ens.n_paths; ++p) {
    for (std::size_t t = 0; t < ens.time_grid.size(); ++t) {
      out << p << ',' << format_double(ens.time_grid[t]);
      for (int k = 0; k < ens.dimension; ++k) out << ',' << format_double(ens.state(p, t, k));
      out << ',' << sde::to_string(ens.status[p]) << '\n';
    }
  }
}

// Compact little-endian binary layout:
//   bytes 0..7   magic "COVSHENS"
//   u32          version (1)
//   u32          dimension
//   u64          n_paths
//   u64          n_times
//   f64[n_times] time grid
//   u8[n_paths]  status (0 alive, 1 exploded, 2 absorbed)
//   f64[n_paths] event time (-1 when none)
//   f64[n_paths * n_times * dimension] states, row-major
inline constexpr char kEnsembleMagic[8] = {'C', 'O', 'V', 'S', 'H', 'E', 'N', 'S'};

inline void write_ensemble_binary(const sde::PathEnsemble& ens, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  auto put = [&out](const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  };
  put(kEnsembleMagic, 8);
  const std::uint32_t version = 1;
  const std::uint32_t dim = static_cast<std::uint32_t>(ens.dimension);
  const std::uint64_t n_paths = ens.n_paths;
  const std::uint64_t n_times = ens.time_grid.size();
  put(&version, 4);
  put(&dim, 4);
  put(&n_paths, 8);
  put(&n_times, 8);
  put(ens.time_grid.data(), 8 * n_times);
  for (std::size_t p = 0; p < ens.n_paths; ++p) {
    const std::uint8_t s = static_cast<std::uint8_t>(ens.status[p]);
    put(&s, 1);
  }
  put(ens.event_time.data(), 8 * n_paths);
  put(ens.data.data(), 8 * ens.data.size());
}

inline sde::PathEnsemble read_ensemble_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  auto get = [&in, &path](void* p, std::size_t n) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in) throw std::runtime_error("truncated ensemble file: " + path);
  };
  char magic[8];
  get(magic, 8);
  if (std::memcmp(magic, kEnsembleMagic, 8) != 0)
    throw std::runtime_error("bad magic in " + path);
  std::uint32_t version = 0, dim = 0;
  std::uint64_t n_paths = 0, n_times = 0;
  get(&version, 4);
  if (version != 1) throw std::runtime_error("unsupported ensemble version");
  get(&dim, 4);
  get(&n_paths, 8);
  get(&n_times, 8);
  sde::PathEnsemble ens;
  ens.dimension = static_cast<int>(dim);
  ens.n_paths = n_paths;
  ens.time_grid.resize(n_times);
  get(ens.time_grid.data(), 8 * n_times);
  ens.status.resize(n_paths);
  for (std::size_t p = 0; p < n_paths; ++p) {
    std::uint8_t s = 0;
    get(&s, 1);
    ens.status[p] = static_cast<sde::PathStatus>(s);
  }
  ens.event_time.resize(n_paths);
  get(ens.event_time.data(), 8 * n_paths);
  ens.data.resize(n_paths * n_times * dim);
  get(ens.data.data(), 8 * ens.data.size());
  return ens;
}

}  // namespace covshape::io
