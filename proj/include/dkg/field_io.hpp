#pragma once

// Field snapshots: flat little-endian binary with a fixed header, a JSON
// sidecar describing it, and CSV export of shell-averaged spectra.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dkg/field.hpp"

namespace dkg {

struct SnapshotHeader {
  char magic[4] = {'D', 'K', 'G', 'F'};
  std::uint32_t version = 1;
  std::uint32_t n = 0;
  std::uint32_t ncomp = 0;
  double box_length = 0.0;
  std::uint32_t rep = 0;    // 0 physical, 1 fourier
  std::uint32_t dtype = 0;  // 0 complex128
};

template <int NC>
void write_snapshot(const std::string& path, const Field<NC>& f, const nlohmann::json& meta = {}) {
  SnapshotHeader h;
  h.n = static_cast<std::uint32_t>(f.lattice().n());
  h.ncomp = NC;
  h.box_length = f.lattice().box_length();
  h.rep = f.rep() == Rep::physical ? 0u : 1u;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(h.magic, 4);
  out.write(reinterpret_cast<const char*>(&h.version), sizeof h.version);
  out.write(reinterpret_cast<const char*>(&h.n), sizeof h.n);
  out.write(reinterpret_cast<const char*>(&h.ncomp), sizeof h.ncomp);
  out.write(reinterpret_cast<const char*>(&h.box_length), sizeof h.box_length);
  out.write(reinterpret_cast<const char*>(&h.rep), sizeof h.rep);
  out.write(reinterpret_cast<const char*>(&h.dtype), sizeof h.dtype);
  out.write(reinterpret_cast<const char*>(f.raw().data()),
            static_cast<std::streamsize>(f.raw().size() * sizeof(cd)));
  if (!out) throw std::runtime_error("write failed: " + path);

  nlohmann::json side = meta;
  side["format"] = "DKGF";
  side["version"] = h.version;
  side["n"] = h.n;
  side["components"] = NC;
  side["box_length"] = h.box_length;
  side["representation"] = to_string(f.rep());
  side["dtype"] = "complex128";
  side["layout"] = "component-major, then x,y,z row-major";
  std::ofstream js(path + ".json");
  js << side.dump(2) << "\n";
}

template <int NC>
Field<NC> read_snapshot(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  SnapshotHeader h;
  char magic[4];
  in.read(magic, 4);
  if (std::memcmp(magic, h.magic, 4) != 0) throw std::runtime_error("bad snapshot magic in " + path);
  in.read(reinterpret_cast<char*>(&h.version), sizeof h.version);
  in.read(reinterpret_cast<char*>(&h.n), sizeof h.n);
  in.read(reinterpret_cast<char*>(&h.ncomp), sizeof h.ncomp);
  in.read(reinterpret_cast<char*>(&h.box_length), sizeof h.box_length);
  in.read(reinterpret_cast<char*>(&h.rep), sizeof h.rep);
  in.read(reinterpret_cast<char*>(&h.dtype), sizeof h.dtype);
  if (!in || h.version != 1 || h.dtype != 0) throw std::runtime_error("unsupported snapshot " + path);
  if (h.ncomp != NC) throw std::runtime_error("component count mismatch in " + path);
  Field<NC> f(make_lattice(static_cast<int>(h.n), h.box_length),
              h.rep == 0 ? Rep::physical : Rep::fourier);
  in.read(reinterpret_cast<char*>(f.raw().data()),
          static_cast<std::streamsize>(f.raw().size() * sizeof(cd)));
  if (!in) throw std::runtime_error("truncated snapshot " + path);
  return f;
}

/// Energy per radial frequency bin of width dk, summed over components.
template <int NC>
std::vector<double> radial_spectrum(const Field<NC>& f) {
  Field<NC> g = f.as(Rep::fourier);
  const FrequencyLattice& lat = g.lattice();
  const std::size_t bins = static_cast<std::size_t>(std::sqrt(3.0) * lat.n() / 2) + 2;
  std::vector<double> e(bins, 0.0);
  for (std::size_t q = 0; q < g.points(); ++q) {
    const std::size_t b = static_cast<std::size_t>(std::lround(lat.xi(q).norm() / lat.dk()));
    double s = 0.0;
    for (int c = 0; c < NC; ++c) s += std::norm(g.at(c, q));
    e[std::min(b, bins - 1)] += s * lat.cell_volume();
  }
  return e;
}

template <int NC>
void write_spectrum_csv(const std::string& path, const Field<NC>& f) {
  const auto e = radial_spectrum(f);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "k,energy\n";
  out.precision(17);
  for (std::size_t b = 0; b < e.size(); ++b) out << b * f.lattice().dk() << "," << e[b] << "\n";
}

}  // namespace dkg
