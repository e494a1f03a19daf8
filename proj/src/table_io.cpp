#include "tfo/table_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "tfo/dataset.hpp"
#include "tfo/errors.hpp"

namespace tfo {

static_assert(std::endian::native == std::endian::little, "table format assumes little-endian");

namespace {

constexpr std::array<char, 8> kMagic = {'T', 'F', 'O', 'P', 'L', 'T', '\0', '\1'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kRowBytes = 8 + 4 + 4 * 8;

class Writer {
 public:
  explicit Writer(std::ofstream& out) : out_(out) {}
  template <typename T>
  void put(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }

 private:
  std::ofstream& out_;
};

class Reader {
 public:
  Reader(std::ifstream& in, const std::string& path) : in_(in), path_(path) {}
  template <typename T>
  T get() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in_) throw DataError("truncated pathlength table '" + path_ + "'");
    return v;
  }

 private:
  std::ifstream& in_;
  const std::string& path_;
};

}  // namespace

void write_table(const std::string& path, const PathlengthTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out.write(kMagic.data(), kMagic.size());
  Writer w(out);
  w.put(kVersion);
  const auto& m = table.meta;
  w.put(m.model_hash);
  w.put(m.wavelength_nm);
  w.put(m.n_launched);
  w.put(m.seed);
  w.put(m.d_m_mm);
  for (double mu : m.generating_mu_a) w.put(mu);
  w.put(static_cast<std::uint32_t>(m.rings.size()));
  for (std::size_t k = 0; k < m.rings.size(); ++k) {
    w.put(m.rings[k].sdd_mm);
    w.put(m.rings[k].half_width_mm);
    w.put(table.ring_counts.at(k));
    w.put(table.direct_tally.at(k));
  }
  w.put(static_cast<std::uint64_t>(table.rows.size()));
  std::vector<char> buf(kRowBytes * 4096);
  std::size_t filled = 0;
  for (const auto& row : table.rows) {
    char* p = buf.data() + filled;
    std::memcpy(p, &row.photon_index, 8);
    std::memcpy(p + 8, &row.detector_id, 4);
    std::memcpy(p + 12, row.pathlength.data(), 32);
    filled += kRowBytes;
    if (filled == buf.size()) {
      out.write(buf.data(), static_cast<std::streamsize>(filled));
      filled = 0;
    }
  }
  out.write(buf.data(), static_cast<std::streamsize>(filled));
  if (!out) throw DataError("write failed for '" + path + "'");
}

PathlengthTable read_table(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open pathlength table '" + path + "'");
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw DataError("'" + path + "' is not a pathlength table");
  Reader r(in, path);
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion)
    throw DataError("unsupported pathlength table version " + std::to_string(version));

  PathlengthTable table;
  auto& m = table.meta;
  m.model_hash = r.get<std::uint64_t>();
  m.wavelength_nm = r.get<double>();
  m.n_launched = r.get<std::uint64_t>();
  m.seed = r.get<std::uint64_t>();
  m.d_m_mm = r.get<double>();
  for (double& mu : m.generating_mu_a) mu = r.get<double>();
  const auto n_rings = r.get<std::uint32_t>();
  for (std::uint32_t k = 0; k < n_rings; ++k) {
    DetectorRing ring{};
    ring.sdd_mm = r.get<double>();
    ring.half_width_mm = r.get<double>();
    m.rings.push_back(ring);
    table.ring_counts.push_back(r.get<std::uint64_t>());
    table.direct_tally.push_back(r.get<double>());
  }
  const auto n_rows = r.get<std::uint64_t>();
  table.rows.resize(n_rows);
  std::vector<char> buf(kRowBytes * 4096);
  std::uint64_t done = 0;
  while (done < n_rows) {
    const std::uint64_t chunk = std::min<std::uint64_t>(4096, n_rows - done);
    in.read(buf.data(), static_cast<std::streamsize>(chunk * kRowBytes));
    if (!in) throw DataError("truncated pathlength table '" + path + "'");
    for (std::uint64_t i = 0; i < chunk; ++i) {
      const char* p = buf.data() + i * kRowBytes;
      auto& row = table.rows[done + i];
      std::memcpy(&row.photon_index, p, 8);
      std::memcpy(&row.detector_id, p + 8, 4);
      std::memcpy(row.pathlength.data(), p + 12, 32);
      if (row.detector_id < 0 || static_cast<std::uint32_t>(row.detector_id) >= n_rings)
        throw DataError("pathlength table row has invalid detector id");
    }
    done += chunk;
  }
  return table;
}

void write_table_csv(const std::string& path, const PathlengthTable& table) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << "# wavelength_nm: " << format_double(table.meta.wavelength_nm) << "\n";
  out << "# n_launched: " << table.meta.n_launched << "\n";
  out << "# seed: " << table.meta.seed << "\n";
  out << "# model_hash: " << table.meta.model_hash << "\n";
  out << "photon_index,detector_id,sdd_mm,L_maternal,L_uterus,L_amniotic,L_fetal\n";
  for (const auto& row : table.rows) {
    out << row.photon_index << "," << row.detector_id << ","
        << format_double(table.meta.rings[row.detector_id].sdd_mm);
    for (double l : row.pathlength) out << "," << format_double(l);
    out << "\n";
  }
}

}  // namespace tfo
