// Photon throughput of simulate() and replay_intensity() on the default model.
#include <chrono>
#include <cstdlib>
#include <iostream>

#include "tfo/replay.hpp"
#include "tfo/tissue.hpp"
#include "tfo/transport.hpp"

int main(int argc, char** argv) {
  const std::uint64_t n = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 200000;
  const double d_m = argc > 2 ? std::atof(argv[2]) : 4.0;
  const unsigned workers = argc > 3 ? static_cast<unsigned>(std::atoi(argv[3])) : 0;
  const auto model = tfo::default_tissue_model().with_maternal_thickness(d_m);

  for (double wl : model.wavelengths_nm) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto table = tfo::simulate(model, wl, n, 1234, {workers});
    const auto t1 = std::chrono::steady_clock::now();
    const auto intensity = tfo::replay_intensity(table, table.meta.generating_mu_a);
    const auto t2 = std::chrono::steady_clock::now();
    const double sim_s = std::chrono::duration<double>(t1 - t0).count();
    const double rep_s = std::chrono::duration<double>(t2 - t1).count();
    std::cout << "wavelength " << wl << " nm: " << n << " photons in " << sim_s << " s ("
              << 1e6 * sim_s / static_cast<double>(n) << " us/photon), detected "
              << table.rows.size() << ", replay " << rep_s << " s\n";
    for (std::size_t r = 0; r < table.n_rings(); ++r)
      std::cout << "  ring " << table.meta.rings[r].sdd_mm << " mm: count " << table.ring_counts[r]
                << " I " << intensity[r] << "\n";
  }
}
