#pragma once

#include <string>

#include "tfo/transport.hpp"

namespace tfo {

/// Binary pathlength table, little-endian:
///   magic "TFOPLT\0\1", u32 version,
///   metadata: u64 model_hash, f64 wavelength_nm, u64 n_launched, u64 seed, f64 d_m_mm,
///             4 x f64 generating mu_a, u32 n_rings,
///             per ring: f64 sdd, f64 half_width, u64 count, f64 direct_tally,
///   u64 n_rows, then rows of (u64 photon_index, i32 detector_id, 4 x f64 pathlength).
void write_table(const std::string& path, const PathlengthTable& table);
PathlengthTable read_table(const std::string& path);

/// Human-readable export: one row per detected photon.
void write_table_csv(const std::string& path, const PathlengthTable& table);

}  // namespace tfo
