#include "tfo/dataset.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "tfo/errors.hpp"

namespace tfo {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& s, std::size_t line) {
  const std::string t = trim(s);
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (t.empty() || end != t.c_str() + t.size())
    throw DataError("line " + std::to_string(line) + ": cannot parse number '" + t + "'");
  return v;
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  for (const auto& part : split(s, ',')) {
    if (!trim(part).empty()) out.push_back(parse_double(part, 0));
  }
  return out;
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += format_double(v[i]);
  }
  return s;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> FeatureDataset::column_names() const {
  std::vector<std::string> cols = {"d_m", "hb_m", "s_m", "hb_f", "s_f"};
  const std::size_t nw = n_wavelengths();
  const std::size_t nr = n_rings();
  for (std::size_t w = 0; w < nw; ++w)
    for (std::size_t r = 0; r < nr; ++r)
      cols.push_back("epr_w" + std::to_string(w + 1) + "_r" + std::to_string(r + 1));
  if (has_ror)
    for (std::size_t r = 0; r < nr; ++r) cols.push_back("ror_r" + std::to_string(r + 1));
  if (has_intensities) {
    for (const char* prefix : {"isys", "idia"})
      for (std::size_t w = 0; w < nw; ++w)
        for (std::size_t r = 0; r < nr; ++r)
          cols.push_back(std::string(prefix) + "_w" + std::to_string(w + 1) + "_r" +
                         std::to_string(r + 1));
  }
  const bool temporal = !rows.empty() && rows.front().round_id.has_value();
  if (temporal) {
    cols.push_back("round_id");
    cols.push_back("time_s");
  }
  return cols;
}

void write_dataset_csv(const std::string& path, const FeatureDataset& ds) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << "# tfo-dataset v1\n";
  out << "# wavelengths_nm: " << join(ds.wavelengths_nm) << "\n";
  out << "# sdd_mm: " << join(ds.sdd_mm) << "\n";
  out << "# smoothed: " << (ds.smoothed ? 1 : 0) << "\n";
  for (const auto& [k, v] : ds.provenance) out << "# " << k << ": " << v << "\n";

  const auto cols = ds.column_names();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << "\n";
  const bool temporal = !ds.rows.empty() && ds.rows.front().round_id.has_value();
  const std::size_t nf = ds.n_wavelengths() * ds.n_rings();
  for (const auto& row : ds.rows) {
    if (row.epr.size() != nf) throw DataError("row EPR width does not match dataset layout");
    std::string line = format_double(row.d_m_mm) + "," + format_double(row.hemo.hb_m) + "," +
                       format_double(row.hemo.s_m) + "," + format_double(row.hemo.hb_f) + "," +
                       format_double(row.hemo.s_f);
    for (double v : row.epr) line += "," + format_double(v);
    if (ds.has_ror) {
      if (row.ror.size() != ds.n_rings()) throw DataError("row RoR width does not match layout");
      for (double v : row.ror) line += "," + format_double(v);
    }
    if (ds.has_intensities) {
      if (row.i_systole.size() != nf || row.i_diastole.size() != nf)
        throw DataError("row intensity width does not match layout");
      for (double v : row.i_systole) line += "," + format_double(v);
      for (double v : row.i_diastole) line += "," + format_double(v);
    }
    if (temporal) {
      line += "," + std::to_string(row.round_id.value_or(-1)) + "," +
              format_double(row.time_s.value_or(0.0));
    }
    out << line << "\n";
  }
  if (!out) throw DataError("write failed for '" + path + "'");
}

FeatureDataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset '" + path + "'");
  FeatureDataset ds;
  ds.smoothed = false;
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto colon = line.find(':');
      if (colon == std::string::npos) continue;
      const std::string key = trim(line.substr(1, colon - 1));
      const std::string value = trim(line.substr(colon + 1));
      if (key == "wavelengths_nm") {
        ds.wavelengths_nm = parse_list(value);
      } else if (key == "sdd_mm") {
        ds.sdd_mm = parse_list(value);
      } else if (key == "smoothed") {
        ds.smoothed = value == "1";
      } else {
        ds.provenance[key] = value;
      }
      continue;
    }
    header = split(line, ',');
    for (auto& h : header) h = trim(h);
    break;
  }
  if (header.empty()) throw DataError("dataset '" + path + "' has no header row");

  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < header.size(); ++i) index[header[i]] = i;
  for (const char* c : {"d_m", "hb_m", "s_m", "hb_f", "s_f"}) {
    if (!index.count(c)) throw DataError("dataset is missing column '" + std::string(c) + "'");
  }
  // Infer layout when header comments were stripped.
  if (ds.wavelengths_nm.empty() || ds.sdd_mm.empty()) {
    std::size_t nw = 0, nr = 0;
    while (index.count("epr_w" + std::to_string(nw + 1) + "_r1")) ++nw;
    while (index.count("epr_w1_r" + std::to_string(nr + 1))) ++nr;
    if (ds.wavelengths_nm.empty()) ds.wavelengths_nm.assign(nw, 0.0);
    if (ds.sdd_mm.empty())
      for (std::size_t r = 0; r < nr; ++r) ds.sdd_mm.push_back(static_cast<double>(r + 1));
  }
  ds.has_ror = index.count("ror_r1") > 0;
  ds.has_intensities = index.count("isys_w1_r1") > 0;
  const bool temporal = index.count("round_id") > 0;
  const auto cols = [&] {
    FeatureDataset probe = ds;
    probe.rows.clear();
    if (temporal) {
      probe.rows.emplace_back();
      probe.rows.back().round_id = 0;
    }
    return probe.column_names();
  }();
  std::vector<std::size_t> pos;
  for (const auto& c : cols) {
    auto it = index.find(c);
    if (it == index.end()) throw DataError("dataset is missing column '" + c + "'");
    pos.push_back(it->second);
  }

  const std::size_t nf = ds.n_wavelengths() * ds.n_rings();
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty() || line[0] == '#') continue;
    const auto fields = split(line, ',');
    if (fields.size() != header.size())
      throw DataError("line " + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " fields");
    std::size_t c = 0;
    auto next = [&] { return parse_double(fields[pos[c++]], line_no); };
    FeatureRow row;
    row.d_m_mm = next();
    row.hemo.hb_m = next();
    row.hemo.s_m = next();
    row.hemo.hb_f = next();
    row.hemo.s_f = next();
    for (std::size_t i = 0; i < nf; ++i) row.epr.push_back(next());
    if (ds.has_ror)
      for (std::size_t i = 0; i < ds.n_rings(); ++i) row.ror.push_back(next());
    if (ds.has_intensities) {
      for (std::size_t i = 0; i < nf; ++i) row.i_systole.push_back(next());
      for (std::size_t i = 0; i < nf; ++i) row.i_diastole.push_back(next());
    }
    if (temporal) {
      row.round_id = static_cast<int>(next());
      row.time_s = next();
    }
    ds.rows.push_back(std::move(row));
  }
  return ds;
}

}  // namespace tfo
