#include "rydcpw/atoms.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "keyvalue.hpp"
#include "rydcpw/constants.hpp"
#include "rydcpw/error.hpp"

namespace rydcpw::atoms {

DefectTable DefectTable::hydrogenic(int cutoff_l) {
  DefectTable table;
  table.version_ = "hydrogenic";
  table.series_ = "hydrogenic";
  table.cutoff_l_ = cutoff_l;
  table.rydberg_hz_ = constants::helium4_rydberg_hz();
  for (int l = 0; l < cutoff_l; ++l) table.entries_[l] = Entry{{0.0}, "zero"};
  return table;
}

DefectTable DefectTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open defect table " + path.string());
  return parse(in, path.string());
}

DefectTable DefectTable::parse(std::istream& in, std::string_view origin) {
  DefectTable table;
  table.rydberg_hz_ = constants::helium4_rydberg_hz();
  bool have_format = false;
  bool have_cutoff = false;
  for (const auto& kv : detail::read_key_values(in, origin)) {
    if (kv.key == "format") {
      if (kv.value != "rydcpw-defects") {
        throw ConfigError(detail::where(origin, kv.line) + ": unsupported format '" + kv.value + "'");
      }
      have_format = true;
    } else if (kv.key == "version") {
      table.version_ = kv.value;
    } else if (kv.key == "series") {
      table.series_ = kv.value;
    } else if (kv.key == "rydberg_constant_hz") {
      table.rydberg_hz_ = detail::parse_double(kv.value, origin, kv.line);
    } else if (kv.key == "cutoff_l") {
      table.cutoff_l_ = detail::parse_int(kv.value, origin, kv.line);
      have_cutoff = true;
    } else if (const auto dot = kv.key.find('.'); dot != std::string::npos) {
      if (kv.key.substr(0, dot) != table.series_) {
        throw ConfigError(detail::where(origin, kv.line) + ": entry for unknown series '" +
                          kv.key.substr(0, dot) + "'");
      }
      const int l = detail::parse_int(std::string_view(kv.key).substr(dot + 1), origin, kv.line);
      std::string_view value(kv.value);
      std::string source;
      if (const auto bar = value.find('|'); bar != std::string_view::npos) {
        source = std::string(detail::trim(value.substr(bar + 1)));
        value = value.substr(0, bar);
      }
      Entry entry{detail::parse_doubles(value, origin, kv.line), std::move(source)};
      if (entry.ritz.empty()) {
        throw ConfigError(detail::where(origin, kv.line) + ": no Ritz coefficients");
      }
      if (table.entries_.count(l) != 0) {
        throw ConfigError(detail::where(origin, kv.line) + ": duplicate entry for l=" + std::to_string(l));
      }
      table.entries_[l] = std::move(entry);
    } else {
      throw ConfigError(detail::where(origin, kv.line) + ": unknown key '" + kv.key + "'");
    }
  }
  if (!have_format) throw ConfigError(std::string(origin) + ": missing 'format = rydcpw-defects'");
  if (!have_cutoff) throw ConfigError(std::string(origin) + ": missing cutoff_l");
  table.validate();
  return table;
}

void DefectTable::set_entry(int l, Entry entry) {
  entries_[l] = std::move(entry);
  validate();
}

void DefectTable::set_rydberg_hz(double value) {
  rydberg_hz_ = value;
  validate();
}

void DefectTable::set_cutoff_l(int l) {
  cutoff_l_ = l;
  validate();
}

void DefectTable::validate() const {
  if (!(rydberg_hz_ > 0.0) || !std::isfinite(rydberg_hz_)) {
    throw ConfigError("defect table: Rydberg constant must be positive and finite");
  }
  if (cutoff_l_ < 0) throw ConfigError("defect table: cutoff_l must be non-negative");
  double previous = 1.0;
  for (const auto& [l, entry] : entries_) {
    if (l < 0) throw ConfigError("defect table: negative l");
    for (double c : entry.ritz) {
      if (!std::isfinite(c)) throw ConfigError("defect table: non-finite coefficient at l=" + std::to_string(l));
    }
    const double d0 = entry.ritz.front();
    if (d0 < 0.0 || d0 >= 1.0) {
      throw ConfigError("defect table: delta0 outside [0, 1) at l=" + std::to_string(l));
    }
    if (d0 > previous) {
      throw ConfigError("defect table: delta0 must not increase with l (l=" + std::to_string(l) + ")");
    }
    previous = d0;
  }
}

double DefectTable::defect(int n, int l) const {
  if (l >= cutoff_l_) {
    // Entries above the cutoff are ignored; the tail is hydrogenic.
    return 0.0;
  }
  const auto it = entries_.find(l);
  if (it == entries_.end()) {
    throw ConfigError("defect table '" + version_ + "' has no entry for l=" + std::to_string(l) +
                      " below cutoff_l=" + std::to_string(cutoff_l_));
  }
  const auto& ritz = it->second.ritz;
  const double d0 = ritz.front();
  const double inv = 1.0 / ((n - d0) * (n - d0));
  double delta = d0;
  double power = inv;
  for (std::size_t k = 1; k < ritz.size(); ++k) {
    delta += ritz[k] * power;
    power *= inv;
  }
  return delta;
}

double level_energy(int n, int l, const DefectTable& defects) {
  if (n < 1 || l < 0 || n < l + 1) {
    throw DomainError("level_energy: require n >= l + 1 >= 1 (n=" + std::to_string(n) +
                      ", l=" + std::to_string(l) + ")");
  }
  const double n_star = n - defects.defect(n, l);
  return -defects.rydberg_hz() / (n_star * n_star);
}

RydbergLevel make_level(int n, int l, int m, const DefectTable& defects) {
  if (std::abs(m) > l) throw DomainError("make_level: |m| must not exceed l");
  RydbergLevel level;
  level.n = n;
  level.l = l;
  level.m = m;
  level.energy_hz = level_energy(n, l, defects);
  level.defect = defects.defect(n, l);
  level.n_star = n - level.defect;
  return level;
}

double transition_frequency(const RydbergLevel& a, const RydbergLevel& b) {
  return b.energy_hz - a.energy_hz;
}

double classical_ionization_field(const RydbergLevel& level) {
  if (!(level.n_star > 0.0)) throw DomainError("classical_ionization_field: n* must be positive");
  const double n2 = level.n_star * level.n_star;
  return constants::atomic_field_v_per_cm / (16.0 * n2 * n2);
}

double two_photon_stark_shift(double field_v_per_cm, double alpha_lower_ghz, double alpha_upper_ghz) {
  if (field_v_per_cm < 0.0) throw DomainError("two_photon_stark_shift: field must be non-negative");
  return -(alpha_upper_ghz - alpha_lower_ghz) * 1e9 * field_v_per_cm * field_v_per_cm / 4.0;
}

double two_photon_stark_shift(double field_v_per_cm, const Polarizability& lower,
                              const Polarizability& upper) {
  return two_photon_stark_shift(field_v_per_cm, lower.alpha_ghz, upper.alpha_ghz);
}

}  // namespace rydcpw::atoms
