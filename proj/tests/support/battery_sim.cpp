#include "battery_sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

#include "rulsurv/rng.hpp"
#include "rulsurv/text.hpp"

namespace fs = std::filesystem;

namespace rulsurv::sim {

namespace {

std::ofstream open(const fs::path& p) {
  std::ofstream os(p);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  return os;
}

std::string cell_id(const char* prefix, std::size_t i) {
  std::string n = std::to_string(i);
  while (n.size() < 3) n.insert(n.begin(), '0');
  return prefix + n;
}

}  // namespace

void write_toyota(const fs::path& root, const ToyotaOptions& options) {
  fs::create_directories(root);
  Rng rng(options.seed);
  auto manifest = open(root / "manifest.csv");
  manifest << "sample_id,group\n";
  for (std::size_t c = 0; c < options.cells; ++c) {
    const std::string id = cell_id("cell", c);
    manifest << id << ',' << (c % 2 == 0 ? "batch_a" : "batch_b") << '\n';

    // Fade per cycle; life to 80% is 0.2 / rate cycles.
    const double rate = 0.0008 * std::exp(0.45 * rng.normal());
    const double initial = 1.1 + 0.01 * rng.normal();
    const int life = static_cast<int>(std::ceil(0.2 / rate));
    int last = life + 3;
    if (rng.uniform() < options.censor_fraction) {
      last = std::max(options.cycles_with_series + 1, static_cast<int>(life * (0.3 + 0.6 * rng.uniform())));
    }
    const double bend = 40.0 * rate;

    auto charge = open(root / (id + ".charge.csv"));
    auto discharge = open(root / (id + ".discharge.csv"));
    charge << "cycle,t_seconds,voltage\n";
    discharge << "cycle,t_seconds,voltage\n";
    const double span = 600.0;
    for (int cyc = 1; cyc <= options.cycles_with_series; ++cyc) {
      const double age = rate * cyc;
      for (std::size_t k = 0; k < options.points_per_cycle; ++k) {
        const double u = static_cast<double>(k) / static_cast<double>(options.points_per_cycle - 1);
        const double t = u * span;
        const double vc = 3.2 + 0.9 * std::sqrt(u) + bend * u * u + 2.0 * age + 0.002 * rng.normal();
        const double vd = 3.9 - 0.5 * u - bend * std::pow(u, 4) - 2.0 * age + 0.002 * rng.normal();
        charge << cyc << ',' << format_double(t) << ',' << format_double(vc) << '\n';
        discharge << cyc << ',' << format_double(t) << ',' << format_double(vd) << '\n';
      }
    }

    auto capacity = open(root / (id + ".capacity.csv"));
    capacity << "cycle,capacity_ah\n";
    for (int cyc = 1; cyc <= last; ++cyc) {
      const double q = initial * (1.0 - rate * (cyc - 1)) + 0.0005 * rng.normal();
      capacity << cyc << ',' << format_double(q) << '\n';
    }
  }
}

void write_nasa(const fs::path& root, const NasaOptions& options) {
  fs::create_directories(root);
  Rng rng(options.seed);
  auto manifest = open(root / "manifest.csv");
  manifest << "sample_id,group\n";
  for (std::size_t b = 0; b < options.batteries; ++b) {
    const std::string id = cell_id("B0", b + 5);
    manifest << id << ",nasa\n";
    auto discharge = open(root / (id + ".discharge.csv"));
    auto capacity = open(root / (id + ".capacity.csv"));
    discharge << "cycle,t_seconds,voltage\n";
    capacity << "cycle,capacity_ah\n";
    const double fade = (0.7 + 0.2 * rng.uniform()) / options.cycles;
    for (int cyc = 1; cyc <= options.cycles; ++cyc) {
      const double q = 2.0 - fade * (cyc - 1) + 0.005 * rng.normal();
      capacity << cyc << ',' << format_double(q) << '\n';
      const double duration = 3600.0 * q / 2.0;
      const bool zero_start = options.include_zero_start && cyc == 2;
      for (double t = 0.0; t <= duration; t += options.sample_step_s) {
        const double u = t / duration;
        double v = 4.2 - 0.7 * u - 0.8 * std::pow(u, 8) + 0.003 * rng.normal();
        if (zero_start && t == 0.0) v = 0.0;
        discharge << cyc << ',' << format_double(t) << ',' << format_double(v) << '\n';
      }
    }
  }
}

}  // namespace rulsurv::sim
