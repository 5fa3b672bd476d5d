// Regenerates data/engine_model_golden.csv, the frozen evaluation grid the
// engine-model regression test compares against. Run only when the gas-path
// formulas change intentionally, and commit the result together with that
// change.

#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "phm/engine_model.hpp"
#include "phm/io/csv.hpp"

using namespace phm;
using namespace phm::engine;

int main(int argc, char** argv) {
  std::string path = argc > 1 ? argv[1] : "data/engine_model_golden.csv";

  std::vector<std::pair<OperatingPoint, HealthState>> pairs;
  pairs.emplace_back(OperatingPoint::cruise_reference(), reference_health());

  std::mt19937_64 rng(190347);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    OperatingPoint w = OperatingPoint::at(45000.0 * u01(rng), 0.9 * u01(rng),
                                          100.0 * u01(rng));
    HealthState theta{-0.2 * u01(rng), -0.2 * u01(rng), -0.2 * u01(rng)};
    pairs.emplace_back(w, theta);
  }

  std::vector<io::KvRow> rows;
  char id[24];
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    std::snprintf(id, sizeof(id), "p%03zu", i);
    const auto& [w, theta] = pairs[i];
    std::string p(id);
    rows.push_back({p + ".in.alt", w.alt});
    rows.push_back({p + ".in.mach", w.mach});
    rows.push_back({p + ".in.tra", w.tra});
    rows.push_back({p + ".in.t2", w.t2});
    rows.push_back({p + ".in.hpt_eff_mod", theta.hpt_eff_mod});
    rows.push_back({p + ".in.lpt_eff_mod", theta.lpt_eff_mod});
    rows.push_back({p + ".in.lpt_flow_mod", theta.lpt_flow_mod});
    ModelOutput out = evaluate_model(w, theta);
    for (int s = 0; s < kNumSensors; ++s)
      rows.push_back({p + ".out." + kSensorNames[s], out.sensors[s]});
    for (int v = 0; v < kNumVirtual; ++v)
      rows.push_back({p + ".out.v." + kVirtualNames[v], out.virtuals[v]});
  }

  io::write_kv_csv(path, rows);
  std::printf("wrote %zu rows for %zu pairs to %s\n", rows.size(), pairs.size(),
              path.c_str());
  return 0;
}
