// Writes a synthetic breast-cancer-trial-shaped CSV (time,status,node,age,size)
// for trying out `inactq fit`. Age and size are stored pre-multiplied by 0.01,
// the scaling recommended for continuous covariates of that magnitude.
//
//   make_b04_like [n] [seed] > b04_like.csv

#include <cmath>
#include <cstdlib>
#include <iostream>
#include <string>

#include "inactivity/core.hpp"
#include "inactivity/rng.hpp"

using namespace inactivity;

int main(int argc, char** argv) {
  const std::size_t n = argc > 1 ? std::stoul(argv[1]) : 1000;
  const std::uint64_t seed = argc > 2 ? std::stoull(argv[2]) : 2024;
  KeyedStream rng(derive_key({seed}));

  std::vector<SurvivalRecord> records;
  records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double node = rng.uniform() < 0.6 ? 1.0 : 0.0;
    const double age = std::round(30.0 + 40.0 * rng.uniform()) * 0.01;
    const double size = std::round(10.0 + 60.0 * rng.uniform()) * 0.01;
    // Weibull proportional hazards in years; node-positive and large tumours
    // die earlier, older patients slightly later.
    const double lp = 0.7 * node - 0.5 * age + 0.9 * size;
    const double t = std::pow(-std::log(rng.uniform()) * std::exp(-lp), 1.0 / 1.6) / 0.045;
    // Administrative censoring between 15 and 30 years of follow-up.
    const double c = 15.0 + 15.0 * rng.uniform();
    records.push_back({std::min(t, c), t <= c ? 1 : 0, {node, age, size}});
  }
  write_csv(Dataset(std::move(records), {"node", "age", "size"}), std::cout);
}
