// One cell of the Weibull simulation grid at reduced size, printed as a
// short table: truth, bias, empirical SD and average perturbation SE.
//
//   simulation_cell [n_sims] [beta]

#include <cstdio>
#include <string>

#include "inactivity/simulate.hpp"

using namespace inactivity;

int main(int argc, char** argv) {
  SimConfig c;
  c.n_sims = argc > 1 ? std::stoul(argv[1]) : 100;
  c.betas = {argc > 2 ? std::stod(argv[2]) : 0.0};
  c.t0_list = {15.0};
  c.censoring_targets = {0.1, 0.3};
  c.n_perturb = 100;
  c.threads = 0;

  const auto table = run_simulation(c);
  std::printf("%4s %5s %8s %8s %8s %8s %8s %8s %7s\n", "t0", "c%", "beta0", "bias0", "sd0", "ase0", "bias1",
              "sd1", "reject");
  for (const auto& cell : table.cells)
    std::printf("%4.0f %5.0f %8.4f %8.4f %8.4f %8.4f %8.4f %8.4f %7.3f\n", cell.t0, 100 * cell.censoring_target,
                cell.true_beta0, cell.bias_beta0, cell.sd_beta0, cell.ase_beta0, cell.bias_beta1, cell.sd_beta1,
                cell.rejection_rate);
}
