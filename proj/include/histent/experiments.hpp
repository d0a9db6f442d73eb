#ifndef HISTENT_EXPERIMENTS_HPP
#define HISTENT_EXPERIMENTS_HPP

#include "histent/config.hpp"

#include <string>
#include <vector>

namespace histent {

// Named experiment recipes; each one pins its parameters and tolerances and
// reports per-metric pass flags.
std::vector<std::string> experiment_names();

ResultRecord run_experiment(const std::string& name, const json& config,
                            const std::string& out_dir);

// CLI subcommands: simulate | lyapunov | pesin-blocks | entropy |
// construct-historic. `experiment` is dispatched through run_experiment.
ResultRecord run_subcommand(const std::string& subcommand, const json& config,
                            const std::string& out_dir);

} // namespace histent

#endif
