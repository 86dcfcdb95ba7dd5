#pragma once

#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

namespace udss {

// Hybrid MPI + threads placement: `ranks_per_node` ranks on each node, the
// node's hardware threads split evenly between them.
struct LaunchPlan {
  unsigned nodes = 1;
  unsigned ranks_per_node = 1;
  unsigned physical_cores_per_node = 1;
  unsigned threads_per_core = 1;
  std::filesystem::path container;
  std::vector<std::string> command;
  std::string job_name = "udss-job";
  std::chrono::seconds walltime{3600};

  unsigned total_ranks() const noexcept { return nodes * ranks_per_node; }
  // Throws PlanMismatch unless the division is exact.
  unsigned threads_per_rank() const;
};

// Site-specific pieces the renderer cannot assume.
struct LaunchTemplate {
  std::string runtime = "udss";
  std::string mpi_launcher = "mpirun";
  std::vector<std::string> mpi_flags;  // inserted before "-n"
  std::string thread_env = "OMP_NUM_THREADS";
  std::string module_name = "udss";  // empty: no module-load line
};

// Throws InvalidPlan (zero counts, empty command or container) or
// PlanMismatch (non-integral threads per rank).
void validate(const LaunchPlan& plan);

// "<thread_env>=<n> <runtime> run <container> -- <command...>". Requires nodes == 1.
std::string render_single_node(const LaunchPlan& plan, const LaunchTemplate& tmpl = {});

// "<mpirun> [flags] -n <ranks> <runtime> run <container> -- <command...>".
std::string render_mpi(const LaunchPlan& plan, const LaunchTemplate& tmpl = {});

// Slurm batch script; uses render_single_node for a single-rank single-node
// plan and render_mpi otherwise.
std::string render_slurm(const LaunchPlan& plan, const LaunchTemplate& tmpl = {});

// Quotes `word` for POSIX sh when it contains anything beyond [A-Za-z0-9_./:=@%+,-].
std::string shell_quote(const std::string& word);

// "HH:MM:SS", or "D-HH:MM:SS" from one day up.
std::string format_walltime(std::chrono::seconds walltime);
// Parses the Slurm forms "MM", "MM:SS", "HH:MM:SS", "D-HH", "D-HH:MM", "D-HH:MM:SS".
std::chrono::seconds parse_walltime(const std::string& text);

}  // namespace udss
