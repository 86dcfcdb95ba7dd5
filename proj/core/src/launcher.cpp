#include "udss/launcher.hpp"

#include <cstdio>
#include <sstream>

#include "udss/error.hpp"

namespace udss {

unsigned LaunchPlan::threads_per_rank() const {
  if (ranks_per_node == 0) throw Error(Errc::InvalidPlan, "ranks per node must be positive");
  unsigned hw = physical_cores_per_node * threads_per_core;
  if (hw % ranks_per_node != 0) {
    throw Error(Errc::PlanMismatch, std::to_string(hw) + " hardware threads per node do not divide evenly among " +
                                        std::to_string(ranks_per_node) + " ranks");
  }
  return hw / ranks_per_node;
}

void validate(const LaunchPlan& plan) {
  if (plan.nodes == 0 || plan.ranks_per_node == 0 || plan.physical_cores_per_node == 0 ||
      plan.threads_per_core == 0) {
    throw Error(Errc::InvalidPlan, "node, rank, core and SMT counts must all be positive");
  }
  if (plan.command.empty()) throw Error(Errc::InvalidPlan, "no command to launch");
  if (plan.container.empty()) throw Error(Errc::InvalidPlan, "no container given");
  plan.threads_per_rank();
}

std::string shell_quote(const std::string& word) {
  if (word.empty()) return "''";
  bool plain = true;
  for (char c : word) {
    bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
              std::string_view("_./:=@%+,-").find(c) != std::string_view::npos;
    if (!ok) {
      plain = false;
      break;
    }
  }
  if (plain) return word;
  std::string out = "'";
  for (char c : word) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  out += "'";
  return out;
}

namespace {

std::string container_invocation(const LaunchPlan& plan, const LaunchTemplate& tmpl) {
  std::string out = shell_quote(tmpl.runtime) + " run " + shell_quote(plan.container.string()) + " --";
  for (const auto& arg : plan.command) out += " " + shell_quote(arg);
  return out;
}

}  // namespace

std::string render_single_node(const LaunchPlan& plan, const LaunchTemplate& tmpl) {
  validate(plan);
  if (plan.nodes != 1) {
    throw Error(Errc::PlanMismatch, "single-node rendering needs nodes == 1, plan has " + std::to_string(plan.nodes));
  }
  return tmpl.thread_env + "=" + std::to_string(plan.threads_per_rank()) + " " +
         container_invocation(plan, tmpl);
}

std::string render_mpi(const LaunchPlan& plan, const LaunchTemplate& tmpl) {
  validate(plan);
  std::string out = shell_quote(tmpl.mpi_launcher);
  for (const auto& flag : tmpl.mpi_flags) out += " " + shell_quote(flag);
  out += " -n " + std::to_string(plan.total_ranks()) + " " + container_invocation(plan, tmpl);
  return out;
}

std::string format_walltime(std::chrono::seconds walltime) {
  long long total = walltime.count();
  if (total < 0) total = 0;
  long long days = total / 86400;
  long long h = (total % 86400) / 3600;
  long long m = (total % 3600) / 60;
  long long s = total % 60;
  char buf[64];
  if (days > 0) {
    std::snprintf(buf, sizeof(buf), "%lld-%02lld:%02lld:%02lld", days, h, m, s);
  } else {
    std::snprintf(buf, sizeof(buf), "%02lld:%02lld:%02lld", h, m, s);
  }
  return buf;
}

std::chrono::seconds parse_walltime(const std::string& text) {
  auto bad = [&] { return Error(Errc::InvalidPlan, "cannot parse walltime '" + text + "'"); };
  long long days = 0;
  std::string rest = text;
  if (auto dash = text.find('-'); dash != std::string::npos) {
    try {
      days = std::stoll(text.substr(0, dash));
    } catch (const std::exception&) {
      throw bad();
    }
    rest = text.substr(dash + 1);
  }
  std::vector<long long> fields;
  std::stringstream in(rest);
  std::string part;
  while (std::getline(in, part, ':')) {
    if (part.empty() || part.find_first_not_of("0123456789") != std::string::npos) throw bad();
    fields.push_back(std::stoll(part));
  }
  if (fields.empty() || fields.size() > 3) throw bad();
  long long seconds = 0;
  if (days > 0 || text.find('-') != std::string::npos) {
    // D-HH[:MM[:SS]]
    long long mult[] = {3600, 60, 1};
    for (std::size_t i = 0; i < fields.size(); ++i) seconds += fields[i] * mult[i];
  } else if (fields.size() == 1) {
    seconds = fields[0] * 60;  // minutes
  } else if (fields.size() == 2) {
    seconds = fields[0] * 60 + fields[1];
  } else {
    seconds = fields[0] * 3600 + fields[1] * 60 + fields[2];
  }
  return std::chrono::seconds(days * 86400 + seconds);
}

std::string render_slurm(const LaunchPlan& plan, const LaunchTemplate& tmpl) {
  validate(plan);
  const unsigned threads = plan.threads_per_rank();
  const bool single = plan.nodes == 1 && plan.ranks_per_node == 1;
  std::ostringstream s;
  s << "#!/bin/bash\n";
  s << "#SBATCH --job-name=" << plan.job_name << "\n";
  s << "#SBATCH --nodes=" << plan.nodes << "\n";
  s << "#SBATCH --ntasks-per-node=" << plan.ranks_per_node << "\n";
  s << "#SBATCH --cpus-per-task=" << threads << "\n";
  s << "#SBATCH --time=" << format_walltime(plan.walltime) << "\n";
  s << "\n";
  if (!tmpl.module_name.empty()) s << "module load " << tmpl.module_name << "\n";
  if (single) {
    s << "\n" << render_single_node(plan, tmpl) << "\n";
  } else {
    s << "export " << tmpl.thread_env << "=" << threads << "\n";
    s << "\n" << render_mpi(plan, tmpl) << "\n";
  }
  return s.str();
}

}  // namespace udss
