#include "udss/cli/dispatch.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "udss/archive.hpp"
#include "udss/bench.hpp"
#include "udss/cli/config.hpp"
#include "udss/error.hpp"
#include "udss/image.hpp"
#include "udss/launcher.hpp"
#include "udss/log.hpp"
#include "udss/rootfs.hpp"
#include "udss/runtime.hpp"
#include "udss/stream.hpp"

namespace udss::cli {

namespace fs = std::filesystem;

namespace {

struct FlattenArgs {
  std::string input;
  std::string output;
  std::string name;
  int level = 6;
  unsigned jobs = 0;
};

struct UnpackArgs {
  std::string archive;
  std::string dest;
  bool overwrite = false;
};

struct RunArgs {
  bool writable = false;
  std::vector<std::string> binds;
  std::string cd;
  std::string env_policy;
  std::vector<std::string> site_binds;
  bool no_default_binds = false;
  std::string rootfs;
  std::vector<std::string> command;
};

struct ProbeArgs {
  bool json = false;
};

struct LaunchArgs {
  unsigned nodes = 1;
  unsigned ranks_per_node = 1;
  unsigned cores = 1;
  unsigned smt = 1;
  std::string container;
  std::vector<std::string> command;
  std::string emit = "cmdline";
  std::string output;
  std::string job_name = "udss-job";
  std::string walltime = "01:00:00";
  std::vector<std::string> mpi_flags;
  std::string runtime = "udss";
  std::string mpi_launcher = "mpirun";
  std::string module = "udss";
};

struct OverheadArgs {
  std::string input;
  double threshold = kDefaultOverheadThreshold;
  std::string format = "csv";
  std::string output;
};

struct MeasureArgs {
  std::string rootfs;
  std::vector<std::string> workload;
  unsigned reps = 3;
  std::string pattern = std::string(kDefaultThroughputPattern);
  std::string name;
  std::vector<std::string> binds;
  std::string output;
};

struct ScaleArgs {
  std::string input;
  std::optional<unsigned> baseline;
  std::string format = "csv";
  std::string output;
  std::string plot;
};

void emit(const std::string& text, const std::string& path, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
    out.flush();
  } else {
    write_file(path, text);
  }
}

std::string image_archive_name(const ImageManifest& manifest, const std::string& override_name) {
  return sanitize_image_name(override_name.empty() ? manifest.image_name : override_name);
}

void pack_image(const fs::path& input, const FlattenArgs& a, std::ostream& out) {
  Image image = open_image(input);
  FlattenedRootfs tree = flatten(image, FlattenOptions{a.jobs});
  add_image_metadata(tree, image.manifest);
  auto archive = pack(tree, image_archive_name(image.manifest, a.name), a.output, PackOptions{a.level});
  log_info("packed " + std::to_string(tree.size()) + " entries from " +
           std::to_string(image.manifest.layers.size()) + " layers");
  out << archive.path.string() << "\n";
}

bool is_image_input(const fs::path& input) {
  try {
    detect_image_format(input);
    return true;
  } catch (const Error& e) {
    if (e.code() == Errc::UnknownFormat) return false;
    throw;
  }
}

int do_pack(const FlattenArgs& a, std::ostream& out) {
  fs::path input(a.input);
  if (fs::is_directory(input) && !is_image_input(input)) {
    FlattenedRootfs tree = load_directory(input);
    std::string name = a.name.empty() ? fs::absolute(input).lexically_normal().filename().string() : a.name;
    if (name.empty()) name = fs::absolute(input).lexically_normal().parent_path().filename().string();
    auto archive = pack(tree, sanitize_image_name(name), a.output, PackOptions{a.level});
    out << archive.path.string() << "\n";
    return kExitOk;
  }
  pack_image(input, a, out);
  return kExitOk;
}

ContainerSpec build_spec(const RunArgs& a, const GlobalConfig& cfg) {
  ContainerSpec spec;
  spec.rootfs = a.rootfs;
  for (const auto& b : a.binds) spec.binds.push_back(parse_bind(b));
  spec.env_policy = cfg.default_env_policy;
  if (!a.cd.empty()) spec.workdir = fs::path(a.cd);
  spec.writable = a.writable;
  spec.command = a.command;
  spec.default_binds = !a.no_default_binds;
  spec.site_bind_dirs = cfg.site_bind_dirs;
  return spec;
}

int do_run(const RunArgs& a, const GlobalConfig& cfg, std::ostream& out, std::ostream& err) {
  try {
    ContainerSpec spec = build_spec(a, cfg);
    validate(spec);
    out.flush();
    err.flush();
    std::cout.flush();
    std::cerr.flush();
    exec(spec);
  } catch (const Error& e) {
    err << "udss: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int do_probe(const ProbeArgs& a, std::ostream& out) {
  CapabilityReport r = probe_support();
  if (a.json) {
    nlohmann::json j{{"user_namespaces", r.user_namespaces},
                     {"detail", r.detail},
                     {"blocking_sysctl", r.blocking_sysctl ? nlohmann::json(*r.blocking_sysctl) : nullptr},
                     {"max_user_namespaces",
                      r.max_user_namespaces ? nlohmann::json(*r.max_user_namespaces) : nullptr},
                     {"max_uid_map_lines", r.max_uid_map_lines},
                     {"overlay", r.overlay},
                     {"nested", r.nested},
                     {"nesting_depth", r.nesting_depth},
                     {"kernel_release", r.kernel_release}};
    out << j.dump(2) << "\n";
  } else {
    out << format_report(r);
  }
  return r.user_namespaces ? kExitOk : kExitFailure;
}

int do_launch(const LaunchArgs& a, std::ostream& out) {
  LaunchPlan plan;
  plan.nodes = a.nodes;
  plan.ranks_per_node = a.ranks_per_node;
  plan.physical_cores_per_node = a.cores;
  plan.threads_per_core = a.smt;
  plan.container = a.container;
  plan.command = a.command;
  plan.job_name = a.job_name;
  plan.walltime = parse_walltime(a.walltime);
  LaunchTemplate tmpl;
  tmpl.runtime = a.runtime;
  tmpl.mpi_launcher = a.mpi_launcher;
  tmpl.mpi_flags = a.mpi_flags;
  tmpl.module_name = a.module;

  std::string text;
  if (a.emit == "slurm") {
    text = render_slurm(plan, tmpl);
  } else if (a.emit == "single") {
    text = render_single_node(plan, tmpl) + "\n";
  } else if (a.emit == "mpi") {
    text = render_mpi(plan, tmpl) + "\n";
  } else {
    bool single = plan.nodes == 1 && plan.ranks_per_node == 1;
    text = (single ? render_single_node(plan, tmpl) : render_mpi(plan, tmpl)) + "\n";
  }
  emit(text, a.output, out);
  return kExitOk;
}

int do_overhead(const OverheadArgs& a, std::ostream& out) {
  auto records = parse_overhead_csv(read_file(a.input));
  OverheadReport report = overhead_report(records, a.threshold);
  emit(a.format == "json" ? to_json(report) : to_csv(report), a.output, out);
  if (report.any_significant()) {
    char pct[32];
    std::snprintf(pct, sizeof(pct), "%g%%", a.threshold * 100);
    log_warn(std::string("overhead above ") + pct + " threshold");
  } else {
    log_info("no significant overhead");
  }
  return kExitOk;
}

int do_measure(const MeasureArgs& a, const GlobalConfig& cfg, std::ostream& out) {
  ContainerSpec spec;
  spec.rootfs = a.rootfs;
  for (const auto& b : a.binds) spec.binds.push_back(parse_bind(b));
  spec.env_policy = cfg.default_env_policy;
  spec.site_bind_dirs = cfg.site_bind_dirs;
  MeasureOptions opts;
  opts.throughput_pattern = a.pattern;
  opts.benchmark_name = a.name;
  OverheadRecord rec = measure_pair(a.workload, spec, a.reps, opts);
  emit(to_csv(std::vector<OverheadRecord>{rec}), a.output, out);
  return kExitOk;
}

int do_scale(const ScaleArgs& a, std::ostream& out) {
  auto series = parse_scaling_csv(read_file(a.input));
  ScalingReport report = scaling_report(series, a.baseline);
  emit(a.format == "json" ? to_json(report) : to_csv(report), a.output, out);
  if (!a.plot.empty()) write_file(a.plot, plot_data_csv(report));
  return kExitOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Unprivileged container toolchain for HPC: flatten, pack, unpack, run, launch, bench",
               "udss"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "udss 0.3.0");

  std::string config_path;
  int verbose = 0;
  app.add_option("--config", config_path, "key=value config file (default: $UDSS_CONFIG)");
  app.add_flag("-v,--verbose", verbose, "More logging; repeat for debug output");

  FlattenArgs flat;
  auto* flatten_cmd = app.add_subcommand("flatten", "Squash an OCI layout or docker-save tar into a rootfs tar.gz");
  flatten_cmd->add_option("image", flat.input, "OCI image-layout directory or docker-save tar")->required();
  flatten_cmd->add_option("output", flat.output, "Output .tar.gz")->required();
  flatten_cmd->add_option("--name", flat.name, "Top-level directory name (default: image name)");
  flatten_cmd->add_option("--level", flat.level, "gzip level")->check(CLI::Range(0, 9))->capture_default_str();
  flatten_cmd->add_option("-j,--jobs", flat.jobs, "Layers decoded concurrently (0: one per CPU)")
      ->capture_default_str();

  FlattenArgs packa;
  auto* pack_cmd = app.add_subcommand("pack", "Archive an unpacked rootfs directory (or an image input)");
  pack_cmd->add_option("input", packa.input, "Rootfs directory or image input")->required();
  pack_cmd->add_option("output", packa.output, "Output .tar.gz")->required();
  pack_cmd->add_option("--name", packa.name, "Top-level directory name (default: input basename)");
  pack_cmd->add_option("--level", packa.level, "gzip level")->check(CLI::Range(0, 9))->capture_default_str();

  UnpackArgs unp;
  auto* unpack_cmd = app.add_subcommand("unpack", "Extract a rootfs tar.gz into DEST/<name>");
  unpack_cmd->add_option("archive", unp.archive, "Rootfs .tar.gz")->required();
  unpack_cmd->add_option("dest", unp.dest, "Existing destination directory")->required();
  unpack_cmd->add_flag("--overwrite", unp.overwrite, "Replace an existing DEST/<name>");

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Run a command in an unpacked rootfs");
  run_cmd->add_flag("-w,--write", run.writable, "Mount the image read-write");
  run_cmd->add_option("-b,--bind", run.binds, "Bind-mount SRC[:DST] (repeatable)")
      ->allow_extra_args(false);
  run_cmd->add_option("-c,--cd", run.cd, "Initial working directory in the container");
  run_cmd->add_option("--env-policy", run.env_policy, "inherit-host, image-config or merged")
      ->check(CLI::IsMember({"inherit-host", "image-config", "merged"}));
  run_cmd->add_option("--site-bind", run.site_binds, "Extra host directory bound at the same path (repeatable)")
      ->allow_extra_args(false);
  run_cmd->add_flag("--no-default-binds", run.no_default_binds, "Skip /dev, /proc, /sys, $HOME and site binds");
  run_cmd->add_option("rootfs", run.rootfs, "Unpacked image directory")->required();
  run_cmd->add_option("command", run.command, "Command and arguments (after --)")->required();

  ProbeArgs probe;
  auto* probe_cmd = app.add_subcommand("probe", "Report unprivileged user-namespace support");
  probe_cmd->add_flag("--json", probe.json, "Machine-readable output");

  LaunchArgs la;
  auto* launch_cmd = app.add_subcommand("launch", "Render MPI launch lines and batch scripts");
  launch_cmd->require_subcommand(1);
  auto* plan_cmd = launch_cmd->add_subcommand("plan", "Render a launch plan");
  plan_cmd->add_option("--nodes", la.nodes, "Node count")->required();
  plan_cmd->add_option("--ranks-per-node", la.ranks_per_node, "MPI ranks per node")->capture_default_str();
  plan_cmd->add_option("--cores", la.cores, "Physical cores per node")->required();
  plan_cmd->add_option("--smt", la.smt, "Hardware threads per core")->capture_default_str();
  plan_cmd->add_option("--container", la.container, "Container path on the compute nodes")->required();
  plan_cmd->add_option("--emit", la.emit, "cmdline, single, mpi or slurm")
      ->check(CLI::IsMember({"cmdline", "single", "mpi", "slurm"}))
      ->capture_default_str();
  plan_cmd->add_option("-o,--output", la.output, "Write to file instead of stdout");
  plan_cmd->add_option("--job-name", la.job_name, "Batch job name")->capture_default_str();
  plan_cmd->add_option("--time", la.walltime, "Walltime (Slurm time format)")->capture_default_str();
  plan_cmd->add_option("--mpi-flag", la.mpi_flags, "Extra launcher argument (repeatable)")
      ->allow_extra_args(false);
  plan_cmd->add_option("--runtime", la.runtime, "Runtime executable name")->capture_default_str();
  plan_cmd->add_option("--launcher", la.mpi_launcher, "MPI launcher")->capture_default_str();
  plan_cmd->add_option("--module", la.module, "Module to load in scripts (empty: none)")->capture_default_str();
  plan_cmd->add_option("command", la.command, "Command and arguments (after --)")->required();

  auto* bench_cmd = app.add_subcommand("bench", "Container overhead measurement and reports");
  bench_cmd->require_subcommand(1);
  OverheadArgs ov;
  auto* overhead_cmd = bench_cmd->add_subcommand("overhead", "Throughput and memory deltas from a CSV");
  overhead_cmd->add_option("input", ov.input, "CSV: benchmark,tp_with,tp_without,mem_with,mem_without")
      ->required()
      ->check(CLI::ExistingFile);
  overhead_cmd->add_option("--threshold", ov.threshold, "Significance threshold (fraction)")
      ->capture_default_str();
  overhead_cmd->add_option("--format", ov.format, "csv or json")
      ->check(CLI::IsMember({"csv", "json"}))
      ->capture_default_str();
  overhead_cmd->add_option("-o,--output", ov.output, "Write to file instead of stdout");

  MeasureArgs me;
  auto* measure_cmd = bench_cmd->add_subcommand("measure", "Run a workload natively and in a container");
  measure_cmd->add_option("--rootfs", me.rootfs, "Unpacked image directory")->required();
  measure_cmd->add_option("--reps", me.reps, "Repetitions per side")->check(CLI::PositiveNumber)
      ->capture_default_str();
  measure_cmd->add_option("--pattern", me.pattern, "Regex; first group is the throughput");
  measure_cmd->add_option("--name", me.name, "Benchmark name (default: workload basename)");
  measure_cmd->add_option("-b,--bind", me.binds, "Bind-mount SRC[:DST] in the container (repeatable)")
      ->allow_extra_args(false);
  measure_cmd->add_option("-o,--output", me.output, "Write to file instead of stdout");
  measure_cmd->add_option("workload", me.workload, "Workload command (after --)")->required();

  ScaleArgs sc;
  auto* scale_cmd = app.add_subcommand("scale-report", "Speedup and efficiency from epoch times");
  scale_cmd->add_option("input", sc.input, "CSV: nodes,epoch_time_s")->required()->check(CLI::ExistingFile);
  scale_cmd->add_option("--baseline", sc.baseline, "Baseline node count (default: smallest)");
  scale_cmd->add_option("--format", sc.format, "csv or json")
      ->check(CLI::IsMember({"csv", "json"}))
      ->capture_default_str();
  scale_cmd->add_option("-o,--output", sc.output, "Write to file instead of stdout");
  scale_cmd->add_option("--plot", sc.plot, "Also write nodes,measured_speedup,linear_speedup data here");

  std::vector<std::string> args(argv.size() > 1 ? argv.begin() + 1 : argv.end(), argv.end());
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::CallForVersion& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "udss: usage: " << e.what() << "\n";
    err << "Run with --help for more information.\n";
    return kExitUsage;
  }

  GlobalConfig cfg;
  try {
    ConfigLayer flags;
    if (verbose > 0) flags.verbosity = verbose == 1 ? "info" : "debug";
    if (!run.env_policy.empty()) flags.default_env_policy = run.env_policy;
    if (!run.site_binds.empty()) {
      std::string joined;
      for (const auto& d : run.site_binds) joined += (joined.empty() ? "" : ":") + d;
      flags.site_bind_dirs = joined;
    }
    std::optional<fs::path> flag_path;
    if (!config_path.empty()) flag_path = config_path;
    cfg = load_config(flags, flag_path, process_getenv());
  } catch (const Error& e) {
    err << "udss: usage: " << e.message() << "\n";
    return kExitUsage;
  }
  set_log_level(cfg.verbosity);

  if (run_cmd->parsed()) return do_run(run, cfg, out, err);

  try {
    if (flatten_cmd->parsed()) {
      pack_image(flat.input, flat, out);
      return kExitOk;
    }
    if (pack_cmd->parsed()) return do_pack(packa, out);
    if (unpack_cmd->parsed()) {
      fs::path root = unpack(inspect_archive(unp.archive), unp.dest, unp.overwrite);
      out << root.string() << "\n";
      return kExitOk;
    }
    if (probe_cmd->parsed()) return do_probe(probe, out);
    if (plan_cmd->parsed()) return do_launch(la, out);
    if (overhead_cmd->parsed()) return do_overhead(ov, out);
    if (measure_cmd->parsed()) return do_measure(me, cfg, out);
    if (scale_cmd->parsed()) return do_scale(sc, out);
  } catch (const Error& e) {
    err << "udss: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "udss: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace udss::cli
