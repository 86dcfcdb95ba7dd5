// Multi-call test binary, linked statically so it runs inside bare images.
// Dispatches on the basename of argv[0], or argv[1] when invoked as itself.
#include <fcntl.h>
#include <sys/prctl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <ctime>
#include <cstdio>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

extern char** environ;

namespace {

constexpr const char* kSlowdownFile = "/etc/fixture-slowdown";

int applet_echo(const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) std::cout << (i ? " " : "") << args[i];
  std::cout << "\n";
  return 0;
}

int applet_id(const std::vector<std::string>&) {
  std::cout << "uid=" << getuid() << " gid=" << getgid() << " euid=" << geteuid() << " egid=" << getegid()
            << "\n";
  return 0;
}

int applet_cat(const std::vector<std::string>& args) {
  int rc = 0;
  for (const auto& a : args) {
    std::ifstream in(a, std::ios::binary);
    if (!in) {
      std::cerr << "cat: " << a << ": " << std::strerror(errno) << "\n";
      rc = 1;
      continue;
    }
    std::cout << in.rdbuf();
  }
  return rc;
}

int applet_touch(const std::vector<std::string>& args) {
  int rc = 0;
  for (const auto& a : args) {
    int fd = ::open(a.c_str(), O_WRONLY | O_CREAT, 0644);
    if (fd < 0) {
      std::cerr << "touch: " << a << ": " << std::strerror(errno) << "\n";
      rc = 1;
    } else {
      ::close(fd);
    }
  }
  return rc;
}

int applet_exit(const std::vector<std::string>& args) { return args.empty() ? 0 : std::atoi(args[0].c_str()); }

int applet_sleep(const std::vector<std::string>& args) {
  double s = args.empty() ? 1 : std::atof(args[0].c_str());
  usleep(static_cast<useconds_t>(s * 1e6));
  return 0;
}

int applet_pwd(const std::vector<std::string>&) {
  char buf[4096];
  if (!getcwd(buf, sizeof(buf))) return 1;
  std::cout << buf << "\n";
  return 0;
}

int applet_env(const std::vector<std::string>&) {
  for (char** e = environ; *e; ++e) std::cout << *e << "\n";
  return 0;
}

// Prints the privilege state the runtime promises: no_new_privs set, the
// effective uid, and whether `secret` can be opened.
int applet_selfcheck(const std::vector<std::string>& args) {
  int nnp = prctl(PR_GET_NO_NEW_PRIVS, 0, 0, 0, 0);
  std::cout << "no_new_privs=" << nnp << " euid=" << geteuid() << " uid=" << getuid();
  for (const auto& path : args) {
    int fd = ::open(path.c_str(), O_RDONLY);
    std::cout << " " << path << "=" << (fd >= 0 ? "readable" : "unreadable");
    if (fd >= 0) ::close(fd);
  }
  std::cout << "\n";
  return 0;
}

volatile std::uint64_t g_sink;

std::uint64_t work_item(std::uint64_t seed) {
  std::uint64_t x = seed | 1;
  for (int i = 0; i < 2000; ++i) {
    x ^= x << 13;
    x ^= x >> 7;
    x ^= x << 17;
  }
  return x;
}

double cpu_seconds() {
  timespec t{};
  ::clock_gettime(CLOCK_PROCESS_CPUTIME_ID, &t);
  return static_cast<double>(t.tv_sec) + static_cast<double>(t.tv_nsec) * 1e-9;
}

// Synthetic training step: processes `items` images of fixed cost and reports
// images per CPU second, which keeps time stolen by other tenants of a
// shared host out of the figure. A slowdown factor in /etc/fixture-slowdown (present only
// inside a slowed image) multiplies the per-item cost.
int applet_workload(const std::vector<std::string>& args) {
  long items = args.empty() ? 50000 : std::atol(args[0].c_str());
  double factor = 1.0;
  if (std::ifstream f(kSlowdownFile); f) {
    if (!(f >> factor) || factor <= 0) {
      std::fprintf(stderr, "workload: bad slowdown factor in %s\n", kSlowdownFile);
      return 4;
    }
  }
  long total = static_cast<long>(items * factor);
  double start = cpu_seconds();
  std::uint64_t acc = 0;
  for (long i = 0; i < total; ++i) {
    acc += work_item(static_cast<std::uint64_t>(i));
  }
  g_sink = acc;
  double secs = cpu_seconds() - start;
  std::printf("step done: %ld items\n", items);
  std::printf("throughput: %.3f img/s\n", static_cast<double>(items) / secs);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  std::string name = argc > 0 ? argv[0] : "fixturebox";
  if (auto slash = name.rfind('/'); slash != std::string::npos) name = name.substr(slash + 1);
  int first = 1;
  if (name == "fixturebox") {
    if (argc < 2) {
      std::cerr << "usage: fixturebox APPLET [ARGS...]\n";
      return 2;
    }
    name = argv[1];
    first = 2;
  }
  std::vector<std::string> args(argv + first, argv + argc);
  if (name == "echo") return applet_echo(args);
  if (name == "id") return applet_id(args);
  if (name == "cat") return applet_cat(args);
  if (name == "touch") return applet_touch(args);
  if (name == "exit") return applet_exit(args);
  if (name == "sleep") return applet_sleep(args);
  if (name == "pwd") return applet_pwd(args);
  if (name == "env") return applet_env(args);
  if (name == "selfcheck") return applet_selfcheck(args);
  if (name == "workload") return applet_workload(args);
  if (name == "true") return 0;
  if (name == "false") return 1;
  std::cerr << "fixturebox: unknown applet " << name << "\n";
  return 127;
}
