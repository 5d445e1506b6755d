#include "ucsbi/external_backend.hpp"

#include "ucsbi/errors.hpp"
#include "ucsbi/lp_format.hpp"

#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

extern char** environ;

namespace ucsbi {

namespace fs = std::filesystem;

SolutionAdapter adapter_from_string(const std::string& s) {
  if (s == "native") return SolutionAdapter::Native;
  if (s == "cbc") return SolutionAdapter::Cbc;
  throw Error(ErrorKind::InvalidConfig, "unknown solution adapter '" + s + "'");
}

namespace {

std::string replace_all(std::string s, const std::string& key, const std::string& value) {
  for (std::size_t p = s.find(key); p != std::string::npos; p = s.find(key, p + value.size()))
    s.replace(p, key.size(), value);
  return s;
}

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''";
    else out += c;
  }
  return out + "'";
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return {};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Owns a mkdtemp directory for one solve.
class TempDir {
 public:
  TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "ucsbi-XXXXXX").string();
    if (!mkdtemp(tmpl.data())) throw Error(ErrorKind::BackendError, "cannot create temporary directory");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

enum class RunOutcome { Exited, TimedOut };

RunOutcome run_shell(const std::string& command, double deadline_seconds, int& exit_code) {
  posix_spawnattr_t attr;
  posix_spawnattr_init(&attr);
  posix_spawnattr_setflags(&attr, POSIX_SPAWN_SETPGROUP);
  posix_spawnattr_setpgroup(&attr, 0);
  const char* argv[] = {"/bin/sh", "-c", command.c_str(), nullptr};
  pid_t pid = 0;
  const int rc = posix_spawn(&pid, "/bin/sh", nullptr, &attr, const_cast<char* const*>(argv), environ);
  posix_spawnattr_destroy(&attr);
  if (rc != 0) throw Error(ErrorKind::BackendError, "cannot spawn /bin/sh");

  const auto start = std::chrono::steady_clock::now();
  auto sleep = std::chrono::microseconds(200);
  int status = 0;
  while (true) {
    const pid_t r = waitpid(pid, &status, WNOHANG);
    if (r == pid) break;
    if (r < 0) throw Error(ErrorKind::BackendError, "waitpid failed");
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (elapsed > deadline_seconds) {
      kill(-pid, SIGKILL);
      waitpid(pid, &status, 0);
      return RunOutcome::TimedOut;
    }
    std::this_thread::sleep_for(sleep);
    sleep = std::min(sleep * 2, std::chrono::microseconds(5000));
  }
  exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + (WIFSIGNALED(status) ? WTERMSIG(status) : 0);
  return RunOutcome::Exited;
}

std::string format_number(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

}  // namespace

MilpSolution external_solve(const MilpInstance& instance, const ExternalSolverConfig& config) {
  std::string solver = config.solver_path;
  if (const char* env = std::getenv("UCSBI_SOLVER"); env && *env) solver = env;
  if (config.command_template.empty()) throw Error(ErrorKind::BackendError, "no solver command configured");

  TempDir dir;
  const fs::path lp_path = dir.path() / "model.lp";
  const fs::path sol_path = dir.path() / "model.sol";
  const fs::path log_path = dir.path() / "solver.log";
  {
    std::ofstream out(lp_path);
    out << export_lp(instance);
    if (!out) throw Error(ErrorKind::BackendError, "cannot write " + lp_path.string());
  }

  const double time_limit = std::max(0.0, config.limits.time_limit);
  std::string cmd = config.command_template;
  cmd = replace_all(cmd, "{solver}", shell_quote(solver));
  cmd = replace_all(cmd, "{lp_path}", shell_quote(lp_path.string()));
  cmd = replace_all(cmd, "{sol_path}", shell_quote(sol_path.string()));
  cmd = replace_all(cmd, "{gap}", format_number(config.limits.mip_gap));
  cmd = replace_all(cmd, "{time_limit}", format_number(time_limit));
  // Grouped so redirections inside the template keep working.
  cmd = "{ " + cmd + "\n} > " + shell_quote(log_path.string()) + " 2>&1";

  int exit_code = 0;
  if (run_shell(cmd, time_limit + config.kill_grace, exit_code) == RunOutcome::TimedOut)
    throw Error(ErrorKind::SolverTimeout, "solver killed after " + format_number(time_limit + config.kill_grace) + " s");
  if (exit_code != 0) {
    std::string log = read_file(log_path);
    if (log.size() > 400) log = log.substr(0, 400);
    throw Error(ErrorKind::BackendError, "solver exited with code " + std::to_string(exit_code) + ": " + log);
  }

  const std::string text = read_file(sol_path);
  if (text.empty()) throw Error(ErrorKind::BackendError, "solver wrote no solution file");
  NamedSolution named;
  switch (config.adapter) {
    case SolutionAdapter::Native: named = parse_native_solution(text); break;
    case SolutionAdapter::Cbc:
      named = parse_cbc_solution(text, read_file(sol_path.string() + ".bin"), instance.constraints.size());
      break;
  }

  MilpSolution sol;
  sol.status = named.status;
  sol.message = named.message;
  if (sol.status == SolveStatus::TimeLimit) throw Error(ErrorKind::SolverTimeout, "solver hit its time limit: " + named.message);
  if (sol.status != SolveStatus::Optimal) return sol;
  sol.primal = to_primal(instance, named);
  // Recomputing from the primal keeps objectives comparable across backends.
  sol.objective = instance.evaluate(sol.primal);
  sol.mip_gap = config.limits.mip_gap;
  if (!std::isfinite(sol.objective)) throw Error(ErrorKind::BackendError, "non-finite objective from solver");
  return sol;
}

std::string locate_cbc() {
  auto usable = [](const std::string& p) { return !p.empty() && access(p.c_str(), X_OK) == 0; };
  if (const char* env = std::getenv("UCSBI_SOLVER"); env && usable(env)) return env;
#ifdef UCSBI_CBC_PATH
  if (usable(UCSBI_CBC_PATH)) return UCSBI_CBC_PATH;
#endif
  if (const char* path = std::getenv("PATH")) {
    std::istringstream dirs(path);
    std::string d;
    while (std::getline(dirs, d, ':'))
      if (usable(d + "/cbc")) return d + "/cbc";
  }
  return {};
}

}  // namespace ucsbi
