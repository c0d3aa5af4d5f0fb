#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace trackcouple {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitIo = 3,
  kExitGradcheck = 4,
  kExitDiverged = 5,
};

// "3", "0-9" and comma lists thereof; throws kConfigInvalid.
std::vector<std::uint64_t> parse_seeds(const std::vector<std::string>& specs);

// $TRACKCOUPLE_OUT/<command> when set, else runs/<command>.
std::filesystem::path default_output(const std::string& command);

// ISO-8601 UTC time from SOURCE_DATE_EPOCH, or the epoch itself when unset,
// so identical invocations write identical manifests.
std::string manifest_timestamp();

struct GenOptions {
  std::optional<std::filesystem::path> config;
  std::filesystem::path out;
  std::vector<std::uint64_t> seeds;  // empty: the config's seed
  int jobs = 1;
};
int run_gen(const GenOptions& options, std::ostream& log, std::ostream& err);

struct OptimizeOptions {
  std::filesystem::path scene_dir;  // one scene, or a gen output with seed_* scenes
  std::optional<std::filesystem::path> config;
  std::filesystem::path out;
  std::vector<std::string> ablations{"full"};
  std::vector<std::uint64_t> seeds;  // empty: all scenes
  int jobs = 1;
};
int run_optimize(const OptimizeOptions& options, std::ostream& log, std::ostream& err);

struct EvalOptions {
  std::filesystem::path pred;
  std::filesystem::path gt;
  std::filesystem::path out;
  std::vector<std::string> metrics{"all"};
  bool icp = false;
  double focal = 256.0;
  int rpe_step = 1;
};
int run_eval(const EvalOptions& options, std::ostream& log, std::ostream& err);

struct GradcheckCliOptions {
  std::vector<std::string> fixtures{"random", "noiseless", "dynamic", "selfsup"};
  std::vector<std::uint64_t> seeds{0};
  double h = 1e-5;
  double tol = 1e-4;
  double corruption = 0.0;
  std::optional<std::filesystem::path> out;
};
int run_gradcheck_cli(const GradcheckCliOptions& options, std::ostream& log, std::ostream& err);

}  // namespace trackcouple
