#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace geoperc::cli {

inline constexpr std::uint64_t kDefaultSeed = 7;

enum ExitCode : int { kOk = 0, kUsageError = 1, kDataError = 2 };

struct Diagnostic {
  std::string file;
  std::size_t line = 0;  // 1-based; 0 when the defect is not tied to a line
  std::string defect;
};

std::string to_string(const Diagnostic& d);

struct RunConfig {
  std::string subcommand;

  std::string pred;
  std::string gt;
  std::string classes;
  std::string scenes;
  std::string annotations;
  std::string samples;
  std::string config;

  std::string out;
  std::string report;
  std::string markdown;
  std::string tasks_out;
  std::string marked_dir;
  std::string params_out;

  double iou = 0.0;
  double fps = 1.0;
  int window = 4;
  double tolerance = 0.10;
  std::size_t max_samples = 0;
  std::string mode = "both";
  bool pool_medians = false;
  std::uint64_t seed = kDefaultSeed;
  bool strict = false;
  int threads = 0;  // 0: GEOPERC_THREADS or 1

  bool grad_check = false;
  int grad_configs = 10;
  double grad_step = 1e-5;
  double grad_tol = 1e-5;

  bool validate_only = false;
};

/// Schema checks of every file the subcommand reads, before any compute.
std::vector<Diagnostic> validate_inputs(const RunConfig& config);

/// Full command line including argv[0]. Returns an ExitCode.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv);

}  // namespace geoperc::cli
