#pragma once

#include <iosfwd>

#include "cli.hpp"

namespace geoperc::cli {

// Each command assumes validate_inputs() returned no diagnostics and prints its one-line
// summary to `log`.
int gen_sparse(const RunConfig& cfg, std::ostream& log);
int prompt_emit(const RunConfig& cfg, std::ostream& log);
int eval_grounding(const RunConfig& cfg, std::ostream& log);
int eval_detection(const RunConfig& cfg, std::ostream& log);
int eval_caption(const RunConfig& cfg, std::ostream& log);
int eval_pointmap(const RunConfig& cfg, std::ostream& log);
int fusion_demo(const RunConfig& cfg, std::ostream& log);

}  // namespace geoperc::cli
