#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "explainrank/cli/config.hpp"

namespace explainrank::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitService = 2;

enum class Command { kIndex, kRetrieve, kRerank, kDatagen, kRefine, kEval, kCompare };

/// Flags win over file values. `--k` binds to the cutoff of the command at
/// hand: retrieval depth, rerank candidates, samples per pair, or the
/// nDCG cutoff. `--limit` caps the number of sampled seeds.
void apply_overrides(PipelineConfig& config, const Overrides& overrides, Command command);

// Each command writes its outputs plus `<name>.manifest.json` under the
// output directory. Progress goes to `log`; reports go to `out`.
void cmd_index(const PipelineConfig& config, std::ostream& log);
void cmd_retrieve(const PipelineConfig& config, std::ostream& log);
void cmd_rerank(const PipelineConfig& config, const std::filesystem::path& run_in, bool instruct,
                std::ostream& log);
void cmd_datagen(const PipelineConfig& config, std::ostream& log);
void cmd_refine(const PipelineConfig& config, const std::filesystem::path& pairs_in,
                std::optional<int> iter, std::ostream& log);
void cmd_eval(const PipelineConfig& config, const std::vector<std::filesystem::path>& runs,
              std::ostream& out, std::ostream& log);
void cmd_compare(const PipelineConfig& config, const std::filesystem::path& run_a,
                 const std::filesystem::path& run_b, std::ostream& out, std::ostream& log);

/// Full command line without the program name. Returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace explainrank::cli
