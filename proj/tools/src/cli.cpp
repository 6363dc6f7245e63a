#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "explainrank/cli/commands.hpp"
#include "explainrank/error.hpp"

namespace explainrank::cli {

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Explanation-driven LLM reranking pipeline", "explainrank"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  Overrides o;
  std::uint64_t seed = 0;
  std::size_t limit = 0, k = 0;
  int iter = 0, m = 0;
  double alpha = 0, tau = 0;
  std::string out_dir;

  app.add_option("--config", config_path, "Pipeline config (JSON)")->required();
  auto* seed_opt = app.add_option("--seed", seed, "Master RNG seed");
  auto* out_opt = app.add_option("--out", out_dir, "Output directory");

  auto* index = app.add_subcommand("index", "Build or refresh the BM25 index cache");
  auto* retrieve = app.add_subcommand("retrieve", "First-stage retrieval for every query");
  auto* rerank = app.add_subcommand("rerank", "Rerank a run with the student model");
  auto* datagen = app.add_subcommand("datagen", "Build the synthetic distillation dataset");
  auto* refine = app.add_subcommand("refine", "Rejection-sampling refinement data");
  auto* eval = app.add_subcommand("eval", "nDCG per domain for one or more runs");
  auto* compare = app.add_subcommand("compare", "Paired t-test between two runs");

  for (auto* sub : {retrieve, rerank, refine, eval, compare})
    sub->add_option("--k", k, "Cutoff for this command")->check(CLI::PositiveNumber);

  std::string run_in;
  bool instruct = false;
  rerank->add_option("run", run_in, "Run file to rerank")->required();
  rerank->add_flag("--instruct", instruct, "Inject per-domain relevance definitions");
  auto* alpha_opt = rerank->add_option("--alpha", alpha, "Label weight in the hybrid score");

  auto* limit_opt = datagen->add_option("--limit", limit, "Cap on sampled seeds")->check(CLI::PositiveNumber);

  std::string pairs_in;
  refine->add_option("pairs", pairs_in, "Training pairs (JSONL)");
  auto* iter_opt = refine->add_option("--iter", iter, "Run only iteration t")->check(CLI::PositiveNumber);
  auto* tau_opt = refine->add_option("--tau", tau, "Normalized reward threshold");
  auto* m_opt = refine->add_option("--m", m, "Reward scaling power");

  std::vector<std::string> runs;
  eval->add_option("runs", runs, "Run files")->required();
  std::string run_a, run_b;
  compare->add_option("run-a", run_a, "Baseline run")->required();
  compare->add_option("run-b", run_b, "Candidate run")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    std::ostringstream cli_out, cli_err;
    const int code = app.exit(e, cli_out, cli_err);
    out << cli_out.str();
    err << cli_err.str();
    return code == 0 ? kExitOk : kExitValidation;
  }

  if (*seed_opt) o.seed = seed;
  if (*out_opt) o.out = out_dir;
  if (*limit_opt) o.limit = limit;
  if (*iter_opt) o.iter = iter;
  if (*alpha_opt) o.alpha = alpha;
  if (*tau_opt) o.tau = tau;
  if (*m_opt) o.m = m;
  o.instruct = instruct;

  try {
    PipelineConfig config = load_config(config_path);
    Command command;
    CLI::App* sub = app.get_subcommands().front();
    if (sub == index) command = Command::kIndex;
    else if (sub == retrieve) command = Command::kRetrieve;
    else if (sub == rerank) command = Command::kRerank;
    else if (sub == datagen) command = Command::kDatagen;
    else if (sub == refine) command = Command::kRefine;
    else if (sub == eval) command = Command::kEval;
    else command = Command::kCompare;
    if (auto* k_opt = sub->get_option_no_throw("--k"); k_opt && k_opt->count() > 0) o.k = k;
    apply_overrides(config, o, command);
    validate(config);

    switch (command) {
      case Command::kIndex: cmd_index(config, err); break;
      case Command::kRetrieve: cmd_retrieve(config, err); break;
      case Command::kRerank: cmd_rerank(config, run_in, instruct, err); break;
      case Command::kDatagen: cmd_datagen(config, err); break;
      case Command::kRefine: cmd_refine(config, pairs_in, o.iter, err); break;
      case Command::kEval: {
        std::vector<std::filesystem::path> paths(runs.begin(), runs.end());
        cmd_eval(config, paths, out, err);
        break;
      }
      case Command::kCompare: cmd_compare(config, run_a, run_b, out, err); break;
    }
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ServiceError& e) {
    err << "error: " << e.what() << "\n";
    return kExitService;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitOk;
}

}  // namespace explainrank::cli
