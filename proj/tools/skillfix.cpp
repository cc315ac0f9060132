#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "skillfix/artifact.hpp"
#include "skillfix/localize.hpp"
#include "skillfix/repair.hpp"
#include "skillfix/tasks.hpp"
#include "skillfix/verifier.hpp"

namespace {

using namespace skillfix;

// Exit codes are part of the interface: scripts branch on them.
constexpr int kOk = 0;          // command succeeded / verdict Success
constexpr int kTaskFailure = 1; // verdict Failure, failed validation, no fix
constexpr int kUsage = 2;       // bad flags, unknown template or method
constexpr int kBadInput = 3;    // unreadable or malformed artifact text

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
}

RepairMode mode_from_string(const std::string& s) {
  if (s == "full") return RepairMode::Full;
  if (s == "no_localization") return RepairMode::NoLocalization;
  if (s == "unconstrained") return RepairMode::Unconstrained;
  if (s == "text_only_rewrite") return RepairMode::TextOnlyRewrite;
  throw std::runtime_error("unknown mode '" + s + "'");
}

// Configuration file (JSON), resolved from --config or SKILLFIX_CONFIG.
// Absent keys keep their defaults; unknown keys are rejected so a typo
// cannot silently run with defaults.
RepairConfig load_config(const std::string& explicit_path) {
  std::string path = explicit_path;
  if (path.empty()) {
    if (const char* env = std::getenv("SKILLFIX_CONFIG")) path = env;
  }
  RepairConfig cfg;
  if (path.empty()) return cfg;

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("config '" + path + "': " + e.what());
  }
  if (!j.is_object()) {
    throw std::runtime_error("config '" + path + "': expected an object");
  }
  for (const auto& [key, value] : j.items()) {
    if (key == "lambda") cfg.lambda = value.get<double>();
    else if (key == "gamma") cfg.gamma = value.get<double>();
    else if (key == "K") cfg.K = value.get<int>();
    else if (key == "max_rounds") cfg.max_rounds = value.get<int>();
    else if (key == "per_round_edit_budget") cfg.per_round_edit_budget = value.get<int>();
    else if (key == "per_operator_cap") cfg.per_operator_cap = value.get<int>();
    else if (key == "rng_seed") cfg.rng_seed = value.get<std::uint64_t>();
    else if (key == "mode") cfg.mode = mode_from_string(value.get<std::string>());
    else if (key == "budgets") {
      for (const auto& [bk, bv] : value.items()) {
        if (bk == "max_total_actions") cfg.budgets.max_total_actions = bv.get<int>();
        else if (bk == "requery_window") cfg.budgets.requery_window = bv.get<int>();
        else if (bk == "max_repeats_without_progress")
          cfg.budgets.max_repeats_without_progress = bv.get<int>();
        else throw std::runtime_error("config: unknown budgets key '" + bk + "'");
      }
    } else {
      throw std::runtime_error("config: unknown key '" + key + "'");
    }
  }
  return cfg;
}

// Parses an artifact file, translating the error into an exit code the
// caller returns directly. Validation subtleties stay in cmd_validate; every
// other command just needs a usable artifact or a clean refusal.
int parse_or_status(const std::string& path, SkillArtifact& out) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  try {
    out = parse_artifact(text);
  } catch (const ParseError& e) {
    std::cerr << "error: " << path << ": " << e.what() << " (at byte "
              << e.position << ")\n";
    return kBadInput;
  } catch (const SchemaError& e) {
    std::cerr << "error: " << path << ": " << e.what() << "\n";
    return kBadInput;
  }
  return kOk;
}

int require_template(const std::string& tid) {
  ensure_builtin_templates();
  if (!has_template(tid)) {
    std::cerr << "error: unknown template '" << tid << "'\n";
    return kUsage;
  }
  return kOk;
}

int cmd_validate(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }

  SkillArtifact artifact;
  try {
    artifact = parse_artifact(text);
  } catch (const ParseError& e) {
    std::cout << "parse error: " << e.what() << " (at byte " << e.position
              << ")\n";
    return kBadInput;
  } catch (const SchemaError& e) {
    std::cout << e.path << ": " << e.reason << "\n";
    return kTaskFailure;
  }

  const std::vector<Violation> violations = validate_schema(artifact);
  for (const Violation& v : violations) {
    std::cout << v.path << ": " << v.reason << "\n";
  }
  if (!violations.empty()) return kTaskFailure;
  std::cout << "ok: " << canonical_digest(artifact) << "\n";
  return kOk;
}

int cmd_run(const std::string& path, const std::string& tid, std::uint64_t seed,
            std::uint64_t variation, const std::string& trace_out) {
  SkillArtifact artifact;
  if (int rc = parse_or_status(path, artifact); rc != kOk) return rc;
  if (int rc = require_template(tid); rc != kOk) return rc;

  EnvState env = init_env(tid, seed, variation);
  auto [trace, verdict] = execute_artifact(artifact, env, default_budgets(artifact));

  std::optional<nlohmann::json> diagnosis;
  if (!verdict.success) {
    diagnosis = to_json(localize(artifact, trace, verdict));
  }
  if (!trace_out.empty()) {
    std::ofstream out(trace_out, std::ios::binary);
    if (!out) {
      std::cerr << "error: cannot write '" << trace_out << "'\n";
      return kUsage;
    }
    write_trace(trace, verdict, canonical_digest(artifact), diagnosis, out);
  }

  if (verdict.success) {
    std::cout << "verdict=Success steps=" << artifact.steps.size()
              << " actions=" << trace.total_actions << "\n";
    return kOk;
  }
  std::cout << "verdict=Failure step=" << verdict.step_index
            << " code=" << to_string(verdict.code)
            << " actions=" << trace.total_actions << "\n";
  return kTaskFailure;
}

int cmd_repair(const std::string& path, const std::string& tid,
               std::uint64_t seed, const std::vector<std::uint64_t>& seeds,
               const std::string& config_path, const std::string& out_path,
               std::string history_path, const std::string& mode) {
  SkillArtifact draft;
  if (int rc = parse_or_status(path, draft); rc != kOk) return rc;
  if (int rc = require_template(tid); rc != kOk) return rc;

  RepairConfig cfg;
  try {
    cfg = load_config(config_path);
    if (!mode.empty()) cfg.mode = mode_from_string(mode);
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }

  auto [inst, gold] = generate_task(tid, seed);
  (void)gold;
  if (!seeds.empty()) inst.spec.repair_seeds = seeds;
  const std::vector<TaskInstance> repair_set = repair_instances(inst);

  std::pair<SkillArtifact, RepairHistory> result =
      cfg.mode == RepairMode::TextOnlyRewrite
          ? run_text_only_rewrite(draft, repair_set, cfg, builtin_seeded_rewriter)
          : repair_loop(draft, repair_set, cfg);
  const RepairHistory& history = result.second;

  for (const RoundRecord& r : history.rounds) {
    double best_j = r.incumbent.j_value;
    for (const CandidateRecord& c : r.candidates) {
      best_j = std::max(best_j, c.score.j_value);
    }
    std::cout << "round=" << r.round << " incumbent_j=" << r.incumbent.j_value
              << " best_j=" << best_j
              << " accepted=" << (r.any_accepted ? "yes" : "no") << "\n";
  }
  std::cout << "final succ=" << history.final_score.succ
            << " j=" << history.final_score.j_value
            << " edit=" << history.final_score.edit << "\n";

  try {
    write_file(out_path, serialize_canonical(result.first) + "\n");
    if (history_path.empty()) history_path = out_path + ".history.jsonl";
    std::ofstream hout(history_path, std::ios::binary);
    if (!hout) throw std::runtime_error("cannot write '" + history_path + "'");
    // Header first so replay tools know what produced the rounds below.
    nlohmann::json header = {
        {"mode", to_string(cfg.mode)},
        {"lambda", cfg.lambda},
        {"gamma", cfg.gamma},
        {"K", cfg.K},
        {"max_rounds", cfg.max_rounds},
        {"draft_digest", canonical_digest(draft)},
        {"final_digest", canonical_digest(result.first)},
    };
    hout << header.dump() << "\n";
    write_history(history, hout);
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }

  return history.final_score.succ >= 1.0 ? kOk : kTaskFailure;
}

int cmd_eval(const std::vector<std::string>& methods,
             const std::vector<std::string>& templates,
             const std::vector<std::uint64_t>& seeds,
             const std::string& report_out, const std::string& config_path) {
  SuiteConfig sc;
  sc.methods = methods;
  sc.templates = templates;
  if (!seeds.empty()) sc.content_seeds = seeds;
  try {
    sc.repair = load_config(config_path);
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }

  MetricsReport report;
  try {
    report = eval_suite(sc);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }

  if (!report_out.empty()) {
    try {
      write_file(report_out, to_csv(report));
    } catch (const std::runtime_error& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kUsage;
    }
  }
  std::cout << to_text(report);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"skill artifact toolkit: validate, run, repair, evaluate"};
  app.require_subcommand(1);

  std::string artifact_path, tid, trace_out, config_path, out_path, history_path;
  std::string mode;
  std::uint64_t seed = 1;
  std::uint64_t variation = 0;
  std::vector<std::uint64_t> repair_seeds;
  std::vector<std::string> methods, templates;
  std::vector<std::uint64_t> eval_seeds;
  std::string report_out;

  CLI::App* validate = app.add_subcommand("validate", "check an artifact file");
  validate->add_option("artifact", artifact_path, "artifact JSON file")->required();

  CLI::App* run = app.add_subcommand("run", "execute an artifact once");
  run->add_option("artifact", artifact_path, "artifact JSON file")->required();
  run->add_option("--template", tid, "page template id")->required();
  run->add_option("--seed", seed, "content seed (default 1)");
  run->add_option("--variation", variation, "variation seed (default 0)");
  run->add_option("--trace-out", trace_out, "write the run trace here");

  CLI::App* repair = app.add_subcommand("repair", "repair an artifact");
  repair->add_option("artifact", artifact_path, "artifact JSON file")->required();
  repair->add_option("--template", tid, "page template id")->required();
  repair->add_option("--seed", seed, "content seed (default 1)");
  repair->add_option("--repair-seeds", repair_seeds,
                     "variation seeds to repair on (default 0..4)");
  repair->add_option("--config", config_path, "config file (JSON)");
  repair->add_option("--out", out_path, "write the repaired artifact here")
      ->required();
  repair->add_option("--history-out", history_path,
                     "history file (default <out>.history.jsonl)");
  repair->add_option("--mode", mode,
                     "full | no_localization | unconstrained | text_only_rewrite");

  CLI::App* eval = app.add_subcommand("eval", "run the evaluation suite");
  eval->add_option("--methods", methods, "methods to run (default all)");
  eval->add_option("--templates", templates, "template filter (default all)");
  eval->add_option("--seeds", eval_seeds, "content seeds (default 1)");
  eval->add_option("--report-out", report_out, "write the CSV report here");
  eval->add_option("--config", config_path, "config file (JSON)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (validate->parsed()) return cmd_validate(artifact_path);
    if (run->parsed())
      return cmd_run(artifact_path, tid, seed, variation, trace_out);
    if (repair->parsed())
      return cmd_repair(artifact_path, tid, seed, repair_seeds, config_path,
                        out_path, history_path, mode);
    if (eval->parsed())
      return cmd_eval(methods, templates, eval_seeds, report_out, config_path);
  } catch (const EnvError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kTaskFailure;
  }
  return kUsage;
}
