#include "dmpes/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dmpes/model_io.hpp"

namespace dmpes {
namespace {

struct Options {
  std::string config;
  std::string out;
  long long seed = -1;
  int workers = 0;
  std::string format = "text";
  std::string suite = "all";
};

void add_common(CLI::App* cmd, Options& opt, bool needs_out) {
  cmd->add_option("--config", opt.config, "Configuration file")->required();
  auto* out = cmd->add_option("--out", opt.out, "Output path");
  if (needs_out) out->required();
  cmd->add_option("--seed", opt.seed, "Seed override")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--workers", opt.workers, "Worker threads (0 = auto)");
  cmd->add_option("--format", opt.format, "Output format")
      ->check(CLI::IsMember({"json", "csv", "text"}));
  cmd->add_option("--suite", opt.suite, "Claim suite")
      ->check(CLI::IsMember(
          {"all", "invariance", "thm31", "epbr", "variance", "conditional"}));
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << content;
  if (!out) throw ConfigError("failed while writing '" + path + "'");
}

ExperimentConfig load_config(const Options& opt) {
  ExperimentConfig config = load_experiment(opt.config);
  if (opt.seed >= 0) config.seed = static_cast<std::uint64_t>(opt.seed);
  return config;
}

Sample draw_config_panel(const ExperimentConfig& config) {
  config.check();
  if (config.model) {
    return draw_panel(*config.model, config.sizes.treated,
                      config.sizes.control, config.allocation, config.seed,
                      0);
  }
  return draw_conditional_panel(*config.conditional, config.sizes.treated,
                                config.sizes.control, config.allocation,
                                config.seed, 0);
}

int run_validate(const Options& opt) {
  const Json doc = load_json_file(opt.config);
  ValidationReport report;
  std::string kind;
  if (is_conditional_model_json(doc)) {
    report = validate(conditional_from_json(doc));
    kind = "conditional model";
  } else if (doc.contains("components")) {
    report = validate(model_from_json(doc));
    kind = "model";
  } else {
    const ExperimentConfig config = load_experiment(opt.config);
    config.check();
    report = config.model ? validate(*config.model)
                          : validate(*config.conditional);
    kind = "experiment model";
  }
  if (opt.format == "json") {
    Json j;
    j["ok"] = report.ok();
    Json violations = Json::array();
    for (const Violation& v : report.violations) {
      Json jv;
      jv["condition"] = v.condition;
      jv["detail"] = v.detail;
      jv["residual"] = v.residual;
      violations.push_back(std::move(jv));
    }
    j["violations"] = std::move(violations);
    std::cout << j.dump(2) << "\n";
  } else {
    if (report.ok()) {
      std::cout << kind << " ok\n";
    } else {
      std::cout << report.summary() << "\n";
    }
  }
  if (!report.ok()) {
    std::cerr << "invalid " << kind << ": "
              << report.violations.front().condition << "\n";
    return 2;
  }
  return 0;
}

Json panel_json(const Sample& panel) {
  Json j;
  Json t = Json::array(), c = Json::array();
  for (Eigen::Index i = 0; i < panel.treated.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index k = 0; k < panel.treated.cols(); ++k) {
      row.push_back(panel.treated(i, k));
    }
    t.push_back(std::move(row));
  }
  for (Eigen::Index i = 0; i < panel.control.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index k = 0; k < panel.control.cols(); ++k) {
      row.push_back(panel.control(i, k));
    }
    c.push_back(std::move(row));
  }
  j["treated"] = std::move(t);
  j["control"] = std::move(c);
  j["treated_component"] = panel.treated_component;
  j["control_component"] = panel.control_component;
  return j;
}

int run_sample(const Options& opt) {
  const ExperimentConfig config = load_config(opt);
  const Sample panel = draw_config_panel(config);
  if (opt.format == "json") {
    write_file(opt.out, panel_json(panel).dump(2) + "\n");
  } else {
    std::ostringstream os;
    write_panel_csv(os, panel);
    write_file(opt.out, os.str());
  }
  std::cout << "wrote " << panel.n_treated() << " treated and "
            << panel.n_control() << " control rows to " << opt.out << "\n";
  return 0;
}

struct BalanceLine {
  double along = 0.0;
  double orthogonal = 0.0;
};

BalanceLine balance_of(const Metric& metric, const Vector& gap) {
  const Eigen::LLT<Matrix> llt(metric.pooled_covariance);
  const Vector wg = llt.matrixL().solve(gap);
  BalanceLine line;
  if (metric.discriminant.is_zero()) {
    line.orthogonal = wg.norm();
    return line;
  }
  const Vector wd_raw =
      llt.matrixL().transpose() * metric.discriminant.coefficients();
  const Vector wd = wd_raw / wd_raw.norm();
  line.along = wd.dot(wg);
  line.orthogonal = (wg - wd * line.along).norm();
  return line;
}

bool has_csv_extension(const std::string& path) {
  return std::filesystem::path(path).extension() == ".csv";
}

int run_match(const Options& opt) {
  Sample panel;
  MatchSpec spec;
  if (has_csv_extension(opt.config)) {
    panel = load_panel_csv(opt.config);
  } else {
    const ExperimentConfig config = load_config(opt);
    panel = draw_config_panel(config);
    spec = config.methods.front();
    if (spec.matched_treated < 0) {
      spec.matched_treated = config.sizes.matched_treated;
    }
    if (spec.matched_control < 0) {
      spec.matched_control = config.sizes.matched_control;
    }
    if (spec.method == MatchMethod::kConditional &&
        spec.special_columns.empty() && config.conditional) {
      spec.special_columns = config.conditional->special_columns();
    }
  }
  const MatchResult result = run_matcher(panel, spec);

  std::ostringstream os;
  write_match_csv(os, result);
  write_file(opt.out, os.str());

  const Metric metric = estimate_metric(panel);
  const Vector before =
      panel.treated.colwise().mean().transpose() -
      panel.control.colwise().mean().transpose();
  Vector mt = Vector::Zero(panel.dim());
  Vector mc = Vector::Zero(panel.dim());
  for (int i : result.treated_rows) mt += panel.treated.row(i).transpose();
  for (int i : result.control_rows) mc += panel.control.row(i).transpose();
  const Vector after =
      mt / double(result.treated_rows.size()) -
      mc / double(result.control_rows.size());
  const BalanceLine pre = balance_of(metric, before);
  const BalanceLine post = balance_of(metric, after);

  if (opt.format == "json") {
    Json j;
    j["pairs"] = static_cast<int>(result.treated_rows.size());
    j["fallback_pairs"] = static_cast<int>(result.fallback_treated.size());
    j["bias_along_estimated_discriminant"] = {{"before", pre.along},
                                              {"after", post.along}};
    j["bias_orthogonal"] = {{"before", pre.orthogonal},
                            {"after", post.orthogonal}};
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << "pairs: " << result.treated_rows.size() << " (fallback "
              << result.fallback_treated.size() << ")\n";
    std::cout << "standardized bias        before      after\n";
    std::cout << "estimated-Z        " << format_number(pre.along) << "  "
              << format_number(post.along) << "\n";
    std::cout << "orthogonal         " << format_number(pre.orthogonal)
              << "  " << format_number(post.orthogonal) << "\n";
  }
  return 0;
}

int render_and_write(const VerificationReport& report,
                     const ReplicationStats* stats, const Options& opt) {
  if (!opt.out.empty()) {
    std::filesystem::create_directories(opt.out);
    const std::string base = opt.out + "/";
    write_file(base + "report.json", to_json(report).dump(2) + "\n");
    write_file(base + "report.txt", render_text(report));
    write_file(base + "directions.csv", render_directions_csv(report));
    if (stats) {
      write_file(base + "raw_stats.json", to_json(*stats).dump() + "\n");
    }
  }
  if (opt.format == "json") {
    std::cout << to_json(report).dump(2) << "\n";
  } else if (opt.format == "csv") {
    std::cout << render_directions_csv(report);
  } else {
    std::cout << render_text(report);
  }
  return report.all_pass() ? 0 : 1;
}

int run_verify(const Options& opt) {
  const ExperimentConfig config = load_config(opt);
  const Suite suite = parse_suite(opt.suite);
  const ReplicationStats stats = run_experiment(config, opt.workers);
  const VerificationReport report = verify(stats, suite);
  return render_and_write(report, &stats, opt);
}

int run_report(const Options& opt) {
  const Json doc = load_json_file(opt.config);
  const ReplicationStats stats = stats_from_json(doc);
  const Suite suite = parse_suite(opt.suite);
  const VerificationReport report = verify(stats, suite);
  return render_and_write(report, nullptr, opt);
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Discriminant-mixture matched sampling toolkit"};
  app.require_subcommand(1);

  Options validate_opt, sample_opt, match_opt, verify_opt, report_opt;
  CLI::App* validate_cmd =
      app.add_subcommand("validate", "Check a model or experiment file");
  add_common(validate_cmd, validate_opt, false);
  CLI::App* sample_cmd =
      app.add_subcommand("sample", "Draw one panel from a configuration");
  add_common(sample_cmd, sample_opt, true);
  CLI::App* match_cmd =
      app.add_subcommand("match", "Match one drawn panel and write pairs");
  add_common(match_cmd, match_opt, true);
  CLI::App* verify_cmd = app.add_subcommand(
      "verify", "Run the replication harness and evaluate every claim");
  add_common(verify_cmd, verify_opt, false);
  CLI::App* report_cmd = app.add_subcommand(
      "report", "Re-render a report from stored replication stats");
  add_common(report_cmd, report_opt, false);

  std::vector<std::string> full;
  full.reserve(args.size() + 1);
  full.push_back("dmpes");
  full.insert(full.end(), args.begin(), args.end());
  std::vector<char*> argv;
  argv.reserve(full.size());
  for (std::string& s : full) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (validate_cmd->parsed()) return run_validate(validate_opt);
    if (sample_cmd->parsed()) return run_sample(sample_opt);
    if (match_cmd->parsed()) return run_match(match_opt);
    if (verify_cmd->parsed()) return run_verify(verify_opt);
    if (report_cmd->parsed()) return run_report(report_opt);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  std::cerr << "error: no subcommand\n";
  return 2;
}

}  // namespace dmpes
