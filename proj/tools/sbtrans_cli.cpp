#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sbtrans/errors.hpp"
#include "sbtrans/io.hpp"
#include "sbtrans/parallel.hpp"
#include "sbtrans/random.hpp"
#include "sbtrans/sbgp.hpp"
#include "sbtrans/sblm.hpp"
#include "sbtrans/sbqr.hpp"
#include "sbtrans/simlab.hpp"
#include "sbtrans/transform.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace sbtrans;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitConfig = 4;

struct CommonOptions {
  std::string output_dir;
  std::uint64_t seed = 1;
  std::size_t draws = 1000;
  int workers = 0;
};

struct DataOptions {
  std::string data_path;
  std::string response = "y";
  std::vector<std::string> covariates;
  std::string query_path;
  bool linear_tails = false;
};

struct SblmOptions {
  double psi = 0.0;
  std::string approx = "prior";
  bool sir = false;
  std::size_t sir_keep = 0;
  std::size_t prior_draws = 1000;
};

struct SbqrOptions {
  double tau = 0.5;
  std::string approx = "prior";
  std::size_t burn_in = 1000;
  std::size_t mixing_draws = 100;
};

struct SbgpOptions {
  std::string mode = "fast";
  double smoothness = 0.0;
};

struct SimulateOptions {
  std::string design = "beta";
  std::string method = "sblm";
  std::size_t n = 200;
  std::size_t p = 50;
  std::size_t replicates = 20;
  std::size_t n_test = 1000;
  double tau = 0.5;
  double level = 0.9;
  double error_sd = 1.0;
};

struct ExportOptions {
  std::string archive_path;
  long long draw = -1;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

fs::path resolve_output_dir(const std::string& flag) {
  fs::path dir = ".";
  if (!flag.empty()) {
    dir = flag;
  } else if (const char* env = std::getenv("SBTRANS_OUTPUT_DIR"); env != nullptr && *env != '\0') {
    dir = env;
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InputError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

ApproxSource parse_approx(const std::string& name) {
  if (name == "prior") return ApproxSource::Prior;
  if (name == "laplace") return ApproxSource::LaplacePlugin;
  throw ConfigError("unknown approximation '" + name + "' (expected prior or laplace)");
}

TailPolicy tails_of(const DataOptions& d) { return d.linear_tails ? TailPolicy::Linear : TailPolicy::Clamp; }

// Semantic inputs shared by every model run. Output location and worker count
// are excluded because they do not change the draws.
json data_config(const DataOptions& d, const CommonOptions& c) {
  json j = {{"response", d.response},
            {"covariates", d.covariates},
            {"data_fnv1a64", hex64(fnv1a64(read_file(d.data_path)))},
            {"linear_tails", d.linear_tails},
            {"seed", c.seed},
            {"draws", c.draws}};
  if (!d.query_path.empty()) j["query_fnv1a64"] = hex64(fnv1a64(read_file(d.query_path)));
  return j;
}

struct Loaded {
  Dataset data;
  Eigen::MatrixXd query;
};

Loaded load(const DataOptions& d) {
  Loaded out;
  out.data = ingest_csv(d.data_path, d.response, d.covariates);
  out.data.validate();
  out.query = d.query_path.empty() ? out.data.X : read_query_csv(d.query_path, out.data.covariate_names);
  if (out.query.cols() != out.data.X.cols()) throw InputError("query columns do not match the covariates");
  return out;
}

void banner(const std::string& model, const DrawArchive& a) {
  std::cout << model << " seed=" << a.seed << " config_hash=" << hex64(a.config_hash) << " n=" << a.n
            << " d=" << a.d << " S=" << a.S << '\n';
}

void persist(const fs::path& dir, DrawArchive& archive, const json& config) {
  archive.config = config.dump();
  archive.config_hash = config_hash(archive.config);
  banner(archive.model, archive);
  write_archive((dir / (archive.model + "_draws.sbta")).string(), archive);
  std::ofstream summary(dir / (archive.model + "_summary.csv"));
  if (!summary) throw InputError("cannot write summary to " + dir.string());
  write_summary_csv(summary, archive.theta, archive.sigma, archive.predictive);
}

template <class T>
std::vector<T> pick(const std::vector<T>& v, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(v[i]);
  return out;
}

Eigen::MatrixXd pick_rows(const Eigen::MatrixXd& m, const std::vector<std::size_t>& idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = m.row(static_cast<Eigen::Index>(idx[k]));
  return out;
}

void run_sblm(const CommonOptions& c, const DataOptions& d, const SblmOptions& o) {
  SblmConfig cfg;
  if (o.psi > 0.0) cfg.psi = o.psi;
  cfg.approx_source = parse_approx(o.approx);
  cfg.num_draws = c.draws;
  cfg.sir_enabled = o.sir;
  cfg.sir_keep = o.sir_keep;
  cfg.prior_draws = o.prior_draws;
  cfg.tails = tails_of(d);
  cfg.validate();
  const fs::path dir = resolve_output_dir(c.output_dir);
  const Loaded in = load(d);
  json config = data_config(d, c);
  config["model"] = "sblm";
  config["psi"] = cfg.psi_for(in.data.n());
  config["approx"] = o.approx;
  config["sir"] = o.sir;
  if (o.sir) config["sir_keep"] = cfg.sir_keep_for();
  config["prior_draws"] = o.prior_draws;

  SblmDraws draws = sblm_run(in.data, cfg, in.query, RandomStream(c.seed));
  DrawArchive a;
  a.model = "sblm";
  a.n = in.data.n();
  a.d = in.data.d();
  a.seed = c.seed;
  if (draws.sir) {
    const auto& idx = draws.sir->indices;
    a.theta = pick_rows(draws.theta, idx);
    a.sigma = pick_rows(draws.sigma, idx).col(0);
    a.predictive = pick_rows(draws.predictive, idx);
    a.g_draws = pick(draws.g_draws, idx);
    std::cout << "sir ess=" << draws.sir->ess << " of " << c.draws << '\n';
  } else {
    a.theta = std::move(draws.theta);
    a.sigma = std::move(draws.sigma);
    a.predictive = std::move(draws.predictive);
    a.g_draws = std::move(draws.g_draws);
  }
  a.S = static_cast<std::uint64_t>(a.theta.rows());
  persist(dir, a, config);
}

void run_sbqr(const CommonOptions& c, const DataOptions& d, const SbqrOptions& o) {
  SbqrConfig cfg;
  cfg.tau = o.tau;
  cfg.approx_source = parse_approx(o.approx);
  cfg.num_draws = c.draws;
  cfg.burn_in = o.burn_in;
  cfg.S_xi = o.mixing_draws;
  cfg.tails = tails_of(d);
  cfg.validate();
  const fs::path dir = resolve_output_dir(c.output_dir);
  const Loaded in = load(d);
  json config = data_config(d, c);
  config["model"] = "sbqr";
  config["tau"] = o.tau;
  config["approx"] = o.approx;
  config["burn_in"] = o.burn_in;
  config["mixing_draws"] = o.mixing_draws;

  SbqrDraws draws = sbqr_run(in.data, cfg, in.query, RandomStream(c.seed));
  DrawArchive a;
  a.model = "sbqr";
  a.n = in.data.n();
  a.d = in.data.d();
  a.S = c.draws;
  a.seed = c.seed;
  a.theta = std::move(draws.theta);
  a.predictive = std::move(draws.predictive);
  a.g_draws = std::move(draws.g_draws);
  persist(dir, a, config);

  std::ofstream q(dir / "sbqr_quantiles.csv");
  if (!q) throw InputError("cannot write quantile estimates to " + dir.string());
  q.precision(10);
  q << "index,quantile\n";
  for (Eigen::Index i = 0; i < draws.quantile_estimates.size(); ++i) q << i << ',' << draws.quantile_estimates[i] << '\n';
}

void run_sbgp(const CommonOptions& c, const DataOptions& d, const SbgpOptions& o) {
  SbgpConfig cfg;
  cfg.num_draws = c.draws;
  if (o.mode == "fast") {
    cfg.mode = SbgpMode::Fast;
  } else if (o.mode == "sample-f") {
    cfg.mode = SbgpMode::SampleF;
  } else {
    throw ConfigError("unknown sbgp mode '" + o.mode + "' (expected fast or sample-f)");
  }
  if (o.smoothness > 0.0) cfg.fit.smoothness = o.smoothness;
  cfg.tails = tails_of(d);
  cfg.validate();
  const fs::path dir = resolve_output_dir(c.output_dir);
  const Loaded in = load(d);
  json config = data_config(d, c);
  config["model"] = "sbgp";
  config["mode"] = o.mode;
  if (o.smoothness > 0.0) config["smoothness"] = o.smoothness;

  SbgpDraws draws = sbgp_run(in.data, in.query, cfg, RandomStream(c.seed));
  const MaternParams& k = draws.fit.params();
  std::cout << "matern smoothness=" << k.smoothness << " range=" << k.range << " variance=" << k.variance
            << " noise_scale=" << k.noise_scale << '\n';
  DrawArchive a;
  a.model = "sbgp";
  a.n = in.data.n();
  a.d = in.data.d();
  a.S = c.draws;
  a.seed = c.seed;
  a.predictive = std::move(draws.predictive);
  a.g_draws = std::move(draws.g_draws);
  persist(dir, a, config);
}

void run_simulate(const CommonOptions& c, const SimulateOptions& o) {
  ExperimentConfig cfg;
  cfg.design = design_preset(o.design, o.n, o.p);
  cfg.design.n_test = o.n_test;
  cfg.design.error_sd = o.error_sd;
  cfg.design_name = o.design;
  cfg.method = parse_method(o.method);
  cfg.replicates = o.replicates;
  cfg.num_draws = c.draws;
  cfg.tau = o.tau;
  cfg.level = o.level;
  cfg.seed = c.seed;
  cfg.validate();
  const fs::path dir = resolve_output_dir(c.output_dir);
  const json config = {{"design", o.design}, {"method", o.method}, {"n", o.n},         {"p", o.p},
                       {"replicates", o.replicates}, {"n_test", o.n_test}, {"tau", o.tau},
                       {"level", o.level},   {"error_sd", o.error_sd}, {"seed", c.seed}, {"draws", c.draws}};
  std::cout << "simulate seed=" << c.seed << " config_hash=" << hex64(config_hash(config.dump())) << " design=" << o.design
            << " method=" << o.method << " replicates=" << o.replicates << '\n';

  const std::vector<MetricReport> reports = run_experiment(cfg);
  const std::string stem = "metrics_" + o.design + "_" + o.method;
  {
    std::ofstream csv(dir / (stem + ".csv"));
    if (!csv) throw InputError("cannot write metrics to " + dir.string());
    write_metrics_csv(csv, reports);
  }
  const fs::path json_path = dir / "metrics.json";
  std::string existing;
  if (fs::exists(json_path)) existing = read_file(json_path.string());
  const std::string summary = metrics_summary_json(o.design, o.method, reports, existing);
  std::ofstream out(json_path);
  if (!out) throw InputError("cannot write " + json_path.string());
  out << summary << '\n';
  std::cout << summary << '\n';
}

void run_export(const CommonOptions& c, const ExportOptions& o) {
  const DrawArchive a = read_archive(o.archive_path);
  if (a.g_draws.empty()) throw InputError("archive holds no transformation draws");
  MonotoneMap g;
  std::string label;
  if (o.draw >= 0) {
    if (static_cast<std::size_t>(o.draw) >= a.g_draws.size()) {
      throw ConfigError("draw index " + std::to_string(o.draw) + " out of range [0, " +
                        std::to_string(a.g_draws.size()) + ")");
    }
    g = a.g_draws[static_cast<std::size_t>(o.draw)];
    label = "draw" + std::to_string(o.draw);
  } else {
    // Pointwise posterior mean at the shared knots.
    const auto t = a.g_draws.front().knots_t();
    std::vector<double> mean(t.size(), 0.0);
    for (const MonotoneMap& draw : a.g_draws) {
      for (std::size_t k = 0; k < t.size(); ++k) mean[k] += draw.knots_g()[k];
    }
    for (double& v : mean) v /= static_cast<double>(a.g_draws.size());
    g = fit_monotone_interpolant(std::vector<double>(t.begin(), t.end()), std::move(mean),
                                 a.g_draws.front().tails());
    label = "mean";
  }
  const fs::path dir = resolve_output_dir(c.output_dir);
  const fs::path path = dir / (a.model + "_transform_" + label + ".csv");
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << format_monotone_map(g);
  std::cout << "wrote " << path.string() << '\n';
}

void add_common(CLI::App* cmd, CommonOptions& c) {
  cmd->add_option("--output-dir", c.output_dir, "Output directory (default $SBTRANS_OUTPUT_DIR, else .)");
  cmd->add_option("--seed", c.seed, "Master seed")->capture_default_str();
  cmd->add_option("--draws", c.draws, "Posterior draws S")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--workers", c.workers, "Worker threads (0 = all cores)")->capture_default_str()->check(
      CLI::NonNegativeNumber);
}

void add_data(CLI::App* cmd, DataOptions& d) {
  cmd->add_option("--data", d.data_path, "Training CSV with a header row")->required();
  cmd->add_option("--response", d.response, "Response column")->capture_default_str();
  cmd->add_option("--covariates", d.covariates, "Covariate columns (default: all others)")->delimiter(',');
  cmd->add_option("--query", d.query_path, "Query covariate CSV (default: training covariates)");
  cmd->add_flag("--linear-tails", d.linear_tails, "Extend transformations linearly beyond the data range");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semiparametric Bayesian transformation regression"};
  app.require_subcommand(1);

  CommonOptions common;
  DataOptions data;
  SblmOptions sblm;
  SbqrOptions sbqr;
  SbgpOptions sbgp;
  SimulateOptions sim;
  ExportOptions exp;

  CLI::App* cmd_sblm = app.add_subcommand("sblm", "Transformation linear regression");
  add_common(cmd_sblm, common);
  add_data(cmd_sblm, data);
  cmd_sblm->add_option("--psi", sblm.psi, "g-prior scale (default n)");
  cmd_sblm->add_option("--approx", sblm.approx, "Latent approximation: prior or laplace")->capture_default_str();
  cmd_sblm->add_flag("--sir", sblm.sir, "Importance-resample the draws");
  cmd_sblm->add_option("--sir-keep", sblm.sir_keep, "Resample size (default draws/2)");
  cmd_sblm->add_option("--prior-draws", sblm.prior_draws, "Prior draws for the importance weights")
      ->capture_default_str();

  CLI::App* cmd_sbqr = app.add_subcommand("sbqr", "Transformation quantile regression");
  add_common(cmd_sbqr, common);
  add_data(cmd_sbqr, data);
  cmd_sbqr->add_option("--tau", sbqr.tau, "Quantile level")->capture_default_str();
  cmd_sbqr->add_option("--approx", sbqr.approx, "Latent approximation: prior or laplace")->capture_default_str();
  cmd_sbqr->add_option("--burn-in", sbqr.burn_in, "Gibbs burn-in iterations")->capture_default_str();
  cmd_sbqr->add_option("--mixing-draws", sbqr.mixing_draws, "Mixing draws in the latent components")
      ->capture_default_str();

  CLI::App* cmd_sbgp = app.add_subcommand("sbgp", "Transformation Gaussian process regression");
  add_common(cmd_sbgp, common);
  add_data(cmd_sbgp, data);
  cmd_sbgp->add_option("--mode", sbgp.mode, "Predictive mode: fast or sample-f")->capture_default_str();
  cmd_sbgp->add_option("--smoothness", sbgp.smoothness, "Fix the Matern smoothness (0.5, 1.5 or 2.5)");

  CLI::App* cmd_sim = app.add_subcommand("simulate", "Simulation study");
  add_common(cmd_sim, common);
  cmd_sim->add_option("--design", sim.design, "beta, step, box-cox, identity or hetero")->capture_default_str();
  cmd_sim->add_option("--method", sim.method, "Method name")->capture_default_str();
  cmd_sim->add_option("--n", sim.n, "Training size")->capture_default_str();
  cmd_sim->add_option("--p", sim.p, "Covariates")->capture_default_str();
  cmd_sim->add_option("--replicates", sim.replicates, "Replicates")->capture_default_str();
  cmd_sim->add_option("--n-test", sim.n_test, "Test size")->capture_default_str();
  cmd_sim->add_option("--tau", sim.tau, "Quantile level for quantile methods")->capture_default_str();
  cmd_sim->add_option("--level", sim.level, "Predictive interval level")->capture_default_str();
  cmd_sim->add_option("--error-sd", sim.error_sd, "Latent error SD")->capture_default_str();

  CLI::App* cmd_export = app.add_subcommand("transform-export", "Write a transformation from an archive as CSV");
  cmd_export->add_option("--archive", exp.archive_path, "Draw archive")->required();
  cmd_export->add_option("--draw", exp.draw, "Draw index (default: posterior mean)");
  cmd_export->add_option("--output-dir", common.output_dir, "Output directory (default $SBTRANS_OUTPUT_DIR, else .)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    set_num_workers(common.workers);
    if (cmd_sblm->parsed()) run_sblm(common, data, sblm);
    if (cmd_sbqr->parsed()) run_sbqr(common, data, sbqr);
    if (cmd_sbgp->parsed()) run_sbgp(common, data, sbgp);
    if (cmd_sim->parsed()) run_simulate(common, sim);
    if (cmd_export->parsed()) run_export(common, exp);
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitInput;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
