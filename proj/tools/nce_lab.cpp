// nce_lab: command-line front end for the nce library.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nce/nce.hpp"

namespace {

using namespace nce;

struct Common {
  std::string out;
  uint64_t seed = 0;
};

std::vector<int> parse_k_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      size_t pos = 0;
      const int k = std::stoi(item, &pos);
      if (pos != item.size()) throw std::invalid_argument(item);
      if (k < 1) throw ConfigError("--K: every entry must be >= 1");
      out.push_back(k);
    } catch (const std::logic_error&) {
      throw ConfigError("--K: cannot parse '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError("--K: empty list");
  return out;
}

std::pair<double, double> parse_gamma_range(const std::string& s) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw ConfigError("--gamma-range: expected lo:hi");
  try {
    const double lo = std::stod(s.substr(0, colon)), hi = std::stod(s.substr(colon + 1));
    if (!(lo < hi)) throw ConfigError("--gamma-range: need lo < hi");
    return {lo, hi};
  } catch (const std::logic_error&) {
    throw ConfigError("--gamma-range: expected two numbers lo:hi");
  }
}

ObjectiveKind parse_estimator(const std::string& s) {
  if (s == "mle" || s == "ranking" || s == "binary") return parse_objective(s);
  throw ConfigError("--estimator must be mle, ranking or binary, got '" + s + "'");
}

class Run {
 public:
  Run(std::string command, int argc, char** argv, uint64_t seed) : start_(std::chrono::steady_clock::now()) {
    manifest_.command = std::move(command);
    for (int i = 1; i < argc; ++i) manifest_.args.emplace_back(argv[i]);
    manifest_.seed = seed;
  }
  RunManifest& manifest() { return manifest_; }
  void finish(const std::string& out) {
    manifest_.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    write_file(out + ".manifest.json", manifest_.to_json().dump(1) + "\n");
  }

 private:
  RunManifest manifest_;
  std::chrono::steady_clock::time_point start_;
};

std::string stem_path(const std::string& out, const std::string& suffix) {
  const auto dot = out.find_last_of('.');
  const auto slash = out.find_last_of('/');
  if (dot != std::string::npos && (slash == std::string::npos || dot > slash)) return out.substr(0, dot) + suffix;
  return out + suffix;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Noise contrastive estimation lab. Natural logarithms throughout; perplexity is exp(mean NLL)."};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "write a synthetic conditional problem (JSON)");
  int s_d = 4, s_mx = 200, s_my = 100;
  uint64_t s_seed = 0;
  std::string s_out;
  bool s_selfnorm = false;
  double s_scale = 1.0;
  synth->add_option("--d", s_d, "feature dimension")->capture_default_str();
  synth->add_option("--m-x", s_mx, "number of inputs")->capture_default_str();
  synth->add_option("--m-y", s_my, "number of labels")->capture_default_str();
  synth->add_option("--seed", s_seed)->capture_default_str();
  synth->add_option("--out", s_out)->required();
  synth->add_flag("--self-normalized", s_selfnorm, "permuted-feature problem with constant partition function");
  synth->add_option("--scale", s_scale, "feature scale for --self-normalized")->capture_default_str();

  // sample
  auto* sample = app.add_subcommand("sample", "draw a dataset (JSONL) from a problem");
  std::string sa_problem, sa_out, sa_noise = "uniform";
  size_t sa_n = 1000;
  int sa_K = 4;
  uint64_t sa_seed = 0;
  sample->add_option("--problem", sa_problem)->required();
  sample->add_option("--n", sa_n)->capture_default_str();
  sample->add_option("--K", sa_K)->capture_default_str();
  sample->add_option("--noise", sa_noise)->capture_default_str();
  sample->add_option("--seed", sa_seed)->capture_default_str();
  sample->add_option("--out", sa_out)->required();

  // fit
  auto* fitc = app.add_subcommand("fit", "fit an estimator; writes a report JSON and a trace CSV");
  std::string f_problem, f_dataset, f_est = "ranking", f_noise = "uniform", f_out, f_gamma = "-30:30";
  std::string f_K = "4";
  bool f_bias = false;
  double f_alpha = 0.0, f_tol = 1e-8;
  int f_regm = 0, f_iters = 5000, f_restarts = 1;
  size_t f_n = 10000;
  uint64_t f_seed = 0;
  fitc->add_option("--problem", f_problem)->required();
  fitc->add_option("--dataset", f_dataset, "JSONL dataset; sampled from the problem when absent");
  fitc->add_option("--estimator", f_est, "mle, ranking or binary")->capture_default_str();
  fitc->add_option("--K", f_K)->capture_default_str();
  fitc->add_option("--noise", f_noise, "uniform, unigram or unigram-pow:<p>")->capture_default_str();
  fitc->add_flag("--context-bias", f_bias, "add one bias parameter per input");
  fitc->add_option("--reg-alpha", f_alpha)->capture_default_str();
  fitc->add_option("--reg-m", f_regm, "noise draws per example (default m_y/10, at least 1)");
  fitc->add_option("--n", f_n)->capture_default_str();
  fitc->add_option("--seed", f_seed)->capture_default_str();
  fitc->add_option("--gamma-range", f_gamma)->capture_default_str();
  fitc->add_option("--max-iters", f_iters)->capture_default_str();
  fitc->add_option("--tol", f_tol)->capture_default_str();
  fitc->add_option("--restarts", f_restarts)->capture_default_str();
  fitc->add_option("--out", f_out)->required();

  // counterexample
  auto* cex = app.add_subcommand("counterexample", "population fits on the two-input counterexample (CSV)");
  std::string c_K = "1,2,5,10", c_out;
  cex->add_option("--K", c_K)->capture_default_str();
  cex->add_option("--out", c_out)->required();

  // asymptotics
  auto* asym = app.add_subcommand("asymptotics", "asymptotic covariance rate curve (CSV)");
  std::string a_problem, a_est = "binary", a_K = "4,8,16,32,64,128,256,512", a_noise = "uniform", a_mode = "exact",
                         a_out;
  uint64_t a_seed = 0;
  asym->add_option("--problem", a_problem)->required();
  asym->add_option("--estimator", a_est)->capture_default_str();
  asym->add_option("--K", a_K)->capture_default_str();
  asym->add_option("--noise", a_noise)->capture_default_str();
  asym->add_option("--mode", a_mode, "exact or mc:<M>")->capture_default_str();
  asym->add_option("--seed", a_seed)->capture_default_str();
  asym->add_option("--out", a_out)->required();

  // replicate
  auto* rep = app.add_subcommand("replicate", "replication study of sqrt(n)(theta_hat - theta*) (JSON)");
  std::string r_problem, r_est = "mle", r_noise = "uniform", r_out;
  int r_K = 4, r_R = 300;
  size_t r_n = 20000;
  uint64_t r_seed = 0;
  double r_tol = 1e-7;
  rep->add_option("--problem", r_problem)->required();
  rep->add_option("--estimator", r_est)->capture_default_str();
  rep->add_option("--K", r_K)->capture_default_str();
  rep->add_option("--noise", r_noise)->capture_default_str();
  rep->add_option("--n", r_n)->capture_default_str();
  rep->add_option("--replications", r_R)->capture_default_str();
  rep->add_option("--seed", r_seed)->capture_default_str();
  rep->add_option("--tol", r_tol)->capture_default_str();
  rep->add_option("--out", r_out)->required();

  // lm
  auto* lm = app.add_subcommand("lm", "log-bilinear n-gram language model on a text corpus");
  std::string l_corpus, l_est = "ranking", l_noise = "unigram", l_out;
  LmConfig lcfg;
  int l_K = 100, l_regm = 0;
  double l_alpha = 0.0;
  bool l_bias = false, l_fixed_negs = false;
  lm->add_option("--corpus", l_corpus)->required();
  lm->add_option("--estimator", l_est)->capture_default_str();
  lm->add_option("--K", l_K)->capture_default_str();
  lm->add_option("--noise", l_noise)->capture_default_str();
  lm->add_flag("--context-bias", l_bias, "learn c_x (default: c_x = 0)");
  lm->add_option("--reg-alpha", l_alpha)->capture_default_str();
  lm->add_option("--reg-m", l_regm, "noise draws per example (default vocabulary/10)");
  lm->add_option("--dim", lcfg.dim)->capture_default_str();
  lm->add_option("--order", lcfg.order)->capture_default_str();
  lm->add_option("--epochs", lcfg.sgd.epochs)->capture_default_str();
  lm->add_option("--batch", lcfg.sgd.batch_size)->capture_default_str();
  lm->add_option("--lr", lcfg.sgd.learning_rate)->capture_default_str();
  lm->add_option("--decay", lcfg.sgd.decay)->capture_default_str();
  lm->add_flag("--fixed-negatives", l_fixed_negs, "draw negatives once instead of every epoch");
  lm->add_option("--seed", lcfg.seed)->capture_default_str();
  lm->add_option("--out", l_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::kValidation);
  }

  try {
    if (synth->parsed()) {
      Run run("synth", argc, argv, s_seed);
      const ConditionalProblem p = s_selfnorm ? make_self_normalized_problem(s_mx, s_my, s_d, s_seed, s_scale)
                                              : make_synthetic_problem(s_d, s_mx, s_my, s_seed);
      write_problem(s_out, p);
      run.manifest().outputs = {s_out};
      run.finish(s_out);
    } else if (sample->parsed()) {
      Run run("sample", argc, argv, sa_seed);
      run.manifest().add_input(sa_problem);
      const ConditionalProblem p = read_problem(sa_problem);
      const NoiseDistribution noise = noise_for_problem(sa_noise, p);
      const Dataset d = generate_dataset(p, sa_n, SamplingConfig{sa_K, sa_seed, 0}, noise);
      write_file(sa_out, dataset_to_jsonl(d));
      run.manifest().outputs = {sa_out};
      run.finish(sa_out);
    } else if (fitc->parsed()) {
      Run run("fit", argc, argv, f_seed);
      run.manifest().add_input(f_problem);
      const ConditionalProblem p = read_problem(f_problem);
      const NoiseDistribution noise = noise_for_problem(f_noise, p);
      const auto Ks = parse_k_list(f_K);
      if (Ks.size() != 1) throw ConfigError("fit: --K takes a single value");
      Dataset data;
      if (!f_dataset.empty()) {
        run.manifest().add_input(f_dataset);
        data = dataset_from_jsonl(read_file(f_dataset));
        data.validate(p.m_x(), p.m_y());
        if (data.provenance.noise_hash != noise.hash())
          throw ConfigError("--dataset: negatives were drawn from a different noise distribution");
      } else {
        data = generate_dataset(p, f_n, SamplingConfig{Ks[0], f_seed, 0}, noise);
      }
      FitConfig cfg;
      cfg.objective = parse_estimator(f_est);
      cfg.max_iters = f_iters;
      cfg.tol = f_tol;
      std::tie(cfg.gamma_lo, cfg.gamma_hi) = parse_gamma_range(f_gamma);
      cfg.seed = f_seed;
      cfg.K = data.K;
      if (f_alpha > 0.0) {
        RegularizerConfig reg;
        reg.alpha = f_alpha;
        reg.m = f_regm > 0 ? f_regm : std::max(1, p.m_y() / 10);
        reg.seed = f_seed;
        cfg.regularizer = reg;
      }
      ScoringFunction sf = p.model.without_context_bias();
      if (f_bias) sf = sf.with_context_bias();
      EstimationReport r = fit_with_restarts(sf, FitInputs{&data, &p}, noise, cfg, f_restarts);
      const std::string trace = stem_path(f_out, ".trace.csv");
      run.manifest().outputs = {f_out, trace};
      Json j = report_to_json(r);
      j["variant"] = sf.variant_name();
      j["n"] = data.size();
      j["K"] = data.K;
      write_file(f_out, j.dump(1) + "\n");
      std::vector<std::string> rows;
      for (const auto& t : r.trace) {
        std::ostringstream os;
        os.precision(17);
        os << t.iteration << ',' << t.value << ',' << t.grad_norm << ',' << t.step;
        rows.push_back(os.str());
      }
      write_file(trace, csv_with_manifest(run.manifest(), "iter,objective,grad_norm,step", rows));
      run.finish(f_out);
      if (r.metrics) std::printf("kl=%.6g d=%.6g converged=%d\n", r.metrics->kl, r.metrics->d_metric, r.converged);
    } else if (cex->parsed()) {
      Run run("counterexample", argc, argv, 0);
      run.manifest().outputs = {c_out};
      std::vector<std::string> rows;
      std::vector<CounterexampleRow> results;
      for (int K : parse_k_list(c_K)) {
        results.push_back(counterexample_run(K));
        rows.push_back(results.back().csv_row());
      }
      write_file(c_out, csv_with_manifest(run.manifest(), CounterexampleRow::csv_header(), rows));
      run.finish(c_out);
      for (const auto& r : results) {
        std::printf("K=%d binary theta1/theta2=%.6f ranking p(y1|x1)/p(y2|x1)=%.6f\n", r.K, r.binary_ratio,
                    r.ranking_ratio);
        check_counterexample(r);
      }
    } else if (asym->parsed()) {
      Run run("asymptotics", argc, argv, a_seed);
      run.manifest().add_input(a_problem);
      run.manifest().outputs = {a_out};
      const ConditionalProblem p = read_problem(a_problem);
      const NoiseDistribution noise = noise_for_problem(a_noise, p);
      if (a_est != "mle" && a_est != "ranking" && a_est != "binary")
        throw ConfigError("--estimator must be mle, ranking or binary");
      const auto points = efficiency_curve(p, noise, a_est, parse_k_list(a_K), PopulationMode::parse(a_mode, a_seed));
      std::vector<std::string> rows;
      for (const auto& pt : points) rows.push_back(rate_csv_row(a_est, pt));
      write_file(a_out, csv_with_manifest(run.manifest(), rate_csv_header(), rows));
      run.finish(a_out);
    } else if (rep->parsed()) {
      Run run("replicate", argc, argv, r_seed);
      run.manifest().add_input(r_problem);
      run.manifest().outputs = {r_out};
      const ConditionalProblem p = read_problem(r_problem);
      if (!p.truth) throw PreconditionError("replicate: problem has no theta_star");
      if (p.truth->sf.has_context_bias())
        throw PreconditionError("replicate: the context-bias parametrization is not identifiable");
      const NoiseDistribution noise = noise_for_problem(r_noise, p);
      FitConfig cfg;
      cfg.objective = parse_estimator(r_est);
      if (cfg.objective == ObjectiveKind::kBinary) throw ConfigError("replicate supports mle and ranking");
      cfg.tol = r_tol;
      cfg.max_iters = 100000;
      std::optional<Matrix> theory;
      if (cfg.objective == ObjectiveKind::kMle)
        theory = mle_asymptotic_cov(p, p.truth->sf, p.truth->theta).inverse;
      else
        theory = ranking_asymptotic_cov(p, p.truth->sf, p.truth->theta, noise, r_K).inverse;
      const auto seeds = replication_seeds(r_seed, static_cast<size_t>(r_R));
      const auto s = replicate(p, p.truth->sf, p.truth->theta, noise, cfg, r_K, r_n, seeds, theory);
      write_file(r_out, replication_to_json(s).dump(1) + "\n");
      run.finish(r_out);
      std::printf("rel_frobenius=%.4f mse_rel_error=%.4f\n", s.rel_frobenius, s.mse_rel_error);
    } else if (lm->parsed()) {
      Run run("lm", argc, argv, lcfg.seed);
      run.manifest().add_input(l_corpus);
      lcfg.objective = parse_estimator(l_est);
      lcfg.K = l_K;
      lcfg.noise = l_noise;
      lcfg.context_bias = l_bias;
      lcfg.sgd.seed = lcfg.seed;
      lcfg.sgd.resample_negatives = !l_fixed_negs;
      const std::string text = read_file(l_corpus);
      if (l_alpha > 0.0) {
        RegularizerConfig reg;
        reg.alpha = l_alpha;
        reg.m = l_regm;  // resolved below once the vocabulary is known
        reg.seed = lcfg.seed;
        lcfg.regularizer = reg;
      }
      if (lcfg.regularizer && lcfg.regularizer->m <= 0) {
        const int vocab = Vocabulary::build(tokenize(text)).size();
        lcfg.regularizer->m = std::max(1, vocab / 10);
      }
      const LmResult res = train_language_model(text, lcfg);
      const std::string epochs_csv = stem_path(l_out, ".epochs.csv");
      run.manifest().outputs = {l_out, epochs_csv};
      std::vector<std::string> rows;
      for (const auto& e : res.epochs) {
        std::ostringstream os;
        os.precision(10);
        os << e.epoch << ',' << e.train_objective << ',' << e.train_ppl << ',' << e.valid_ppl;
        rows.push_back(os.str());
      }
      write_file(epochs_csv, csv_with_manifest(run.manifest(), "epoch,train_objective,train_ppl,valid_ppl", rows));
      Json j;
      j["estimator"] = l_est;
      j["vocab"] = res.vocab;
      j["histories"] = res.histories;
      j["train_tokens"] = res.train_tokens;
      j["valid_tokens"] = res.valid_tokens;
      j["final_train_ppl"] = res.epochs.empty() ? 0.0 : res.epochs.back().train_ppl;
      j["final_valid_ppl"] = res.epochs.empty() ? 0.0 : res.epochs.back().valid_ppl;
      j["var_log_z"] = res.var_log_z;
      j["mean_log_z"] = res.mean_log_z;
      j["sampled_mean_sq_log_z"] = res.reg_estimate;
      write_file(l_out, j.dump(1) + "\n");
      run.finish(l_out);
      std::printf("valid_ppl=%.4f var_log_z=%.6g\n", j["final_valid_ppl"].get<double>(), res.var_log_z);
    }
  } catch (const nce::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(e.exit_code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(ExitCode::kNumeric);
  }
  return 0;
}
