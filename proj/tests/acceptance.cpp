// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any selected criterion fails.
//
//   acceptance [criterion ...]
//
// With no arguments all twelve run in order. Artifacts go under
// $HEXPERT_ACCEPTANCE_OUT (default: <tmp>/hexpert-acceptance).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "hexpert/config.hpp"
#include "hexpert/meta.hpp"
#include "hexpert/net.hpp"
#include "hexpert/normal_wishart.hpp"
#include "hexpert/oracle.hpp"
#include "hexpert/runner.hpp"
#include "nw_oracle.hpp"

using namespace hexpert;
using config::Config;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = HEXPERT_CONFIG_DIR;

// ------------------------------------------------------------ tolerances
constexpr double kResidual = 1e-6;         // 1: one-sweep residual
constexpr double kMonotone = 1e-10;        // 1: per-sweep objective slack
constexpr double kRationalGap = 1e-3;      // 2: beta = 1e6 objective vs E max U
constexpr double kPriorBoundRate = 1e-4;   // 2: beta = 1e-6 rates
constexpr double kLearnerGap = 0.05;       // 3: relative objective gap
constexpr double kGradError = 1e-4;        // 4: relative gradient error
constexpr double kKlRelative = 0.02;       // 5: MC vs analytic, relative
constexpr double kKlAbsolute = 0.01;       // 5: ... or absolute, nats
constexpr double kChanceBand = 0.1;        // 6: one linear expert vs chance
constexpr double kFourExpertAcc = 0.90;    // 6
constexpr double kMeanRecovery = 0.2;      // 8: L2 distance to a corner
constexpr double kNeglectMass = 0.02;      // 8
constexpr int kNeglected = 3;              // 8
constexpr double kEpisodeLength = 450.0;   // 9
constexpr double kExpertShare = 0.1;       // 9
constexpr double kMseReduction = 0.30;     // 10
// Seed-paired noise allowance for "non-decreasing" over grid means (6, 7,
// 10): a step down fails only if the mean paired difference falls below
// -kPairedSe standard errors.
constexpr double kPairedSe = 3.0;

// Wall-clock budgets in seconds; 0 = none.
const std::map<int, double> kBudget{{1, 10},  {2, 0},    {3, 300},  {4, 0},    {5, 120},  {6, 900},
                                    {7, 3600}, {8, 600}, {9, 1800}, {10, 2700}, {11, 0}, {12, 0}};

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

// ---------------------------------------------------------- run artifacts
fs::path out_root() {
  const char* env = std::getenv("HEXPERT_ACCEPTANCE_OUT");
  return env && *env ? fs::path(env) : fs::temp_directory_path() / "hexpert-acceptance";
}

// Runs keyed by effective config minus the name, so criterion 12 can reuse
// any run an earlier criterion already made from an identical config.
std::map<std::string, runner::RunSummary> g_runs;

std::string run_key(const Config& cfg) {
  auto j = cfg.to_json();
  j.erase("name");
  return j.dump();
}

const runner::RunSummary& run_cached(const Config& cfg) {
  const std::string key = run_key(cfg);
  auto it = g_runs.find(key);
  if (it == g_runs.end()) it = g_runs.emplace(key, runner::run(cfg, out_root() / "runs")).first;
  return it->second;
}

Config cell(const std::string& file, const std::string& name, std::initializer_list<std::pair<std::string, std::string>> kv) {
  Config c = Config::load(kConfigs / file);
  c.set("name", name);
  for (const auto& [k, v] : kv) c.set(k, v);
  c.validate();
  return c;
}

std::vector<std::map<std::string, std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  auto split = [](const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) out.push_back(f);
    return out;
  };
  std::string line;
  std::getline(in, line);
  const auto header = split(line);
  std::vector<std::map<std::string, std::string>> rows;
  while (std::getline(in, line)) {
    const auto f = split(line);
    std::map<std::string, std::string> r;
    for (std::size_t i = 0; i < header.size() && i < f.size(); ++i) r[header[i]] = f[i];
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ------------------------------------------------------------ statistics
double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

// True when b is not below a beyond seed noise; a[s], b[s] share seed s.
bool paired_non_decreasing(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> d(a.size());
  for (std::size_t s = 0; s < a.size(); ++s) d[s] = b[s] - a[s];
  const double m = mean(d);
  double var = 0.0;
  for (double x : d) var += (x - m) * (x - m);
  const double se = d.size() > 1 ? std::sqrt(var / static_cast<double>(d.size() - 1) / static_cast<double>(d.size())) : 0.0;
  return m >= -kPairedSe * se - 1e-12;
}

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j);
    i = j + 1;
  }
  return r;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  const auto rx = ranks(x), ry = ranks(y);
  const double mx = mean(rx), my = mean(ry);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxx > 0.0 && syy > 0.0 ? sxy / std::sqrt(sxx * syy) : 0.0;
}

ResourceParams betas(double b1, double b2) {
  ResourceParams rp;
  rp.beta1 = b1;
  rp.beta2 = b2;
  return rp;
}

// ------------------------------------------------------------- criteria
Verdict oracle_self_consistency() {
  Rng rng(101);
  double worst_residual = 0.0, worst_drop = 0.0;
  int unconverged = 0;
  for (int t = 0; t < 50; ++t) {
    const auto X = 1 + static_cast<Eigen::Index>(rng.below(8));
    const auto Y = 1 + static_cast<Eigen::Index>(rng.below(4));
    const int M = 1 + static_cast<int>(rng.below(4));
    const oracle::TabularProblem p = oracle::random_problem(X, Y, M, rng);
    const ResourceParams rp = betas(rng.uniform(0.5, 20.0), rng.uniform(0.5, 20.0));
    const oracle::SolveResult r = oracle::solve(p, rp, {1e-10, 100000}, rng);
    unconverged += !r.converged;
    oracle::HierSolution again = r.solution;
    worst_residual = std::max(worst_residual, oracle::sweep(p, rp, again));
    for (std::size_t i = 1; i < r.objective_trace.size(); ++i)
      worst_drop = std::max(worst_drop, r.objective_trace[i - 1] - r.objective_trace[i]);
  }
  return {unconverged == 0 && worst_residual < kResidual && worst_drop <= kMonotone,
          "50 problems, max residual " + fmt(worst_residual) + ", max per-sweep drop " + fmt(worst_drop) +
              ", unconverged " + std::to_string(unconverged)};
}

Verdict oracle_limit_laws() {
  Rng rng(202);
  double worst_gap = 0.0, worst_rate = 0.0;
  for (int t = 0; t < 20; ++t) {
    const auto X = 2 + static_cast<Eigen::Index>(rng.below(7));
    const auto Y = 2 + static_cast<Eigen::Index>(rng.below(3));
    const int M = 1 + static_cast<int>(rng.below(4));
    const oracle::TabularProblem p = oracle::random_problem(X, Y, M, rng);
    const double best = p.px.probs().dot(p.utility.rowwise().maxCoeff());
    const oracle::SolveResult hi = oracle::solve(p, betas(1e6, 1e6), {1e-10, 100000}, rng);
    worst_gap = std::max(worst_gap, std::abs(hi.solution.objective - best));
    const oracle::SolveResult lo = oracle::solve(p, betas(1e-6, 1e-6), {1e-10, 100000}, rng);
    const oracle::InfoTerms info = oracle::information_terms(p, lo.solution.sel, lo.solution.act);
    worst_rate = std::max({worst_rate, info.rate_xm, info.rate_xy_given_m});
  }
  return {worst_gap < kRationalGap && worst_rate < kPriorBoundRate,
          "20 problems, beta=1e6 gap " + fmt(worst_gap) + ", beta=1e-6 max rate " + fmt(worst_rate)};
}

Verdict learner_vs_oracle() {
  const Config base = Config::load(kConfigs / "tabular.conf");
  base.validate();
  double worst = 0.0;
  for (int i = 0; i < 10; ++i) {
    const oracle::TabularProblem prob = runner::tabular_problem(base, i);
    for (int s = 0; s < 3; ++s) {
      Config c = base;
      c.set("seed", std::to_string(s));
      worst = std::max(worst, runner::train_tabular(c, prob, i).relative_gap);
    }
  }
  return {worst < kLearnerGap, "10 problems x 3 seeds, worst relative gap " + fmt(worst)};
}

Verdict gradient_checks() {
  Rng rng(404);
  auto vec = [&](Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.normal();
    return v;
  };
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    std::vector<int> sizes{1 + static_cast<int>(rng.below(4))};
    const int hidden = static_cast<int>(rng.below(3));
    for (int h = 0; h < hidden; ++h) sizes.push_back(1 + static_cast<int>(rng.below(6)));
    sizes.push_back(1 + static_cast<int>(rng.below(4)));
    NetD net(sizes, t % 2 ? Activation::Relu : Activation::Tanh, Head::Identity, rng);
    for (auto& l : net.layers()) l.b = 0.1 * vec(l.b.size());
    worst = std::max(worst, hexpert::testing::max_relative_grad_error(net, vec(sizes.front()), vec(sizes.back())));
  }
  return {worst < kGradError, "100 nets, max relative error " + fmt(worst)};
}

Verdict normal_wishart_kl() {
  Rng rng(505);
  auto vec = [&](Eigen::Index d) {
    Eigen::VectorXd v(d);
    for (Eigen::Index i = 0; i < d; ++i) v(i) = rng.normal();
    return v;
  };
  auto spd = [&](Eigen::Index d) {
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
      L(i, i) = std::exp(rng.uniform(-0.5, 0.5));
      for (Eigen::Index j = 0; j < i; ++j) L(i, j) = 0.5 * rng.normal();
    }
    return Eigen::MatrixXd(L * L.transpose());
  };
  bool self_zero = true;
  int bad = 0;
  double worst_rel = 0.0;
  for (int t = 0; t < 20; ++t) {
    const auto d = 1 + static_cast<Eigen::Index>(rng.below(3));
    const double lambda = rng.uniform(0.5, 5.0);
    const double nu = static_cast<double>(d) + rng.uniform(1.0, 5.0);
    const NormalWishartD p(vec(d), lambda, spd(d), nu), q(vec(d), lambda, spd(d), nu);
    self_zero = self_zero && nw_kl(p, p, true) == 0.0 && nw_kl(p, p) == 0.0;
    const double analytic = nw_kl(p, q, true);
    const double mc = hexpert::testing::nw_kl_monte_carlo(p, q, 1000000, rng);
    const double err = std::abs(mc - analytic);
    const double rel = err / std::abs(analytic);
    worst_rel = std::max(worst_rel, rel);
    bad += !(rel < kKlRelative || err < kKlAbsolute);
  }
  return {self_zero && bad == 0, std::string("KL(p,p)=0 ") + (self_zero ? "yes" : "NO") + ", 20 pairs, " +
                                     std::to_string(bad) + " outside tolerance, worst relative " + fmt(worst_rel)};
}

Verdict circles_expert_count() {
  const tasks::LabeledDataset data = runner::classification_data(Config::load(kConfigs / "circles.conf"));
  double chance = 0.0;
  for (int k = 0; k < data.num_classes; ++k)
    chance = std::max(chance, static_cast<double>((data.labels.array() == k).count()) / static_cast<double>(data.size()));
  const std::vector<int> counts{1, 2, 4};
  std::vector<std::vector<double>> acc(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i)
    for (int s = 0; s < 5; ++s) {
      const Config c = cell("circles.conf", "acc-circles-m" + std::to_string(counts[i]),
                            {{"model.experts", std::to_string(counts[i])}, {"seed", std::to_string(s)}});
      acc[i].push_back(run_cached(c).metrics.at("test_accuracy"));
    }
  const bool mono = paired_non_decreasing(acc[0], acc[1]) && paired_non_decreasing(acc[1], acc[2]);
  const bool pass = std::abs(mean(acc[0]) - chance) <= kChanceBand && mean(acc[2]) >= kFourExpertAcc && mono;
  return {pass, "mean held-out accuracy M=1 " + fmt(mean(acc[0])) + " (chance " + fmt(chance) + "), M=2 " +
                    fmt(mean(acc[1])) + ", M=4 " + fmt(mean(acc[2])) + ", non-decreasing " + (mono ? "yes" : "no")};
}

Verdict rate_utility_grid() {
  // acc[(b1, b2)][seed]
  std::map<std::pair<double, double>, std::vector<double>> acc;
  std::vector<double> b1s, b2s;
  for (int s = 0; s < 3; ++s) {
    const Config c = cell("rate_utility.conf", "acc-rate-utility", {{"seed", std::to_string(s)}});
    b1s = c.get_doubles("sweep.beta1");
    b2s = c.get_doubles("sweep.beta2");
    for (const auto& r : read_csv(run_cached(c).dir / "surface.csv"))
      acc[{std::stod(r.at("beta1")), std::stod(r.at("beta2"))}].push_back(std::stod(r.at("accuracy")));
  }
  int checked = 0, violations = 0;
  double worst = 0.0;
  auto step = [&](std::pair<double, double> lo, std::pair<double, double> hi) {
    ++checked;
    if (!paired_non_decreasing(acc.at(lo), acc.at(hi))) ++violations;
    worst = std::min(worst, mean(acc.at(hi)) - mean(acc.at(lo)));
  };
  for (std::size_t i = 0; i < b1s.size(); ++i)
    for (std::size_t j = 0; j < b2s.size(); ++j) {
      if (i + 1 < b1s.size()) step({b1s[i], b2s[j]}, {b1s[i + 1], b2s[j]});
      if (j + 1 < b2s.size()) step({b1s[i], b2s[j]}, {b1s[i], b2s[j + 1]});
    }
  return {violations == 0, std::to_string(checked) + " adjacent steps, " + std::to_string(violations) +
                               " decreasing, largest drop in grid means " + fmt(-worst)};
}

// Smallest achievable worst distance over one-to-one assignments of means
// to experts (brute force; M and the number of means are small).
double matched_distance(const std::vector<Eigen::VectorXd>& omegas, const std::vector<Eigen::VectorXd>& means) {
  std::vector<std::size_t> perm(omegas.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = 1e300;
  do {
    double worst = 0.0;
    for (std::size_t k = 0; k < means.size(); ++k) worst = std::max(worst, (omegas[perm[k]] - means[k]).norm());
    best = std::min(best, worst);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

Verdict density_corners() {
  double worst4 = 0.0;
  int min_neglected = 1 << 30;
  for (int s = 0; s < 5; ++s) {
    const Config c4 = cell("density4.conf", "acc-density4", {{"seed", std::to_string(s)}});
    std::vector<Eigen::VectorXd> omegas;
    for (const auto& r : read_csv(run_cached(c4).dir / "experts.csv"))
      omegas.push_back(Eigen::Vector2d(std::stod(r.at("omega_0")), std::stod(r.at("omega_1"))));
    worst4 = std::max(worst4, matched_distance(omegas, runner::mixture_means(c4)));

    const Config c8 = cell("density8.conf", "acc-density8", {{"seed", std::to_string(s)}});
    int neglected = 0;
    for (const auto& r : read_csv(run_cached(c8).dir / "experts.csv")) neglected += std::stod(r.at("prior_m")) < kNeglectMass;
    min_neglected = std::min(min_neglected, neglected);
  }
  return {worst4 < kMeanRecovery && min_neglected >= kNeglected,
          "5 seeds, M=4 worst matched corner distance " + fmt(worst4) + ", M=8 fewest neglected experts " +
              std::to_string(min_neglected)};
}

Verdict cartpole() {
  std::ostringstream detail;
  bool pass = true;
  for (int s = 0; s < 5; ++s) {
    const Config c = cell("cartpole.conf", "acc-cartpole", {{"seed", std::to_string(s)}});
    const runner::RunSummary& r = run_cached(c);
    const double len = r.metrics.at("eval_mean_length");
    std::vector<double> share(static_cast<std::size_t>(c.get_int("model.experts")), 0.0);
    const auto rows = read_csv(r.dir / "partition.csv");
    for (const auto& row : rows) share[static_cast<std::size_t>(std::stoi(row.at("expert")))] += 1.0 / static_cast<double>(rows.size());
    const bool ok = len >= kEpisodeLength && *std::min_element(share.begin(), share.end()) > kExpertShare;
    pass = pass && ok;
    detail << (s ? "; " : "") << "seed " << s << " length " << fmt(len) << " shares";
    for (double v : share) detail << ' ' << fmt(v, 3);
  }
  return {pass, detail.str()};
}

Verdict sine_meta() {
  const std::vector<int> counts{1, 2, 4, 8};
  const std::vector<int> ks{1, 5, 10};
  const std::vector<int> seeds = Config::load(kConfigs / "sine_meta.conf").get_ints("sweep.seeds");
  std::vector<double> mse(counts.size()), rate(counts.size());
  std::vector<std::vector<double>> conf(ks.size());  // M = 8, per seed
  for (std::size_t i = 0; i < counts.size(); ++i) {
    std::vector<double> m, r;
    for (int s : seeds) {
      const Config c = cell("sine_meta.conf", "acc-sine-meta-m" + std::to_string(counts[i]),
                            {{"model.experts", std::to_string(counts[i])}, {"seed", std::to_string(s)}});
      const auto& met = run_cached(c).metrics;
      m.push_back(met.at("post_mse_k10"));
      r.push_back(met.at("rate_xm_k10"));
      if (counts[i] == 8)
        for (std::size_t k = 0; k < ks.size(); ++k) conf[k].push_back(met.at("partition_confidence_k" + std::to_string(ks[k])));
    }
    mse[i] = mean(m);
    rate[i] = mean(r);
  }
  const double reduction = 1.0 - mse.back() / mse.front();
  std::vector<double> utility(mse.size());
  for (std::size_t i = 0; i < mse.size(); ++i) utility[i] = -mse[i];
  const double rho = spearman(rate, utility);
  const bool conf_ok = paired_non_decreasing(conf[0], conf[1]) && paired_non_decreasing(conf[1], conf[2]);
  std::ostringstream d;
  d << "post-adapt MSE M=1,2,4,8:";
  for (double v : mse) d << ' ' << fmt(v);
  d << " (reduction " << fmt(reduction) << "), I(X;M):";
  for (double v : rate) d << ' ' << fmt(v);
  d << ", rank corr " << fmt(rho) << ", confidence K=1,5,10:";
  for (const auto& c : conf) d << ' ' << fmt(mean(c));
  return {reduction >= kMseReduction && rho > 0.0 && conf_ok, d.str()};
}

Verdict embedding_invariance() {
  Rng rng(1111);
  int mismatches = 0;
  for (int t = 0; t < 50; ++t) {
    const meta::TaskDataset td = meta::sample_task(10, {}, rng);
    const Eigen::VectorXd ref = meta::embed_regression(td.train, 20, {});
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(td.train.x.size()));
    std::iota(idx.begin(), idx.end(), 0);
    for (int p = 0; p < 100; ++p) {
      for (std::size_t i = idx.size() - 1; i > 0; --i) std::swap(idx[i], idx[rng.below(i + 1)]);
      tasks::RegressionSplit s = td.train;
      for (std::size_t i = 0; i < idx.size(); ++i) {
        s.x(static_cast<Eigen::Index>(i)) = td.train.x(idx[i]);
        s.y(static_cast<Eigen::Index>(i)) = td.train.y(idx[i]);
      }
      const Eigen::VectorXd z = meta::embed_regression(s, 20, {});
      mismatches += z.size() != ref.size() || std::memcmp(z.data(), ref.data(), sizeof(double) * static_cast<std::size_t>(z.size())) != 0;
    }
  }
  return {mismatches == 0, "50 splits x 100 permutations, " + std::to_string(mismatches) + " mismatches"};
}

Verdict determinism() {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(kConfigs))
    if (e.path().extension() == ".conf") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::ostringstream d;
  bool pass = true;
  int compared = 0;
  for (const auto& f : files) {
    const Config c = Config::load(f);
    c.validate();
    const fs::path first = run_cached(c).dir;
    const fs::path second = runner::run(c, out_root() / "rerun").dir;
    std::set<std::string> names;
    for (const auto& dir : {first, second})
      for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".csv") names.insert(e.path().filename().string());
    for (const auto& n : names) {
      ++compared;
      if (!fs::exists(first / n) || !fs::exists(second / n) || slurp(first / n) != slurp(second / n)) {
        pass = false;
        d << "differs: " << f.filename().string() << '/' << n << "; ";
      }
    }
  }
  d << files.size() << " configs, " << compared << " CSVs compared";
  return {pass, d.str()};
}

struct Criterion {
  int id;
  const char* title;
  std::function<Verdict()> check;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "oracle self-consistency", oracle_self_consistency},
      {2, "oracle limit laws", oracle_limit_laws},
      {3, "tabular learner vs oracle", learner_vs_oracle},
      {4, "gradient checks", gradient_checks},
      {5, "Normal-Wishart KL", normal_wishart_kl},
      {6, "circles accuracy vs expert count", circles_expert_count},
      {7, "rate-utility grid monotonicity", rate_utility_grid},
      {8, "density corner recovery", density_corners},
      {9, "cart-pole length and partition", cartpole},
      {10, "sinusoid meta-learning", sine_meta},
      {11, "embedding permutation invariance", embedding_invariance},
      {12, "determinism of bundled configs", determinism},
  };
  std::set<int> chosen;
  for (int i = 1; i < argc; ++i) chosen.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : all) {
    if (!chosen.empty() && !chosen.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.check();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const double budget = kBudget.at(c.id);
    const bool in_time = budget == 0.0 || secs < budget;
    const bool pass = v.pass && in_time;
    failed += !pass;
    std::cout << "criterion " << std::setw(2) << c.id << ' ' << (pass ? "PASS" : "FAIL") << "  " << c.title << ": "
              << v.detail << " [" << fmt(secs, 3) << " s" << (in_time ? "" : ", over budget") << "]" << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
