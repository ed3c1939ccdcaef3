#include "mvplc/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"
#include "mvplc/math.hpp"
#include "mvplc/rng.hpp"

namespace mvplc {

void SamplerConfig::validate() const {
  if (chains < 1) throw SamplerError("sampler: chains must be at least 1");
  if (samples < 1) throw SamplerError("sampler: samples must be at least 1");
  if (!(target_accept > 0.0 && target_accept < 1.0)) throw SamplerError("sampler: target_accept must lie in (0, 1)");
  if (max_treedepth < 1) throw SamplerError("sampler: max_treedepth must be at least 1");
  if (!(init_radius >= 0.0)) throw SamplerError("sampler: init_radius must be non-negative");
}

std::size_t PosteriorDraws::num_draws() const { return chains.empty() ? 0 : chains.front().telemetry.size(); }

std::vector<std::vector<double>> PosteriorDraws::column(std::size_t param) const {
  std::vector<std::vector<double>> out(chains.size());
  for (std::size_t c = 0; c < chains.size(); ++c) {
    out[c].reserve(chains[c].values.size());
    for (const auto& row : chains[c].values) out[c].push_back(row.at(param));
  }
  return out;
}

std::vector<double> PosteriorDraws::pooled(std::size_t param) const {
  std::vector<double> out;
  out.reserve(total_draws());
  for (const auto& ch : chains)
    for (const auto& row : ch.values) out.push_back(row.at(param));
  return out;
}

std::size_t PosteriorDraws::index_of(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw SamplerError("draws: no column named " + name);
  return static_cast<std::size_t>(it - names.begin());
}

std::size_t PosteriorDraws::divergences() const {
  std::size_t n = 0;
  for (const auto& ch : chains)
    for (const auto& t : ch.telemetry) n += t.divergent ? 1 : 0;
  return n;
}

namespace {

using Vec = std::vector<double>;

constexpr double kMaxDeltaH = 1000.0;

struct Point {
  Vec q, p, grad;
  double logp = -kInf;
};

double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

Vec add(const Vec& a, const Vec& b) {
  Vec r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
  return r;
}

// Dual averaging of log step size toward a target acceptance statistic.
struct StepsizeAdapter {
  double mu = std::log(10.0), delta = 0.8, gamma = 0.05, kappa = 0.75, t0 = 10.0;
  double counter = 0.0, s_bar = 0.0, x_bar = 0.0;

  void restart() { counter = s_bar = x_bar = 0.0; }
  double learn(double accept) {
    counter += 1.0;
    accept = std::min(1.0, accept);
    const double eta = 1.0 / (counter + t0);
    s_bar = (1.0 - eta) * s_bar + eta * (delta - accept);
    const double x = mu - s_bar * std::sqrt(counter) / gamma;
    const double x_eta = std::pow(counter, -kappa);
    x_bar = (1.0 - x_eta) * x_bar + x_eta * x;
    return std::exp(x);
  }
  double final_stepsize() const { return std::exp(x_bar); }
};

// Doubling slow windows for the diagonal metric.
class MetricAdapter {
 public:
  MetricAdapter(std::size_t warmup, std::size_t dim) : warmup_(warmup), mean_(dim, 0.0), m2_(dim, 0.0) {
    enabled_ = warmup >= 20;
    if (!enabled_) return;
    if (init_buffer_ + base_window_ + term_buffer_ > warmup) {
      init_buffer_ = static_cast<std::size_t>(0.15 * static_cast<double>(warmup));
      term_buffer_ = static_cast<std::size_t>(0.1 * static_cast<double>(warmup));
      base_window_ = warmup - (init_buffer_ + term_buffer_);
    }
    window_size_ = base_window_;
    next_window_ = init_buffer_ + window_size_ - 1;
  }

  // Adds a warmup point; true when a window closed and `inv_metric` changed.
  bool learn(const Vec& q, Vec& inv_metric) {
    if (!enabled_) return false;
    if (in_window()) add(q);
    if (counter_ == next_window_ && counter_ != warmup_) {
      compute_next_window();
      const double n = count_;
      for (std::size_t i = 0; i < inv_metric.size(); ++i) {
        const double var = m2_[i] / (n - 1.0);
        inv_metric[i] = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0));
      }
      std::fill(mean_.begin(), mean_.end(), 0.0);
      std::fill(m2_.begin(), m2_.end(), 0.0);
      count_ = 0.0;
      ++counter_;
      return true;
    }
    ++counter_;
    return false;
  }

 private:
  bool in_window() const {
    return counter_ >= init_buffer_ && counter_ < warmup_ - term_buffer_ && counter_ != warmup_;
  }
  void compute_next_window() {
    const std::size_t last = warmup_ - term_buffer_ - 1;
    if (next_window_ == last) return;
    window_size_ *= 2;
    next_window_ = counter_ + window_size_;
    if (next_window_ != last && next_window_ + 2 * window_size_ >= warmup_ - term_buffer_) next_window_ = last;
  }
  void add(const Vec& q) {
    count_ += 1.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
      const double d = q[i] - mean_[i];
      mean_[i] += d / count_;
      m2_[i] += d * (q[i] - mean_[i]);
    }
  }

  std::size_t warmup_;
  bool enabled_ = false;
  std::size_t init_buffer_ = 75, term_buffer_ = 50, base_window_ = 25;
  std::size_t window_size_ = 0, next_window_ = 0, counter_ = 0;
  Vec mean_, m2_;
  double count_ = 0.0;
};

class Nuts {
 public:
  Nuts(const Target& target, const SamplerConfig& config, CounterRng& rng)
      : target_(target), rng_(rng), max_depth_(config.max_treedepth), inv_metric_(target.dim, 1.0) {}

  // Evaluates the target at z.q; a failed evaluation leaves logp = -inf.
  bool evaluate(Point& z) const {
    z.grad.assign(z.q.size(), 0.0);
    try {
      z.logp = target_.log_density_gradient(z.q, z.grad);
    } catch (const std::invalid_argument&) {
      z.logp = -kInf;
    } catch (const std::domain_error&) {
      z.logp = -kInf;
    } catch (const std::range_error&) {
      z.logp = -kInf;
    } catch (const std::overflow_error&) {
      z.logp = -kInf;
    }
    bool ok = std::isfinite(z.logp);
    for (double g : z.grad) ok = ok && std::isfinite(g);
    if (!ok) z.logp = -kInf;
    return ok;
  }

  bool initialize(const Vec& q) {
    z_.q = q;
    z_.p.assign(q.size(), 0.0);
    return evaluate(z_);
  }

  void init_stepsize() {
    const Point z_init = z_;
    sample_momentum(z_);
    double h0 = hamiltonian(z_);
    leapfrog(z_, eps_);
    double delta = h0 - energy_or_inf(z_);
    const int direction = delta > std::log(0.8) ? 1 : -1;
    for (;;) {
      z_ = z_init;
      sample_momentum(z_);
      h0 = hamiltonian(z_);
      leapfrog(z_, eps_);
      delta = h0 - energy_or_inf(z_);
      if (direction == 1 && !(delta > std::log(0.8))) break;
      if (direction == -1 && !(delta < std::log(0.8))) break;
      eps_ = direction == 1 ? 2.0 * eps_ : 0.5 * eps_;
      if (eps_ > 1e7) throw SamplerError("sampler: step size search diverged (posterior may be improper)");
      if (eps_ == 0.0) throw SamplerError("sampler: step size search collapsed to zero");
    }
    z_ = z_init;
  }

  Telemetry transition() {
    sample_momentum(z_);
    const std::size_t n = z_.q.size();
    Point z_fwd = z_, z_bck = z_, z_sample = z_, z_propose = z_;

    Vec p_fwd_fwd = z_.p, p_fwd_bck = z_.p, p_bck_fwd = z_.p, p_bck_bck = z_.p;
    const Vec sharp0 = sharp(z_.p);
    Vec ps_fwd_fwd = sharp0, ps_fwd_bck = sharp0, ps_bck_fwd = sharp0, ps_bck_bck = sharp0;
    Vec rho = z_.p;

    double log_sum_weight = 0.0;
    const double h0 = hamiltonian(z_);
    int n_leapfrog = 0;
    double sum_metro = 0.0;
    int depth = 0;
    divergent_ = false;

    while (depth < max_depth_) {
      Vec rho_fwd(n, 0.0), rho_bck(n, 0.0);
      bool valid = false;
      double lsw_sub = -kInf;
      if (rng_.uniform() > 0.5) {
        z_ = z_fwd;
        rho_bck = rho;
        p_bck_fwd = p_fwd_fwd;
        ps_bck_fwd = ps_fwd_fwd;
        valid = build_tree(depth, z_propose, ps_fwd_bck, ps_fwd_fwd, rho_fwd, p_fwd_bck, p_fwd_fwd, h0, 1.0,
                           n_leapfrog, lsw_sub, sum_metro);
        z_fwd = z_;
      } else {
        z_ = z_bck;
        rho_fwd = rho;
        p_fwd_bck = p_bck_bck;
        ps_fwd_bck = ps_bck_bck;
        valid = build_tree(depth, z_propose, ps_bck_fwd, ps_bck_bck, rho_bck, p_bck_fwd, p_bck_bck, h0, -1.0,
                           n_leapfrog, lsw_sub, sum_metro);
        z_bck = z_;
      }
      if (!valid) break;
      ++depth;

      if (lsw_sub > log_sum_weight) {
        z_sample = z_propose;
      } else if (rng_.uniform() < std::exp(lsw_sub - log_sum_weight)) {
        z_sample = z_propose;
      }
      log_sum_weight = log_sum_exp(log_sum_weight, lsw_sub);

      rho = add(rho_bck, rho_fwd);
      bool persist = criterion(ps_bck_bck, ps_fwd_fwd, rho);
      persist = persist && criterion(ps_bck_bck, ps_fwd_bck, add(rho_bck, p_fwd_bck));
      persist = persist && criterion(ps_bck_fwd, ps_fwd_fwd, add(rho_fwd, p_bck_fwd));
      if (!persist) break;
    }

    z_ = z_sample;
    Telemetry t;
    t.log_density = z_.logp;
    t.accept_stat = n_leapfrog > 0 ? sum_metro / n_leapfrog : 0.0;
    t.stepsize = eps_;
    t.treedepth = depth;
    t.n_leapfrog = n_leapfrog;
    t.divergent = divergent_;
    t.energy = hamiltonian(z_);
    return t;
  }

  const Point& point() const { return z_; }
  double stepsize() const { return eps_; }
  void set_stepsize(double e) { eps_ = e; }
  Vec& inv_metric() { return inv_metric_; }

 private:
  double hamiltonian(const Point& z) const {
    double k = 0.0;
    for (std::size_t i = 0; i < z.p.size(); ++i) k += inv_metric_[i] * z.p[i] * z.p[i];
    return -z.logp + 0.5 * k;
  }
  double energy_or_inf(const Point& z) const {
    const double h = hamiltonian(z);
    return std::isnan(h) ? kInf : h;
  }
  Vec sharp(const Vec& p) const {
    Vec r(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) r[i] = inv_metric_[i] * p[i];
    return r;
  }
  void sample_momentum(Point& z) {
    z.p.resize(z.q.size());
    for (std::size_t i = 0; i < z.p.size(); ++i) z.p[i] = rng_.normal() / std::sqrt(inv_metric_[i]);
  }
  void leapfrog(Point& z, double eps) const {
    const std::size_t n = z.q.size();
    for (std::size_t i = 0; i < n; ++i) z.p[i] += 0.5 * eps * z.grad[i];
    for (std::size_t i = 0; i < n; ++i) z.q[i] += eps * inv_metric_[i] * z.p[i];
    if (!evaluate(z)) return;
    for (std::size_t i = 0; i < n; ++i) z.p[i] += 0.5 * eps * z.grad[i];
  }
  static bool criterion(const Vec& ps_minus, const Vec& ps_plus, const Vec& rho) {
    return dot(ps_plus, rho) > 0.0 && dot(ps_minus, rho) > 0.0;
  }

  bool build_tree(int depth, Point& z_propose, Vec& ps_beg, Vec& ps_end, Vec& rho, Vec& p_beg, Vec& p_end, double h0,
                  double sign, int& n_leapfrog, double& log_sum_weight, double& sum_metro) {
    if (depth == 0) {
      leapfrog(z_, sign * eps_);
      ++n_leapfrog;
      const double h = energy_or_inf(z_);
      if (h - h0 > kMaxDeltaH) divergent_ = true;
      log_sum_weight = log_sum_exp(log_sum_weight, h0 - h);
      sum_metro += h0 - h > 0.0 ? 1.0 : std::exp(h0 - h);
      z_propose = z_;
      ps_beg = sharp(z_.p);
      ps_end = ps_beg;
      for (std::size_t i = 0; i < rho.size(); ++i) rho[i] += z_.p[i];
      p_beg = z_.p;
      p_end = p_beg;
      return !divergent_;
    }
    const std::size_t n = rho.size();

    double lsw_init = -kInf;
    Vec p_init_end, ps_init_end, rho_init(n, 0.0);
    if (!build_tree(depth - 1, z_propose, ps_beg, ps_init_end, rho_init, p_beg, p_init_end, h0, sign, n_leapfrog,
                    lsw_init, sum_metro))
      return false;

    Point z_propose_final = z_;
    double lsw_final = -kInf;
    Vec p_final_beg, ps_final_beg, rho_final(n, 0.0);
    if (!build_tree(depth - 1, z_propose_final, ps_final_beg, ps_end, rho_final, p_final_beg, p_end, h0, sign,
                    n_leapfrog, lsw_final, sum_metro))
      return false;

    const double lsw_subtree = log_sum_exp(lsw_init, lsw_final);
    log_sum_weight = log_sum_exp(log_sum_weight, lsw_subtree);
    if (lsw_final > lsw_subtree) {
      z_propose = z_propose_final;
    } else if (rng_.uniform() < std::exp(lsw_final - lsw_subtree)) {
      z_propose = z_propose_final;
    }

    const Vec rho_subtree = add(rho_init, rho_final);
    for (std::size_t i = 0; i < n; ++i) rho[i] += rho_subtree[i];
    bool persist = criterion(ps_beg, ps_end, rho_subtree);
    persist = persist && criterion(ps_beg, ps_final_beg, add(rho_init, p_final_beg));
    persist = persist && criterion(ps_init_end, ps_end, add(rho_final, p_init_end));
    return persist;
  }

  const Target& target_;
  CounterRng& rng_;
  int max_depth_;
  Vec inv_metric_;
  Point z_;
  double eps_ = 1.0;
  bool divergent_ = false;
};

}  // namespace

ChainDraws run_chain(const Target& target, const SamplerConfig& config, std::size_t chain,
                     std::optional<std::vector<double>> init) {
  config.validate();
  if (target.dim == 0 || !target.log_density_gradient) throw SamplerError("sampler: empty target");
  if (init && init->size() != target.dim) throw SamplerError("sampler: initial point has the wrong dimension");

  CounterRng rng(config.seed, chain);
  Nuts nuts(target, config, rng);

  bool ok = false;
  if (init) {
    ok = nuts.initialize(*init);
    if (!ok) throw SamplerError("sampler: target is not finite at the supplied initial point");
  }
  for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
    Vec q(target.dim);
    for (double& v : q) v = config.init_radius * (2.0 * rng.uniform() - 1.0);
    ok = nuts.initialize(q);
  }
  if (!ok) throw SamplerError("sampler: chain " + std::to_string(chain) + " failed to initialize after 100 attempts");

  nuts.init_stepsize();
  StepsizeAdapter step;
  step.delta = config.target_accept;
  step.mu = std::log(10.0 * nuts.stepsize());
  MetricAdapter metric(config.warmup, target.dim);

  for (std::size_t it = 0; it < config.warmup; ++it) {
    const Telemetry t = nuts.transition();
    nuts.set_stepsize(step.learn(t.accept_stat));
    if (metric.learn(nuts.point().q, nuts.inv_metric())) {
      nuts.init_stepsize();
      step.mu = std::log(10.0 * nuts.stepsize());
      step.restart();
    }
  }
  if (config.warmup > 0) nuts.set_stepsize(step.final_stepsize());

  ChainDraws out;
  out.values.reserve(config.samples);
  out.points.reserve(config.samples);
  out.telemetry.reserve(config.samples);
  for (std::size_t it = 0; it < config.samples; ++it) {
    out.telemetry.push_back(nuts.transition());
    const Vec& q = nuts.point().q;
    out.points.push_back(q);
    out.values.push_back(target.generate ? target.generate(q) : q);
  }
  out.stepsize = nuts.stepsize();
  out.inv_metric = nuts.inv_metric();
  return out;
}

PosteriorDraws run_chains(const Target& target, const SamplerConfig& config, std::optional<std::vector<double>> init) {
  config.validate();
  PosteriorDraws draws;
  if (!target.names.empty()) {
    draws.names = target.names;
  } else {
    for (std::size_t i = 0; i < target.dim; ++i) draws.names.push_back("x[" + std::to_string(i + 1) + "]");
  }
  draws.chains.resize(config.chains);
  if (!config.parallel || config.chains == 1) {
    for (std::size_t c = 0; c < config.chains; ++c) draws.chains[c] = run_chain(target, config, c, init);
    return draws;
  }
  std::vector<std::exception_ptr> errors(config.chains);
  std::vector<std::thread> threads;
  for (std::size_t c = 0; c < config.chains; ++c) {
    threads.emplace_back([&, c] {
      try {
        draws.chains[c] = run_chain(target, config, c, init);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return draws;
}

// ---- diagnostics ------------------------------------------------------------

namespace {

using Chains = std::vector<std::vector<double>>;

void check_shape(const Chains& x) {
  if (x.empty()) throw SamplerError("diagnostics: no chains");
  for (const auto& c : x)
    if (c.size() != x.front().size()) throw SamplerError("diagnostics: chains differ in length");
}

// Splits every chain into two halves, dropping the middle draw of odd chains.
Chains split(const Chains& x) {
  Chains out;
  for (const auto& c : x) {
    const std::size_t half = c.size() / 2;
    out.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(half));
    out.emplace_back(c.end() - static_cast<std::ptrdiff_t>(half), c.end());
  }
  return out;
}

// Normal scores of pooled average ranks.
Chains z_scale(const Chains& x) {
  std::vector<std::pair<double, std::size_t>> all;
  for (const auto& c : x)
    for (double v : c) all.emplace_back(v, all.size());
  std::sort(all.begin(), all.end());
  const double s = static_cast<double>(all.size());
  std::vector<double> z(all.size());
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].first == all[i].first) ++j;
    const double rank = 0.5 * static_cast<double>(i + 1 + j);
    const double score = std_normal_quantile((rank - 0.375) / (s + 0.25));
    for (std::size_t k = i; k < j; ++k) z[all[k].second] = score;
    i = j;
  }
  Chains out;
  std::size_t idx = 0;
  for (const auto& c : x) {
    out.emplace_back();
    for (std::size_t i = 0; i < c.size(); ++i) out.back().push_back(z[idx++]);
  }
  return out;
}

std::vector<double> flatten(const Chains& x) {
  std::vector<double> out;
  for (const auto& c : x) out.insert(out.end(), c.begin(), c.end());
  return out;
}

double mean_of(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

double var_of(std::span<const double> v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

bool is_constant(const Chains& x) {
  const double first = x.front().front();
  for (const auto& c : x)
    for (double v : c)
      if (v != first) return false;
  return true;
}

}  // namespace

double split_rhat_basic(const Chains& chains) {
  check_shape(chains);
  const Chains s = split(chains);
  const std::size_t m = s.size(), n = s.front().size();
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  for (const auto& c : s)
    for (double v : c)
      if (!std::isfinite(v)) return std::numeric_limits<double>::quiet_NaN();
  if (is_constant(s)) return std::numeric_limits<double>::quiet_NaN();
  std::vector<double> means(m), vars(m);
  for (std::size_t c = 0; c < m; ++c) {
    means[c] = mean_of(s[c]);
    vars[c] = var_of(s[c]);
  }
  const double nd = static_cast<double>(n);
  const double w = mean_of(vars);
  const double b = nd * var_of(means);
  const double var_hat = (nd - 1.0) / nd * w + b / nd;
  return std::sqrt(var_hat / w);
}

double split_rhat(const Chains& chains) {
  check_shape(chains);
  const double bulk = split_rhat_basic(z_scale(split(chains)));
  const std::vector<double> all = flatten(chains);
  const double med = quantile(all, 0.5);
  Chains folded = chains;
  for (auto& c : folded)
    for (double& v : c) v = std::fabs(v - med);
  const double tail = split_rhat_basic(z_scale(split(folded)));
  if (std::isnan(bulk) || std::isnan(tail)) return std::isnan(bulk) ? tail : bulk;
  return std::max(bulk, tail);
}

double ess_basic(const Chains& x) {
  check_shape(x);
  const std::size_t m = x.size(), n = x.front().size();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (n < 4) return nan;
  for (const auto& c : x)
    for (double v : c)
      if (!std::isfinite(v)) return nan;
  if (is_constant(x)) return nan;

  std::vector<double> means(m), var_chain(m);
  for (std::size_t c = 0; c < m; ++c) means[c] = mean_of(x[c]);
  const double nd = static_cast<double>(n);
  // Biased autocovariance averaged over chains, computed lag by lag on demand.
  auto acov = [&](std::size_t t) {
    double total = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i + t < n; ++i) s += (x[c][i] - means[c]) * (x[c][i + t] - means[c]);
      total += s / nd;
    }
    return total / static_cast<double>(m);
  };
  const double mean_var = acov(0) * nd / (nd - 1.0);
  double var_plus = mean_var * (nd - 1.0) / nd;
  if (m > 1) var_plus += var_of(means);
  if (!(var_plus > 0.0)) return nan;

  std::vector<double> rho_hat(n, 0.0);
  double rho_even = 1.0;
  rho_hat[0] = rho_even;
  double rho_odd = 1.0 - (mean_var - acov(1)) / var_plus;
  rho_hat[1] = rho_odd;
  std::size_t t = 1;
  while (t < n - 5 && rho_even + rho_odd > 0.0) {
    rho_even = 1.0 - (mean_var - acov(t + 1)) / var_plus;
    rho_odd = 1.0 - (mean_var - acov(t + 2)) / var_plus;
    if (rho_even + rho_odd >= 0.0) {
      rho_hat[t + 1] = rho_even;
      rho_hat[t + 2] = rho_odd;
    }
    t += 2;
  }
  const std::size_t max_t = t;
  if (rho_even > 0.0) rho_hat[max_t + 1] = rho_even;
  // Initial monotone sequence.
  for (t = 1; t + 2 <= max_t; t += 2) {
    if (rho_hat[t + 1] + rho_hat[t + 2] > rho_hat[t - 1] + rho_hat[t]) {
      rho_hat[t + 1] = 0.5 * (rho_hat[t - 1] + rho_hat[t]);
      rho_hat[t + 2] = rho_hat[t + 1];
    }
  }
  const double ess = static_cast<double>(m) * nd;
  double tau = -1.0 + 2.0 * std::accumulate(rho_hat.begin(), rho_hat.begin() + static_cast<std::ptrdiff_t>(max_t + 1), 0.0) +
               rho_hat[max_t + 1];
  tau = std::max(tau, 1.0 / std::log10(ess));
  return ess / tau;
}

double ess_bulk(const Chains& chains) { return ess_basic(z_scale(split(chains))); }

double ess_mean(const Chains& chains) { return ess_basic(split(chains)); }

double ess_tail(const Chains& chains) {
  const std::vector<double> all = flatten(chains);
  const double q05 = quantile(all, 0.05), q95 = quantile(all, 0.95);
  Chains lo = chains, hi = chains;
  for (std::size_t c = 0; c < chains.size(); ++c)
    for (std::size_t i = 0; i < chains[c].size(); ++i) {
      lo[c][i] = chains[c][i] <= q05 ? 1.0 : 0.0;
      hi[c][i] = chains[c][i] <= q95 ? 1.0 : 0.0;
    }
  return std::min(ess_basic(split(lo)), ess_basic(split(hi)));
}

double mcse_mean(const Chains& chains) {
  const std::vector<double> all = flatten(chains);
  return std::sqrt(var_of(all) / ess_mean(chains));
}

double efmi(std::span<const double> energy) {
  if (energy.size() < 2) throw SamplerError("diagnostics: E-FMI needs at least two draws");
  double num = 0.0;
  for (std::size_t i = 1; i < energy.size(); ++i) num += (energy[i] - energy[i - 1]) * (energy[i] - energy[i - 1]);
  num /= static_cast<double>(energy.size() - 1);
  const double m = mean_of(energy);
  double den = 0.0;
  for (double e : energy) den += (e - m) * (e - m);
  den /= static_cast<double>(energy.size());
  return num / den;
}

DiagnosticsReport diagnose(const PosteriorDraws& draws, const GateThresholds& gates, int max_treedepth) {
  if (draws.num_chains() < 2) throw SamplerError("diagnostics: at least 2 chains are required");
  if (draws.num_draws() < 4) throw SamplerError("diagnostics: at least 4 draws per chain are required");
  DiagnosticsReport r;
  r.max_rhat = 0.0;
  bool rhat_ok = true;
  for (std::size_t p = 0; p < draws.num_params(); ++p) {
    const Chains col = draws.column(p);
    const std::vector<double> all = flatten(col);
    ParameterDiagnostics d;
    d.name = draws.names[p];
    d.mean = mean_of(all);
    d.sd = std::sqrt(var_of(all));
    d.constant = is_constant(col);
    if (!d.constant) {
      d.rhat = split_rhat(col);
      d.ess_bulk = ess_bulk(col);
      d.ess_tail = ess_tail(col);
      d.mcse = mcse_mean(col);
      if (!(d.rhat < gates.max_rhat)) rhat_ok = false;
      const double score = std::isnan(d.rhat) ? kInf : d.rhat;
      if (score > r.max_rhat) {
        r.max_rhat = score;
        r.worst_rhat_parameter = d.name;
      }
    } else {
      d.rhat = d.ess_bulk = d.ess_tail = d.mcse = std::numeric_limits<double>::quiet_NaN();
    }
    r.parameters.push_back(std::move(d));
  }
  r.min_efmi = kInf;
  for (const auto& ch : draws.chains) {
    std::vector<double> energy;
    for (const auto& t : ch.telemetry) {
      energy.push_back(t.energy);
      r.divergences += t.divergent ? 1 : 0;
      r.max_treedepth_hits += t.treedepth >= max_treedepth ? 1 : 0;
    }
    r.efmi.push_back(efmi(energy));
    r.min_efmi = std::min(r.min_efmi, r.efmi.back());
  }
  r.rhat_ok = rhat_ok;
  r.efmi_ok = r.min_efmi > gates.min_efmi;
  r.divergences_ok = r.divergences <= gates.max_divergences;
  return r;
}

namespace {
nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }
}  // namespace

void write_diagnostics_json(std::ostream& out, const DiagnosticsReport& report, const GateThresholds& gates) {
  nlohmann::json j;
  j["passed"] = report.passed();
  j["gates"] = {{"max_rhat", gates.max_rhat},
                {"min_efmi", gates.min_efmi},
                {"max_divergences", gates.max_divergences},
                {"rhat_ok", report.rhat_ok},
                {"efmi_ok", report.efmi_ok},
                {"divergences_ok", report.divergences_ok}};
  j["max_rhat"] = finite_or_null(report.max_rhat);
  j["worst_rhat_parameter"] = report.worst_rhat_parameter;
  j["divergences"] = report.divergences;
  j["max_treedepth_hits"] = report.max_treedepth_hits;
  j["efmi"] = report.efmi;
  auto& params = j["parameters"] = nlohmann::json::array();
  for (const auto& p : report.parameters) {
    params.push_back({{"name", p.name},
                      {"mean", finite_or_null(p.mean)},
                      {"sd", finite_or_null(p.sd)},
                      {"mcse", finite_or_null(p.mcse)},
                      {"rhat", finite_or_null(p.rhat)},
                      {"ess_bulk", finite_or_null(p.ess_bulk)},
                      {"ess_tail", finite_or_null(p.ess_tail)},
                      {"constant", p.constant}});
  }
  out << j.dump(2) << '\n';
}

// ---- draw files ---------------------------------------------------------------

namespace {

const std::vector<std::string> kTelemetryColumns = {"chain",       "iteration",  "lp__",      "accept_stat__", "stepsize__",
                                                    "treedepth__", "n_leapfrog__", "divergent__", "energy__"};

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
  return q + '"';
}

void write_rows(std::ostream& out, const PosteriorDraws& draws, std::span<const std::string> names, bool points) {
  out << std::setprecision(17);
  for (std::size_t i = 0; i < kTelemetryColumns.size(); ++i) out << (i ? "," : "") << kTelemetryColumns[i];
  for (const auto& n : names) out << ',' << csv_field(n);
  out << '\n';
  for (std::size_t c = 0; c < draws.chains.size(); ++c) {
    const ChainDraws& ch = draws.chains[c];
    for (std::size_t i = 0; i < ch.telemetry.size(); ++i) {
      const Telemetry& t = ch.telemetry[i];
      out << c + 1 << ',' << i + 1 << ',' << t.log_density << ',' << t.accept_stat << ',' << t.stepsize << ','
          << t.treedepth << ',' << t.n_leapfrog << ',' << (t.divergent ? 1 : 0) << ',' << t.energy;
      for (double v : points ? ch.points[i] : ch.values[i]) out << ',' << v;
      out << '\n';
    }
  }
}

// Fields may be double-quoted (names like mu[1,0] contain commas).
std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        out.back() += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.emplace_back();
    } else if (ch != '\r') {
      out.back() += ch;
    }
  }
  return out;
}

}  // namespace

void write_draws_csv(std::ostream& out, const PosteriorDraws& draws) { write_rows(out, draws, draws.names, false); }

void write_points_csv(std::ostream& out, const PosteriorDraws& draws, std::span<const std::string> point_names) {
  write_rows(out, draws, point_names, true);
}

PosteriorDraws read_draws_csv(std::istream& in, bool as_points) {
  std::string line;
  if (!std::getline(in, line)) throw SamplerError("draws file: empty");
  const auto header = split_csv(line);
  const std::size_t nt = kTelemetryColumns.size();
  if (header.size() < nt || !std::equal(kTelemetryColumns.begin(), kTelemetryColumns.end(), header.begin()))
    throw SamplerError("draws file: unexpected header");
  PosteriorDraws d;
  d.names.assign(header.begin() + static_cast<std::ptrdiff_t>(nt), header.end());
  std::map<std::size_t, ChainDraws> chains;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size())
      throw SamplerError("draws file: line " + std::to_string(lineno) + " has the wrong number of fields");
    try {
      ChainDraws& ch = chains[std::stoul(cells[0])];
      Telemetry t;
      t.log_density = std::stod(cells[2]);
      t.accept_stat = std::stod(cells[3]);
      t.stepsize = std::stod(cells[4]);
      t.treedepth = std::stoi(cells[5]);
      t.n_leapfrog = std::stoi(cells[6]);
      t.divergent = std::stoi(cells[7]) != 0;
      t.energy = std::stod(cells[8]);
      std::vector<double> v;
      v.reserve(cells.size() - nt);
      for (std::size_t i = nt; i < cells.size(); ++i) v.push_back(std::stod(cells[i]));
      ch.telemetry.push_back(t);
      (as_points ? ch.points : ch.values).push_back(std::move(v));
    } catch (const std::logic_error&) {
      throw SamplerError("draws file: line " + std::to_string(lineno) + " is not numeric");
    }
  }
  for (auto& [k, ch] : chains) d.chains.push_back(std::move(ch));
  for (const auto& ch : d.chains)
    if (ch.telemetry.size() != d.chains.front().telemetry.size())
      throw SamplerError("draws file: chains differ in length");
  return d;
}

}  // namespace mvplc
