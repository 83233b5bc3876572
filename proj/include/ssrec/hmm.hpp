#ifndef SSREC_HMM_HPP
#define SSREC_HMM_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssrec/types.hpp"

namespace ssrec {

using ObsSeq = std::vector<std::uint32_t>;

/// Discrete HMM parameters <pi, A, B>, stored row-major.
struct HmmParams {
  std::size_t n_states = 0;
  std::size_t n_obs = 0;
  std::vector<double> pi;
  std::vector<double> A;  // n_states x n_states, A[i][j] = p(j | i)
  std::vector<double> B;  // n_states x n_obs,    B[j][m] = p(m | j)

  double a(std::size_t i, std::size_t j) const { return A[i * n_states + j]; }
  double b(std::size_t j, std::size_t m) const { return B[j * n_obs + m]; }
  std::span<const double> a_row(std::size_t i) const { return {A.data() + i * n_states, n_states}; }
  std::span<const double> b_row(std::size_t j) const { return {B.data() + j * n_obs, n_obs}; }

  static HmmParams uniform(std::size_t n_states, std::size_t n_obs) {
    HmmParams p;
    p.n_states = n_states;
    p.n_obs = n_obs;
    p.pi.assign(n_states, 1.0 / static_cast<double>(n_states));
    p.A.assign(n_states * n_states, 1.0 / static_cast<double>(n_states));
    p.B.assign(n_states * n_obs, 1.0 / static_cast<double>(n_obs));
    return p;
  }

  /// Throws DataError unless every distribution is non-negative and sums to 1.
  void validate(double tol = 1e-9) const {
    if (n_states == 0 || n_obs == 0) throw DataError("HMM needs at least one state and one symbol");
    if (pi.size() != n_states || A.size() != n_states * n_states || B.size() != n_states * n_obs) {
      throw DataError("HMM parameter dimensions are inconsistent");
    }
    auto check = [&](std::span<const double> row, const char* what) {
      double s = 0;
      for (double v : row) {
        if (!(v >= 0.0)) throw DataError(std::string("negative or NaN entry in ") + what);
        s += v;
      }
      if (std::abs(s - 1.0) > tol) throw DataError(std::string(what) + " row does not sum to 1");
    };
    check(pi, "pi");
    for (std::size_t i = 0; i < n_states; ++i) {
      check(a_row(i), "A");
      check(b_row(i), "B");
    }
  }

  friend bool operator==(const HmmParams&, const HmmParams&) = default;
};

struct TrainConfig {
  std::size_t max_iterations = 100;
  double tolerance = 1e-6;  // on |delta log-likelihood|
  std::uint64_t seed = 0;
  double floor = kDefaultFloor;

  void validate() const {
    if (!(tolerance > 0)) throw ConfigError("train tolerance must be > 0");
    if (!(floor > 0) || floor >= 1e-3) throw ConfigError("probability floor must be in (0, 1e-3)");
    if (max_iterations == 0) throw ConfigError("max_iterations must be >= 1");
  }
};

struct TrainResult {
  HmmParams params;
  double log_likelihood = 0;
  std::vector<double> history;  // log-likelihood evaluated at each E-step
};

struct ViterbiResult {
  std::vector<std::uint32_t> path;
  double log_prob = 0;
};

/// Producer component not observed at this step: every composite state allowed.
inline constexpr std::uint32_t kAnyComponent = std::numeric_limits<std::uint32_t>::max();

namespace detail {

/// Closest point of the simplex {x : sum x = 1, x >= floor} under the
/// multinomial log-likelihood sum w_j log x_j. Exact KKT solution, so it is
/// the constrained M-step. Requires sum w > 0 and w.size() * floor <= 1.
inline std::vector<double> project_to_floored_simplex(std::span<const double> w, double floor) {
  const std::size_t n = w.size();
  std::vector<char> clamped(n, 0);
  std::size_t n_clamped = 0;
  double scale = 1;
  while (true) {
    double active = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (!clamped[j]) active += w[j];
    scale = active / (1.0 - static_cast<double>(n_clamped) * floor);
    bool changed = false;
    for (std::size_t j = 0; j < n; ++j) {
      if (!clamped[j] && w[j] < floor * scale) {
        clamped[j] = 1;
        ++n_clamped;
        changed = true;
      }
    }
    if (!changed || n_clamped == n) break;
  }
  std::vector<double> out(n);
  for (std::size_t j = 0; j < n; ++j) out[j] = clamped[j] ? floor : std::max(floor, w[j] / scale);
  return out;
}

inline double uniform01(std::mt19937_64& rng) {
  // 53 random bits in (0, 1].
  return (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;
}

/// Symmetric Dirichlet(1) draw, floored.
inline std::vector<double> dirichlet_row(std::mt19937_64& rng, std::size_t n, double floor) {
  std::vector<double> w(n);
  for (auto& v : w) v = -std::log(uniform01(rng));
  return project_to_floored_simplex(w, floor);
}

inline double within_group_q(std::span<const double> counts, std::span<const double> row, std::size_t groups) {
  std::vector<double> gs(groups, 0.0);
  for (std::size_t j = 0; j < row.size(); ++j) gs[j % groups] += row[j];
  double q = 0;
  for (std::size_t j = 0; j < row.size(); ++j)
    if (counts[j] > 0) q += counts[j] * std::log(row[j] / gs[j % groups]);
  return q;
}

/// M-step for one distribution over composite states (i, k) -> i * groups + k
/// when the producer component k is observed. The likelihood only sees the
/// within-group conditionals, so they get the floored MLE; the group masses
/// are the floored empirical component frequencies. Rows never visited keep
/// their previous value. With groups == 1 this is the ordinary M-step.
inline std::vector<double> grouped_row_update(std::span<const double> counts, std::size_t groups,
                                              std::span<const double> old_row, double floor) {
  double total = 0;
  for (double c : counts) total += c;
  if (!(total > 0)) return {old_row.begin(), old_row.end()};
  if (groups <= 1) return project_to_floored_simplex(counts, floor);

  const std::size_t n = counts.size();
  const std::size_t per = n / groups;
  std::vector<double> group_totals(groups, 0.0);
  for (std::size_t j = 0; j < n; ++j) group_totals[j % groups] += counts[j];
  const auto mass = project_to_floored_simplex(group_totals, floor * static_cast<double>(per));

  std::vector<double> cand(n);
  std::vector<double> sub(per);
  for (std::size_t k = 0; k < groups; ++k) {
    std::vector<double> within;
    if (group_totals[k] > 0) {
      for (std::size_t i = 0; i < per; ++i) sub[i] = counts[i * groups + k];
      within = project_to_floored_simplex(sub, std::min(floor / mass[k], 1.0 / static_cast<double>(per)));
    } else {
      within.assign(per, 1.0 / static_cast<double>(per));
    }
    for (std::size_t i = 0; i < per; ++i) cand[i * groups + k] = mass[k] * within[i];
  }
  // Generalized EM: never accept a step that lowers the expected
  // complete-data log-likelihood.
  const double q_new = within_group_q(counts, cand, groups);
  const double q_old = within_group_q(counts, old_row, groups);
  if (q_new >= q_old - 1e-12 * (1.0 + std::abs(q_old))) return cand;
  return {old_row.begin(), old_row.end()};
}

/// Observed producer components for one sequence. groups <= 1 means a plain HMM.
struct ComponentTrack {
  std::size_t groups = 1;
  std::span<const std::uint32_t> z;

  bool active() const { return groups > 1 && !z.empty(); }
  std::uint32_t at(std::size_t t) const { return active() ? z[t] : kAnyComponent; }
  bool allowed(std::size_t t, std::size_t state) const {
    if (!active()) return true;
    const auto zt = z[t];
    return zt == kAnyComponent || state % groups == zt;
  }
};

/// Per-row sums of A restricted to each producer component, and the same
/// for pi. Used to renormalize transitions onto the observed component.
struct GroupNorms {
  std::size_t groups = 1;
  std::vector<double> a;   // n_states x groups
  std::vector<double> pi;  // groups

  GroupNorms(const HmmParams& p, std::size_t g) : groups(g) {
    if (groups <= 1) return;
    a.assign(p.n_states * groups, 0.0);
    pi.assign(groups, 0.0);
    for (std::size_t i = 0; i < p.n_states; ++i)
      for (std::size_t j = 0; j < p.n_states; ++j) a[i * groups + j % groups] += p.a(i, j);
    for (std::size_t j = 0; j < p.n_states; ++j) pi[j % groups] += p.pi[j];
  }

  double a_norm(std::size_t i, std::uint32_t zt) const {
    return (groups <= 1 || zt == kAnyComponent) ? 1.0 : a[i * groups + zt];
  }
  double pi_norm(std::uint32_t zt) const { return (groups <= 1 || zt == kAnyComponent) ? 1.0 : pi[zt]; }
};

inline void check_symbols(const HmmParams& p, std::span<const std::uint32_t> obs) {
  for (auto o : obs)
    if (o >= p.n_obs) throw DataError("observation symbol " + std::to_string(o) + " out of range");
}

/// Scaled forward pass. alpha is T x N, each row normalized; returns log-likelihood.
inline double forward_scaled(const HmmParams& p, std::span<const std::uint32_t> obs, const ComponentTrack& track,
                             const GroupNorms& norms, std::vector<double>& alpha, std::vector<double>& scale) {
  const std::size_t T = obs.size();
  const std::size_t N = p.n_states;
  alpha.assign(T * N, 0.0);
  scale.assign(T, 0.0);
  if (T == 0) return 0.0;
  double ll = 0;
  {
    const auto z0 = track.at(0);
    const double pn = norms.pi_norm(z0);
    double c = 0;
    for (std::size_t s = 0; s < N; ++s) {
      if (!track.allowed(0, s)) continue;
      const double start = (track.groups <= 1 || z0 == kAnyComponent) ? p.pi[s] : p.pi[s] / pn;
      alpha[s] = start * p.b(s, obs[0]);
      c += alpha[s];
    }
    scale[0] = c;
    for (std::size_t s = 0; s < N; ++s) alpha[s] /= c;
    ll += std::log(c);
  }
  std::vector<double> from(N);
  for (std::size_t t = 1; t < T; ++t) {
    const auto zt = track.at(t);
    const double* prev = &alpha[(t - 1) * N];
    double* cur = &alpha[t * N];
    const bool plain = track.groups <= 1 || zt == kAnyComponent;
    for (std::size_t i = 0; i < N; ++i) from[i] = plain ? prev[i] : prev[i] / norms.a_norm(i, zt);
    double c = 0;
    for (std::size_t j = 0; j < N; ++j) {
      if (!track.allowed(t, j)) continue;
      double s = 0;
      for (std::size_t i = 0; i < N; ++i) s += from[i] * p.a(i, j);
      cur[j] = s * p.b(j, obs[t]);
      c += cur[j];
    }
    scale[t] = c;
    for (std::size_t j = 0; j < N; ++j) cur[j] /= c;
    ll += std::log(c);
  }
  return ll;
}

struct ExpectedCounts {
  std::vector<double> pi, trans, emit;
  ExpectedCounts(std::size_t N, std::size_t M) : pi(N, 0.0), trans(N * N, 0.0), emit(N * M, 0.0) {}
};

/// E-step for one sequence; returns its log-likelihood.
inline double accumulate_counts(const HmmParams& p, std::span<const std::uint32_t> obs, const ComponentTrack& track,
                                const GroupNorms& norms, ExpectedCounts& counts) {
  const std::size_t T = obs.size();
  const std::size_t N = p.n_states;
  if (T == 0) return 0.0;
  std::vector<double> alpha, scale;
  const double ll = forward_scaled(p, obs, track, norms, alpha, scale);
  std::vector<double> beta(T * N, 0.0);
  for (std::size_t s = 0; s < N; ++s) beta[(T - 1) * N + s] = 1.0;
  for (std::size_t t = T - 1; t-- > 0;) {
    const auto zn = track.at(t + 1);
    for (std::size_t i = 0; i < N; ++i) {
      const double norm = norms.a_norm(i, zn);
      double s = 0;
      for (std::size_t j = 0; j < N; ++j) {
        if (!track.allowed(t + 1, j)) continue;
        s += p.a(i, j) * p.b(j, obs[t + 1]) * beta[(t + 1) * N + j];
      }
      beta[t * N + i] = s / norm / scale[t + 1];
    }
  }
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t s = 0; s < N; ++s) {
      const double g = alpha[t * N + s] * beta[t * N + s];
      if (t == 0) counts.pi[s] += g;
      counts.emit[s * p.n_obs + obs[t]] += g;
    }
  }
  for (std::size_t t = 0; t + 1 < T; ++t) {
    const auto zn = track.at(t + 1);
    for (std::size_t i = 0; i < N; ++i) {
      const double ai = alpha[t * N + i] / norms.a_norm(i, zn) / scale[t + 1];
      if (ai == 0.0) continue;
      for (std::size_t j = 0; j < N; ++j) {
        if (!track.allowed(t + 1, j)) continue;
        counts.trans[i * N + j] += ai * p.a(i, j) * p.b(j, obs[t + 1]) * beta[(t + 1) * N + j];
      }
    }
  }
  return ll;
}

inline HmmParams m_step(const HmmParams& old, const ExpectedCounts& counts, std::size_t groups, double floor) {
  HmmParams p = old;
  const std::size_t N = old.n_states;
  const std::size_t M = old.n_obs;
  p.pi = grouped_row_update(counts.pi, groups, old.pi, floor);
  for (std::size_t i = 0; i < N; ++i) {
    auto row = grouped_row_update(std::span<const double>(counts.trans.data() + i * N, N), groups, old.a_row(i),
                                  floor);
    std::copy(row.begin(), row.end(), p.A.begin() + static_cast<std::ptrdiff_t>(i * N));
  }
  for (std::size_t j = 0; j < N; ++j) {
    std::span<const double> row(counts.emit.data() + j * M, M);
    double total = 0;
    for (double c : row) total += c;
    if (!(total > 0)) continue;
    auto b = project_to_floored_simplex(row, floor);
    std::copy(b.begin(), b.end(), p.B.begin() + static_cast<std::ptrdiff_t>(j * M));
  }
  return p;
}

/// EM driver shared by the plain and composite models. tracks is either empty
/// or holds one component sequence per observation sequence.
inline TrainResult run_em(HmmParams params, std::span<const ObsSeq> sequences,
                          std::span<const std::vector<std::uint32_t>> tracks, std::size_t groups,
                          const TrainConfig& cfg) {
  cfg.validate();
  TrainResult result;
  double prev = kNegInf;
  for (std::size_t it = 0; it < cfg.max_iterations; ++it) {
    const GroupNorms norms(params, groups);
    ExpectedCounts counts(params.n_states, params.n_obs);
    double ll = 0;
    for (std::size_t s = 0; s < sequences.size(); ++s) {
      ComponentTrack track;
      if (!tracks.empty()) track = ComponentTrack{groups, tracks[s]};
      ll += accumulate_counts(params, sequences[s], track, norms, counts);
    }
    result.history.push_back(ll);
    const bool converged = it > 0 && std::abs(ll - prev) < cfg.tolerance;
    if (converged || it + 1 == cfg.max_iterations) {
      result.log_likelihood = ll;
      break;
    }
    prev = ll;
    params = m_step(params, counts, groups, cfg.floor);
  }
  result.params = std::move(params);
  return result;
}

inline void check_training_input(std::span<const ObsSeq> sequences, std::size_t n_states, std::size_t n_obs) {
  if (n_states == 0 || n_obs == 0) throw DataError("HMM needs at least one state and one symbol");
  bool any = false;
  for (const auto& seq : sequences) {
    any = any || !seq.empty();
    for (auto o : seq)
      if (o >= n_obs) throw DataError("observation symbol " + std::to_string(o) + " out of range");
  }
  if (!any) throw DataError("Baum-Welch needs at least one non-empty sequence");
}

struct ViterbiTrace {
  std::vector<double> delta;         // final log-scores, size N
  std::vector<std::uint32_t> back;   // T x N backpointers (empty unless requested)
  std::vector<std::uint32_t> finals; // argmax state after each prefix (empty unless requested)
};

inline std::uint32_t argmax_state(std::span<const double> v) {
  std::uint32_t best = 0;
  for (std::uint32_t s = 1; s < v.size(); ++s)
    if (v[s] > v[best]) best = s;
  return best;
}

/// Log-space Viterbi recursion with optional component masking.
inline ViterbiTrace viterbi_forward(const HmmParams& p, std::span<const std::uint32_t> obs,
                                    const ComponentTrack& track, bool keep_back, bool keep_finals) {
  const std::size_t T = obs.size();
  const std::size_t N = p.n_states;
  const GroupNorms norms(p, track.active() ? track.groups : 1);
  ViterbiTrace tr;
  tr.delta.assign(N, kNegInf);
  if (keep_back) tr.back.assign(T * N, 0);
  if (T == 0) return tr;
  {
    const auto z0 = track.at(0);
    const double lpn = std::log(norms.pi_norm(z0));
    for (std::size_t s = 0; s < N; ++s) {
      if (!track.allowed(0, s)) continue;
      tr.delta[s] = std::log(p.pi[s]) - lpn + std::log(p.b(s, obs[0]));
    }
    if (keep_finals) tr.finals.push_back(argmax_state(tr.delta));
  }
  std::vector<double> next(N);
  std::vector<double> lnorm(N);
  for (std::size_t t = 1; t < T; ++t) {
    const auto zt = track.at(t);
    for (std::size_t i = 0; i < N; ++i) lnorm[i] = std::log(norms.a_norm(i, zt));
    for (std::size_t j = 0; j < N; ++j) {
      if (!track.allowed(t, j)) {
        next[j] = kNegInf;
        continue;
      }
      double best = kNegInf;
      std::uint32_t arg = 0;
      for (std::size_t i = 0; i < N; ++i) {
        if (tr.delta[i] == kNegInf) continue;
        const double v = tr.delta[i] + std::log(p.a(i, j)) - lnorm[i];
        if (v > best) {
          best = v;
          arg = static_cast<std::uint32_t>(i);
        }
      }
      next[j] = best + std::log(p.b(j, obs[t]));
      if (keep_back) tr.back[t * N + j] = arg;
    }
    tr.delta.swap(next);
    if (keep_finals) tr.finals.push_back(argmax_state(tr.delta));
  }
  return tr;
}

/// One-step propagation from a known state: p(m) = sum_j A[s][j] B[j][m].
inline std::vector<double> propagate(const HmmParams& p, std::uint32_t state) {
  std::vector<double> out(p.n_obs, 0.0);
  for (std::size_t j = 0; j < p.n_states; ++j) {
    const double a = p.a(state, j);
    for (std::size_t m = 0; m < p.n_obs; ++m) out[m] += a * p.b(j, m);
  }
  return out;
}

inline std::vector<double> prior_prediction(const HmmParams& p) {
  std::vector<double> out(p.n_obs, 0.0);
  for (std::size_t i = 0; i < p.n_states; ++i)
    for (std::size_t m = 0; m < p.n_obs; ++m) out[m] += p.pi[i] * p.b(i, m);
  return out;
}

inline HmmParams random_init(std::size_t n_states, std::size_t n_obs, std::uint64_t seed, double floor) {
  std::mt19937_64 rng(seed);
  HmmParams p;
  p.n_states = n_states;
  p.n_obs = n_obs;
  p.pi = dirichlet_row(rng, n_states, floor);
  p.A.reserve(n_states * n_states);
  for (std::size_t i = 0; i < n_states; ++i) {
    auto row = dirichlet_row(rng, n_states, floor);
    p.A.insert(p.A.end(), row.begin(), row.end());
  }
  p.B.reserve(n_states * n_obs);
  for (std::size_t i = 0; i < n_states; ++i) {
    auto row = dirichlet_row(rng, n_obs, floor);
    p.B.insert(p.B.end(), row.begin(), row.end());
  }
  return p;
}

}  // namespace detail

/// Baum-Welch over several sequences (expected counts are summed). Stops when
/// |delta log-likelihood| < tolerance or after max_iterations E-steps.
inline TrainResult baum_welch(std::span<const ObsSeq> sequences, std::size_t n_states, std::size_t n_obs,
                              const TrainConfig& cfg) {
  cfg.validate();
  detail::check_training_input(sequences, n_states, n_obs);
  auto init = detail::random_init(n_states, n_obs, cfg.seed, cfg.floor);
  return detail::run_em(std::move(init), sequences, {}, 1, cfg);
}

inline TrainResult baum_welch(const ObsSeq& sequence, std::size_t n_states, std::size_t n_obs,
                              const TrainConfig& cfg) {
  return baum_welch(std::span<const ObsSeq>(&sequence, 1), n_states, n_obs, cfg);
}

/// log p(sequence); 0 for the empty sequence.
inline double forward_log_likelihood(const HmmParams& p, std::span<const std::uint32_t> seq) {
  detail::check_symbols(p, seq);
  std::vector<double> alpha, scale;
  return detail::forward_scaled(p, seq, {}, detail::GroupNorms(p, 1), alpha, scale);
}

inline ViterbiResult viterbi(const HmmParams& p, std::span<const std::uint32_t> seq) {
  if (seq.empty()) throw DataError("Viterbi needs a non-empty sequence");
  detail::check_symbols(p, seq);
  auto tr = detail::viterbi_forward(p, seq, {}, true, false);
  ViterbiResult r;
  const std::size_t T = seq.size();
  const std::size_t N = p.n_states;
  r.path.resize(T);
  r.path[T - 1] = detail::argmax_state(tr.delta);
  r.log_prob = tr.delta[r.path[T - 1]];
  for (std::size_t t = T - 1; t > 0; --t) r.path[t - 1] = tr.back[t * N + r.path[t]];
  return r;
}

/// Next-symbol distribution: decode the final state with Viterbi, then take
/// one transition step. The empty history falls back to sum_i pi_i B[i].
inline std::vector<double> predict_next_obs(const HmmParams& p, std::span<const std::uint32_t> seq) {
  if (seq.empty()) return detail::prior_prediction(p);
  detail::check_symbols(p, seq);
  auto tr = detail::viterbi_forward(p, seq, {}, false, false);
  return detail::propagate(p, detail::argmax_state(tr.delta));
}

/// Relabels states: new state s is old state perm[s].
inline HmmParams permute_states(const HmmParams& p, std::span<const std::uint32_t> perm) {
  HmmParams q = p;
  const std::size_t N = p.n_states;
  for (std::size_t s = 0; s < N; ++s) {
    q.pi[s] = p.pi[perm[s]];
    for (std::size_t t = 0; t < N; ++t) q.A[s * N + t] = p.a(perm[s], perm[t]);
    for (std::size_t m = 0; m < p.n_obs; ++m) q.B[s * p.n_obs + m] = p.b(perm[s], m);
  }
  return q;
}

inline std::uint32_t argmax_symbol(std::span<const double> dist) { return detail::argmax_state(dist); }

// JSON: {n_states, n_obs, pi, A, B} with A and B as nested row arrays.
inline void to_json(nlohmann::json& j, const HmmParams& p) {
  auto rows = [](const std::vector<double>& flat, std::size_t r, std::size_t c) {
    nlohmann::json out = nlohmann::json::array();
    for (std::size_t i = 0; i < r; ++i)
      out.push_back(std::vector<double>(flat.begin() + static_cast<std::ptrdiff_t>(i * c),
                                        flat.begin() + static_cast<std::ptrdiff_t>((i + 1) * c)));
    return out;
  };
  j = nlohmann::json{{"n_states", p.n_states},
                     {"n_obs", p.n_obs},
                     {"pi", p.pi},
                     {"A", rows(p.A, p.n_states, p.n_states)},
                     {"B", rows(p.B, p.n_states, p.n_obs)}};
}

inline void from_json(const nlohmann::json& j, HmmParams& p) {
  p.n_states = j.at("n_states").get<std::size_t>();
  p.n_obs = j.at("n_obs").get<std::size_t>();
  p.pi = j.at("pi").get<std::vector<double>>();
  p.A.clear();
  p.B.clear();
  for (const auto& row : j.at("A")) {
    auto r = row.get<std::vector<double>>();
    if (r.size() != p.n_states) throw DataError("HMM JSON: A row has wrong length");
    p.A.insert(p.A.end(), r.begin(), r.end());
  }
  for (const auto& row : j.at("B")) {
    auto r = row.get<std::vector<double>>();
    if (r.size() != p.n_obs) throw DataError("HMM JSON: B row has wrong length");
    p.B.insert(p.B.end(), r.begin(), r.end());
  }
  p.validate(1e-6);
}

}  // namespace ssrec

#endif  // SSREC_HMM_HPP
