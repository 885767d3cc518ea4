#pragma once

// Truncated Fock-space reference solver for the mechanical master equation
//   drho/dt = -i[w N, rho] + D' Dc[Q] + D_q Dc[P] - i(G0/4)[Q,{P,rho}]
//             - i kappa G [Q^3,{P,rho}] + kappa G^2 Dc[Q^3],
// Dc[A] rho = A rho A - {A^2, rho}/2, and its quantum-state-diffusion
// unraveling.

#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "levicool/errors.hpp"
#include "levicool/parallel.hpp"
#include "levicool/params.hpp"

namespace levicool {

using cplx = std::complex<double>;
using SpMat = Eigen::SparseMatrix<cplx, Eigen::RowMajor>;

/// Rates in the master equation, all in 1/s (or any consistent unit).
struct LindbladSpec {
  double omega = 0.0;
  double decoherence = 0.0; // D' = D_p + A_t + A_p
  double position_diffusion = 0.0; // D_q
  double friction = 0.0;    // eta_f / m
  double gain = 0.0;        // G
  double kappa = 0.0;       // chi^2 Phi

  /// Brownian bath at thermal number n_th (k_B T / hbar w):
  /// D_p = Gamma0 n_th, D_q = Gamma0 / (12 n_th).
  static LindbladSpec brownian(double omega, double gamma0, double n_th, double extra_heating = 0.0,
                               double gain = 0.0, double kappa = 0.0) {
    require(n_th > 0.0, "bath occupation must be > 0");
    return {omega, gamma0 * n_th + extra_heating, gamma0 / (12.0 * n_th), gamma0, gain, kappa};
  }

  void validate() const {
    require(omega >= 0.0 && decoherence >= 0.0 && position_diffusion >= 0.0 && friction >= 0.0 &&
                gain >= 0.0 && kappa >= 0.0,
            "Lindblad rates must be >= 0");
  }
};

/// Spec from derived rates of a physical system.
inline LindbladSpec lindblad_spec(const System &s, const OperatingPoint &op) {
  return {s.modes.z.omega, op.decoherence, op.brownian.position_diffusion,
          op.damping.gamma0, op.gain, s.kappa};
}

/// Large-n occupation the Brownian generator relaxes to at bath number n:
/// n - 1/2 + 1/(12 n).
inline double brownian_steady_occupation(double n_th) { return n_th - 0.5 + 1.0 / (12.0 * n_th); }

struct FockOperators {
  int d = 0;
  SpMat b, Q, P, N, Q2, P2, Q3, Q6, QP, Q3P;
};

inline FockOperators fock_operators(int d) {
  require(d >= 2, "Fock dimension must be >= 2");
  FockOperators o;
  o.d = d;
  std::vector<Eigen::Triplet<cplx>> tb, tn;
  for (int n = 1; n < d; ++n)
    tb.emplace_back(n - 1, n, std::sqrt(static_cast<double>(n)));
  for (int n = 0; n < d; ++n)
    tn.emplace_back(n, n, static_cast<double>(n));
  o.b.resize(d, d);
  o.b.setFromTriplets(tb.begin(), tb.end());
  o.N.resize(d, d);
  o.N.setFromTriplets(tn.begin(), tn.end());
  const SpMat bd = o.b.adjoint();
  o.Q = o.b + bd;
  o.P = cplx(0.0, 1.0) * (bd - o.b);
  o.Q2 = o.Q * o.Q;
  o.P2 = o.P * o.P;
  o.Q3 = o.Q2 * o.Q;
  o.Q6 = o.Q3 * o.Q3;
  o.QP = o.Q * o.P;
  o.Q3P = o.Q3 * o.P;
  return o;
}

struct FockDensityMatrix {
  Eigen::MatrixXcd rho;

  int dim() const { return static_cast<int>(rho.rows()); }
  double trace() const { return rho.trace().real(); }
  double tail() const { return rho(dim() - 1, dim() - 1).real(); }
  double hermiticity_error() const { return (rho - rho.adjoint()).cwiseAbs().maxCoeff(); }
  double min_eigenvalue() const {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (rho + rho.adjoint()), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
  }
  double mean_n() const {
    double s = 0.0;
    for (int n = 0; n < dim(); ++n)
      s += n * rho(n, n).real();
    return s;
  }
  double mean_n2() const {
    double s = 0.0;
    for (int n = 0; n < dim(); ++n)
      s += static_cast<double>(n) * n * rho(n, n).real();
    return s;
  }
};

/// Geometric populations p_n = nbar^n / (nbar+1)^(n+1), n < d. The
/// truncated tail (nbar/(nbar+1))^d is dropped unless `normalize`.
inline FockDensityMatrix thermal_state(int d, double nbar, bool normalize = false) {
  require(d >= 1, "Fock dimension must be >= 1");
  require(nbar >= 0.0, "mean occupation must be >= 0");
  FockDensityMatrix s;
  s.rho = Eigen::MatrixXcd::Zero(d, d);
  const double r = nbar / (nbar + 1.0);
  double p = 1.0 / (nbar + 1.0);
  for (int n = 0; n < d; ++n) {
    s.rho(n, n) = p;
    p *= r;
  }
  if (normalize)
    s.rho /= s.rho.trace().real();
  return s;
}

inline FockDensityMatrix fock_state(int d, int n) {
  require(n >= 0 && n < d, "Fock index out of range");
  FockDensityMatrix s;
  s.rho = Eigen::MatrixXcd::Zero(d, d);
  s.rho(n, n) = 1.0;
  return s;
}

/// |<N^2> - 2<N>^2 - <N>| / max(<N^2>, 1).
inline double closure_residual(const FockDensityMatrix &s) {
  const double n = s.mean_n(), n2 = s.mean_n2();
  return std::abs(n2 - 2.0 * n * n - n) / std::max(n2, 1.0);
}

/// Lindblad form of the generator:
///   H  = w N + (G0/8){Q,P} + (kappa G/2)(P Q^3 + Q^3 P)
///   L1 = a Q + i (G0 / 4a) P,       a = sqrt(D')
///   L2 = sqrt(kappa) (P - i G Q^3)  (with feedback)
///   L3 = sqrt(D_q - G0^2/(16 D') - kappa) P
/// The residual D[P] rate must be >= 0, otherwise the reduced generator is
/// not completely positive and has no such form.
struct LindbladForm {
  SpMat H; // without the w N part
  std::vector<SpMat> L;
  double residual = 0.0;
};

inline std::optional<LindbladForm> lindblad_form(const LindbladSpec &spec, const FockOperators &o) {
  const cplx i(0.0, 1.0);
  const double g = spec.friction / 4.0;
  const double kg = spec.kappa * spec.gain;
  LindbladForm f;
  f.H = (g / 2.0) * SpMat(o.QP + SpMat(o.P * o.Q)) + (kg / 2.0) * SpMat(o.Q3P + SpMat(o.P * o.Q3));
  f.residual = spec.position_diffusion;
  if (spec.decoherence > 0.0) {
    const double a = std::sqrt(spec.decoherence);
    f.L.push_back(SpMat(a * o.Q + (i * (g / a)) * o.P));
    f.residual -= g * g / spec.decoherence;
  } else if (g > 0.0) {
    return std::nullopt;
  }
  if (kg != 0.0) {
    f.L.push_back(SpMat(std::sqrt(spec.kappa) * (o.P - (i * spec.gain) * o.Q3)));
    f.residual -= spec.kappa;
  }
  if (f.residual < -1e-12 * std::max(spec.position_diffusion, 1e-300))
    return std::nullopt;
  if (f.residual > 0.0)
    f.L.push_back(SpMat(std::sqrt(f.residual) * o.P));
  for (auto &l : f.L)
    l.prune(cplx(0.0, 0.0));
  f.H.prune(cplx(0.0, 0.0));
  return f;
}

/// Linear action rho -> L[rho] on Hermitian rho.
///
/// When the spec admits a Lindblad form the truncated generator is built
/// from it, which keeps it completely positive in the cut-off space. The
/// term-by-term form loses [Q,P] = 2i at the last Fock level and turns the
/// friction term anti-damping there; it is only used when no Lindblad form
/// exists (feedback stronger than the D_q budget), where it serves for
/// short-time moments.
class Generator {
public:
  Generator(const LindbladSpec &spec, int d) : spec_(spec), ops_(fock_operators(d)) {
    spec.validate();
    require(d >= 8, "oracle requires d >= 8");
    const cplx i(0.0, 1.0);
    if (auto form = lindblad_form(spec, ops_)) {
      lindblad_ = true;
      M_ = -i * (spec.omega * ops_.N + form->H);
      for (auto &l : form->L) {
        M_ -= 0.5 * SpMat(SpMat(l.adjoint()) * l);
        jumps_.push_back(l);
        jumps_adj_.push_back(SpMat(l.adjoint()));
      }
    } else {
      const double g = spec.friction / 4.0;
      const double kg = spec.kappa * spec.gain;
      M_ = -i * spec.omega * ops_.N - 0.5 * spec.decoherence * ops_.Q2 -
           0.5 * spec.position_diffusion * ops_.P2 - i * g * ops_.QP - i * kg * ops_.Q3P -
           0.5 * kg * spec.gain * ops_.Q6;
    }
    M_.prune(cplx(0.0, 0.0));
  }

  const LindbladSpec &spec() const { return spec_; }
  const FockOperators &ops() const { return ops_; }
  int dim() const { return ops_.d; }
  bool is_lindblad() const { return lindblad_; }

  void apply(const Eigen::MatrixXcd &rho, Eigen::MatrixXcd &out) const {
    const Eigen::MatrixXcd mr = M_ * rho;
    out = mr + mr.adjoint();
    if (lindblad_) {
      for (std::size_t k = 0; k < jumps_.size(); ++k)
        out.noalias() += (jumps_[k] * rho) * jumps_adj_[k];
      hermitize(out);
      return;
    }
    const cplx i(0.0, 1.0);
    const Eigen::MatrixXcd qr = ops_.Q * rho;
    if (spec_.decoherence != 0.0)
      out.noalias() += spec_.decoherence * (qr * ops_.Q);
    if (spec_.position_diffusion != 0.0)
      out.noalias() += spec_.position_diffusion * ((ops_.P * rho) * ops_.P);
    if (spec_.friction != 0.0) {
      const Eigen::MatrixXcd x = qr * ops_.P; // Q rho P; (Q rho P)^dag = P rho Q
      out += (-i * spec_.friction / 4.0) * (x - x.adjoint());
    }
    const double kg = spec_.kappa * spec_.gain;
    if (kg != 0.0) {
      const Eigen::MatrixXcd q3r = ops_.Q3 * rho;
      const Eigen::MatrixXcd y = q3r * ops_.P;
      out += (-i * kg) * (y - y.adjoint());
      out.noalias() += kg * spec_.gain * (q3r * ops_.Q3);
    }
    hermitize(out);
  }

  Eigen::MatrixXcd operator()(const Eigen::MatrixXcd &rho) const {
    Eigen::MatrixXcd out;
    apply(rho, out);
    return out;
  }

  /// Upper bound on the operator norm, used for the RK4 step.
  double norm_bound() const {
    const double q = 2.0 * std::sqrt(static_cast<double>(ops_.d - 1));
    const double kg = spec_.kappa * spec_.gain;
    return spec_.omega * (ops_.d - 1) + 2.0 * spec_.decoherence * q * q +
           2.0 * spec_.position_diffusion * q * q + spec_.friction * q * q +
           2.0 * spec_.friction * spec_.friction / std::max(spec_.decoherence, 1e-300) * q * q +
           4.0 * kg * q * q * q * q + 2.0 * (spec_.kappa + kg * spec_.gain * std::pow(q, 4)) * q * q;
  }

  double max_rate() const {
    return std::max({spec_.omega, spec_.decoherence, spec_.position_diffusion, spec_.friction,
                     spec_.kappa * spec_.gain, spec_.kappa * spec_.gain * spec_.gain});
  }

  /// d<N>/dt = tr(N L[rho]).
  double phonon_rate(const FockDensityMatrix &s) const {
    const Eigen::MatrixXcd l = (*this)(s.rho);
    double r = 0.0;
    for (int n = 0; n < dim(); ++n)
      r += n * l(n, n).real();
    return r;
  }

private:
  // rho M^dag is formed as (M rho)^dag, which is only valid for Hermitian
  // input. An anti-Hermitian rounding residue would evolve under the wrong
  // map and grow, so outputs are made exactly Hermitian.
  static void hermitize(Eigen::MatrixXcd &m) { m = (0.5 * (m + m.adjoint())).eval(); }

  LindbladSpec spec_;
  FockOperators ops_;
  SpMat M_;
  bool lindblad_ = false;
  std::vector<SpMat> jumps_, jumps_adj_;
};

inline Generator build_generator(const LindbladSpec &spec, int d) { return Generator(spec, d); }

/// Phonon ODE coefficients implied by a Lindblad spec (same closure and
/// conventions as feedback_coefficients()).
inline FeedbackCoefficients coefficients_of(const LindbladSpec &s) {
  FeedbackCoefficients c;
  c.J = feedback_gain_factor(s.gain) * s.kappa;
  c.K = s.friction + c.J;
  c.L = s.decoherence + s.position_diffusion - c.J / 2.0 - s.friction / 2.0;
  c.heating = s.gain > 2.0 / 9.0;
  return c;
}

struct OracleMoment {
  double t = 0.0;
  double n = 0.0;
  double n2 = 0.0;
  double closure = 0.0;
  double trace_error = 0.0;
  double hermiticity = 0.0;
  double min_eigenvalue = 0.0;
  double tail = 0.0;
};

struct OracleRun {
  FockDensityMatrix state;
  std::vector<OracleMoment> moments;
  double dt = 0.0;
  std::size_t steps = 0;
  double max_tail = 0.0;
};

inline OracleMoment measure(const FockDensityMatrix &s, double t, bool eigen = true) {
  OracleMoment m;
  m.t = t;
  m.n = s.mean_n();
  m.n2 = s.mean_n2();
  m.closure = closure_residual(s);
  m.trace_error = std::abs(s.trace() - 1.0);
  m.hermiticity = s.hermiticity_error();
  m.min_eigenvalue = eigen ? s.min_eigenvalue() : 0.0;
  m.tail = s.tail();
  return m;
}

/// Fixed-step RK4 to t_final with `checkpoints` evenly spaced records.
/// dt <= 0 selects min(1e-2 / max rate, 0.5 / ||L||).
inline OracleRun evolve(const FockDensityMatrix &rho0, const Generator &gen, double t_final,
                        double dt = 0.0, std::size_t checkpoints = 20, double tail_limit = 1e-6) {
  require(rho0.dim() == gen.dim(), "state and generator dimensions differ");
  require(std::abs(rho0.trace() - 1.0) < 1e-8, "initial state must have unit trace");
  require(rho0.hermiticity_error() < 1e-10, "initial state must be Hermitian");
  require(t_final >= 0.0, "t_final must be >= 0");
  require(checkpoints >= 1, "checkpoints must be >= 1");
  const double dt_auto = std::min(1e-2 / std::max(gen.max_rate(), 1e-300), 0.5 / gen.norm_bound());
  const double dt_max = dt > 0.0 ? dt : dt_auto;
  const double interval = t_final / static_cast<double>(checkpoints);
  const std::size_t per = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(interval / dt_max - 1e-9)));
  const double h = interval / static_cast<double>(per);

  OracleRun run;
  run.dt = h;
  Eigen::MatrixXcd rho = rho0.rho, k1, k2, k3, k4;
  run.moments.push_back(measure(rho0, 0.0));
  run.max_tail = rho0.tail();
  for (std::size_t c = 1; c <= checkpoints; ++c) {
    for (std::size_t s = 0; s < per; ++s) {
      gen.apply(rho, k1);
      gen.apply(rho + (0.5 * h) * k1, k2);
      gen.apply(rho + (0.5 * h) * k2, k3);
      gen.apply(rho + h * k3, k4);
      rho += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      ++run.steps;
    }
    if (!rho.allFinite())
      throw NumericalError("oracle state became non-finite at t = " + std::to_string(c * interval));
    FockDensityMatrix cur{rho};
    run.moments.push_back(measure(cur, static_cast<double>(c) * interval));
    run.max_tail = std::max(run.max_tail, cur.tail());
  }
  run.state.rho = rho;
  const auto &last = run.moments.back();
  if (last.tail > tail_limit)
    throw NumericalError("truncation leak: tail weight " + std::to_string(last.tail) +
                         " exceeds " + std::to_string(tail_limit) + " at d = " +
                         std::to_string(gen.dim()) + "; increase the Fock dimension");
  return run;
}

/// One-sided second-order finite difference of <N> at t = 0 from two short
/// RK4 steps of size h.
inline double phonon_rate_fd(const FockDensityMatrix &rho0, const Generator &gen, double h) {
  const double dt = std::min(h / 4.0, 0.5 / gen.norm_bound());
  const auto run = evolve(rho0, gen, 2.0 * h, dt, 2, 1.0);
  const double n0 = run.moments[0].n, n1 = run.moments[1].n, n2 = run.moments[2].n;
  return (-3.0 * n0 + 4.0 * n1 - n2) / (2.0 * h);
}

/// Operators for unraveling the Lindblad form.
struct QsdOperators {
  int d = 0;
  double omega = 0.0;
  SpMat H;                // without the w N part
  std::vector<SpMat> L;   // jump operators
  std::vector<SpMat> LdL; // L^dag L
  SpMat drift;            // -i H - (1/2) sum L^dag L
};

inline QsdOperators qsd_operators(const LindbladSpec &spec, int d) {
  spec.validate();
  const FockOperators o = fock_operators(d);
  auto form = lindblad_form(spec, o);
  if (!form)
    throw ValidationError("reduced generator has no Lindblad form (feedback strength exceeds the "
                          "D_q budget, or friction without decoherence); no QSD unraveling");
  QsdOperators q;
  q.d = d;
  q.omega = spec.omega;
  q.H = form->H;
  q.L = form->L;
  q.drift = SpMat(-cplx(0.0, 1.0) * q.H);
  for (auto &l : q.L) {
    q.LdL.push_back(SpMat(SpMat(l.adjoint()) * l));
    q.drift -= 0.5 * q.LdL.back();
  }
  return q;
}

/// Complex Wiener increment with E[dW] = 0, E[|dW|^2] = dt, E[dW^2] = 0.
template <class Rng> cplx complex_wiener(Rng &rng, double dt) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double s = std::sqrt(dt / 2.0);
  const double re = gauss(rng);
  const double im = gauss(rng);
  return {s * re, s * im};
}

struct QsdTrajectory {
  std::vector<double> t;
  std::vector<double> n; // <psi|N|psi> at checkpoints
  Eigen::VectorXcd psi;
  int initial_fock = 0;
  double max_norm_error = 0.0;   // realized |<psi|psi> - 1| before renormalization
  double max_drift_scale = 0.0;  // dt * sum_k Var(L_k)
};

/// Split-step Euler-Maruyama for the normalized QSD equation: Euler for
/// the Lindblad and H terms, exact phase exp(-i w n dt) for w N, then
/// renormalization. A step whose expected norm drift dt * sum Var(L_k)
/// exceeds `drift_limit` is refused as too coarse.
template <class Rng>
QsdTrajectory qsd_trajectory(const Eigen::VectorXcd &psi0, const QsdOperators &ops, double t_final,
                             double dt, std::size_t checkpoints, Rng &rng,
                             double drift_limit = 1e-3) {
  require(psi0.size() == ops.d, "state dimension mismatch");
  require(std::abs(psi0.norm() - 1.0) < 1e-10, "initial state must be normalized");
  require(dt > 0.0 && t_final >= 0.0 && checkpoints >= 1, "bad QSD time grid");
  const double interval = t_final / static_cast<double>(checkpoints);
  const std::size_t per = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(interval / dt - 1e-9)));
  const double h = interval / static_cast<double>(per);
  const cplx i(0.0, 1.0);

  Eigen::VectorXcd phase(ops.d);
  for (int n = 0; n < ops.d; ++n)
    phase[n] = std::exp(-i * (ops.omega * n * h));

  QsdTrajectory tr;
  Eigen::VectorXcd psi = psi0, drift(ops.d), noise(ops.d), lpsi(ops.d);
  auto number = [&](const Eigen::VectorXcd &v) {
    double s = 0.0;
    for (int n = 0; n < ops.d; ++n)
      s += n * std::norm(v[n]);
    return s;
  };
  tr.t.push_back(0.0);
  tr.n.push_back(number(psi));
  for (std::size_t c = 1; c <= checkpoints; ++c) {
    for (std::size_t s = 0; s < per; ++s) {
      drift.noalias() = ops.drift * psi;
      noise.setZero();
      double var_sum = 0.0;
      for (std::size_t k = 0; k < ops.L.size(); ++k) {
        lpsi.noalias() = ops.L[k] * psi;
        const cplx ev = psi.dot(lpsi); // <psi|L|psi>
        const double var = lpsi.squaredNorm() - std::norm(ev);
        var_sum += var;
        drift += std::conj(ev) * lpsi - 0.5 * std::norm(ev) * psi;
        const cplx dw = complex_wiener(rng, h);
        noise += dw * (lpsi - ev * psi);
      }
      tr.max_drift_scale = std::max(tr.max_drift_scale, h * var_sum);
      if (h * var_sum > drift_limit)
        throw NumericalError("QSD norm drift " + std::to_string(h * var_sum) + " per step exceeds " +
                             std::to_string(drift_limit) + "; reduce dt below " +
                             std::to_string(h * drift_limit / (h * var_sum)));
      psi += h * drift + noise;
      psi = psi.cwiseProduct(phase);
      const double nrm2 = psi.squaredNorm();
      if (!std::isfinite(nrm2) || nrm2 <= 0.0)
        throw NumericalError("QSD state collapsed at t = " + std::to_string(tr.t.back()));
      tr.max_norm_error = std::max(tr.max_norm_error, std::abs(nrm2 - 1.0));
      psi /= std::sqrt(nrm2);
    }
    tr.t.push_back(static_cast<double>(c) * interval);
    tr.n.push_back(number(psi));
  }
  tr.psi = psi;
  return tr;
}

struct QsdEnsemble {
  std::vector<double> t;
  std::vector<double> mean_n;
  std::vector<double> stderr_n;
  Eigen::MatrixXcd mean_rho;    // average |psi><psi| at t_final
  Eigen::MatrixXcd stderr_rho;  // entrywise standard error (real and imag parts combined)
  std::size_t n_traj = 0;
  double max_norm_error = 0.0;
  double max_drift_scale = 0.0;
};

/// n_traj trajectories from Fock states drawn from the truncated thermal
/// distribution at nbar; trajectory i uses engine (seed, i, 0).
inline QsdEnsemble qsd_ensemble(const LindbladSpec &spec, int d, double nbar, double t_final,
                                double dt, std::size_t checkpoints, std::size_t n_traj,
                                std::uint64_t seed, unsigned threads = 1) {
  require(n_traj >= 2, "QSD ensemble needs at least 2 trajectories");
  const QsdOperators ops = qsd_operators(spec, d);
  std::vector<QsdTrajectory> runs(n_traj);
  parallel_for(n_traj, threads, [&](std::size_t i) {
    auto rng = make_engine(seed, i, 0);
    std::geometric_distribution<int> geo(1.0 / (nbar + 1.0));
    int n0 = geo(rng);
    while (n0 >= d)
      n0 = geo(rng);
    Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(d);
    psi[n0] = 1.0;
    runs[i] = qsd_trajectory(psi, ops, t_final, dt, checkpoints, rng);
    runs[i].initial_fock = n0;
  });

  QsdEnsemble e;
  e.n_traj = n_traj;
  e.t = runs[0].t;
  const std::size_t len = e.t.size();
  e.mean_n.assign(len, 0.0);
  e.stderr_n.assign(len, 0.0);
  e.mean_rho = Eigen::MatrixXcd::Zero(d, d);
  Eigen::MatrixXd sq = Eigen::MatrixXd::Zero(d, d);
  for (const auto &r : runs) {
    for (std::size_t k = 0; k < len; ++k)
      e.mean_n[k] += r.n[k];
    const Eigen::MatrixXcd p = r.psi * r.psi.adjoint();
    e.mean_rho += p;
    sq += p.cwiseAbs2();
    e.max_norm_error = std::max(e.max_norm_error, r.max_norm_error);
    e.max_drift_scale = std::max(e.max_drift_scale, r.max_drift_scale);
  }
  const double n = static_cast<double>(n_traj);
  for (std::size_t k = 0; k < len; ++k)
    e.mean_n[k] /= n;
  for (const auto &r : runs)
    for (std::size_t k = 0; k < len; ++k)
      e.stderr_n[k] += (r.n[k] - e.mean_n[k]) * (r.n[k] - e.mean_n[k]);
  for (std::size_t k = 0; k < len; ++k)
    e.stderr_n[k] = std::sqrt(e.stderr_n[k] / (n - 1.0) / n);
  e.mean_rho /= n;
  const Eigen::MatrixXd var = (sq / n - e.mean_rho.cwiseAbs2()) * (n / (n - 1.0));
  e.stderr_rho = (var.cwiseMax(0.0) / n).cwiseSqrt().cast<cplx>();
  return e;
}

} // namespace levicool
