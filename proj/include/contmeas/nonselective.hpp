// Copyright 2026 The contmeas Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Record-averaged (non-selective) dynamics:
//
//     dρ/dt = −(i/ħ)[H, ρ] − (κ/2)[A, [A, ρ]]
//
// The κ/2 follows from averaging one slice of the Gaussian instrument over
// its outcome: ∫da M(a)ρM(a)† multiplies ρ_mn (A eigenbasis) by
// exp(−(κΔt/2)(a_m − a_n)²), whose rate is (κ/2)(a_m − a_n)², the
// double-commutator coefficient. Integrated with classical RK4.

#include <cmath>
#include <cstddef>
#include <sstream>
#include <utility>
#include <vector>

#include "contmeas/hilbert.hpp"
#include "contmeas/stochastic.hpp"
#include "contmeas/unraveling.hpp"

namespace contmeas {

inline constexpr double kMaxGeneratorStep = 0.1;

struct MasterEqConfig {
    HermitianOperator hamiltonian;
    HermitianOperator observable;
    double kappa = 0.0;
    double hbar = 1.0;
    double dt = 1e-3;

    /// range(H)/ħ + (κ/2)·range(A)², an upper bound on the generator's
    /// spectral radius.
    double generator_norm() const {
        double ra = observable.spectral_range();
        return hamiltonian.spectral_range() / hbar + 0.5 * kappa * ra * ra;
    }

    void validate() const {
        require_same_dim(hamiltonian.dim(), observable.dim(), "master equation");
        require_kappa(kappa);
        require_hbar(hbar);
        require_positive_dt(dt);
        if (generator_norm() * dt >= kMaxGeneratorStep) {
            std::ostringstream msg;
            msg << "master-equation step too large: ||L||*dt = " << generator_norm() * dt << " (must be < "
                << kMaxGeneratorStep << ")";
            throw Error(ErrorKind::configuration, msg.str());
        }
    }
};

inline CMatrix me_derivative(const CMatrix &rho, const MasterEqConfig &cfg) {
    require_same_dim(cfg.hamiltonian.dim(), rho.rows(), "me_derivative");
    const CMatrix &h = cfg.hamiltonian.matrix();
    CMatrix comm = h * rho - rho * h;
    return Complex(0.0, -1.0 / cfg.hbar) * comm - (0.5 * cfg.kappa) * double_commutator(cfg.observable, rho);
}

inline CMatrix me_derivative(const DensityMatrix &rho, const MasterEqConfig &cfg) {
    return me_derivative(rho.matrix(), cfg);
}

struct MasterEqSolution {
    std::vector<std::size_t> steps;
    std::vector<double> times;
    std::vector<CMatrix> states;
};

/// RK4 from ρ₀ to t_final, sampling every `sample_stride` steps and at the
/// end. Trace (1e-9) and positivity (−1e-8) are checked after every step.
inline MasterEqSolution run_me(const DensityMatrix &rho0, const MasterEqConfig &cfg, double t_final,
                               std::size_t sample_stride = 1) {
    cfg.validate();
    require_same_dim(cfg.hamiltonian.dim(), rho0.dim(), "run_me");
    if (!(t_final >= 0.0) || !std::isfinite(t_final)) {
        throw Error(ErrorKind::configuration, "t_final must be non-negative");
    }
    if (sample_stride == 0) {
        throw Error(ErrorKind::configuration, "sample stride must be >= 1");
    }
    double ratio = t_final / cfg.dt;
    auto n_steps = static_cast<std::size_t>(std::llround(ratio));
    if (std::abs(ratio - static_cast<double>(n_steps)) > 1e-9 * std::max(1.0, ratio)) {
        throw Error(ErrorKind::configuration, "t_final must be an integer multiple of the master-equation step");
    }
    MasterEqSolution sol;
    CMatrix rho = rho0.matrix();
    auto sample = [&](std::size_t k) {
        sol.steps.push_back(k);
        sol.times.push_back(static_cast<double>(k) * cfg.dt);
        sol.states.push_back(rho);
    };
    sample(0);
    const double h = cfg.dt;
    for (std::size_t k = 1; k <= n_steps; ++k) {
        CMatrix k1 = me_derivative(rho, cfg);
        CMatrix k2 = me_derivative(rho + 0.5 * h * k1, cfg);
        CMatrix k3 = me_derivative(rho + 0.5 * h * k2, cfg);
        CMatrix k4 = me_derivative(rho + h * k3, cfg);
        rho += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (!rho.allFinite() || std::abs(rho.trace() - 1.0) > 1e-9 ||
            DensityMatrix::min_eigenvalue(rho) < -DensityMatrix::kPositivityTolerance) {
            std::ostringstream msg;
            msg << "master-equation integration lost trace or positivity at step " << k;
            throw Error(ErrorKind::step_size, msg.str());
        }
        if (k % sample_stride == 0 || k == n_steps) sample(k);
    }
    return sol;
}

/// Running mean of |ψ⟩⟨ψ| over trajectories on a common save grid, with
/// per-entry sample variances. Trajectories must be added in index order
/// for bit-reproducible sums.
class EnsembleAccumulator {
public:
    explicit EnsembleAccumulator(std::vector<std::size_t> saved_steps, double dt)
        : steps_(std::move(saved_steps)), dt_(dt) {}

    void add(const std::vector<StateVector> &states, const std::vector<std::size_t> &steps, double dt) {
        if (steps != steps_ || std::abs(dt - dt_) > 1e-15 * dt_ || states.size() != steps_.size()) {
            throw Error(ErrorKind::configuration, "trajectories do not share a common time grid");
        }
        if (sum_.empty()) {
            Index d = states.front().dim();
            sum_.assign(steps_.size(), CMatrix::Zero(d, d));
            sum_sq_re_.assign(steps_.size(), Eigen::MatrixXd::Zero(d, d));
            sum_sq_im_.assign(steps_.size(), Eigen::MatrixXd::Zero(d, d));
        }
        for (std::size_t s = 0; s < states.size(); ++s) {
            StateVector psi = normalized(states[s]);
            CMatrix proj = psi.amplitudes() * psi.amplitudes().adjoint();
            require_same_dim(sum_[s].rows(), proj.rows(), "ensemble");
            sum_[s] += proj;
            sum_sq_re_[s] += proj.real().cwiseAbs2();
            sum_sq_im_[s] += proj.imag().cwiseAbs2();
        }
        ++count_;
    }

    template <class Traj>
    void add(const Traj &traj) {
        add(traj.states, traj.saved_steps, traj.dt);
    }

    std::size_t count() const noexcept { return count_; }
    const std::vector<std::size_t> &steps() const noexcept { return steps_; }
    double dt() const noexcept { return dt_; }

    CMatrix mean(std::size_t s) const { return sum_[s] / static_cast<double>(count_); }

    /// Standard error of the mean per entry; real part for Re ρ_mn, imaginary
    /// part for Im ρ_mn.
    CMatrix standard_error(std::size_t s) const {
        const double n = static_cast<double>(count_);
        CMatrix m = mean(s);
        Eigen::MatrixXd var_re = (sum_sq_re_[s] / n - m.real().cwiseAbs2()) * (n / (n - 1.0));
        Eigen::MatrixXd var_im = (sum_sq_im_[s] / n - m.imag().cwiseAbs2()) * (n / (n - 1.0));
        CMatrix se(m.rows(), m.cols());
        for (Index i = 0; i < m.rows(); ++i) {
            for (Index j = 0; j < m.cols(); ++j) {
                se(i, j) = Complex(std::sqrt(std::max(0.0, var_re(i, j)) / n), std::sqrt(std::max(0.0, var_im(i, j)) / n));
            }
        }
        return se;
    }

private:
    std::vector<std::size_t> steps_;
    double dt_;
    std::size_t count_ = 0;
    std::vector<CMatrix> sum_;
    std::vector<Eigen::MatrixXd> sum_sq_re_;
    std::vector<Eigen::MatrixXd> sum_sq_im_;
};

struct EnsembleAverage {
    std::vector<std::size_t> steps;
    std::vector<double> times;
    std::vector<CMatrix> mean;
    std::vector<CMatrix> standard_error;
    std::size_t n_trajectories = 0;
};

inline EnsembleAverage summarize(const EnsembleAccumulator &acc) {
    if (acc.count() < 2) {
        throw Error(ErrorKind::configuration, "ensemble average needs at least two trajectories");
    }
    EnsembleAverage out;
    out.steps = acc.steps();
    out.n_trajectories = acc.count();
    for (std::size_t s = 0; s < acc.steps().size(); ++s) {
        out.times.push_back(static_cast<double>(acc.steps()[s]) * acc.dt());
        out.mean.push_back(acc.mean(s));
        out.standard_error.push_back(acc.standard_error(s));
    }
    return out;
}

/// ρ̄(t) over a set of trajectories sharing one save grid.
template <class Traj>
EnsembleAverage ensemble_average(const std::vector<Traj> &trajectories) {
    if (trajectories.size() < 2) {
        throw Error(ErrorKind::configuration, "ensemble average needs at least two trajectories");
    }
    EnsembleAccumulator acc(trajectories.front().saved_steps, trajectories.front().dt);
    for (const auto &t : trajectories) acc.add(t);
    return summarize(acc);
}

struct TraceDistancePoint {
    double t = 0.0;
    double trace_distance = 0.0;
    double mc_error = 0.0;  // Frobenius norm of the per-entry standard errors
};

/// Trace distance between ρ̄(t) and the master-equation solution at every
/// ensemble time that the solution also sampled.
inline std::vector<TraceDistancePoint> compare_ensemble(const EnsembleAverage &ens, const MasterEqSolution &me) {
    std::vector<TraceDistancePoint> out;
    std::size_t j = 0;
    for (std::size_t s = 0; s < ens.times.size(); ++s) {
        const double t = ens.times[s];
        while (j < me.times.size() && me.times[j] < t - 1e-9 * std::max(1.0, t)) ++j;
        if (j == me.times.size()) break;
        if (std::abs(me.times[j] - t) > 1e-9 * std::max(1.0, t)) continue;
        TraceDistancePoint p;
        p.t = t;
        p.trace_distance = trace_distance(ens.mean[s], me.states[j]);
        p.mc_error = ens.standard_error[s].cwiseAbs().norm();
        out.push_back(p);
    }
    if (out.empty()) {
        throw Error(ErrorKind::configuration, "ensemble and master-equation runs share no sample times");
    }
    return out;
}

}  // namespace contmeas
