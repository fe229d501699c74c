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

// Gaussian-moment oracle for a free particle (H = p²/2m) under continuous
// position monitoring (A = q). Pure Gaussians stay Gaussian, and the
// first and second moments obey (derivation in docs/free_particle_moments.md)
//
//     d⟨q⟩  = ⟨p⟩/m dt + 2√κ σ_qq dW
//     d⟨p⟩  =            2√κ σ_qp dW
//     dσ_qq = (2σ_qp/m − 4κσ_qq²) dt
//     dσ_qp = (σ_pp/m − 4κσ_qq σ_qp) dt
//     dσ_pp = (κħ² − 4κσ_qp²) dt
//
// The covariances are noise-free; only the means see the Wiener increments.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "contmeas/grid.hpp"
#include "contmeas/parallel.hpp"
#include "contmeas/stochastic.hpp"
#include "contmeas/unraveling.hpp"

namespace contmeas {

struct FreeParticleParams {
    double mass = 1.0;
    double kappa = 1.0;  // 0 allowed: free spreading
    double hbar = 1.0;

    void validate() const {
        if (!(mass > 0.0) || !std::isfinite(mass)) {
            throw Error(ErrorKind::configuration, "mass must be positive and finite");
        }
        require_kappa(kappa);
        require_hbar(hbar);
    }
};

struct Covariance {
    double qq = 0.0;
    double qp = 0.0;
    double pp = 0.0;
};

struct GaussianState {
    double mean_q = 0.0;
    double mean_p = 0.0;
    double var_qq = 1.0;
    double cov_qp = 0.0;
    double var_pp = 0.25;

    Covariance covariance() const { return {var_qq, cov_qp, var_pp}; }

    /// σ_qq σ_pp − σ_qp² − ħ²/4; zero for pure states.
    double purity_defect(double hbar) const { return var_qq * var_pp - cov_qp * cov_qp - 0.25 * hbar * hbar; }

    /// Pure state with the given position variance and correlation.
    static GaussianState pure(double mean_q, double mean_p, double var_qq, double cov_qp, double hbar) {
        return {mean_q, mean_p, var_qq, cov_qp, (0.25 * hbar * hbar + cov_qp * cov_qp) / var_qq};
    }

    void validate(double hbar) const {
        if (!(var_qq > 0.0) || !(var_pp > 0.0)) {
            throw Error(ErrorKind::configuration, "gaussian state needs positive variances");
        }
        if (purity_defect(hbar) < -1e-9) {
            throw Error(ErrorKind::configuration, "gaussian state violates the uncertainty relation");
        }
    }
};

inline Covariance covariance_flow(const Covariance &c, const FreeParticleParams &p) {
    const double k4 = 4.0 * p.kappa;
    return {2.0 * c.qp / p.mass - k4 * c.qq * c.qq, c.pp / p.mass - k4 * c.qq * c.qp,
            p.kappa * p.hbar * p.hbar - k4 * c.qp * c.qp};
}

inline Covariance covariance_rk4(const Covariance &c, const FreeParticleParams &p, double dt) {
    auto axpy = [](const Covariance &x, double h, const Covariance &d) {
        return Covariance{x.qq + h * d.qq, x.qp + h * d.qp, x.pp + h * d.pp};
    };
    Covariance k1 = covariance_flow(c, p);
    Covariance k2 = covariance_flow(axpy(c, 0.5 * dt, k1), p);
    Covariance k3 = covariance_flow(axpy(c, 0.5 * dt, k2), p);
    Covariance k4 = covariance_flow(axpy(c, dt, k3), p);
    return {c.qq + dt / 6.0 * (k1.qq + 2.0 * k2.qq + 2.0 * k3.qq + k4.qq),
            c.qp + dt / 6.0 * (k1.qp + 2.0 * k2.qp + 2.0 * k3.qp + k4.qp),
            c.pp + dt / 6.0 * (k1.pp + 2.0 * k2.pp + 2.0 * k3.pp + k4.pp)};
}

/// Means by Euler–Maruyama with the pre-step covariances; covariances by one
/// RK4 step of the deterministic flow.
inline GaussianState moment_step(const GaussianState &g, const FreeParticleParams &p, double dt, double dw) {
    require_positive_dt(dt);
    const double coupling = 2.0 * std::sqrt(p.kappa);
    GaussianState next;
    next.mean_q = g.mean_q + g.mean_p / p.mass * dt + coupling * g.var_qq * dw;
    next.mean_p = g.mean_p + coupling * g.cov_qp * dw;
    Covariance c = covariance_rk4(g.covariance(), p, dt);
    next.var_qq = c.qq;
    next.cov_qp = c.qp;
    next.var_pp = c.pp;
    if (!std::isfinite(next.mean_q) || !std::isfinite(next.mean_p) || !std::isfinite(c.qq) || !std::isfinite(c.qp) ||
        !std::isfinite(c.pp) || !(c.qq > 0.0) || !(c.pp > 0.0)) {
        throw Error(ErrorKind::step_size, "moment step produced an invalid covariance");
    }
    return next;
}

inline Eigen::Matrix3d covariance_jacobian(const Covariance &c, const FreeParticleParams &p) {
    const double k4 = 4.0 * p.kappa;
    Eigen::Matrix3d j;
    j << -2.0 * k4 * c.qq, 2.0 / p.mass, 0.0,  //
        -k4 * c.qp, -k4 * c.qq, 1.0 / p.mass,  //
        0.0, -2.0 * k4 * c.qp, 0.0;
    return j;
}

struct StationaryCovariance {
    Covariance covariance;
    double residual = 0.0;
    int newton_iterations = 0;
};

/// Fixed point of the covariance flow: relax the flow from a pure,
/// uncorrelated state of width √(ħ/(mκ)), then polish with Newton. Throws an
/// oracle error if the residual does not reach 1e-12 (relative to κħ²).
inline StationaryCovariance stationary_covariance(const FreeParticleParams &p) {
    p.validate();
    if (!(p.kappa > 0.0)) {
        throw Error(ErrorKind::configuration, "stationary covariance requires kappa > 0");
    }
    const double length = std::sqrt(p.hbar / (p.mass * p.kappa));
    const double tau = std::sqrt(p.mass / (p.kappa * p.hbar));
    Covariance c{length * length, 0.0, 0.25 * p.hbar * p.hbar / (length * length)};
    const double h = 0.01 * tau;
    for (int i = 0; i < 3000; ++i) c = covariance_rk4(c, p, h);

    auto residual_of = [&](const Covariance &x) {
        Covariance f = covariance_flow(x, p);
        return Eigen::Vector3d(f.qq, f.qp, f.pp);
    };
    const double scale = p.kappa * p.hbar * p.hbar;
    StationaryCovariance out;
    Eigen::Vector3d f = residual_of(c);
    for (int it = 0; it < 50 && f.norm() > 1e-15 * scale; ++it) {
        Eigen::Vector3d step = covariance_jacobian(c, p).fullPivLu().solve(-f);
        c = {c.qq + step[0], c.qp + step[1], c.pp + step[2]};
        f = residual_of(c);
        out.newton_iterations = it + 1;
    }
    out.covariance = c;
    out.residual = f.norm();
    if (!(out.residual < 1e-12 * scale) || !(c.qq > 0.0) || !(c.pp > 0.0)) {
        std::ostringstream msg;
        msg << "stationary covariance did not converge (residual " << out.residual << ")";
        throw Error(ErrorKind::oracle, msg.str());
    }
    return out;
}

/// Slowest relaxation rate of the covariance flow at its fixed point.
inline double localization_rate(const FreeParticleParams &p) {
    auto fixed = stationary_covariance(p).covariance;
    Eigen::EigenSolver<Eigen::Matrix3d> es(covariance_jacobian(fixed, p));
    double slowest = -es.eigenvalues().real().maxCoeff();
    return slowest;
}

// ---------------------------------------------------------------------------
// Grid unraveling against the oracle
// ---------------------------------------------------------------------------

struct GridMoments {
    double mean_q = 0.0;
    double mean_p = 0.0;
    double var_q = 0.0;
    double var_p = 0.0;
};

inline GridMoments grid_moments(const GridWavefunction &psi, double hbar) {
    GridOperator q = GridOperator::position(psi.grid());
    GridOperator p = GridOperator::momentum(psi.grid(), hbar);
    return {expectation(q, psi), expectation(p, psi), variance(q, psi), variance(p, psi)};
}

struct FreeParticleRow {
    std::size_t step = 0;
    double t = 0.0;
    GridMoments grid;
    GaussianState oracle;
    double dev_mean_q = 0.0;  // |Δ⟨q⟩| / √σ_qq
    double dev_mean_p = 0.0;  // |Δ⟨p⟩| / √σ_pp
    double rel_var_q = 0.0;   // |ΔVar q| / σ_qq
    double rel_var_p = 0.0;   // |ΔVar p| / σ_pp
};

struct FreeParticleReport {
    std::uint64_t stream_id = 0;
    std::vector<FreeParticleRow> rows;
    std::vector<std::string> warnings;
};

struct FreeParticleRun {
    FreeParticleParams params;
    Grid grid;
    GaussianState initial;
    double dt = 1e-3;
    std::size_t n_steps = 0;
    std::size_t save_stride = 1;
};

/// Position widths the grid must resolve: along the oracle covariance
/// trajectory and, for κ > 0, at the stationary point.
inline void check_grid_resolution(const FreeParticleRun &run) {
    double min_var = run.initial.var_qq;
    double max_var = run.initial.var_qq;
    Covariance c = run.initial.covariance();
    for (std::size_t k = 0; k < run.n_steps; ++k) {
        c = covariance_rk4(c, run.params, run.dt);
        min_var = std::min(min_var, c.qq);
        max_var = std::max(max_var, c.qq);
    }
    if (run.params.kappa > 0.0) {
        double s = stationary_covariance(run.params).covariance.qq;
        min_var = std::min(min_var, s);
        max_var = std::max(max_var, s);
    }
    const double dq = run.grid.spacing();
    if (dq > std::sqrt(min_var) / 8.0 || run.grid.length() < 16.0 * std::sqrt(max_var)) {
        std::ostringstream msg;
        msg << "grid does not resolve the packet: dq = " << dq << " (need <= " << std::sqrt(min_var) / 8.0
            << "), length = " << run.grid.length() << " (need >= " << 16.0 * std::sqrt(max_var) << ")";
        throw Error(ErrorKind::configuration, msg.str());
    }
}

inline FreeParticleRow make_row(std::size_t k, double dt, const GridMoments &m, const GaussianState &g) {
    FreeParticleRow r;
    r.step = k;
    r.t = static_cast<double>(k) * dt;
    r.grid = m;
    r.oracle = g;
    r.dev_mean_q = std::abs(m.mean_q - g.mean_q) / std::sqrt(g.var_qq);
    r.dev_mean_p = std::abs(m.mean_p - g.mean_p) / std::sqrt(g.var_pp);
    r.rel_var_q = std::abs(m.var_q - g.var_qq) / g.var_qq;
    r.rel_var_p = std::abs(m.var_p - g.var_pp) / g.var_pp;
    return r;
}

/// One grid trajectory and the moment oracle driven by the same increments
/// (stream `stream_id` of `master_seed`).
inline FreeParticleReport run_free_particle(const FreeParticleRun &run, std::uint64_t master_seed,
                                            std::uint64_t stream_id) {
    run.params.validate();
    run.initial.validate(run.params.hbar);
    check_grid_resolution(run);
    if (run.save_stride == 0) {
        throw Error(ErrorKind::configuration, "save_stride must be >= 1");
    }
    GridStepper stepper(run.grid, run.params.mass, run.params.kappa, run.params.hbar, run.dt);
    GridWavefunction psi = gaussian_packet(run.grid, run.initial.mean_q, run.initial.mean_p, run.initial.var_qq,
                                           run.initial.cov_qp, run.params.hbar);
    GaussianState g = run.initial;
    NoiseStream stream{master_seed, stream_id, 0};
    FreeParticleReport report;
    report.stream_id = stream_id;
    const double center = 0.5 * (run.grid.q_min() + run.grid.q_max());
    bool seam_warned = false;
    auto record_row = [&](std::size_t k) {
        GridMoments m = grid_moments(psi, run.params.hbar);
        report.rows.push_back(make_row(k, run.dt, m, g));
        if (!seam_warned && std::abs(m.mean_q - center) + 8.0 * std::sqrt(m.var_q) > 0.5 * run.grid.length()) {
            std::ostringstream msg;
            msg << "packet within 8 sigma of the periodic seam at step " << k;
            report.warnings.push_back(msg.str());
            seam_warned = true;
        }
    };
    record_row(0);
    for (std::size_t k = 1; k <= run.n_steps; ++k) {
        double dw = next_increment(stream, run.dt);
        psi = stepper.nonlinear(psi, dw);
        g = moment_step(g, run.params, run.dt, dw);
        if (k % run.save_stride == 0 || k == run.n_steps) record_row(k);
    }
    return report;
}

/// Grid vs oracle for streams 0..n_streams−1 of `master_seed`.
inline std::vector<FreeParticleReport> grid_vs_oracle(const FreeParticleRun &run, std::uint64_t master_seed,
                                                      std::size_t n_streams, unsigned jobs = 1) {
    std::vector<FreeParticleReport> reports(n_streams);
    parallel_for(n_streams, jobs, [&](std::size_t i) { reports[i] = run_free_particle(run, master_seed, i); });
    return reports;
}

}  // namespace contmeas
