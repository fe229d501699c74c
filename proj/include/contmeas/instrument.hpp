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

// Time-sliced path-integral picture of a continuous measurement.
//
// One slice of duration Δt with outcome a acts by the Kraus operator
//
//     M(a) = c · exp(−κΔt (A − a)²),      c = (2κΔt/π)^{1/4},
//
// and a record α = (a_1, ..., a_n) propagates the state with the
// time-ordered product U^α = Π_k exp(−iHΔt/ħ) M(a_k). The normalization c
// makes ∫da M(a)†M(a) = I, so P(α) = ‖U^α ψ₀‖² is a probability density
// with respect to the Lebesgue measure da_1···da_n. The linear dynamics in
// unraveling.hpp omits c; the two conventions differ by c² per slice in the
// weight.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <sstream>
#include <utility>
#include <vector>

#include "contmeas/grid.hpp"
#include "contmeas/hilbert.hpp"
#include "contmeas/parallel.hpp"
#include "contmeas/stochastic.hpp"
#include "contmeas/unraveling.hpp"

namespace contmeas {

inline constexpr double kEnumerationLimit = 1e7;
inline constexpr double kLatticeMinSigmas = 6.0;

class GaussianInstrument {
public:
    GaussianInstrument(HermitianOperator observable, MeasurementStrength kappa, double dt)
        : a_(std::move(observable)), kappa_(kappa.value()), dt_(dt) {
        require_positive_dt(dt);
    }

    const HermitianOperator &observable() const noexcept { return a_; }
    double kappa() const noexcept { return kappa_; }
    double dt() const noexcept { return dt_; }
    Index dim() const noexcept { return a_.dim(); }

    /// ∫ exp(−2κΔt (λ − a)²) da, independent of λ.
    double slice_integral() const { return std::sqrt(std::numbers::pi / (2.0 * kappa_ * dt_)); }

    /// c = (2κΔt/π)^{1/4}.
    double normalization() const { return std::pow(2.0 * kappa_ * dt_ / std::numbers::pi, 0.25); }

    /// Standard deviation of the outcome density for an eigenstate, 1/√(4κΔt).
    double slice_sigma() const { return 1.0 / std::sqrt(4.0 * kappa_ * dt_); }

    /// Diagonal of M(a) in the A eigenbasis.
    RVector kraus_diagonal(double a) const {
        const RVector &ev = a_.eigenvalues();
        RVector d(ev.size());
        double c = normalization();
        for (Index i = 0; i < ev.size(); ++i) {
            double x = ev[i] - a;
            d[i] = c * std::exp(-kappa_ * dt_ * x * x);
        }
        return d;
    }

private:
    HermitianOperator a_;
    double kappa_;
    double dt_;
};

inline CMatrix kraus(const GaussianInstrument &inst, double a) {
    if (!std::isfinite(a)) {
        throw Error(ErrorKind::invalid_state, "kraus outcome must be finite");
    }
    const CMatrix &v = inst.observable().eigenvectors();
    return v * inst.kraus_diagonal(a).cast<Complex>().asDiagonal() * v.adjoint();
}

/// Uniform lattice a_j = a_min + j·δa, j = 0..points−1. Each node carries
/// measure δa for the normalized Kraus operators (δa·c² for the
/// unnormalized linear convention).
class RecordLattice {
public:
    RecordLattice(double a_min, double spacing, std::size_t points) : a_min_(a_min), spacing_(spacing), points_(points) {
        if (!std::isfinite(a_min) || !(spacing > 0.0) || !std::isfinite(spacing) || points < 2) {
            throw Error(ErrorKind::configuration, "record lattice needs finite a_min, positive spacing, >= 2 points");
        }
    }

    /// Lattice covering [λ_min − nσ, λ_max + nσ] with spacing σ/points_per_sigma.
    static RecordLattice spanning(const GaussianInstrument &inst, double n_sigma, double points_per_sigma) {
        if (!(n_sigma > 0.0) || !(points_per_sigma > 0.0)) {
            throw Error(ErrorKind::configuration, "lattice span and density must be positive");
        }
        const RVector &ev = inst.observable().eigenvalues();
        double sigma = inst.slice_sigma();
        double lo = ev[0] - n_sigma * sigma;
        double hi = ev[ev.size() - 1] + n_sigma * sigma;
        double spacing = sigma / points_per_sigma;
        auto points = static_cast<std::size_t>(std::ceil((hi - lo) / spacing)) + 1;
        // Center the nodes on the interval.
        double extra = static_cast<double>(points - 1) * spacing - (hi - lo);
        return RecordLattice(lo - 0.5 * extra, spacing, points);
    }

    /// Lattice covering [λ_min − nσ, λ_max + nσ] with a fixed number of points.
    static RecordLattice spanning_points(const GaussianInstrument &inst, double n_sigma, std::size_t points) {
        if (!(n_sigma > 0.0) || points < 2) {
            throw Error(ErrorKind::configuration, "lattice span must be positive and points >= 2");
        }
        const RVector &ev = inst.observable().eigenvalues();
        double sigma = inst.slice_sigma();
        double lo = ev[0] - n_sigma * sigma;
        double hi = ev[ev.size() - 1] + n_sigma * sigma;
        return RecordLattice(lo, (hi - lo) / static_cast<double>(points - 1), points);
    }

    double value(std::size_t j) const { return a_min_ + static_cast<double>(j) * spacing_; }
    double spacing() const noexcept { return spacing_; }
    std::size_t size() const noexcept { return points_; }
    double a_min() const noexcept { return a_min_; }
    double a_max() const { return value(points_ - 1); }

    double measure_weight() const noexcept { return spacing_; }
    double unnormalized_measure_weight(const GaussianInstrument &inst) const {
        double c = inst.normalization();
        return spacing_ * c * c;
    }

    /// Smallest distance, in slice σ, from any eigenvalue to a lattice end.
    double span_sigmas(const GaussianInstrument &inst) const {
        const RVector &ev = inst.observable().eigenvalues();
        double margin = std::min(ev[0] - a_min(), a_max() - ev[ev.size() - 1]);
        return margin / inst.slice_sigma();
    }

private:
    double a_min_;
    double spacing_;
    std::size_t points_;
};

/// ‖∫da M(a)†M(a) − I‖_max from the closed form. In the A eigenbasis the
/// integral is diagonal with entries c²·∫exp(−2κΔt(λ_i − a)²)da, and c² is
/// the reciprocal of that λ-independent integral.
inline double completeness_defect(const GaussianInstrument &inst) {
    double worst = 0.0;
    const RVector &ev = inst.observable().eigenvalues();
    for (Index i = 0; i < ev.size(); ++i) {
        double entry = inst.slice_integral() / inst.slice_integral();
        worst = std::max(worst, std::abs(entry - 1.0));
    }
    return worst;
}

/// ‖Σ_j δa M(a_j)†M(a_j) − I‖_max on a lattice.
inline double completeness_defect(const GaussianInstrument &inst, const RecordLattice &lattice) {
    RVector diag = RVector::Zero(inst.dim());
    for (std::size_t j = 0; j < lattice.size(); ++j) {
        RVector m = inst.kraus_diagonal(lattice.value(j));
        diag += lattice.measure_weight() * m.cwiseAbs2();
    }
    const CMatrix &v = inst.observable().eigenvectors();
    CMatrix sum = v * diag.cast<Complex>().asDiagonal() * v.adjoint();
    return (sum - CMatrix::Identity(inst.dim(), inst.dim())).cwiseAbs().maxCoeff();
}

namespace detail {

inline CMatrix unitary_step(const HermitianOperator &h, double hbar, double dt) {
    return h.function([&](double e) { return std::polar(1.0, -e * dt / hbar); });
}

}  // namespace detail

/// U^α = Π_k exp(−iHΔt/ħ) M(a_k), later slices on the left.
inline CMatrix propagator_for_record(const GaussianInstrument &inst, const HermitianOperator &h, double hbar,
                                     const MeasurementRecord &record) {
    require_same_dim(inst.dim(), h.dim(), "propagator_for_record");
    require_hbar(hbar);
    if (!record.empty() && std::abs(record.dt() - inst.dt()) > 1e-15 * inst.dt()) {
        throw Error(ErrorKind::configuration, "record time step does not match the instrument");
    }
    CMatrix u = detail::unitary_step(h, hbar, inst.dt());
    CMatrix total = CMatrix::Identity(inst.dim(), inst.dim());
    for (std::size_t k = 0; k < record.size(); ++k) {
        total = u * kraus(inst, record[k]) * total;
    }
    return total;
}

/// Outcome probabilities P(α) for every record on the product lattice.
/// Records are indexed row-major with slice 0 most significant.
class RecordDistribution {
public:
    RecordDistribution(RecordLattice lattice, std::size_t n_steps, std::vector<double> probabilities)
        : lattice_(std::move(lattice)), n_steps_(n_steps), probs_(std::move(probabilities)) {}

    const RecordLattice &lattice() const noexcept { return lattice_; }
    std::size_t n_steps() const noexcept { return n_steps_; }
    std::size_t size() const noexcept { return probs_.size(); }
    double probability(std::size_t index) const { return probs_[index]; }
    const std::vector<double> &probabilities() const noexcept { return probs_; }

    std::vector<std::size_t> record_indices(std::size_t index) const {
        std::vector<std::size_t> idx(n_steps_);
        for (std::size_t k = n_steps_; k-- > 0;) {
            idx[k] = index % lattice_.size();
            index /= lattice_.size();
        }
        return idx;
    }

    std::vector<double> record(std::size_t index) const {
        auto idx = record_indices(index);
        std::vector<double> a(n_steps_);
        for (std::size_t k = 0; k < n_steps_; ++k) a[k] = lattice_.value(idx[k]);
        return a;
    }

    double total() const {
        double s = 0.0;
        for (double p : probs_) s += p;
        return s;
    }

    /// Probability mass on each lattice node for slice k (sums to total()).
    std::vector<double> marginal(std::size_t slice) const {
        if (slice >= n_steps_) {
            throw Error(ErrorKind::configuration, "marginal slice out of range");
        }
        std::size_t inner = 1;
        for (std::size_t k = slice + 1; k < n_steps_; ++k) inner *= lattice_.size();
        std::vector<double> m(lattice_.size(), 0.0);
        for (std::size_t i = 0; i < probs_.size(); ++i) {
            m[(i / inner) % lattice_.size()] += probs_[i];
        }
        return m;
    }

private:
    RecordLattice lattice_;
    std::size_t n_steps_;
    std::vector<double> probs_;
};

inline void check_enumeration_size(std::size_t lattice_size, std::size_t n_steps) {
    double count = std::pow(static_cast<double>(lattice_size), static_cast<double>(n_steps));
    if (count > kEnumerationLimit) {
        std::ostringstream msg;
        msg << "lattice_size^n_steps = " << lattice_size << "^" << n_steps << " = " << count << " exceeds the limit "
            << kEnumerationLimit;
        throw Error(ErrorKind::enumeration_guard, msg.str());
    }
}

/// Brute-force P(α) = ‖U^α ψ₀‖²·δa^n over the whole product lattice. The
/// first slice is split into blocks evaluated in parallel; each block writes
/// a disjoint range of the table.
inline RecordDistribution enumerate_record_distribution(const StateVector &psi0, const GaussianInstrument &inst,
                                                        const HermitianOperator &h, double hbar, std::size_t n_steps,
                                                        const RecordLattice &lattice, unsigned jobs = 1) {
    require_same_dim(inst.dim(), psi0.dim(), "enumerate_record_distribution");
    require_same_dim(inst.dim(), h.dim(), "enumerate_record_distribution");
    require_hbar(hbar);
    check_enumeration_size(lattice.size(), n_steps);
    if (lattice.span_sigmas(inst) < kLatticeMinSigmas - 1e-9) {
        std::ostringstream msg;
        msg << "record lattice spans only " << lattice.span_sigmas(inst) << " sigma beyond the spectrum (need "
            << kLatticeMinSigmas << ")";
        throw Error(ErrorKind::configuration, msg.str());
    }
    StateVector start = normalized(psi0);
    const std::size_t n_points = lattice.size();
    std::size_t total = 1;
    for (std::size_t k = 0; k < n_steps; ++k) total *= n_points;
    std::vector<double> probs(total, 0.0);
    if (n_steps == 0) {
        probs[0] = 1.0;
        return RecordDistribution(lattice, 0, std::move(probs));
    }

    CMatrix u = detail::unitary_step(h, hbar, inst.dt());
    std::vector<CMatrix> slice_ops(n_points);
    for (std::size_t j = 0; j < n_points; ++j) slice_ops[j] = u * kraus(inst, lattice.value(j));
    const double weight = std::pow(lattice.measure_weight(), static_cast<double>(n_steps));
    const std::size_t block = total / n_points;

    parallel_for(n_points, jobs, [&](std::size_t first) {
        std::vector<CVector> stack(n_steps);
        std::vector<std::size_t> idx(n_steps, 0);
        stack[0] = slice_ops[first] * start.amplitudes();
        std::size_t depth = 0;
        std::size_t out = first * block;
        // Depth-first walk over the remaining slices, reusing prefix states.
        for (;;) {
            if (depth + 1 == n_steps) {
                probs[out++] = stack[depth].squaredNorm() * weight;
                // advance odometer
                while (depth > 0 && idx[depth] + 1 == n_points) --depth;
                if (depth == 0) break;
                ++idx[depth];
                stack[depth] = slice_ops[idx[depth]] * stack[depth - 1];
            } else {
                ++depth;
                idx[depth] = 0;
                stack[depth] = slice_ops[0] * stack[depth - 1];
            }
        }
    });
    return RecordDistribution(lattice, n_steps, std::move(probs));
}

/// Exact sequential sampling of records from the instrument, the fallback
/// when the lattice is too large to enumerate. At each slice the outcome
/// density ‖M(a)ψ‖² is a mixture of Gaussians N(λ_i, 1/(4κΔt)) weighted by
/// the populations |⟨v_i|ψ⟩|²; the state is then updated with M(a) and the
/// unitary factor. Two variates are drawn per slice.
inline std::vector<MeasurementRecord> sample_record_distribution(const StateVector &psi0,
                                                                 const GaussianInstrument &inst,
                                                                 const HermitianOperator &h, double hbar,
                                                                 std::size_t n_steps, std::size_t n_samples,
                                                                 std::uint64_t master_seed) {
    require_same_dim(inst.dim(), psi0.dim(), "sample_record_distribution");
    require_hbar(hbar);
    CMatrix u = detail::unitary_step(h, hbar, inst.dt());
    const RVector &ev = inst.observable().eigenvalues();
    const CMatrix &v = inst.observable().eigenvectors();
    const double sigma = inst.slice_sigma();
    std::vector<MeasurementRecord> out;
    out.reserve(n_samples);
    for (std::size_t s = 0; s < n_samples; ++s) {
        std::uint64_t counter = 0;
        CVector psi = normalized(psi0).amplitudes();
        std::vector<double> rec(n_steps);
        for (std::size_t k = 0; k < n_steps; ++k) {
            RVector pop = (v.adjoint() * psi).cwiseAbs2();
            pop /= pop.sum();
            double z_pick = standard_normal_at(master_seed, s, counter++);
            double u_pick = 0.5 * std::erfc(-z_pick / std::numbers::sqrt2);
            Index branch = 0;
            double acc = pop[0];
            while (branch + 1 < pop.size() && u_pick > acc) acc += pop[++branch];
            double a = ev[branch] + sigma * standard_normal_at(master_seed, s, counter++);
            rec[k] = a;
            psi = u * (kraus(inst, a) * psi);
            psi /= psi.norm();
        }
        out.emplace_back(inst.dt(), std::move(rec));
    }
    return out;
}

/// Average over outcomes of one slice, ∫da M(a)ρM(a)†, in closed form: in the
/// A eigenbasis ρ_mn is multiplied by exp(−(κΔt/2)(λ_m − λ_n)²).
inline CMatrix average_channel(const CMatrix &rho, const GaussianInstrument &inst) {
    require_same_dim(inst.dim(), rho.rows(), "average_channel");
    const RVector &ev = inst.observable().eigenvalues();
    const CMatrix &v = inst.observable().eigenvectors();
    CMatrix r = v.adjoint() * rho * v;
    for (Index m = 0; m < r.rows(); ++m) {
        for (Index n = 0; n < r.cols(); ++n) {
            double d = ev[m] - ev[n];
            r(m, n) *= std::exp(-0.5 * inst.kappa() * inst.dt() * d * d);
        }
    }
    return v * r * v.adjoint();
}

/// Σ_j δa M(a_j)ρM(a_j)† on a lattice.
inline CMatrix average_channel(const CMatrix &rho, const GaussianInstrument &inst, const RecordLattice &lattice) {
    require_same_dim(inst.dim(), rho.rows(), "average_channel");
    CMatrix out = CMatrix::Zero(rho.rows(), rho.cols());
    for (std::size_t j = 0; j < lattice.size(); ++j) {
        CMatrix m = kraus(inst, lattice.value(j));
        out += lattice.measure_weight() * (m * rho * m.adjoint());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Sharp corridor
// ---------------------------------------------------------------------------

/// Records restricted to |a(t_k) − center_k| ≤ half_width. A single center
/// value applies to every slice.
struct CorridorSpec {
    std::vector<double> center;
    double half_width = 0.0;

    double center_at(std::size_t k) const { return center.size() == 1 ? center[0] : center.at(k); }
};

struct CorridorResult {
    double probability = 0.0;
    bool empty_window = false;
    std::size_t empty_step = 0;  // first slice whose window held no eigenvalue
};

namespace detail {

inline void check_corridor(const CorridorSpec &spec, std::size_t n_steps) {
    if (!(spec.half_width > 0.0)) {
        throw Error(ErrorKind::configuration, "corridor half-width must be positive");
    }
    if (spec.center.empty() || (spec.center.size() != 1 && spec.center.size() != n_steps)) {
        throw Error(ErrorKind::configuration, "corridor center must have one value or one per slice");
    }
}

}  // namespace detail

/// Probability that every slice's outcome lies in the corridor, in the sharp
/// (projective) limit: ψ ← U P_k ψ with P_k the spectral projector of A on
/// [center_k − Δ, center_k + Δ].
inline CorridorResult corridor_probability(const StateVector &psi0, const CorridorSpec &spec,
                                           const HermitianOperator &h, const HermitianOperator &a, double hbar,
                                           double dt, std::size_t n_steps) {
    require_same_dim(h.dim(), a.dim(), "corridor_probability");
    require_same_dim(a.dim(), psi0.dim(), "corridor_probability");
    require_hbar(hbar);
    require_positive_dt(dt);
    detail::check_corridor(spec, n_steps);
    CMatrix u = detail::unitary_step(h, hbar, dt);
    const RVector &ev = a.eigenvalues();
    const CMatrix &v = a.eigenvectors();
    CVector psi = normalized(psi0).amplitudes();
    CorridorResult result;
    for (std::size_t k = 0; k < n_steps; ++k) {
        CVector coeff = v.adjoint() * psi;
        bool any = false;
        for (Index i = 0; i < ev.size(); ++i) {
            if (std::abs(ev[i] - spec.center_at(k)) <= spec.half_width) {
                any = true;
            } else {
                coeff[i] = 0.0;
            }
        }
        if (!any) {
            result.empty_window = true;
            result.empty_step = k;
            result.probability = 0.0;
            return result;
        }
        psi = u * (v * coeff);
    }
    result.probability = psi.squaredNorm();
    return result;
}

/// Grid version for a free particle monitored in position: the projector is
/// the indicator of the window in q, followed by the exact kinetic factor.
inline CorridorResult corridor_probability(const GridWavefunction &psi0, const CorridorSpec &spec, double mass,
                                           double hbar, double dt, std::size_t n_steps) {
    detail::check_corridor(spec, n_steps);
    GridStepper stepper(psi0.grid(), mass, 0.0, hbar, dt);
    const Grid &grid = psi0.grid();
    GridWavefunction psi = normalized(psi0);
    CorridorResult result;
    for (std::size_t k = 0; k < n_steps; ++k) {
        CVector s = psi.samples();
        bool any = false;
        for (Index j = 0; j < grid.size(); ++j) {
            if (std::abs(grid.position(j) - spec.center_at(k)) <= spec.half_width) {
                any = true;
            } else {
                s[j] = 0.0;
            }
        }
        if (!any) {
            result.empty_window = true;
            result.empty_step = k;
            return result;
        }
        psi = stepper.evolve(GridWavefunction(grid, std::move(s)));
    }
    result.probability = norm2(psi);
    return result;
}

}  // namespace contmeas
