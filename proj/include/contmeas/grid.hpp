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

// One-dimensional periodic position grid.
//
// Operators are real diagonals either in position or in momentum; momentum
// diagonals are applied spectrally (FFT, multiply, inverse FFT). The grid is
// periodic, so results are only meaningful while the probability mass stays
// well away from the seam at q_min ≡ q_max.

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <numbers>
#include <sstream>
#include <utility>

#include "contmeas/hilbert.hpp"

namespace contmeas {

class Grid {
public:
    Grid() = default;
    Grid(Index points, double q_min, double q_max) : points_(points), q_min_(q_min), q_max_(q_max) {
        if (points < 2 || (points & (points - 1)) != 0) {
            std::ostringstream msg;
            msg << "grid point count " << points << " is not a power of two >= 2";
            throw Error(ErrorKind::configuration, msg.str());
        }
        if (!std::isfinite(q_min) || !std::isfinite(q_max) || !(q_max > q_min)) {
            throw Error(ErrorKind::configuration, "grid requires finite q_min < q_max");
        }
    }

    Index size() const noexcept { return points_; }
    double q_min() const noexcept { return q_min_; }
    double q_max() const noexcept { return q_max_; }
    double length() const noexcept { return q_max_ - q_min_; }
    double spacing() const noexcept { return length() / static_cast<double>(points_); }

    double position(Index j) const { return q_min_ + static_cast<double>(j) * spacing(); }

    /// Momentum of FFT bin k (standard FFT ordering: 0, 1, ..., N/2−1, −N/2, ..., −1).
    double momentum(Index k, double hbar) const {
        Index signed_k = k < points_ / 2 ? k : k - points_;
        return hbar * 2.0 * std::numbers::pi * static_cast<double>(signed_k) / length();
    }

    RVector positions() const {
        RVector q(points_);
        for (Index j = 0; j < points_; ++j) q[j] = position(j);
        return q;
    }

    RVector momenta(double hbar) const {
        RVector p(points_);
        for (Index k = 0; k < points_; ++k) p[k] = momentum(k, hbar);
        return p;
    }

    bool operator==(const Grid &o) const {
        return points_ == o.points_ && q_min_ == o.q_min_ && q_max_ == o.q_max_;
    }

private:
    Index points_ = 0;
    double q_min_ = 0.0;
    double q_max_ = 1.0;
};

class GridWavefunction {
public:
    GridWavefunction() = default;
    GridWavefunction(Grid grid, CVector samples) : grid_(std::move(grid)), samples_(std::move(samples)) {
        require_same_dim(grid_.size(), samples_.size(), "grid wavefunction");
    }

    const Grid &grid() const noexcept { return grid_; }
    const CVector &samples() const noexcept { return samples_; }
    Index size() const noexcept { return samples_.size(); }

private:
    Grid grid_;
    CVector samples_;
};

namespace detail {

// Kiss FFT plans are cached inside the FFT object, so keep one per thread.
inline Eigen::FFT<double> &thread_fft() {
    thread_local Eigen::FFT<double> fft;
    return fft;
}

}  // namespace detail

/// Unnormalized discrete Fourier transform (FFT ordering).
inline CVector to_momentum(const CVector &samples) {
    CVector out(samples.size());
    detail::thread_fft().fwd(out, samples);
    return out;
}

/// Inverse of to_momentum.
inline CVector from_momentum(const CVector &spectrum) {
    CVector out(spectrum.size());
    detail::thread_fft().inv(out, spectrum);
    return out;
}

/// Hermitian operator on the grid: a real diagonal in position or momentum.
class GridOperator {
public:
    enum class Basis { position, momentum };

    GridOperator() = default;
    GridOperator(Basis basis, RVector diagonal) : basis_(basis), diagonal_(std::move(diagonal)) {}

    template <class F>
    static GridOperator position_function(const Grid &grid, F &&f) {
        RVector d(grid.size());
        for (Index j = 0; j < grid.size(); ++j) d[j] = f(grid.position(j));
        return GridOperator(Basis::position, std::move(d));
    }

    template <class F>
    static GridOperator momentum_function(const Grid &grid, double hbar, F &&f) {
        RVector d(grid.size());
        for (Index k = 0; k < grid.size(); ++k) d[k] = f(grid.momentum(k, hbar));
        return GridOperator(Basis::momentum, std::move(d));
    }

    static GridOperator position(const Grid &grid) {
        return position_function(grid, [](double q) { return q; });
    }
    static GridOperator momentum(const Grid &grid, double hbar) {
        return momentum_function(grid, hbar, [](double p) { return p; });
    }
    static GridOperator kinetic(const Grid &grid, double hbar, double mass) {
        return momentum_function(grid, hbar, [mass](double p) { return p * p / (2.0 * mass); });
    }

    Basis basis() const noexcept { return basis_; }
    const RVector &diagonal() const noexcept { return diagonal_; }
    Index size() const noexcept { return diagonal_.size(); }

private:
    Basis basis_ = Basis::position;
    RVector diagonal_;
};

/// Δq·Σ|ψ_j|².
inline double norm2(const GridWavefunction &psi) {
    if (!all_finite(psi.samples())) {
        throw Error(ErrorKind::invalid_state, "grid wavefunction has non-finite samples");
    }
    return psi.grid().spacing() * psi.samples().squaredNorm();
}

inline GridWavefunction normalized(const GridWavefunction &psi) {
    double n2 = norm2(psi);
    if (!(n2 > 0.0)) {
        throw Error(ErrorKind::degenerate_state, "cannot normalize a zero-norm grid wavefunction");
    }
    return GridWavefunction(psi.grid(), psi.samples() / std::sqrt(n2));
}

namespace detail {

// Probability weights |ψ|² in the operator's diagonal basis.
inline RVector basis_weights(const GridOperator &op, const GridWavefunction &psi) {
    require_same_dim(op.size(), psi.size(), "grid operator");
    if (!all_finite(psi.samples())) {
        throw Error(ErrorKind::invalid_state, "grid wavefunction has non-finite samples");
    }
    if (op.basis() == GridOperator::Basis::position) {
        return psi.samples().cwiseAbs2();
    }
    return to_momentum(psi.samples()).cwiseAbs2();
}

}  // namespace detail

inline double expectation(const GridOperator &op, const GridWavefunction &psi) {
    RVector w = detail::basis_weights(op, psi);
    double total = w.sum();
    if (!(total > 0.0)) {
        throw Error(ErrorKind::degenerate_state, "expectation of a zero-norm grid wavefunction");
    }
    return w.dot(op.diagonal()) / total;
}

inline double variance(const GridOperator &op, const GridWavefunction &psi) {
    RVector w = detail::basis_weights(op, psi);
    double total = w.sum();
    if (!(total > 0.0)) {
        throw Error(ErrorKind::degenerate_state, "variance of a zero-norm grid wavefunction");
    }
    double mean = w.dot(op.diagonal()) / total;
    double v = w.dot((op.diagonal().array() - mean).square().matrix()) / total;
    return (v < 0.0 && v > -1e-12) ? 0.0 : v;
}

inline GridWavefunction apply(const GridOperator &op, const GridWavefunction &psi) {
    require_same_dim(op.size(), psi.size(), "grid operator");
    if (op.basis() == GridOperator::Basis::position) {
        return GridWavefunction(psi.grid(), op.diagonal().cast<Complex>().cwiseProduct(psi.samples()));
    }
    CVector spec = to_momentum(psi.samples());
    spec = spec.cwiseProduct(op.diagonal().cast<Complex>());
    return GridWavefunction(psi.grid(), from_momentum(spec));
}

inline double fidelity(const GridWavefunction &a, const GridWavefunction &b) {
    require_same_dim(a.size(), b.size(), "fidelity");
    double na = a.samples().squaredNorm();
    double nb = b.samples().squaredNorm();
    if (!(na > 0.0) || !(nb > 0.0)) {
        throw Error(ErrorKind::degenerate_state, "fidelity with a zero-norm grid wavefunction");
    }
    double f = std::norm(a.samples().dot(b.samples())) / (na * nb);
    return std::min(1.0, std::max(0.0, f));
}

/// Normalized pure Gaussian packet with the given first and second moments.
/// The chirp exp(iβ(q−q₀)²), β = cov_qp/(2ħ var_q), produces the q–p
/// correlation; Var(p) follows from purity as (ħ²/4 + cov_qp²)/var_q.
inline GridWavefunction gaussian_packet(const Grid &grid, double mean_q, double mean_p, double var_q,
                                        double cov_qp, double hbar) {
    if (!(var_q > 0.0)) {
        throw Error(ErrorKind::configuration, "gaussian packet requires var_q > 0");
    }
    CVector s(grid.size());
    const double beta = cov_qp / (2.0 * hbar * var_q);
    for (Index j = 0; j < grid.size(); ++j) {
        double x = grid.position(j) - mean_q;
        double amp = std::exp(-x * x / (4.0 * var_q));
        double phase = beta * x * x + mean_p * x / hbar;
        s[j] = std::polar(amp, phase);
    }
    return normalized(GridWavefunction(grid, std::move(s)));
}

}  // namespace contmeas
