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

// Finite-dimensional states and operators.
//
// States are allowed to be unnormalized: the linear (record-driven) dynamics
// carries the outcome probability in the norm. Every functional that needs a
// normalized state (expectation, variance, fidelity) normalizes internally.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>

#include "contmeas/errors.hpp"

namespace contmeas {

using Complex = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using RVector = Eigen::VectorXd;
using Index = Eigen::Index;

inline constexpr double kHermiticityTolerance = 1e-12;
inline constexpr double kNormalizedTolerance = 1e-12;

inline bool all_finite(const CVector &v) {
    for (Index i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v[i].real()) || !std::isfinite(v[i].imag())) {
            return false;
        }
    }
    return true;
}

/// Pure state in a d-dimensional Hilbert space, d >= 2. The norm is not
/// constrained; zero or non-finite states are rejected by the operations
/// that consume them rather than at construction.
class StateVector {
public:
    StateVector() = default;
    explicit StateVector(CVector amplitudes) : amps_(std::move(amplitudes)) {
        if (amps_.size() < 2) {
            throw Error(ErrorKind::dimension_mismatch, "state dimension must be at least 2");
        }
    }

    const CVector &amplitudes() const noexcept { return amps_; }
    Index dim() const noexcept { return amps_.size(); }
    Complex operator[](Index i) const { return amps_[i]; }

    bool is_normalized() const { return std::abs(amps_.norm() - 1.0) < kNormalizedTolerance; }

    static StateVector basis(Index dim, Index k) {
        CVector v = CVector::Zero(dim);
        v[k] = 1.0;
        return StateVector(std::move(v));
    }

private:
    CVector amps_;
};

/// Σ|c_i|². Throws invalid-state on non-finite amplitudes.
inline double norm2(const StateVector &state) {
    if (!all_finite(state.amplitudes())) {
        throw Error(ErrorKind::invalid_state, "state has non-finite amplitudes");
    }
    return state.amplitudes().squaredNorm();
}

inline StateVector normalized(const StateVector &state) {
    double n2 = norm2(state);
    if (!(n2 > 0.0)) {
        throw Error(ErrorKind::degenerate_state, "cannot normalize a zero-norm state");
    }
    return StateVector(state.amplitudes() / std::sqrt(n2));
}

struct HermiticityDefect {
    double max_asymmetry = 0.0;
    Index row = 0;
    Index col = 0;
};

inline HermiticityDefect hermiticity_defect(const CMatrix &m) {
    HermiticityDefect worst;
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
            double d = std::abs(m(i, j) - std::conj(m(j, i)));
            if (d > worst.max_asymmetry) {
                worst = {d, i, j};
            }
        }
    }
    return worst;
}

/// Hermitian matrix with its eigendecomposition cached. Immutable; copies
/// share the decomposition.
class HermitianOperator {
public:
    HermitianOperator() = default;
    explicit HermitianOperator(CMatrix matrix) : matrix_(std::move(matrix)) {
        if (matrix_.rows() != matrix_.cols() || matrix_.rows() < 2) {
            throw Error(ErrorKind::dimension_mismatch, "operator must be square with dimension >= 2");
        }
        for (Index i = 0; i < matrix_.size(); ++i) {
            const Complex z = matrix_.data()[i];
            if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) {
                throw Error(ErrorKind::invalid_state, "operator has non-finite entries");
            }
        }
        auto defect = hermiticity_defect(matrix_);
        if (!(defect.max_asymmetry < kHermiticityTolerance)) {
            std::ostringstream msg;
            msg << "operator is not Hermitian: max |M - M^H| = " << defect.max_asymmetry << " at entry ("
                << defect.row << "," << defect.col << ")";
            throw Error(ErrorKind::not_hermitian, msg.str());
        }
        auto solver = std::make_shared<Eigen::SelfAdjointEigenSolver<CMatrix>>(matrix_);
        eig_ = std::move(solver);
    }

    const CMatrix &matrix() const noexcept { return matrix_; }
    Index dim() const noexcept { return matrix_.rows(); }

    /// Ascending eigenvalues.
    const RVector &eigenvalues() const { return eig_->eigenvalues(); }
    /// Columns are orthonormal eigenvectors matching eigenvalues().
    const CMatrix &eigenvectors() const { return eig_->eigenvectors(); }

    double spectral_range() const {
        const auto &ev = eigenvalues();
        return ev[ev.size() - 1] - ev[0];
    }

    /// f(M) = V diag(f(λ)) V†.
    template <class F>
    CMatrix function(F &&f) const {
        const auto &ev = eigenvalues();
        CVector diag(ev.size());
        for (Index i = 0; i < ev.size(); ++i) {
            diag[i] = f(ev[i]);
        }
        const auto &v = eigenvectors();
        return v * diag.asDiagonal() * v.adjoint();
    }

    static HermitianOperator pauli_x() {
        CMatrix m(2, 2);
        m << 0, 1, 1, 0;
        return HermitianOperator(m);
    }
    static HermitianOperator pauli_y() {
        CMatrix m(2, 2);
        m << 0, Complex(0, -1), Complex(0, 1), 0;
        return HermitianOperator(m);
    }
    static HermitianOperator pauli_z() {
        CMatrix m(2, 2);
        m << 1, 0, 0, -1;
        return HermitianOperator(m);
    }
    static HermitianOperator identity(Index dim) { return HermitianOperator(CMatrix::Identity(dim, dim)); }
    static HermitianOperator diagonal(const RVector &values) {
        return HermitianOperator(CMatrix(values.cast<Complex>().asDiagonal()));
    }
    static HermitianOperator zero(Index dim) { return HermitianOperator(CMatrix::Zero(dim, dim)); }

private:
    CMatrix matrix_;
    std::shared_ptr<const Eigen::SelfAdjointEigenSolver<CMatrix>> eig_;
};

inline void require_same_dim(Index a, Index b, const char *what) {
    if (a != b) {
        std::ostringstream msg;
        msg << what << ": dimension " << a << " does not match " << b;
        throw Error(ErrorKind::dimension_mismatch, msg.str());
    }
}

/// ⟨ψ|A|ψ⟩/⟨ψ|ψ⟩.
inline double expectation(const HermitianOperator &op, const StateVector &state) {
    require_same_dim(op.dim(), state.dim(), "expectation");
    double n2 = norm2(state);
    if (!(n2 > 0.0)) {
        throw Error(ErrorKind::degenerate_state, "expectation of a zero-norm state");
    }
    const CVector &c = state.amplitudes();
    return c.dot(op.matrix() * c).real() / n2;
}

/// ⟨A²⟩ − ⟨A⟩², computed as ‖(A − ⟨A⟩)ψ‖²/‖ψ‖² so it stays non-negative.
inline double variance(const HermitianOperator &op, const StateVector &state) {
    double mean = expectation(op, state);
    const CVector &c = state.amplitudes();
    CVector shifted = op.matrix() * c - mean * c;
    double v = shifted.squaredNorm() / c.squaredNorm();
    return (v < 0.0 && v > -1e-12) ? 0.0 : v;
}

inline StateVector apply(const HermitianOperator &op, const StateVector &state) {
    require_same_dim(op.dim(), state.dim(), "apply");
    return StateVector(op.matrix() * state.amplitudes());
}

/// |⟨ψ₁|ψ₂⟩|²/(‖ψ₁‖²‖ψ₂‖²).
inline double fidelity(const StateVector &a, const StateVector &b) {
    require_same_dim(a.dim(), b.dim(), "fidelity");
    double na = norm2(a);
    double nb = norm2(b);
    if (!(na > 0.0) || !(nb > 0.0)) {
        throw Error(ErrorKind::degenerate_state, "fidelity with a zero-norm state");
    }
    double f = std::norm(a.amplitudes().dot(b.amplitudes())) / (na * nb);
    return std::min(1.0, std::max(0.0, f));
}

/// Validated density matrix: Hermitian within 1e-10, unit trace within
/// 1e-10, smallest eigenvalue >= -1e-8.
class DensityMatrix {
public:
    static constexpr double kHermitianTolerance = 1e-10;
    static constexpr double kTraceTolerance = 1e-10;
    static constexpr double kPositivityTolerance = 1e-8;

    DensityMatrix() = default;
    explicit DensityMatrix(CMatrix matrix) : matrix_(std::move(matrix)) {
        if (auto problem = validate(matrix_)) {
            throw Error(ErrorKind::invalid_state, *problem);
        }
    }

    static DensityMatrix pure(const StateVector &state) {
        StateVector n = normalized(state);
        return DensityMatrix(n.amplitudes() * n.amplitudes().adjoint());
    }

    static DensityMatrix maximally_mixed(Index dim) {
        return DensityMatrix(CMatrix::Identity(dim, dim) / static_cast<double>(dim));
    }

    /// Returns a description of the first violated invariant, if any.
    static std::optional<std::string> validate(const CMatrix &m) {
        if (m.rows() != m.cols() || m.rows() < 2) {
            return "density matrix must be square with dimension >= 2";
        }
        if (!m.allFinite()) {
            return "density matrix has non-finite entries";
        }
        auto defect = hermiticity_defect(m);
        if (defect.max_asymmetry > kHermitianTolerance) {
            std::ostringstream msg;
            msg << "density matrix not Hermitian: asymmetry " << defect.max_asymmetry;
            return msg.str();
        }
        Complex tr = m.trace();
        if (std::abs(tr - 1.0) > kTraceTolerance) {
            std::ostringstream msg;
            msg << "density matrix trace " << tr.real() << " differs from 1";
            return msg.str();
        }
        double min_eig = min_eigenvalue(m);
        if (min_eig < -kPositivityTolerance) {
            std::ostringstream msg;
            msg << "density matrix has negative eigenvalue " << min_eig;
            return msg.str();
        }
        return std::nullopt;
    }

    static double min_eigenvalue(const CMatrix &m) {
        CMatrix h = 0.5 * (m + m.adjoint());
        Eigen::SelfAdjointEigenSolver<CMatrix> es(h, Eigen::EigenvaluesOnly);
        return es.eigenvalues()[0];
    }

    const CMatrix &matrix() const noexcept { return matrix_; }
    Index dim() const noexcept { return matrix_.rows(); }
    double purity() const { return (matrix_ * matrix_).trace().real(); }

private:
    CMatrix matrix_;
};

/// [A,[A,ρ]]. In the eigenbasis of A, element (m,n) is (a_m − a_n)² ρ_mn.
inline CMatrix double_commutator(const HermitianOperator &op, const CMatrix &rho) {
    require_same_dim(op.dim(), rho.rows(), "double_commutator");
    const CMatrix &a = op.matrix();
    CMatrix inner = a * rho - rho * a;
    return a * inner - inner * a;
}

inline CMatrix double_commutator(const HermitianOperator &op, const DensityMatrix &rho) {
    return double_commutator(op, rho.matrix());
}

/// ½ Σ|λ_i(ρ − σ)|.
inline double trace_distance(const CMatrix &rho, const CMatrix &sigma) {
    require_same_dim(rho.rows(), sigma.rows(), "trace_distance");
    CMatrix diff = rho - sigma;
    CMatrix h = 0.5 * (diff + diff.adjoint());
    Eigen::SelfAdjointEigenSolver<CMatrix> es(h, Eigen::EigenvaluesOnly);
    return 0.5 * es.eigenvalues().cwiseAbs().sum();
}

}  // namespace contmeas
