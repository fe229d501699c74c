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

// Selective continuous measurement of an observable A with strength κ.
//
// Two equivalent descriptions are implemented:
//
//  * Nonlinear (normalized) Ito dynamics driven by a Wiener increment ΔW:
//
//        dψ = [−(i/ħ)H − (κ/2)(A − ⟨A⟩)²]ψ dt + √κ (A − ⟨A⟩)ψ dW
//        a  = ⟨A⟩ + ξ̇/(2√κ),   discretized as a_k = ⟨A⟩ + ΔW_k/(2√κ Δt)
//
//  * Linear (unnormalized) dynamics driven by a given record a(t):
//
//        ψ_{k+1} = exp(−(i/ħ)HΔt) exp(−κΔt(A − a_k)²) ψ_k
//
//    where ‖ψ_t‖² is the density of the record with respect to the per-slice
//    Gaussian record measure (see instrument.hpp).
//
// The record coefficient is 1/(2√κ). With κ in units of 1/([A]²·time) this is
// the only choice that gives a record in units of A and reproduces the
// per-slice Gaussian record variance 1/(4κΔt); RecordConvention::literal keeps
// the alternative 1/(2κ) reading available for comparison.

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "contmeas/grid.hpp"
#include "contmeas/hilbert.hpp"
#include "contmeas/stochastic.hpp"

namespace contmeas {

class MeasurementStrength {
public:
    explicit MeasurementStrength(double kappa) : kappa_(kappa) {
        if (!(kappa > 0.0) || !std::isfinite(kappa)) {
            throw Error(ErrorKind::configuration, "measurement strength kappa must be positive and finite");
        }
    }
    double value() const noexcept { return kappa_; }

private:
    double kappa_;
};

/// Record values a_k for k = 1..n on the uniform grid t_k = k·Δt.
class MeasurementRecord {
public:
    MeasurementRecord() = default;
    MeasurementRecord(double dt, std::vector<double> values) : dt_(dt), values_(std::move(values)) {
        require_positive_dt(dt);
        for (double a : values_) {
            if (!std::isfinite(a)) {
                throw Error(ErrorKind::invalid_state, "measurement record contains a non-finite value");
            }
        }
    }

    double dt() const noexcept { return dt_; }
    std::size_t size() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }
    /// Value of slice k (0-based), recorded over (t_k, t_{k+1}].
    double operator[](std::size_t k) const { return values_[k]; }
    double time(std::size_t k) const { return static_cast<double>(k + 1) * dt_; }
    std::span<const double> values() const noexcept { return values_; }

private:
    double dt_ = 1.0;
    std::vector<double> values_;
};

enum class StepMode { renorm, raw };

/// How the Hamiltonian part of a nonlinear step is taken. `exact` applies
/// exp(−(i/ħ)HΔt) after the measurement update (norm-preserving, the
/// default); `euler` adds −(i/ħ)HψΔt to the increment, the plain
/// Euler–Maruyama form.
enum class HamiltonianStep { exact, euler };

/// 1/(2√κ) (standard) or 1/(2κ) (literal, kept for comparison only).
enum class RecordConvention { standard, literal };

enum class RunMode { nonlinear, linear_with_record };

inline double record_noise_coefficient(double kappa, RecordConvention conv) {
    return conv == RecordConvention::standard ? 1.0 / (2.0 * std::sqrt(kappa)) : 1.0 / (2.0 * kappa);
}

/// κΔt·range(A)². Nonlinear stepping warns above 0.1 and refuses above 1.
inline double measurement_stiffness(double kappa, double dt, double range) { return kappa * dt * range * range; }

inline constexpr double kStiffnessWarn = 0.1;
inline constexpr double kStiffnessRefuse = 1.0;
inline constexpr double kNormalizedInputTolerance = 1e-10;
inline constexpr double kUnderflowNorm = 1e-150;

inline void require_kappa(double kappa) {
    if (!(kappa >= 0.0) || !std::isfinite(kappa)) {
        throw Error(ErrorKind::configuration, "kappa must be non-negative and finite");
    }
}

inline void require_hbar(double hbar) {
    if (!(hbar > 0.0) || !std::isfinite(hbar)) {
        throw Error(ErrorKind::configuration, "hbar must be positive and finite");
    }
}

// ---------------------------------------------------------------------------
// Finite-dimensional stepper
// ---------------------------------------------------------------------------

/// Precomputed factors for a fixed (H, A, κ, ħ, Δt).
class MatrixStepper {
public:
    using State = StateVector;

    MatrixStepper(HermitianOperator hamiltonian, HermitianOperator observable, double kappa, double hbar, double dt,
                  HamiltonianStep hstep = HamiltonianStep::exact)
        : h_(std::move(hamiltonian)), a_(std::move(observable)), kappa_(kappa), hbar_(hbar), dt_(dt), hstep_(hstep) {
        require_same_dim(h_.dim(), a_.dim(), "hamiltonian vs observable");
        require_kappa(kappa);
        require_hbar(hbar);
        require_positive_dt(dt);
        unitary_ = h_.function([&](double e) { return std::polar(1.0, -e * dt_ / hbar_); });
        stiffness_ = measurement_stiffness(kappa_, dt_, a_.spectral_range());
    }

    const HermitianOperator &hamiltonian() const noexcept { return h_; }
    const HermitianOperator &observable() const noexcept { return a_; }
    double kappa() const noexcept { return kappa_; }
    double hbar() const noexcept { return hbar_; }
    double dt() const noexcept { return dt_; }
    Index dim() const noexcept { return a_.dim(); }
    double stiffness() const noexcept { return stiffness_; }

    std::vector<std::string> warnings() const {
        std::vector<std::string> w;
        if (stiffness_ > kStiffnessWarn) {
            std::ostringstream msg;
            msg << "kappa*dt*range(A)^2 = " << stiffness_ << " exceeds " << kStiffnessWarn
                << "; nonlinear steps lose accuracy";
            w.push_back(msg.str());
        }
        return w;
    }

    double mean_A(const State &psi) const { return expectation(a_, psi); }
    double var_A(const State &psi) const { return variance(a_, psi); }

    /// One Euler–Maruyama step of the nonlinear equation.
    State nonlinear(const State &psi, double dw, StepMode mode = StepMode::renorm) const {
        require_same_dim(dim(), psi.dim(), "step_nonlinear");
        if (stiffness_ > kStiffnessRefuse) {
            std::ostringstream msg;
            msg << "kappa*dt*range(A)^2 = " << stiffness_ << " exceeds " << kStiffnessRefuse;
            throw Error(ErrorKind::step_size, msg.str());
        }
        const CVector &c = psi.amplitudes();
        double n2 = norm2(psi);
        if (mode == StepMode::renorm && std::abs(n2 - 1.0) > kNormalizedInputTolerance) {
            throw Error(ErrorKind::invalid_state, "renorm-mode step requires a normalized input state");
        }
        if (!(n2 > 0.0)) {
            throw Error(ErrorKind::degenerate_state, "nonlinear step of a zero-norm state");
        }
        const CMatrix &a = a_.matrix();
        double mean = c.dot(a * c).real() / n2;
        CVector b = a * c - mean * c;
        CVector bb = a * b - mean * b;
        CVector next = c - (0.5 * kappa_ * dt_) * bb + (std::sqrt(kappa_) * dw) * b;
        if (hstep_ == HamiltonianStep::exact) {
            next = unitary_ * next;
        } else {
            next -= Complex(0.0, dt_ / hbar_) * (h_.matrix() * c);
        }
        if (!all_finite(next)) {
            throw Error(ErrorKind::step_size, "nonlinear step produced non-finite amplitudes");
        }
        if (mode == StepMode::renorm) {
            double nn = next.norm();
            if (!(nn > 0.0)) {
                throw Error(ErrorKind::step_size, "nonlinear step collapsed the state to zero");
            }
            next /= nn;
        }
        return State(std::move(next));
    }

    /// a_k = ⟨A⟩ + c_κ ΔW/Δt for the pre-step state.
    double record(const State &psi, double dw, RecordConvention conv = RecordConvention::standard) const {
        double mean = mean_A(psi);
        if (kappa_ == 0.0) return mean;
        return mean + record_noise_coefficient(kappa_, conv) * dw / dt_;
    }

    /// Gaussian measurement factor exp(−κΔt(A − a)²), applied in the A eigenbasis.
    CVector measurement_factor(const CVector &c, double a) const {
        const RVector &ev = a_.eigenvalues();
        const CMatrix &v = a_.eigenvectors();
        CVector coeff = v.adjoint() * c;
        for (Index i = 0; i < ev.size(); ++i) {
            double d = ev[i] - a;
            coeff[i] *= std::exp(-kappa_ * dt_ * d * d);
        }
        return v * coeff;
    }

    /// One split step of the linear record-driven equation. The result is
    /// unnormalized; underflow of the norm below 1e-150 is signalled.
    State linear(const State &psi, double a) const {
        require_same_dim(dim(), psi.dim(), "step_linear");
        if (!std::isfinite(a)) {
            throw Error(ErrorKind::invalid_state, "record value must be finite");
        }
        CVector next = unitary_ * measurement_factor(psi.amplitudes(), a);
        if (!all_finite(next)) {
            throw Error(ErrorKind::step_size, "linear step produced non-finite amplitudes");
        }
        if (next.norm() < kUnderflowNorm) {
            throw Error(ErrorKind::weight_underflow, "linear-mode norm fell below 1e-150; use log-weight tracking");
        }
        return State(std::move(next));
    }

    /// Exact unitary factor only.
    State evolve(const State &psi) const { return State(unitary_ * psi.amplitudes()); }

private:
    HermitianOperator h_;
    HermitianOperator a_;
    double kappa_;
    double hbar_;
    double dt_;
    HamiltonianStep hstep_;
    CMatrix unitary_;
    double stiffness_ = 0.0;
};

// ---------------------------------------------------------------------------
// Position-grid stepper: free particle H = p²/2m monitored in A = q
// ---------------------------------------------------------------------------

/// The nonlinear step on the grid emits the record first and then applies the
/// exact Gaussian factor for that record followed by the kinetic factor and a
/// renormalization. To first order in Δt this is the Euler–Maruyama update;
/// it stays well defined for the unbounded observable q.
class GridStepper {
public:
    using State = GridWavefunction;

    GridStepper(Grid grid, double mass, double kappa, double hbar, double dt)
        : grid_(std::move(grid)), mass_(mass), kappa_(kappa), hbar_(hbar), dt_(dt) {
        if (!(mass > 0.0) || !std::isfinite(mass)) {
            throw Error(ErrorKind::configuration, "mass must be positive and finite");
        }
        require_kappa(kappa);
        require_hbar(hbar);
        require_positive_dt(dt);
        position_ = GridOperator::position(grid_);
        kinetic_phase_.resize(grid_.size());
        for (Index k = 0; k < grid_.size(); ++k) {
            double p = grid_.momentum(k, hbar_);
            kinetic_phase_[k] = std::polar(1.0, -p * p * dt_ / (2.0 * mass_ * hbar_));
        }
    }

    const Grid &grid() const noexcept { return grid_; }
    double mass() const noexcept { return mass_; }
    double kappa() const noexcept { return kappa_; }
    double hbar() const noexcept { return hbar_; }
    double dt() const noexcept { return dt_; }
    std::vector<std::string> warnings() const { return {}; }

    double mean_A(const State &psi) const { return expectation(position_, psi); }
    double var_A(const State &psi) const { return variance(position_, psi); }

    double record(const State &psi, double dw, RecordConvention conv = RecordConvention::standard) const {
        double mean = mean_A(psi);
        if (kappa_ == 0.0) return mean;
        return mean + record_noise_coefficient(kappa_, conv) * dw / dt_;
    }

    State nonlinear(const State &psi, double dw, StepMode mode = StepMode::renorm,
                    RecordConvention conv = RecordConvention::standard) const {
        if (mode == StepMode::raw) {
            throw Error(ErrorKind::mode, "raw nonlinear stepping is only available for matrix systems");
        }
        State next = linear_unchecked(psi, record(psi, dw, conv));
        return normalized(next);
    }

    State linear(const State &psi, double a) const {
        if (!std::isfinite(a)) {
            throw Error(ErrorKind::invalid_state, "record value must be finite");
        }
        State next = linear_unchecked(psi, a);
        if (!all_finite(next.samples())) {
            throw Error(ErrorKind::step_size, "linear step produced non-finite samples");
        }
        if (std::sqrt(norm2(next)) < kUnderflowNorm) {
            throw Error(ErrorKind::weight_underflow, "linear-mode norm fell below 1e-150; use log-weight tracking");
        }
        return next;
    }

    State evolve(const State &psi) const {
        CVector spec = to_momentum(psi.samples());
        spec = spec.cwiseProduct(kinetic_phase_);
        return State(grid_, from_momentum(spec));
    }

    CVector measurement_factor(const CVector &samples, double a) const {
        CVector out = samples;
        if (kappa_ == 0.0) return out;
        for (Index j = 0; j < out.size(); ++j) {
            double d = grid_.position(j) - a;
            out[j] *= std::exp(-kappa_ * dt_ * d * d);
        }
        return out;
    }

private:
    State linear_unchecked(const State &psi, double a) const {
        require_same_dim(grid_.size(), psi.size(), "grid step");
        return evolve(State(grid_, measurement_factor(psi.samples(), a)));
    }

    Grid grid_;
    double mass_;
    double kappa_;
    double hbar_;
    double dt_;
    GridOperator position_;
    CVector kinetic_phase_;
};

// ---------------------------------------------------------------------------
// Single-step free functions
// ---------------------------------------------------------------------------

inline StateVector step_nonlinear(const StateVector &psi, const HermitianOperator &h, const HermitianOperator &a,
                                  double kappa, double hbar, double dt, double dw, StepMode mode = StepMode::renorm,
                                  HamiltonianStep hstep = HamiltonianStep::exact) {
    return MatrixStepper(h, a, kappa, hbar, dt, hstep).nonlinear(psi, dw, mode);
}

inline double emit_record(const StateVector &psi, const HermitianOperator &a, double kappa, double dt, double dw,
                          RecordConvention conv = RecordConvention::standard) {
    require_kappa(kappa);
    require_positive_dt(dt);
    double n2 = norm2(psi);
    if (std::abs(n2 - 1.0) > kNormalizedInputTolerance) {
        throw Error(ErrorKind::invalid_state, "emit_record requires a normalized state");
    }
    double mean = expectation(a, psi);
    if (kappa == 0.0) return mean;
    return mean + record_noise_coefficient(kappa, conv) * dw / dt;
}

inline StateVector step_linear(const StateVector &psi, const HermitianOperator &h, const HermitianOperator &a,
                               double kappa, double hbar, double dt, double record_value) {
    return MatrixStepper(h, a, kappa, hbar, dt).linear(psi, record_value);
}

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

struct RunOptions {
    std::size_t save_stride = 1;
    StepMode step_mode = StepMode::renorm;
    RecordConvention record_convention = RecordConvention::standard;
    bool store_states = true;
};

/// Samples of one trajectory at steps 0, s, 2s, ... and the final step.
///
/// In linear mode the stored states are normalized and the norm is carried
/// in log_weight = ln‖ψ_t‖², so long records do not underflow.
template <class State>
struct TrajectoryResult {
    RunMode mode = RunMode::nonlinear;
    double dt = 0.0;
    std::size_t n_steps = 0;
    std::vector<std::size_t> saved_steps;
    std::vector<State> states;
    std::vector<double> record_at_save;  // NaN at step 0
    std::vector<double> mean_A;
    std::vector<double> var_A;
    std::vector<double> norm2;
    std::vector<double> log_weight;  // NaN in nonlinear mode
    MeasurementRecord record;
    std::vector<std::string> warnings;

    double final_log_weight() const { return log_weight.back(); }
    const State &final_state() const { return states.back(); }
    double time(std::size_t save_index) const { return static_cast<double>(saved_steps[save_index]) * dt; }
};

using MatrixTrajectory = TrajectoryResult<StateVector>;
using GridTrajectory = TrajectoryResult<GridWavefunction>;

namespace detail {

template <class State>
double state_norm2(const State &s) {
    return norm2(s);
}

template <class State>
State scaled(const State &s, double factor);

template <>
inline StateVector scaled(const StateVector &s, double factor) {
    return StateVector(s.amplitudes() * factor);
}

template <>
inline GridWavefunction scaled(const GridWavefunction &s, double factor) {
    return GridWavefunction(s.grid(), s.samples() * factor);
}

inline bool on_save(std::size_t k, std::size_t n, std::size_t stride) { return k % stride == 0 || k == n; }

template <class Stepper, class State>
void save_sample(TrajectoryResult<State> &out, const Stepper &stepper, const State &psi, std::size_t k, double a,
                 double log_w, bool store) {
    out.saved_steps.push_back(k);
    out.record_at_save.push_back(a);
    out.mean_A.push_back(stepper.mean_A(psi));
    out.var_A.push_back(stepper.var_A(psi));
    if (out.mode == RunMode::linear_with_record) {
        out.norm2.push_back(std::exp(log_w));
        out.log_weight.push_back(log_w);
    } else {
        out.norm2.push_back(state_norm2(psi));
        out.log_weight.push_back(std::numeric_limits<double>::quiet_NaN());
    }
    if (store) out.states.push_back(psi);
}

inline void require_stride(std::size_t stride) {
    if (stride == 0) {
        throw Error(ErrorKind::configuration, "save_stride must be >= 1");
    }
}

}  // namespace detail

/// Nonlinear run driven by an explicit sequence of Wiener increments.
template <class Stepper>
TrajectoryResult<typename Stepper::State> run_nonlinear(const Stepper &stepper, const typename Stepper::State &psi0,
                                                        std::span<const double> dws, const RunOptions &opt = {}) {
    using State = typename Stepper::State;
    detail::require_stride(opt.save_stride);
    if (opt.step_mode == StepMode::renorm && std::abs(norm2(psi0) - 1.0) > kNormalizedInputTolerance) {
        throw Error(ErrorKind::invalid_state, "nonlinear run requires a normalized initial state");
    }
    TrajectoryResult<State> out;
    out.mode = RunMode::nonlinear;
    out.dt = stepper.dt();
    out.n_steps = dws.size();
    out.warnings = stepper.warnings();
    std::vector<double> rec;
    rec.reserve(dws.size());
    const double nan = std::numeric_limits<double>::quiet_NaN();
    State psi = psi0;
    detail::save_sample(out, stepper, psi, 0, nan, 0.0, opt.store_states);
    for (std::size_t k = 1; k <= dws.size(); ++k) {
        double dw = dws[k - 1];
        double a = stepper.record(psi, dw, opt.record_convention);
        if constexpr (std::is_same_v<State, GridWavefunction>) {
            psi = stepper.nonlinear(psi, dw, opt.step_mode, opt.record_convention);
        } else {
            psi = stepper.nonlinear(psi, dw, opt.step_mode);
        }
        rec.push_back(a);
        if (detail::on_save(k, dws.size(), opt.save_stride)) {
            detail::save_sample(out, stepper, psi, k, a, 0.0, opt.store_states);
        }
    }
    out.record = MeasurementRecord(stepper.dt(), std::move(rec));
    return out;
}

/// Nonlinear run drawing n_steps increments from `stream`.
template <class Stepper>
TrajectoryResult<typename Stepper::State> run_selective(const Stepper &stepper, const typename Stepper::State &psi0,
                                                        std::size_t n_steps, NoiseStream &stream,
                                                        const RunOptions &opt = {}) {
    std::vector<double> dws = increments(stream, n_steps, stepper.dt());
    return run_nonlinear(stepper, psi0, dws, opt);
}

/// Linear run driven by a given record. The state is renormalized after
/// every step and the discarded norm accumulated into log_weight.
template <class Stepper>
TrajectoryResult<typename Stepper::State> run_selective(const Stepper &stepper, const typename Stepper::State &psi0,
                                                        const MeasurementRecord &record, const RunOptions &opt = {}) {
    using State = typename Stepper::State;
    detail::require_stride(opt.save_stride);
    if (std::abs(record.dt() - stepper.dt()) > 1e-15 * stepper.dt()) {
        throw Error(ErrorKind::configuration, "record time step does not match the stepper");
    }
    TrajectoryResult<State> out;
    out.mode = RunMode::linear_with_record;
    out.dt = stepper.dt();
    out.n_steps = record.size();
    out.record = record;
    double n0 = norm2(psi0);
    if (!(n0 > 0.0)) {
        throw Error(ErrorKind::degenerate_state, "linear run of a zero-norm initial state");
    }
    double log_w = std::log(n0);
    State psi = detail::scaled(psi0, 1.0 / std::sqrt(n0));
    detail::save_sample(out, stepper, psi, 0, std::numeric_limits<double>::quiet_NaN(), log_w, opt.store_states);
    for (std::size_t k = 1; k <= record.size(); ++k) {
        double a = record[k - 1];
        psi = stepper.linear(psi, a);
        double n2 = norm2(psi);
        log_w += std::log(n2);
        psi = detail::scaled(psi, 1.0 / std::sqrt(n2));
        if (detail::on_save(k, record.size(), opt.save_stride)) {
            detail::save_sample(out, stepper, psi, k, a, log_w, opt.store_states);
        }
    }
    return out;
}

/// ‖ψ_t‖² of a linear-mode trajectory.
template <class State>
double record_weight(const TrajectoryResult<State> &traj) {
    if (traj.mode != RunMode::linear_with_record) {
        throw Error(ErrorKind::mode, "record_weight requires a linear-mode trajectory");
    }
    return std::exp(traj.final_log_weight());
}

/// Runs the nonlinear dynamics on the given increments, replays the emitted
/// record through the linear dynamics from the same initial state and
/// returns 1 − fidelity of the two final states.
template <class Stepper>
double replay_infidelity(const Stepper &stepper, const typename Stepper::State &psi0, std::span<const double> dws,
                         RecordConvention conv = RecordConvention::standard) {
    if (dws.empty()) return 0.0;
    RunOptions opt;
    opt.save_stride = dws.size();
    opt.record_convention = conv;
    auto nonlinear = run_nonlinear(stepper, psi0, dws, opt);
    auto linear = run_selective(stepper, psi0, nonlinear.record, opt);
    return 1.0 - fidelity(nonlinear.final_state(), linear.final_state());
}

template <class Stepper>
double replay_equivalence(const Stepper &stepper, const typename Stepper::State &psi0, std::size_t n_steps,
                          NoiseStream &stream, RecordConvention conv = RecordConvention::standard) {
    std::vector<double> dws = increments(stream, n_steps, stepper.dt());
    return replay_infidelity(stepper, psi0, dws, conv);
}

}  // namespace contmeas
