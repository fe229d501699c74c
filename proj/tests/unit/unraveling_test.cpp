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

#include "contmeas/unraveling.hpp"

#include <gtest/gtest.h>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <numbers>
#include <numeric>

#include "contmeas/instrument.hpp"
#include "contmeas/parallel.hpp"

using namespace contmeas;

namespace {

StateVector psi_03() { return StateVector(CVector{{Complex(std::sqrt(0.3)), Complex(std::sqrt(0.7))}}); }

MatrixStepper driven_qubit(double kappa, double dt) {
    return MatrixStepper(HermitianOperator::pauli_x(), HermitianOperator::pauli_z(), kappa, 1.0, dt);
}

// exp(−iHt/ħ) by Padé scaling and squaring, independent of the eigensolver path.
CMatrix propagator(const CMatrix &h, double t, double hbar) { return (Complex(0.0, -t / hbar) * h).exp(); }

// exp(−κΔt(A − a)²) by Padé as well.
CMatrix gaussian_factor(const CMatrix &a, double kappa, double dt, double rec) {
    CMatrix shifted = a - rec * CMatrix::Identity(a.rows(), a.cols());
    return (-kappa * dt * shifted * shifted).exp();
}

}  // namespace

TEST(MeasurementStrength, must_be_positive) {
    EXPECT_THROW(MeasurementStrength(0.0), Error);
    EXPECT_THROW(MeasurementStrength(-1.0), Error);
    EXPECT_THROW(MeasurementStrength(std::numeric_limits<double>::infinity()), Error);
    EXPECT_EQ(MeasurementStrength(2.5).value(), 2.5);
}

TEST(MeasurementRecord, finite_values_and_times) {
    MeasurementRecord r(0.1, {1.0, -2.0, 0.5});
    EXPECT_EQ(r.size(), 3u);
    EXPECT_NEAR(r.time(0), 0.1, 1e-15);
    EXPECT_NEAR(r.time(2), 0.3, 1e-15);
    EXPECT_THROW(MeasurementRecord(0.1, {1.0, std::nan("")}), Error);
    EXPECT_THROW(MeasurementRecord(0.0, {1.0}), Error);
}

TEST(StepNonlinear, kappa_zero_is_schroedinger_step) {
    const double dt = 1e-2;
    CMatrix u = propagator(HermitianOperator::pauli_x().matrix(), dt, 1.0);
    StateVector exact(u * psi_03().amplitudes());
    auto split = step_nonlinear(psi_03(), HermitianOperator::pauli_x(), HermitianOperator::pauli_z(), 0.0, 1.0, dt, 0.3);
    EXPECT_NEAR(fidelity(split, exact), 1.0, 1e-14);
    auto euler = step_nonlinear(psi_03(), HermitianOperator::pauli_x(), HermitianOperator::pauli_z(), 0.0, 1.0, dt, 0.3,
                                StepMode::renorm, HamiltonianStep::euler);
    double infid = 1.0 - fidelity(euler, exact);
    EXPECT_GT(infid, 0.0);
    EXPECT_LT(infid, dt * dt);
}

TEST(StepNonlinear, eigenstate_is_fixed_point) {
    for (double dw : {0.0, 0.05, -0.3}) {
        StateVector up = StateVector::basis(2, 0);
        auto next = step_nonlinear(up, HermitianOperator::zero(2), HermitianOperator::pauli_z(), 2.0, 1.0, 1e-3, dw);
        EXPECT_EQ(next.amplitudes(), up.amplitudes());
    }
}

TEST(StepNonlinear, rejects_unnormalized_input_in_renorm_mode) {
    StateVector psi(CVector{{1.0, 1.0}});
    try {
        step_nonlinear(psi, HermitianOperator::pauli_x(), HermitianOperator::pauli_z(), 1.0, 1.0, 1e-3, 0.0);
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.kind(), ErrorKind::invalid_state);
    }
    EXPECT_NO_THROW(step_nonlinear(psi, HermitianOperator::pauli_x(), HermitianOperator::pauli_z(), 1.0, 1.0, 1e-3,
                                   0.0, StepMode::raw));
}

TEST(StepNonlinear, step_size_guard) {
    // κΔt·range(A)² = 1·0.05·4 = 0.2: warned, allowed.
    MatrixStepper warned = driven_qubit(1.0, 0.05);
    EXPECT_EQ(warned.warnings().size(), 1u);
    EXPECT_NO_THROW(warned.nonlinear(psi_03(), 0.0));
    // 1·0.3·4 = 1.2: refused.
    MatrixStepper refused = driven_qubit(1.0, 0.3);
    try {
        refused.nonlinear(psi_03(), 0.0);
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.kind(), ErrorKind::step_size);
    }
    EXPECT_TRUE(driven_qubit(1.0, 0.01).warnings().empty());
}

TEST(EmitRecord, examples) {
    StateVector plus(CVector{{Complex(1.0 / std::sqrt(2.0)), Complex(1.0 / std::sqrt(2.0))}});
    EXPECT_NEAR(emit_record(plus, HermitianOperator::pauli_z(), 1.0, 1e-3, 0.0), 0.0, 1e-15);
    StateVector up = StateVector::basis(2, 0);
    EXPECT_EQ(emit_record(up, HermitianOperator::pauli_z(), 1.0, 1.0, 0.5), 1.25);
    // Literal convention at κ = 4: coefficient 1/8 instead of 1/4.
    EXPECT_EQ(emit_record(up, HermitianOperator::pauli_z(), 4.0, 1.0, 0.5, RecordConvention::literal), 1.0625);
    EXPECT_EQ(emit_record(up, HermitianOperator::pauli_z(), 4.0, 1.0, 0.5), 1.125);
    EXPECT_THROW(emit_record(StateVector(CVector{{1.0, 1.0}}), HermitianOperator::pauli_z(), 1.0, 1.0, 0.0), Error);
}

TEST(EmitRecord, residual_is_white_with_expected_variance) {
    const double kappa = 2.0, dt = 1e-3;
    const std::size_t n = 100000;
    MatrixStepper stepper = driven_qubit(kappa, dt);
    RunOptions opt;
    opt.save_stride = 1;
    opt.store_states = false;
    NoiseStream s{4242, 0, 0};
    auto traj = run_selective(stepper, psi_03(), n, s, opt);
    std::vector<double> r(n);
    for (std::size_t k = 0; k < n; ++k) r[k] = traj.record[k] - traj.mean_A[k];  // mean_A[k] is the pre-step value
    double mean = std::accumulate(r.begin(), r.end(), 0.0) / static_cast<double>(n);
    double var = 0.0;
    for (double x : r) var += (x - mean) * (x - mean);
    var /= static_cast<double>(n - 1);
    double expected = 1.0 / (4.0 * kappa * dt);
    EXPECT_NEAR(var, expected, 0.01 * expected);
    for (std::size_t lag = 1; lag <= 5; ++lag) {
        double c = 0.0;
        for (std::size_t k = 0; k + lag < n; ++k) c += (r[k] - mean) * (r[k + lag] - mean);
        c /= static_cast<double>(n - 1) * var;
        EXPECT_LT(std::abs(c), 0.02) << "lag " << lag;
    }
}

TEST(StepLinear, kappa_zero_is_unitary) {
    StateVector psi(CVector{{Complex(0.3, 0.4), Complex(-0.2, 0.1)}});
    auto next = step_linear(psi, HermitianOperator::pauli_y(), HermitianOperator::pauli_z(), 0.0, 1.0, 0.7, 5.0);
    EXPECT_NEAR(norm2(next), norm2(psi), 1e-12);
    CVector exact = propagator(HermitianOperator::pauli_y().matrix(), 0.7, 1.0) * psi.amplitudes();
    EXPECT_LT((next.amplitudes() - exact).norm(), 1e-12);
}

TEST(StepLinear, resonant_eigenstate_is_unchanged) {
    StateVector down = StateVector::basis(2, 1);
    auto next = step_linear(down, HermitianOperator::zero(2), HermitianOperator::pauli_z(), 3.0, 1.0, 0.1, -1.0);
    EXPECT_EQ(next.amplitudes(), down.amplitudes());
}

TEST(StepLinear, two_level_gaussian_damping) {
    // κΔt = 0.5, a = +1: |↑⟩ undamped, |↓⟩ damped by exp(−0.5·(−1 − 1)²) = e^{−2}.
    StateVector plus(CVector{{Complex(1.0 / std::sqrt(2.0)), Complex(1.0 / std::sqrt(2.0))}});
    auto next = step_linear(plus, HermitianOperator::zero(2), HermitianOperator::pauli_z(), 0.5, 1.0, 1.0, 1.0);
    double damp = std::exp(-2.0);
    EXPECT_NEAR(norm2(next), 0.5 * (1.0 + damp * damp), 1e-15);
}

TEST(StepLinear, matches_pade_factors) {
    HermitianOperator h(CMatrix{{{0.2, Complex(0.3, -0.1), 0.0}, {Complex(0.3, 0.1), -0.4, 0.5}, {0.0, 0.5, 0.1}}});
    HermitianOperator a(CMatrix{{{1.0, 0.2, 0.0}, {0.2, 0.0, Complex(0.0, 0.3)}, {0.0, Complex(0.0, -0.3), -1.0}}});
    StateVector psi(CVector{{Complex(0.5, 0.1), Complex(-0.3, 0.6), Complex(0.2, -0.2)}});
    const double kappa = 1.7, dt = 0.05, rec = 0.4;
    auto next = step_linear(psi, h, a, kappa, 1.3, dt, rec);
    CVector oracle = propagator(h.matrix(), dt, 1.3) * gaussian_factor(a.matrix(), kappa, dt, rec) * psi.amplitudes();
    EXPECT_LT((next.amplitudes() - oracle).norm(), 1e-13);
}

TEST(StepLinear, never_increases_norm_without_hamiltonian) {
    HermitianOperator a(CMatrix{{{0.5, 0.3, 0.0}, {0.3, -0.2, 0.1}, {0.0, 0.1, 1.0}}});
    for (std::uint64_t k = 0; k < 200; ++k) {
        CVector c(3);
        for (Index i = 0; i < 3; ++i) {
            c[i] = Complex(standard_normal_at(5, k, 2 * i), standard_normal_at(5, k, 2 * i + 1));
        }
        StateVector psi(c);
        double rec = 2.0 * standard_normal_at(6, k, 0);
        auto next = step_linear(psi, HermitianOperator::zero(3), a, 1.0, 1.0, 0.2, rec);
        EXPECT_LT(norm2(next), norm2(psi));
    }
    // Equality for an eigenstate on resonance.
    StateVector v(a.eigenvectors().col(1));
    EXPECT_NEAR(norm2(step_linear(v, HermitianOperator::zero(3), a, 1.0, 1.0, 0.2, a.eigenvalues()[1])), norm2(v),
                1e-14);
}

TEST(StepLinear, underflow_is_signalled) {
    try {
        step_linear(psi_03(), HermitianOperator::zero(2), HermitianOperator::pauli_z(), 1.0, 1.0, 1.0, 1000.0);
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.kind(), ErrorKind::weight_underflow);
    }
    EXPECT_THROW(step_linear(psi_03(), HermitianOperator::zero(2), HermitianOperator::pauli_z(), 1.0, 1.0, 1.0,
                             std::numeric_limits<double>::infinity()),
                 Error);
}

TEST(RunSelective, zero_steps_keeps_initial_state) {
    MatrixStepper stepper = driven_qubit(1.0, 1e-3);
    NoiseStream s{1, 0, 0};
    auto t = run_selective(stepper, psi_03(), 0, s);
    ASSERT_EQ(t.states.size(), 1u);
    EXPECT_EQ(t.states[0].amplitudes(), psi_03().amplitudes());
    EXPECT_TRUE(t.record.empty());
    EXPECT_EQ(s.counter, 0u);
}

TEST(RunSelective, saved_states_normalized_and_stride_respected) {
    MatrixStepper stepper = driven_qubit(1.0, 1e-3);
    RunOptions opt;
    opt.save_stride = 7;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        NoiseStream s{seed, 0, 0};
        auto t = run_selective(stepper, psi_03(), 100, s, opt);
        ASSERT_EQ(t.saved_steps.front(), 0u);
        ASSERT_EQ(t.saved_steps.back(), 100u);
        EXPECT_EQ(t.saved_steps.size(), 100u / 7u + 2u);
        for (const auto &psi : t.states) EXPECT_NEAR(norm2(psi), 1.0, 1e-9);
        EXPECT_TRUE(std::isnan(t.log_weight.back()));
        EXPECT_EQ(t.record.size(), 100u);
    }
}

TEST(RunSelective, rabi_rotation_without_measurement) {
    // κ = 0, H = σ_x, t = π: exp(−iσ_x π) = −I.
    const std::size_t n = 3142;
    const double dt = std::numbers::pi / static_cast<double>(n);
    MatrixStepper exact(HermitianOperator::pauli_x(), HermitianOperator::pauli_z(), 0.0, 1.0, dt);
    MatrixStepper euler(HermitianOperator::pauli_x(), HermitianOperator::pauli_z(), 0.0, 1.0, dt,
                        HamiltonianStep::euler);
    NoiseStream s{9, 0, 0}, t{9, 0, 0};
    auto a = run_selective(exact, psi_03(), n, s);
    auto b = run_selective(euler, psi_03(), n, t);
    EXPECT_NEAR(fidelity(a.final_state(), psi_03()), 1.0, 1e-12);
    // Euler-stepped phase error accumulates to O(Δt) globally.
    EXPECT_NEAR(fidelity(b.final_state(), psi_03()), 1.0, dt);
}

TEST(RunSelective, expectation_martingale_when_commuting) {
    MatrixStepper stepper(HermitianOperator::zero(2), HermitianOperator::pauli_z(), 1.0, 1.0, 2e-3);
    RunOptions opt;
    opt.save_stride = 250;
    opt.store_states = false;
    const std::size_t n = 4000;
    std::vector<std::vector<double>> means(n);
    parallel_for(n, 1, [&](std::size_t i) {
        NoiseStream s{55, i, 0};
        means[i] = run_selective(stepper, psi_03(), 500, s, opt).mean_A;
    });
    for (std::size_t c = 0; c < means[0].size(); ++c) {
        double m = 0.0, sq = 0.0;
        for (const auto &row : means) {
            m += row[c];
            sq += row[c] * row[c];
        }
        m /= n;
        double se = std::sqrt((sq / n - m * m) / (n - 1.0));
        if (c == 0) {
            EXPECT_NEAR(m, -0.4, 1e-12);
        } else {
            EXPECT_LT(std::abs(m + 0.4), 4.0 * se) << "save " << c;
        }
    }
}

TEST(RunSelective, linear_replay_carries_log_weight) {
    MatrixStepper stepper = driven_qubit(1.0, 1e-2);
    MeasurementRecord rec(1e-2, {0.3, -0.8, 1.4, 0.1});
    auto t = run_selective(stepper, psi_03(), rec);
    EXPECT_EQ(t.mode, RunMode::linear_with_record);
    CVector raw = psi_03().amplitudes();
    for (std::size_t k = 0; k < rec.size(); ++k) raw = stepper.linear(StateVector(raw), rec[k]).amplitudes();
    EXPECT_NEAR(record_weight(t), raw.squaredNorm(), 1e-14);
    EXPECT_NEAR(fidelity(t.final_state(), StateVector(raw)), 1.0, 1e-14);
    for (const auto &psi : t.states) EXPECT_NEAR(norm2(psi), 1.0, 1e-12);
}

TEST(RecordWeight, trivial_cases) {
    MatrixStepper stepper(HermitianOperator::zero(2), HermitianOperator::pauli_z(), 1.0, 1.0, 0.1);
    EXPECT_EQ(record_weight(run_selective(stepper, psi_03(), MeasurementRecord(0.1, {}))), 1.0);
    auto on_resonance = run_selective(stepper, StateVector::basis(2, 0), MeasurementRecord(0.1, {1.0, 1.0, 1.0}));
    EXPECT_EQ(record_weight(on_resonance), 1.0);
    NoiseStream s{1, 0, 0};
    try {
        record_weight(run_selective(stepper, psi_03(), 3, s));
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.kind(), ErrorKind::mode);
    }
}

TEST(RecordWeight, matches_two_step_enumeration) {
    const double kappa = 1.5, dt = 0.05;
    MatrixStepper stepper = driven_qubit(kappa, dt);
    GaussianInstrument inst(HermitianOperator::pauli_z(), MeasurementStrength(kappa), dt);
    RecordLattice lattice = RecordLattice::spanning_points(inst, 6.0, 41);
    auto dist = enumerate_record_distribution(psi_03(), inst, HermitianOperator::pauli_x(), 1.0, 2, lattice);
    const double c2 = inst.normalization() * inst.normalization();
    for (std::size_t idx : {0u, 17u, 400u, 841u, 1680u}) {
        auto values = dist.record(idx);
        double w = record_weight(run_selective(stepper, psi_03(), MeasurementRecord(dt, values)));
        double p = w * std::pow(c2 * lattice.measure_weight(), 2.0);
        EXPECT_NEAR(p, dist.probability(idx), 1e-12 * std::max(1.0, dist.probability(idx))) << idx;
        EXPECT_NEAR(p / dist.probability(idx), 1.0, 1e-12) << idx;
    }
}

TEST(ReplayEquivalence, trivial_cases) {
    MatrixStepper stepper = driven_qubit(1.0, 1e-3);
    NoiseStream s{1, 0, 0};
    EXPECT_EQ(replay_equivalence(stepper, psi_03(), 0, s), 0.0);
    MatrixStepper frozen(HermitianOperator::zero(2), HermitianOperator::pauli_z(), 1.0, 1.0, 1e-3);
    NoiseStream t{1, 0, 0};
    EXPECT_NEAR(replay_equivalence(frozen, StateVector::basis(2, 1), 500, t), 0.0, 1e-15);
}

TEST(ReplayEquivalence, first_order_convergence) {
    // Coupled Wiener paths: increments drawn at 1e-4 and summed.
    const std::size_t n_traj = 100, n_fine = 10000;
    const double dt_fine = 1e-4;
    std::vector<double> mean_infid;
    const std::vector<std::size_t> factors = {100, 10, 1};
    for (std::size_t f : factors) {
        MatrixStepper stepper = driven_qubit(1.0, dt_fine * static_cast<double>(f));
        double sum = 0.0;
        for (std::size_t i = 0; i < n_traj; ++i) {
            NoiseStream s{2718, i, 0};
            auto fine = increments(s, n_fine, dt_fine);
            sum += replay_infidelity(stepper, psi_03(), f == 1 ? fine : coarsen_increments(fine, f));
        }
        mean_infid.push_back(sum / static_cast<double>(n_traj));
    }
    // Slope of log(infidelity) against log(Δt) over three decades.
    double slope = (std::log(mean_infid.front()) - std::log(mean_infid.back())) / std::log(100.0);
    EXPECT_GT(slope, 0.8) << mean_infid[0] << " " << mean_infid[1] << " " << mean_infid[2];
    EXPECT_LT(slope, 1.25) << mean_infid[0] << " " << mean_infid[1] << " " << mean_infid[2];
    // Constant C with infidelity ≤ C·Δt at each step size.
    for (std::size_t j = 0; j < factors.size(); ++j) {
        EXPECT_LT(mean_infid[j], 0.2 * dt_fine * static_cast<double>(factors[j]));
    }
}

TEST(ReplayEquivalence, literal_coefficient_breaks_equivalence) {
    const std::size_t n_traj = 50;
    MatrixStepper stepper = driven_qubit(4.0, 1e-3);
    double standard = 0.0, literal = 0.0;
    for (std::size_t i = 0; i < n_traj; ++i) {
        NoiseStream a{31, i, 0}, b{31, i, 0};
        standard += replay_equivalence(stepper, psi_03(), 1000, a);
        literal += replay_equivalence(stepper, psi_03(), 1000, b, RecordConvention::literal);
    }
    EXPECT_LT(standard / n_traj, 1e-2);
    EXPECT_GT(literal / n_traj, 10.0 * standard / n_traj);
}

TEST(GridStepper, raw_mode_is_refused) {
    Grid g(256, -20.0, 20.0);
    GridStepper stepper(g, 1.0, 1.0, 1.0, 1e-3);
    auto psi = gaussian_packet(g, 0.0, 0.0, 1.0, 0.0, 1.0);
    try {
        stepper.nonlinear(psi, 0.0, StepMode::raw);
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.kind(), ErrorKind::mode);
    }
    EXPECT_THROW(GridStepper(g, 0.0, 1.0, 1.0, 1e-3), Error);
}

TEST(GridStepper, nonlinear_keeps_norm_and_replays) {
    Grid g(512, -20.0, 20.0);
    GridStepper stepper(g, 1.0, 1.0, 1.0, 1e-3);
    auto psi = gaussian_packet(g, 0.5, 0.2, 1.0, 0.0, 1.0);
    NoiseStream s{3, 0, 0};
    RunOptions opt;
    opt.save_stride = 50;
    auto t = run_selective(stepper, psi, 200, s, opt);
    for (const auto &state : t.states) EXPECT_NEAR(norm2(state), 1.0, 1e-12);
    auto replay = run_selective(stepper, psi, t.record, opt);
    // The grid nonlinear step is the normalized linear step on its own record.
    EXPECT_NEAR(fidelity(replay.final_state(), t.final_state()), 1.0, 1e-12);
}
