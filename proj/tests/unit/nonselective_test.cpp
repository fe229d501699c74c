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

#include "contmeas/nonselective.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "contmeas/instrument.hpp"
#include "contmeas/unraveling.hpp"

using namespace contmeas;

namespace {

StateVector psi_03() { return StateVector(CVector{{Complex(std::sqrt(0.3)), Complex(std::sqrt(0.7))}}); }

MasterEqConfig qubit_config(double kappa, double dt) {
    return MasterEqConfig{HermitianOperator::pauli_x(), HermitianOperator::pauli_z(), kappa, 1.0, dt};
}

// −(i/ħ)[H,ρ] − (κ/2)(A²ρ − 2AρA + ρA²), written out with plain products.
CMatrix derivative_oracle(const CMatrix &h, const CMatrix &a, const CMatrix &rho, double kappa, double hbar) {
    CMatrix unitary = Complex(0.0, -1.0 / hbar) * (h * rho - rho * h);
    CMatrix dc = a * a * rho - 2.0 * a * rho * a + rho * a * a;
    return unitary - 0.5 * kappa * dc;
}

CMatrix plus_x() {
    CMatrix r(2, 2);
    r << 0.5, 0.5, 0.5, 0.5;
    return r;
}

}  // namespace

TEST(MeDerivative, matches_product_oracle) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n;
    CMatrix h(3, 3), a(3, 3);
    for (Index i = 0; i < 3; ++i) {
        for (Index j = 0; j < 3; ++j) {
            h(i, j) = Complex(n(rng), n(rng));
            a(i, j) = Complex(n(rng), n(rng));
        }
    }
    h = 0.5 * (h + h.adjoint()).eval();
    a = 0.5 * (a + a.adjoint()).eval();
    CVector v(3);
    v << Complex(0.2, 0.1), Complex(-0.5, 0.3), Complex(0.4, -0.6);
    DensityMatrix rho = DensityMatrix::pure(StateVector(v / v.norm()));
    MasterEqConfig cfg{HermitianOperator(h), HermitianOperator(a), 0.7, 1.3, 1e-3};
    CMatrix d = me_derivative(rho, cfg);
    EXPECT_LT((d - derivative_oracle(h, a, rho.matrix(), 0.7, 1.3)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT(std::abs(d.trace()), 1e-12);
    EXPECT_LT((d - d.adjoint()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(MeDerivative, stationary_states) {
    auto cfg = qubit_config(1.0, 1e-3);
    EXPECT_LT(me_derivative(DensityMatrix::maximally_mixed(2), cfg).cwiseAbs().maxCoeff(), 1e-15);
    MasterEqConfig commuting{HermitianOperator::pauli_z(), HermitianOperator::pauli_z(), 2.0, 1.0, 1e-3};
    DensityMatrix up = DensityMatrix::pure(StateVector::basis(2, 0));
    EXPECT_LT(me_derivative(up, commuting).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(MeDerivative, dephasing_rate_is_two_kappa) {
    const double kappa = 0.8;
    MasterEqConfig cfg{HermitianOperator(CMatrix::Zero(2, 2)), HermitianOperator::pauli_z(), kappa, 1.0, 1e-3};
    CMatrix d = me_derivative(plus_x(), cfg);
    EXPECT_NEAR(d(0, 1).real(), -2.0 * kappa * 0.5, 1e-15);
    EXPECT_NEAR(d(0, 0).real(), 0.0, 1e-15);
}

TEST(MeDerivative, agrees_with_averaged_instrument) {
    // One averaged slice multiplies ρ_mn by exp(−(κΔt/2)(a_m − a_n)²); its
    // difference quotient tends to the double-commutator term.
    const double kappa = 1.7;
    HermitianOperator a = HermitianOperator::pauli_y();
    MasterEqConfig cfg{HermitianOperator(CMatrix::Zero(2, 2)), a, kappa, 1.0, 1e-3};
    CMatrix rho = DensityMatrix::pure(psi_03()).matrix();
    CMatrix d = me_derivative(rho, cfg);
    for (double dt : {1e-4, 1e-5}) {
        GaussianInstrument inst(a, MeasurementStrength(kappa), dt);
        CMatrix quotient = (average_channel(rho, inst) - rho) / dt;
        EXPECT_LT((quotient - d).cwiseAbs().maxCoeff(), 10.0 * kappa * kappa * dt) << dt;
    }
}

TEST(MeDerivative, dimension_mismatch) {
    auto cfg = qubit_config(1.0, 1e-3);
    EXPECT_THROW(me_derivative(DensityMatrix::maximally_mixed(3), cfg), Error);
}

TEST(RunMe, exact_dephasing) {
    const double kappa = 0.6;
    MasterEqConfig cfg{HermitianOperator(CMatrix::Zero(2, 2)), HermitianOperator::pauli_z(), kappa, 1.0, 1e-2};
    auto sol = run_me(DensityMatrix(plus_x()), cfg, 2.0, 50);
    ASSERT_EQ(sol.states.size(), 5u);
    for (std::size_t s = 0; s < sol.states.size(); ++s) {
        double expect = 0.5 * std::exp(-2.0 * kappa * sol.times[s]);
        EXPECT_NEAR(std::abs(sol.states[s](0, 1)) / expect, 1.0, 1e-6) << s;
        EXPECT_NEAR(sol.states[s](0, 0).real(), 0.5, 1e-15);
    }
}

TEST(RunMe, diagonal_state_is_frozen) {
    CMatrix rho = CMatrix::Zero(2, 2);
    rho(0, 0) = 0.3;
    rho(1, 1) = 0.7;
    MasterEqConfig cfg{HermitianOperator(CMatrix::Zero(2, 2)), HermitianOperator::pauli_z(), 3.0, 1.0, 1e-2};
    auto sol = run_me(DensityMatrix(rho), cfg, 1.0, 100);
    EXPECT_EQ(sol.states.back(), rho);
}

TEST(RunMe, unitary_when_unmonitored) {
    auto cfg = qubit_config(0.0, 1e-2);
    auto sol = run_me(DensityMatrix::pure(psi_03()), cfg, 3.0, 10);
    for (const auto &r : sol.states) {
        EXPECT_NEAR((r * r).trace().real(), 1.0, 1e-9);
        EXPECT_NEAR(r.trace().real(), 1.0, 1e-12);
    }
    // Rabi rotation about x for t = 3.
    CMatrix u = HermitianOperator::pauli_x().function([](double e) { return std::polar(1.0, -3.0 * e); });
    CMatrix exact = u * DensityMatrix::pure(psi_03()).matrix() * u.adjoint();
    EXPECT_LT((sol.states.back() - exact).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(RunMe, trace_and_positivity_throughout) {
    auto cfg = qubit_config(2.0, 5e-3);
    auto sol = run_me(DensityMatrix::pure(psi_03()), cfg, 2.0, 1);
    ASSERT_EQ(sol.states.size(), 401u);
    for (const auto &r : sol.states) {
        EXPECT_NEAR(r.trace().real(), 1.0, 1e-9);
        EXPECT_GE(DensityMatrix::min_eigenvalue(r), -1e-8);
        EXPECT_LT((r - r.adjoint()).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(RunMe, configuration_errors) {
    DensityMatrix rho = DensityMatrix::maximally_mixed(2);
    EXPECT_THROW(run_me(rho, qubit_config(1.0, 0.5), 1.0), Error);   // ||L||·dt too large
    EXPECT_THROW(run_me(rho, qubit_config(1.0, 1e-2), 1.005), Error);  // not a multiple of dt
    EXPECT_THROW(run_me(rho, qubit_config(-1.0, 1e-2), 1.0), Error);
    EXPECT_THROW(run_me(rho, qubit_config(1.0, 1e-2), 1.0, 0), Error);
    EXPECT_THROW(run_me(DensityMatrix::maximally_mixed(3), qubit_config(1.0, 1e-2), 1.0), Error);
    EXPECT_NO_THROW(run_me(rho, qubit_config(1.0, 1e-2), 0.0));
}

TEST(EnsembleAverage, repeated_trajectory) {
    TrajectoryResult<StateVector> t;
    t.dt = 0.1;
    t.saved_steps = {0, 1};
    t.states = {psi_03(), StateVector::basis(2, 1)};
    auto avg = ensemble_average(std::vector<TrajectoryResult<StateVector>>{t, t, t});
    EXPECT_LT((avg.mean[0] - DensityMatrix::pure(psi_03()).matrix()).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LT(avg.standard_error[1].cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_NEAR(avg.times[1], 0.1, 1e-15);
}

TEST(EnsembleAverage, orthogonal_pair_gives_maximally_mixed) {
    TrajectoryResult<StateVector> up, down;
    up.dt = down.dt = 0.1;
    up.saved_steps = down.saved_steps = {0};
    up.states = {StateVector::basis(2, 0)};
    down.states = {StateVector::basis(2, 1)};
    auto avg = ensemble_average(std::vector<TrajectoryResult<StateVector>>{up, down});
    EXPECT_LT((avg.mean[0] - 0.5 * CMatrix::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-15);
    // Two samples, values 1 and 0: standard error 0.5 on the populations.
    EXPECT_NEAR(avg.standard_error[0](0, 0).real(), 0.5, 1e-15);
}

TEST(EnsembleAverage, errors) {
    TrajectoryResult<StateVector> a, b;
    a.dt = b.dt = 0.1;
    a.saved_steps = {0, 1};
    b.saved_steps = {0, 2};
    a.states = b.states = {psi_03(), psi_03()};
    EXPECT_THROW(ensemble_average(std::vector<TrajectoryResult<StateVector>>{a}), Error);
    EXPECT_THROW(ensemble_average(std::vector<TrajectoryResult<StateVector>>{a, b}), Error);
}

TEST(EnsembleAverage, unravels_the_master_equation) {
    const double kappa = 1.0, dt = 1e-3;
    const std::size_t n_traj = 2000, n_steps = 1000;
    MatrixStepper stepper(HermitianOperator::pauli_x(), HermitianOperator::pauli_z(), kappa, 1.0, dt);
    RunOptions opt;
    opt.save_stride = 250;
    EnsembleAccumulator acc({0, 250, 500, 750, 1000}, dt);
    for (std::size_t i = 0; i < n_traj; ++i) {
        NoiseStream s{2024, i, 0};
        acc.add(run_selective(stepper, psi_03(), n_steps, s, opt));
    }
    auto ens = summarize(acc);
    auto me = run_me(DensityMatrix::pure(psi_03()), qubit_config(kappa, dt), 1.0, 250);
    auto cmp = compare_ensemble(ens, me);
    ASSERT_EQ(cmp.size(), 5u);
    EXPECT_NEAR(cmp[0].trace_distance, 0.0, 1e-12);
    for (const auto &p : cmp) {
        EXPECT_LT(p.trace_distance, 0.05) << p.t;
        EXPECT_LT(p.trace_distance, 4.0 * p.mc_error + 1e-12) << p.t;
    }
    // Selective states stay pure while the average loses purity.
    CMatrix last = ens.mean.back();
    EXPECT_LT((last * last).trace().real(), 0.95);
}

TEST(CompareEnsemble, requires_shared_times) {
    EnsembleAverage ens;
    ens.times = {0.5};
    ens.mean = {0.5 * CMatrix::Identity(2, 2)};
    ens.standard_error = {CMatrix::Zero(2, 2)};
    MasterEqSolution me;
    me.times = {0.0, 0.25};
    me.states = {0.5 * CMatrix::Identity(2, 2), 0.5 * CMatrix::Identity(2, 2)};
    EXPECT_THROW(compare_ensemble(ens, me), Error);
    me.times.push_back(0.5);
    me.states.push_back(plus_x());
    auto out = compare_ensemble(ens, me);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_NEAR(out[0].trace_distance, 0.5, 1e-12);
}
