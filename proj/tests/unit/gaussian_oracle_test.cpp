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

#include "contmeas/gaussian_oracle.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace contmeas;

namespace {

FreeParticleRun small_run(double kappa, std::size_t n_steps) {
    FreeParticleRun run;
    run.params = {1.0, kappa, 1.0};
    run.grid = Grid(512, -16.0, 16.0);
    run.initial = GaussianState::pure(0.0, 0.0, 1.0, 0.0, 1.0);
    run.dt = 1e-3;
    run.n_steps = n_steps;
    run.save_stride = 100;
    return run;
}

}  // namespace

TEST(StationaryCovariance, closed_form) {
    // Zero flow: σ_qp = ħ/2, σ_qq = √(ħ/(4κm)), σ_pp = 4κm σ_qq σ_qp.
    for (double kappa : {0.25, 1.0, 3.0}) {
        for (double mass : {0.5, 2.0}) {
            for (double hbar : {1.0, 0.3}) {
                FreeParticleParams p{mass, kappa, hbar};
                auto s = stationary_covariance(p);
                double qq = std::sqrt(hbar / (4.0 * kappa * mass));
                double qp = 0.5 * hbar;
                double pp = 4.0 * kappa * mass * qq * qp;
                EXPECT_NEAR(s.covariance.qq / qq, 1.0, 1e-10);
                EXPECT_NEAR(s.covariance.qp / qp, 1.0, 1e-10);
                EXPECT_NEAR(s.covariance.pp / pp, 1.0, 1e-10);
            }
        }
    }
    auto unit = stationary_covariance({1.0, 1.0, 1.0}).covariance;
    EXPECT_NEAR(unit.qq, 0.5, 1e-12);
    EXPECT_NEAR(unit.qp, 0.5, 1e-12);
    EXPECT_NEAR(unit.pp, 1.0, 1e-12);
}

TEST(StationaryCovariance, is_pure) {
    auto c = stationary_covariance({1.7, 0.6, 1.2}).covariance;
    EXPECT_NEAR(c.qq * c.pp - c.qp * c.qp, 0.25 * 1.2 * 1.2, 1e-10);
}

TEST(StationaryCovariance, requires_measurement) {
    EXPECT_THROW(stationary_covariance({1.0, 0.0, 1.0}), Error);
    EXPECT_THROW(stationary_covariance({-1.0, 1.0, 1.0}), Error);
}

TEST(LocalizationRate, two_root_kappa_at_unit_scales) {
    EXPECT_NEAR(localization_rate({1.0, 1.0, 1.0}), 2.0, 1e-9);
    EXPECT_NEAR(localization_rate({1.0, 4.0, 1.0}), 4.0, 1e-9);
    double previous = 0.0;
    for (double kappa : {0.1, 0.5, 1.0, 2.0, 8.0}) {
        double r = localization_rate({1.0, kappa, 1.0});
        EXPECT_GT(r, previous) << kappa;
        previous = r;
    }
}

TEST(CovarianceFlow, relaxes_to_fixed_point) {
    FreeParticleParams p{1.0, 1.0, 1.0};
    Covariance c = GaussianState::pure(0.0, 0.0, 4.0, 0.0, 1.0).covariance();
    for (int i = 0; i < 10000; ++i) c = covariance_rk4(c, p, 1e-3);
    EXPECT_NEAR(c.qq, 0.5, 1e-6);
    EXPECT_NEAR(c.qp, 0.5, 1e-6);
    EXPECT_NEAR(c.pp, 1.0, 1e-6);
}

TEST(MomentStep, free_spreading_without_measurement) {
    FreeParticleParams p{2.0, 0.0, 1.0};
    GaussianState g = GaussianState::pure(1.0, 0.6, 0.5, 0.1, 1.0);
    GaussianState start = g;
    const double dt = 0.01;
    for (int k = 0; k < 300; ++k) g = moment_step(g, p, dt, 0.37);
    const double t = 3.0;
    EXPECT_NEAR(g.mean_q, start.mean_q + start.mean_p / p.mass * t, 1e-12);
    EXPECT_NEAR(g.mean_p, start.mean_p, 1e-15);
    double qq = start.var_qq + 2.0 * start.cov_qp * t / p.mass + start.var_pp * t * t / (p.mass * p.mass);
    EXPECT_NEAR(g.var_qq, qq, 1e-12);
    EXPECT_NEAR(g.cov_qp, start.cov_qp + start.var_pp * t / p.mass, 1e-12);
    EXPECT_NEAR(g.var_pp, start.var_pp, 1e-15);
}

TEST(MomentStep, means_follow_noise) {
    FreeParticleParams p{1.0, 4.0, 1.0};
    GaussianState g = GaussianState::pure(0.0, 0.0, 0.25, 0.1, 1.0);
    GaussianState n = moment_step(g, p, 1e-3, 0.01);
    EXPECT_NEAR(n.mean_q, 2.0 * 2.0 * 0.25 * 0.01, 1e-15);
    EXPECT_NEAR(n.mean_p, 2.0 * 2.0 * 0.1 * 0.01, 1e-15);
    EXPECT_THROW(moment_step(g, p, 0.0, 0.0), Error);
}

TEST(MomentStep, purity_is_conserved) {
    FreeParticleParams p{1.0, 1.5, 1.0};
    GaussianState g = GaussianState::pure(0.0, 0.0, 2.0, -0.3, 1.0);
    NoiseStream s{8, 0, 0};
    for (int k = 0; k < 5000; ++k) {
        g = moment_step(g, p, 1e-3, next_increment(s, 1e-3));
        ASSERT_LT(std::abs(g.purity_defect(1.0)), 1e-9) << k;
    }
}

TEST(GaussianState, validation) {
    EXPECT_NO_THROW(GaussianState::pure(0.0, 0.0, 1.0, 0.2, 1.0).validate(1.0));
    GaussianState squeezed{0.0, 0.0, 1.0, 0.0, 0.1};
    EXPECT_THROW(squeezed.validate(1.0), Error);
    GaussianState negative{0.0, 0.0, -1.0, 0.0, 1.0};
    EXPECT_THROW(negative.validate(1.0), Error);
}

TEST(GridVsOracle, moments_agree) {
    auto run = small_run(1.0, 1000);
    auto reports = grid_vs_oracle(run, 99, 3);
    ASSERT_EQ(reports.size(), 3u);
    for (const auto &r : reports) {
        ASSERT_EQ(r.rows.size(), 11u);
        EXPECT_TRUE(r.warnings.empty());
        for (const auto &row : r.rows) {
            EXPECT_LT(row.rel_var_q, 2e-2) << row.t;
            EXPECT_LT(row.rel_var_p, 2e-2) << row.t;
            EXPECT_LT(row.dev_mean_q, 5e-2) << row.t;
            EXPECT_LT(row.dev_mean_p, 5e-2) << row.t;
        }
    }
    EXPECT_EQ(reports[0].rows.front().rel_var_q, reports[1].rows.front().rel_var_q);
    EXPECT_NE(reports[0].rows.back().grid.mean_q, reports[1].rows.back().grid.mean_q);
}

TEST(GridVsOracle, unmonitored_spreading) {
    auto run = small_run(0.0, 1000);
    auto r = run_free_particle(run, 1, 0);
    const auto &last = r.rows.back();
    EXPECT_NEAR(last.oracle.var_qq, 1.0 + 0.25, 1e-12);
    EXPECT_LT(last.rel_var_q, 1e-10);
    EXPECT_LT(last.dev_mean_q, 1e-10);
}

TEST(GridVsOracle, jobs_do_not_change_results) {
    auto run = small_run(1.0, 200);
    auto a = grid_vs_oracle(run, 5, 4, 1);
    auto b = grid_vs_oracle(run, 5, 4, 3);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(a[i].rows.back().grid.mean_q, b[i].rows.back().grid.mean_q);
        EXPECT_EQ(a[i].rows.back().grid.var_p, b[i].rows.back().grid.var_p);
    }
}

TEST(GridVsOracle, coarse_grid_is_refused) {
    auto run = small_run(1.0, 100);
    run.grid = Grid(64, -32.0, 32.0);
    try {
        run_free_particle(run, 1, 0);
        FAIL() << "expected a resolution error";
    } catch (const Error &e) {
        EXPECT_EQ(e.kind(), ErrorKind::configuration);
    }
    run = small_run(1.0, 100);
    run.grid = Grid(512, -4.0, 4.0);
    EXPECT_THROW(run_free_particle(run, 1, 0), Error);
    run = small_run(1.0, 100);
    run.save_stride = 0;
    EXPECT_THROW(run_free_particle(run, 1, 0), Error);
}
