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

// Library usage without the command-line tool: one selective trajectory of a
// driven qubit monitored in sigma_z, printed as t, <sigma_z>, record.

#include <cmath>
#include <cstdio>

#include "contmeas/contmeas.hpp"

int main() {
    using namespace contmeas;
    const double kappa = 1.0, dt = 1e-3;
    MatrixStepper stepper(HermitianOperator::pauli_x(), HermitianOperator::pauli_z(), kappa, 1.0, dt);
    StateVector psi0(CVector{{Complex(std::sqrt(0.3)), Complex(std::sqrt(0.7))}});

    RunOptions opt;
    opt.save_stride = 100;
    NoiseStream noise{7, 0, 0};
    auto traj = run_selective(stepper, psi0, 2000, noise, opt);

    std::printf("t,mean_A,record\n");
    for (std::size_t s = 0; s < traj.saved_steps.size(); ++s) {
        std::printf("%.3f,%.6f,%.6f\n", static_cast<double>(traj.saved_steps[s]) * dt, traj.mean_A[s],
                    traj.record_at_save[s]);
    }
    return 0;
}
