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

// Experiment orchestration: dispatch a validated SimConfig to the owning
// module and write its outputs.
//
// Every data file starts with the same manifest header (code version, RNG
// algorithm, master seed, canonical configuration). Data files carry no
// timestamps, so identical (config, seed) give byte-identical files for any
// worker count. Wall-clock times and per-file checksums go to manifest.json
// only.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "contmeas/config.hpp"
#include "contmeas/gaussian_oracle.hpp"
#include "contmeas/instrument.hpp"
#include "contmeas/io.hpp"
#include "contmeas/nonselective.hpp"
#include "contmeas/parallel.hpp"
#include "contmeas/stochastic.hpp"
#include "contmeas/unraveling.hpp"

namespace contmeas {

inline constexpr const char *kVersion = "1.0.0";

/// Record lists in rpi_enumeration.json are omitted above this size; the
/// probabilities are always written.
inline constexpr std::size_t kMaxListedRecords = 1000000;

/// Trajectories are run in blocks of this size and folded into the
/// ensemble in index order, bounding memory for large ensembles.
inline constexpr std::size_t kTrajectoryBlock = 256;

struct ExperimentOptions {
    unsigned jobs = 1;
    std::filesystem::path out_dir;        // empty: cfg.output
    std::filesystem::path trajectory_csv;  // single-trajectory override
};

struct OutputFile {
    std::string name;  // relative to the output directory
    std::string checksum;
    std::size_t bytes = 0;
};

struct RunManifest {
    json config;
    std::string version = kVersion;
    std::string rng{kRngAlgorithm};
    std::uint64_t seed = 0;
    std::string mode;
    std::string started;
    std::string finished;
    std::vector<OutputFile> outputs;
    std::vector<std::string> warnings;
    std::string status = "ok";
    std::string error_kind;
    std::string error_message;
    int exit_code = 0;

    json to_json() const {
        json files = json::array();
        for (const auto &f : outputs) {
            files.push_back({{"file", f.name}, {"fnv1a64", f.checksum}, {"bytes", f.bytes}});
        }
        json j = {{"version", version}, {"rng", rng},         {"seed", seed},         {"mode", mode},
                  {"config", config},   {"started", started}, {"finished", finished}, {"outputs", files},
                  {"warnings", warnings}, {"status", status}, {"exit_code", exit_code}};
        if (!error_kind.empty()) {
            j["error"] = {{"kind", error_kind}, {"message", error_message}};
        }
        return j;
    }
};

namespace detail {

inline std::string utc_now() {
    auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline std::string pad6(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%06zu", i);
    return buf;
}

class OutputSink {
public:
    OutputSink(std::filesystem::path dir, RunManifest &manifest) : dir_(std::move(dir)), manifest_(manifest) {}

    const std::filesystem::path &dir() const noexcept { return dir_; }

    void write(const std::string &name, const std::string &contents) { write_at(dir_ / name, name, contents); }

    void write_at(const std::filesystem::path &path, const std::string &name, const std::string &contents) {
        write_file(path, contents);
        manifest_.outputs.push_back({name, hex64(fnv1a64(contents)), contents.size()});
    }

private:
    std::filesystem::path dir_;
    RunManifest &manifest_;
};

inline void manifest_header(CsvWriter &w, const SimConfig &cfg) {
    w.comment("contmeas", kVersion);
    w.comment("rng", kRngAlgorithm);
    w.comment("seed", std::to_string(cfg.seed));
    w.comment("config", cfg.echo.dump());
}

inline json manifest_header_json(const SimConfig &cfg) {
    return {{"contmeas", kVersion}, {"rng", kRngAlgorithm}, {"seed", cfg.seed}, {"config", cfg.echo}};
}

inline std::vector<std::string> state_columns(Index d) {
    std::vector<std::string> c;
    for (Index i = 0; i < d; ++i) {
        c.push_back("psi_re_" + std::to_string(i));
        c.push_back("psi_im_" + std::to_string(i));
    }
    return c;
}

inline std::vector<std::string> matrix_columns(const std::string &prefix, Index d) {
    std::vector<std::string> c;
    for (Index i = 0; i < d; ++i) {
        for (Index j = 0; j < d; ++j) {
            c.push_back(prefix + "_re_" + std::to_string(i) + "_" + std::to_string(j));
            c.push_back(prefix + "_im_" + std::to_string(i) + "_" + std::to_string(j));
        }
    }
    return c;
}

inline void append_matrix(std::vector<double> &row, const CMatrix &m) {
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
            row.push_back(m(i, j).real());
            row.push_back(m(i, j).imag());
        }
    }
}

template <class State>
std::string trajectory_csv(const SimConfig &cfg, const TrajectoryResult<State> &traj, std::size_t index) {
    CsvWriter w;
    manifest_header(w, cfg);
    w.comment("trajectory", std::to_string(index));
    w.comment("dt", format_double(traj.dt));
    w.comment("run_mode", traj.mode == RunMode::nonlinear ? "nonlinear" : "linear_with_record");
    for (const auto &warning : traj.warnings) w.comment("warning", warning);
    std::vector<std::string> cols = {"step", "t", "a", "mean_A", "var_A", "norm2", "log_weight"};
    constexpr bool kMatrix = std::is_same_v<State, StateVector>;
    if constexpr (kMatrix) {
        if (!traj.states.empty()) {
            auto extra = state_columns(traj.states.front().dim());
            cols.insert(cols.end(), extra.begin(), extra.end());
        }
    }
    w.columns(cols);
    for (std::size_t s = 0; s < traj.saved_steps.size(); ++s) {
        std::vector<double> row = {traj.time(s), traj.record_at_save[s], traj.mean_A[s], traj.var_A[s], traj.norm2[s],
                                   traj.log_weight[s]};
        if constexpr (kMatrix) {
            if (!traj.states.empty()) {
                const CVector &a = traj.states[s].amplitudes();
                for (Index i = 0; i < a.size(); ++i) {
                    row.push_back(a[i].real());
                    row.push_back(a[i].imag());
                }
            }
        }
        w.row({traj.saved_steps[s]}, row);
    }
    return w.str();
}

inline std::string ensemble_csv(const SimConfig &cfg, const EnsembleAverage &ens) {
    CsvWriter w;
    manifest_header(w, cfg);
    w.comment("trajectories", std::to_string(ens.n_trajectories));
    Index d = ens.mean.front().rows();
    std::vector<std::string> cols = {"step", "t"};
    auto mean_cols = matrix_columns("rho", d);
    auto se_cols = matrix_columns("se", d);
    cols.insert(cols.end(), mean_cols.begin(), mean_cols.end());
    cols.insert(cols.end(), se_cols.begin(), se_cols.end());
    w.columns(cols);
    for (std::size_t s = 0; s < ens.times.size(); ++s) {
        std::vector<double> row = {ens.times[s]};
        append_matrix(row, ens.mean[s]);
        append_matrix(row, ens.standard_error[s]);
        w.row({ens.steps[s]}, row);
    }
    return w.str();
}

inline std::string me_csv(const SimConfig &cfg, const MasterEqSolution &sol) {
    CsvWriter w;
    manifest_header(w, cfg);
    w.comment("me_dt", format_double(cfg.me_dt));
    Index d = sol.states.front().rows();
    std::vector<std::string> cols = {"step", "t"};
    auto rho_cols = matrix_columns("rho", d);
    cols.insert(cols.end(), rho_cols.begin(), rho_cols.end());
    cols.push_back("purity");
    w.columns(cols);
    for (std::size_t s = 0; s < sol.times.size(); ++s) {
        std::vector<double> row = {sol.times[s]};
        append_matrix(row, sol.states[s]);
        row.push_back((sol.states[s] * sol.states[s]).trace().real());
        w.row({sol.steps[s]}, row);
    }
    return w.str();
}

inline std::string compare_csv(const SimConfig &cfg, const std::vector<TraceDistancePoint> &pts, std::size_t n) {
    CsvWriter w;
    manifest_header(w, cfg);
    w.comment("trajectories", std::to_string(n));
    w.columns({"t", "trace_distance", "mc_error"});
    for (const auto &p : pts) w.row({p.t, p.trace_distance, p.mc_error});
    return w.str();
}

inline MatrixStepper make_matrix_stepper(const SimConfig &cfg) {
    const auto &sys = cfg.matrix_system();
    return MatrixStepper(sys.hamiltonian, sys.observable, cfg.kappa, cfg.hbar, cfg.dt);
}

inline GridStepper make_grid_stepper(const SimConfig &cfg) {
    const auto &sys = cfg.grid_system();
    return GridStepper(Grid(sys.points, sys.q_min, sys.q_max), sys.mass, cfg.kappa, cfg.hbar, cfg.dt);
}

inline GridWavefunction grid_initial_state(const SimConfig &cfg) {
    const auto &sys = cfg.grid_system();
    return gaussian_packet(Grid(sys.points, sys.q_min, sys.q_max), sys.initial.mean_q, sys.initial.mean_p,
                           sys.initial.var_qq, sys.initial.cov_qp, cfg.hbar);
}

inline RunOptions run_options(const SimConfig &cfg) {
    RunOptions opt;
    opt.save_stride = cfg.save_stride;
    opt.step_mode = cfg.step_mode;
    opt.record_convention = cfg.record_convention;
    return opt;
}

/// Trajectory i in linear-replay mode: the nonlinear run on stream i emits
/// the record that the linear run then consumes.
template <class Stepper>
std::pair<TrajectoryResult<typename Stepper::State>, double> replay_trajectory(const SimConfig &cfg,
                                                                               const Stepper &stepper,
                                                                               const typename Stepper::State &psi0,
                                                                               std::size_t i) {
    NoiseStream stream{cfg.seed, i, 0};
    RunOptions opt = run_options(cfg);
    auto source = run_selective(stepper, psi0, cfg.steps, stream, opt);
    auto linear = run_selective(stepper, psi0, source.record, opt);
    double infidelity = 1.0 - fidelity(source.final_state(), linear.final_state());
    return {std::move(linear), infidelity};
}

/// Runs all trajectories in blocks, writing one CSV per trajectory and
/// folding matrix states into the ensemble in index order.
template <class Stepper>
std::optional<EnsembleAverage> run_trajectories(const SimConfig &cfg, const Stepper &stepper,
                                                const typename Stepper::State &psi0, const ExperimentOptions &eo,
                                                OutputSink &sink, RunManifest &manifest) {
    using State = typename Stepper::State;
    constexpr bool kMatrix = std::is_same_v<State, StateVector>;
    const bool replay = cfg.mode == Mode::linear_replay;
    const std::size_t n = cfg.trajectories;
    std::optional<EnsembleAccumulator> acc;
    std::vector<double> infidelities(n, 0.0);
    std::vector<double> final_log_weights(n, 0.0);
    for (std::size_t base = 0; base < n; base += kTrajectoryBlock) {
        const std::size_t count = std::min(kTrajectoryBlock, n - base);
        std::vector<TrajectoryResult<State>> block(count);
        parallel_for(count, eo.jobs, [&](std::size_t j) {
            const std::size_t i = base + j;
            if (replay) {
                auto [traj, infid] = replay_trajectory(cfg, stepper, psi0, i);
                block[j] = std::move(traj);
                infidelities[i] = infid;
                final_log_weights[i] = block[j].final_log_weight();
            } else {
                NoiseStream stream{cfg.seed, i, 0};
                block[j] = run_selective(stepper, psi0, cfg.steps, stream, run_options(cfg));
            }
        });
        for (std::size_t j = 0; j < count; ++j) {
            const std::size_t i = base + j;
            std::string text = trajectory_csv(cfg, block[j], i);
            if (n == 1 && !eo.trajectory_csv.empty()) {
                sink.write_at(eo.trajectory_csv, eo.trajectory_csv.filename().string(), text);
            } else if (n == 1) {
                sink.write("trajectory.csv", text);
            } else {
                sink.write("trajectories/traj_" + pad6(i) + ".csv", text);
            }
            if (i == 0) {
                for (const auto &w : block[j].warnings) manifest.warnings.push_back(w);
            }
            if constexpr (kMatrix) {
                if (n >= 2) {
                    if (!acc) acc.emplace(block[j].saved_steps, block[j].dt);
                    acc->add(block[j]);
                }
            }
        }
    }
    if (replay) {
        CsvWriter w;
        manifest_header(w, cfg);
        double mean = 0.0;
        for (double x : infidelities) mean += x;
        w.comment("mean_infidelity", format_double(mean / static_cast<double>(n)));
        w.columns({"trajectory", "infidelity", "final_log_weight"});
        for (std::size_t i = 0; i < n; ++i) w.row({i}, {infidelities[i], final_log_weights[i]});
        sink.write("replay.csv", w.str());
    }
    if (acc) {
        EnsembleAverage ens = summarize(*acc);
        sink.write("ensemble_average.csv", ensemble_csv(cfg, ens));
        return ens;
    }
    return std::nullopt;
}

inline MasterEqSolution solve_me(const SimConfig &cfg) {
    const auto &sys = cfg.matrix_system();
    MasterEqConfig me{sys.hamiltonian, sys.observable, cfg.kappa, cfg.hbar, cfg.me_dt};
    const double t_final = static_cast<double>(cfg.steps) * cfg.dt;
    const double stride_ratio = static_cast<double>(cfg.save_stride) * cfg.dt / cfg.me_dt;
    const auto stride = static_cast<std::size_t>(std::llround(stride_ratio));
    if (stride == 0 || std::abs(stride_ratio - static_cast<double>(stride)) > 1e-9 * stride_ratio) {
        throw Error(ErrorKind::configuration, "save_stride*dt must be an integer multiple of me.dt");
    }
    return run_me(DensityMatrix::pure(sys.initial_state), me, t_final, stride);
}

/// Reads ensemble trajectory CSVs (matrix systems, with psi columns) back
/// into an ensemble average. Files are folded in lexicographic name order.
inline EnsembleAverage load_ensemble(const std::filesystem::path &dir) {
    if (!std::filesystem::is_directory(dir)) {
        throw Error(ErrorKind::io, "trajectory directory " + dir.string() + " does not exist");
    }
    std::vector<std::filesystem::path> files;
    for (const auto &entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::optional<EnsembleAccumulator> acc;
    for (const auto &f : files) {
        CsvTable t = parse_csv(read_file(f));
        if (!t.has_column("psi_re_0")) {
            throw Error(ErrorKind::io, f.string() + " has no state columns");
        }
        Index d = 0;
        while (t.has_column("psi_re_" + std::to_string(d))) ++d;
        double dt = 0.0;
        for (const auto &[k, v] : t.comments) {
            if (k == "dt") dt = parse_double(v);
        }
        if (!(dt > 0.0)) throw Error(ErrorKind::io, f.string() + " has no dt header");
        std::vector<std::size_t> steps;
        std::vector<StateVector> states;
        const std::size_t c_step = t.column("step");
        std::vector<std::size_t> c_re, c_im;
        for (Index i = 0; i < d; ++i) {
            c_re.push_back(t.column("psi_re_" + std::to_string(i)));
            c_im.push_back(t.column("psi_im_" + std::to_string(i)));
        }
        for (const auto &row : t.rows) {
            steps.push_back(static_cast<std::size_t>(row[c_step]));
            CVector v(d);
            for (Index i = 0; i < d; ++i) v[i] = Complex(row[c_re[static_cast<std::size_t>(i)]], row[c_im[static_cast<std::size_t>(i)]]);
            states.emplace_back(std::move(v));
        }
        if (!acc) acc.emplace(steps, dt);
        acc->add(states, steps, dt);
    }
    if (!acc) throw Error(ErrorKind::io, "no trajectory CSVs in " + dir.string());
    return summarize(*acc);
}

inline MasterEqSolution load_me(const std::filesystem::path &file) {
    CsvTable t = parse_csv(read_file(file));
    Index d = 0;
    while (t.has_column("rho_re_" + std::to_string(d) + "_0")) ++d;
    if (d < 2) throw Error(ErrorKind::io, file.string() + " has no density-matrix columns");
    MasterEqSolution sol;
    const std::size_t c_step = t.column("step");
    const std::size_t c_t = t.column("t");
    for (const auto &row : t.rows) {
        CMatrix rho(d, d);
        for (Index i = 0; i < d; ++i) {
            for (Index j = 0; j < d; ++j) {
                std::string suffix = std::to_string(i) + "_" + std::to_string(j);
                rho(i, j) = Complex(row[t.column("rho_re_" + suffix)], row[t.column("rho_im_" + suffix)]);
            }
        }
        sol.steps.push_back(static_cast<std::size_t>(row[c_step]));
        sol.times.push_back(row[c_t]);
        sol.states.push_back(std::move(rho));
    }
    return sol;
}

inline void run_rpi(const SimConfig &cfg, const ExperimentOptions &eo, OutputSink &sink) {
    const auto &sys = cfg.matrix_system();
    GaussianInstrument inst(sys.observable, MeasurementStrength(cfg.kappa), cfg.dt);
    RecordLattice lattice = cfg.lattice.points > 0
                                ? RecordLattice::spanning_points(inst, cfg.lattice.span_sigmas, cfg.lattice.points)
                                : RecordLattice::spanning(inst, cfg.lattice.span_sigmas, cfg.lattice.points_per_sigma);
    RecordDistribution dist =
        enumerate_record_distribution(sys.initial_state, inst, sys.hamiltonian, cfg.hbar, cfg.steps, lattice, eo.jobs);
    json out = manifest_header_json(cfg);
    out["lattice"] = {{"a_min", lattice.value(0)},
                      {"spacing", lattice.spacing()},
                      {"points", lattice.size()},
                      {"span_sigmas", lattice.span_sigmas(inst)}};
    out["slice_sigma"] = inst.slice_sigma();
    out["n_steps"] = cfg.steps;
    out["completeness_defect"] = {{"analytic", completeness_defect(inst)},
                                  {"lattice", completeness_defect(inst, lattice)}};
    out["total_probability"] = dist.total();
    out["probabilities"] = dist.probabilities();
    if (dist.size() <= kMaxListedRecords) {
        json records = json::array();
        for (std::size_t i = 0; i < dist.size(); ++i) records.push_back(dist.record(i));
        out["records"] = std::move(records);
    } else {
        out["records_omitted"] = "record values follow from the lattice: row-major, slice 0 most significant";
    }
    if (cfg.steps > 0) out["first_slice_marginal"] = dist.marginal(0);
    sink.write("rpi_enumeration.json", out.dump(1) + "\n");
}

inline void run_free(const SimConfig &cfg, const ExperimentOptions &eo, OutputSink &sink, RunManifest &manifest) {
    const auto &sys = cfg.grid_system();
    FreeParticleRun run;
    run.params = {sys.mass, cfg.kappa, cfg.hbar};
    run.grid = Grid(sys.points, sys.q_min, sys.q_max);
    run.initial = sys.initial;
    run.dt = cfg.dt;
    run.n_steps = cfg.steps;
    run.save_stride = cfg.save_stride;
    auto reports = grid_vs_oracle(run, cfg.seed, cfg.streams, eo.jobs);
    CsvWriter w;
    manifest_header(w, cfg);
    if (cfg.kappa > 0.0) {
        auto fixed = stationary_covariance(run.params).covariance;
        w.comment("stationary_var_q", format_double(fixed.qq));
        w.comment("stationary_cov_qp", format_double(fixed.qp));
        w.comment("stationary_var_p", format_double(fixed.pp));
        w.comment("localization_rate", format_double(localization_rate(run.params)));
    }
    w.columns({"stream", "step", "t", "grid_mean_q", "grid_mean_p", "grid_var_q", "grid_var_p", "oracle_mean_q",
               "oracle_mean_p", "oracle_var_q", "oracle_cov_qp", "oracle_var_p", "oracle_purity_defect", "dev_mean_q",
               "dev_mean_p", "rel_var_q", "rel_var_p"});
    for (const auto &rep : reports) {
        for (const auto &warning : rep.warnings) manifest.warnings.push_back("stream " + std::to_string(rep.stream_id) + ": " + warning);
        for (const auto &r : rep.rows) {
            w.row({rep.stream_id, r.step},
                  {r.t, r.grid.mean_q, r.grid.mean_p, r.grid.var_q, r.grid.var_p, r.oracle.mean_q, r.oracle.mean_p,
                   r.oracle.var_qq, r.oracle.cov_qp, r.oracle.var_pp, r.oracle.purity_defect(cfg.hbar), r.dev_mean_q,
                   r.dev_mean_p, r.rel_var_q, r.rel_var_p});
        }
    }
    sink.write("free_particle.csv", w.str());
}

inline void dispatch(const SimConfig &cfg, const ExperimentOptions &eo, OutputSink &sink, RunManifest &manifest) {
    switch (cfg.mode) {
        case Mode::nonlinear:
        case Mode::linear_replay:
            if (cfg.is_grid()) {
                run_trajectories(cfg, make_grid_stepper(cfg), grid_initial_state(cfg), eo, sink, manifest);
            } else {
                run_trajectories(cfg, make_matrix_stepper(cfg), cfg.matrix_system().initial_state, eo, sink, manifest);
            }
            return;
        case Mode::me:
            sink.write("me.csv", me_csv(cfg, solve_me(cfg)));
            return;
        case Mode::rpi_enumerate:
            run_rpi(cfg, eo, sink);
            return;
        case Mode::free_particle:
            run_free(cfg, eo, sink, manifest);
            return;
        case Mode::compare: {
            EnsembleAverage ens;
            MasterEqSolution me;
            if (!cfg.trajectories_dir.empty()) {
                ens = load_ensemble(cfg.trajectories_dir);
                me = load_me(cfg.me_csv);
            } else {
                auto maybe =
                    run_trajectories(cfg, make_matrix_stepper(cfg), cfg.matrix_system().initial_state, eo, sink, manifest);
                ens = std::move(*maybe);
                me = solve_me(cfg);
                sink.write("me.csv", me_csv(cfg, me));
            }
            sink.write("compare.csv", compare_csv(cfg, compare_ensemble(ens, me), ens.n_trajectories));
            return;
        }
    }
}

}  // namespace detail

/// Runs the experiment and writes manifest.json next to the outputs. On a
/// module error the manifest records it and the error is rethrown.
inline RunManifest run_experiment(const SimConfig &cfg, const ExperimentOptions &options = {}) {
    ExperimentOptions eo = options;
    if (eo.jobs == 0) eo.jobs = 1;
    std::filesystem::path dir = eo.out_dir.empty() ? std::filesystem::path(cfg.output) : eo.out_dir;
    RunManifest manifest;
    manifest.config = cfg.echo;
    manifest.seed = cfg.seed;
    manifest.mode = to_string(cfg.mode);
    manifest.started = detail::utc_now();
    detail::OutputSink sink(dir, manifest);
    auto finish = [&] {
        manifest.finished = detail::utc_now();
        write_file(dir / "manifest.json", manifest.to_json().dump(1) + "\n");
    };
    try {
        detail::dispatch(cfg, eo, sink, manifest);
    } catch (const Error &e) {
        manifest.status = "error";
        manifest.error_kind = to_string(e.kind());
        manifest.error_message = e.what();
        manifest.exit_code = e.exit_code();
        finish();
        throw;
    }
    finish();
    return manifest;
}

}  // namespace contmeas
