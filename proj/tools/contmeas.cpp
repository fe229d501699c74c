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

// Command-line front end. Each subcommand starts from the --config file (if
// any), overlays its flags and sets the mode, then runs the experiment.
//
// Exit codes: 0 success, 2 configuration error, 3 numeric failure.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "contmeas/contmeas.hpp"

namespace {

using contmeas::json;

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    unsigned jobs = 1;
};

struct Overrides {
    std::optional<std::uint64_t> dim;
    std::optional<std::uint64_t> grid_points;
    std::optional<double> box;
    std::optional<double> mass;
    std::string hamiltonian;
    std::string observable;
    std::optional<double> kappa;
    std::optional<double> hbar;
    std::optional<double> dt;
    std::optional<std::uint64_t> steps;
    std::optional<std::uint64_t> trajectories;
    std::optional<std::uint64_t> save_stride;
    std::string run_mode;
    std::string step_mode;
    std::string record_convention;
    std::optional<double> me_dt;
    std::optional<double> lattice_span;
    std::optional<std::uint64_t> lattice_points;
    std::optional<double> lattice_points_per_sigma;
    std::optional<std::uint64_t> seeds;
    std::string trajectories_dir;
    std::string me_csv;
    std::string out;
};

/// Operator arguments that name an existing file are made absolute, since
/// the config document resolves relative paths against its own directory.
std::string operator_argument(const std::string &value) {
    std::error_code ec;
    if (std::filesystem::exists(value, ec)) return std::filesystem::absolute(value).string();
    return value;
}

json &system_object(json &doc) {
    if (!doc.contains("system") || !doc["system"].is_object()) doc["system"] = json::object();
    return doc["system"];
}

json &grid_object(json &doc) {
    json &sys = system_object(doc);
    if (!sys.contains("grid") || !sys["grid"].is_object()) sys["grid"] = json::object();
    return sys["grid"];
}

void apply(json &doc, const Overrides &o) {
    if (o.dim) system_object(doc)["dim"] = *o.dim;
    if (!o.hamiltonian.empty()) system_object(doc)["hamiltonian"] = operator_argument(o.hamiltonian);
    if (!o.observable.empty()) system_object(doc)["observable"] = operator_argument(o.observable);
    if (o.grid_points) grid_object(doc)["points"] = *o.grid_points;
    if (o.box) {
        grid_object(doc)["q_min"] = -0.5 * *o.box;
        grid_object(doc)["q_max"] = 0.5 * *o.box;
    }
    if (o.mass) grid_object(doc)["mass"] = *o.mass;
    if (o.kappa) doc["kappa"] = *o.kappa;
    if (o.hbar) doc["hbar"] = *o.hbar;
    if (o.dt) doc["dt"] = *o.dt;
    if (o.steps) doc["steps"] = *o.steps;
    if (o.trajectories) doc["trajectories"] = *o.trajectories;
    if (o.save_stride) doc["save_stride"] = *o.save_stride;
    if (!o.step_mode.empty()) doc["step_mode"] = o.step_mode;
    if (!o.record_convention.empty()) doc["record_convention"] = o.record_convention;
    if (o.me_dt) doc["me"]["dt"] = *o.me_dt;
    if (o.lattice_span) doc["lattice"]["span_sigmas"] = *o.lattice_span;
    if (o.lattice_points) doc["lattice"]["points"] = *o.lattice_points;
    if (o.lattice_points_per_sigma) doc["lattice"]["points_per_sigma"] = *o.lattice_points_per_sigma;
    if (o.seeds) doc["streams"] = *o.seeds;
    if (!o.trajectories_dir.empty()) {
        doc["compare"]["trajectories_dir"] = std::filesystem::absolute(o.trajectories_dir).string();
    }
    if (!o.me_csv.empty()) doc["compare"]["me_csv"] = std::filesystem::absolute(o.me_csv).string();
}

void add_system_flags(CLI::App *cmd, Overrides &o) {
    cmd->add_option("--dim", o.dim, "Hilbert-space dimension");
    cmd->add_option("--hamiltonian", o.hamiltonian, "Hamiltonian: builtin name or JSON file");
    cmd->add_option("--observable", o.observable, "Monitored observable: builtin name or JSON file");
    cmd->add_option("--kappa", o.kappa, "Measurement strength");
    cmd->add_option("--hbar", o.hbar, "Reduced Planck constant");
    cmd->add_option("--dt", o.dt, "Time step");
    cmd->add_option("--steps", o.steps, "Number of time steps");
    cmd->add_option("--save-stride", o.save_stride, "Save every n-th step");
}

void add_grid_flags(CLI::App *cmd, Overrides &o, const std::string &points_flag) {
    cmd->add_option(points_flag, o.grid_points, "Grid points (power of two); selects a position grid");
    cmd->add_option("--box", o.box, "Grid length, centred on zero");
    cmd->add_option("--mass", o.mass, "Particle mass");
}

void add_unraveling_flags(CLI::App *cmd, Overrides &o) {
    cmd->add_option("--step-mode", o.step_mode, "renorm or raw")->check(CLI::IsMember({"renorm", "raw"}));
    cmd->add_option("--record-convention", o.record_convention, "standard or literal")
        ->check(CLI::IsMember({"standard", "literal"}));
}

int run(const Globals &g, const std::string &mode, const Overrides &o) {
    json doc = json::object();
    std::filesystem::path base = ".";
    if (!g.config.empty()) {
        try {
            doc = json::parse(contmeas::read_file(g.config));
        } catch (const json::exception &e) {
            throw contmeas::ConfigError("$", std::string("malformed JSON: ") + e.what());
        } catch (const contmeas::Error &e) {
            throw contmeas::ConfigError("$", e.what());
        }
        std::filesystem::path p = g.config;
        if (p.has_parent_path()) base = p.parent_path();
    }
    if (!doc.is_object()) throw contmeas::ConfigError("$", "configuration must be a JSON object");
    if (!mode.empty()) doc["mode"] = mode;
    apply(doc, o);
    if (g.seed) doc["seed"] = *g.seed;
    contmeas::SimConfig cfg = contmeas::parse_config_json(doc, base);
    contmeas::ExperimentOptions eo;
    eo.jobs = g.jobs;
    if (!g.out_dir.empty()) eo.out_dir = g.out_dir;
    if (!o.out.empty()) eo.trajectory_csv = o.out;
    contmeas::RunManifest m = contmeas::run_experiment(cfg, eo);
    for (const auto &w : m.warnings) std::cerr << "warning: " << w << "\n";
    for (const auto &f : m.outputs) std::cout << f.name << " " << f.checksum << "\n";
    return 0;
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"Selective continuous measurement simulator"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config, "JSON configuration file");
    app.add_option("--seed", g.seed, "Master seed (u64)");
    app.add_option("--out-dir", g.out_dir, "Output directory");
    app.add_option("--jobs", g.jobs, "Worker threads")->check(CLI::PositiveNumber);

    std::string mode;
    Overrides o;

    auto *traj = app.add_subcommand("run-trajectory", "One selective trajectory (nonlinear or linear replay)");
    add_system_flags(traj, o);
    add_grid_flags(traj, o, "--grid");
    add_unraveling_flags(traj, o);
    traj->add_option("--mode", o.run_mode, "nonlinear or linear-replay")
        ->check(CLI::IsMember({"nonlinear", "linear-replay"}));
    traj->add_option("--out", o.out, "Trajectory CSV path");

    auto *ens = app.add_subcommand("run-ensemble", "Many trajectories and their ensemble average");
    add_system_flags(ens, o);
    add_grid_flags(ens, o, "--grid");
    add_unraveling_flags(ens, o);
    ens->add_option("--trajectories", o.trajectories, "Number of trajectories");
    ens->add_option("--mode", o.run_mode, "nonlinear or linear-replay")
        ->check(CLI::IsMember({"nonlinear", "linear-replay"}));

    auto *me = app.add_subcommand("run-me", "Master-equation solution");
    add_system_flags(me, o);
    me->add_option("--me-dt", o.me_dt, "Master-equation step");

    auto *rpi = app.add_subcommand("rpi-enumerate", "Record distribution over a lattice");
    add_system_flags(rpi, o);
    rpi->add_option("--lattice-span", o.lattice_span, "Lattice margin beyond the spectrum, in slice sigmas");
    rpi->add_option("--lattice-points", o.lattice_points, "Lattice points");
    rpi->add_option("--lattice-density", o.lattice_points_per_sigma, "Lattice points per slice sigma");

    auto *fp = app.add_subcommand("free-particle", "Grid unraveling against the Gaussian-moment oracle");
    fp->add_option("--kappa", o.kappa, "Measurement strength");
    fp->add_option("--hbar", o.hbar, "Reduced Planck constant");
    fp->add_option("--dt", o.dt, "Time step");
    fp->add_option("--steps", o.steps, "Number of time steps");
    fp->add_option("--save-stride", o.save_stride, "Save every n-th step");
    fp->add_option("--seeds", o.seeds, "Number of noise streams");
    add_grid_flags(fp, o, "--grid-points");

    auto *cmp = app.add_subcommand("compare-ensemble", "Trace distance between ensemble average and master equation");
    add_system_flags(cmp, o);
    cmp->add_option("--trajectories", o.trajectories, "Number of trajectories (when running both sides)");
    cmp->add_option("--me-dt", o.me_dt, "Master-equation step");
    cmp->add_option("--trajectories-dir", o.trajectories_dir, "Directory of trajectory CSVs");
    cmp->add_option("--me-csv", o.me_csv, "Master-equation CSV");

    app.add_subcommand("run", "Run the mode given in the configuration file");

    for (auto *sub : app.get_subcommands({})) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (traj->parsed()) {
            mode = o.run_mode.empty() ? "nonlinear" : o.run_mode;
            if (!o.trajectories) o.trajectories = 1;
        } else if (ens->parsed()) {
            mode = o.run_mode.empty() ? "nonlinear" : o.run_mode;
        } else if (me->parsed()) {
            mode = "me";
        } else if (rpi->parsed()) {
            mode = "rpi-enumerate";
        } else if (fp->parsed()) {
            mode = "free-particle";
        } else if (cmp->parsed()) {
            mode = "compare";
        }
        return run(g, mode, o);
    } catch (const contmeas::Error &e) {
        std::cerr << "error (" << contmeas::to_string(e.kind()) << "): " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
