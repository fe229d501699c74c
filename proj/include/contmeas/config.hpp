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

// Experiment configuration (JSON).
//
// Parsing never stops at the first problem: every violation is collected
// with its field path and reported together in one ConfigError.
//
// Operators are either builtin names ("sigma_x", "sigma_y", "sigma_z",
// "identity", "zero"), a path to a JSON file, or an inline row-major nested
// array of [re, im] pairs.

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "contmeas/gaussian_oracle.hpp"
#include "contmeas/grid.hpp"
#include "contmeas/hilbert.hpp"
#include "contmeas/io.hpp"
#include "contmeas/unraveling.hpp"

namespace contmeas {

using json = nlohmann::json;

enum class Mode { nonlinear, linear_replay, rpi_enumerate, me, free_particle, compare };

inline std::string to_string(Mode m) {
    switch (m) {
        case Mode::nonlinear: return "nonlinear";
        case Mode::linear_replay: return "linear-replay";
        case Mode::rpi_enumerate: return "rpi-enumerate";
        case Mode::me: return "me";
        case Mode::free_particle: return "free-particle";
        case Mode::compare: return "compare";
    }
    return "unknown";
}

inline std::optional<Mode> mode_from_string(const std::string &s) {
    for (Mode m : {Mode::nonlinear, Mode::linear_replay, Mode::rpi_enumerate, Mode::me, Mode::free_particle,
                   Mode::compare}) {
        if (to_string(m) == s) return m;
    }
    return std::nullopt;
}

struct ConfigIssue {
    std::string path;
    std::string message;
};

class ConfigError : public Error {
public:
    explicit ConfigError(std::vector<ConfigIssue> issues)
        : Error(ErrorKind::configuration, describe(issues)), issues_(std::move(issues)) {}
    ConfigError(std::string path, std::string message)
        : ConfigError(std::vector<ConfigIssue>{{std::move(path), std::move(message)}}) {}

    const std::vector<ConfigIssue> &issues() const noexcept { return issues_; }

private:
    static std::string describe(const std::vector<ConfigIssue> &issues) {
        std::string s = std::to_string(issues.size()) + " problem(s) in configuration";
        for (const auto &i : issues) s += "\n  " + i.path + ": " + i.message;
        return s;
    }

    std::vector<ConfigIssue> issues_;
};

struct MatrixSystemSpec {
    HermitianOperator hamiltonian;
    HermitianOperator observable;
    StateVector initial_state;
};

struct GridSystemSpec {
    Index points = 1024;
    double q_min = -32.0;
    double q_max = 32.0;
    double mass = 1.0;
    GaussianState initial;
};

struct LatticeSpec {
    double span_sigmas = kLatticeMinSigmasDefault;
    std::size_t points = 0;  // 0: derived from points_per_sigma
    double points_per_sigma = 10.0;

    static constexpr double kLatticeMinSigmasDefault = 6.0;
};

struct SimConfig {
    Mode mode = Mode::nonlinear;
    std::variant<MatrixSystemSpec, GridSystemSpec> system;
    double kappa = 1.0;
    double hbar = 1.0;
    double dt = 1e-3;
    std::size_t steps = 0;
    std::size_t trajectories = 1;
    std::uint64_t seed = 0;
    std::size_t save_stride = 1;
    std::string output = "out";
    StepMode step_mode = StepMode::renorm;
    RecordConvention record_convention = RecordConvention::standard;
    LatticeSpec lattice;
    double me_dt = 0.0;  // 0: same as dt
    std::size_t streams = 1;
    std::string trajectories_dir;
    std::string me_csv;
    json echo;  // effective configuration with defaults filled and operators inlined

    bool is_grid() const { return std::holds_alternative<GridSystemSpec>(system); }
    const MatrixSystemSpec &matrix_system() const { return std::get<MatrixSystemSpec>(system); }
    const GridSystemSpec &grid_system() const { return std::get<GridSystemSpec>(system); }
};

namespace detail {

class IssueList {
public:
    void add(std::string path, std::string message) { issues_.push_back({std::move(path), std::move(message)}); }
    bool empty() const { return issues_.empty(); }
    std::size_t size() const { return issues_.size(); }
    std::vector<ConfigIssue> take() { return std::move(issues_); }

private:
    std::vector<ConfigIssue> issues_;
};

inline std::optional<double> get_number(const json &obj, const std::string &key, const std::string &path,
                                        IssueList &issues, std::optional<double> fallback = std::nullopt) {
    if (!obj.contains(key)) {
        if (!fallback) issues.add(path, "missing required field");
        return fallback;
    }
    const json &v = obj.at(key);
    if (!v.is_number()) {
        issues.add(path, "type mismatch: expected number");
        return std::nullopt;
    }
    double d = v.get<double>();
    if (!std::isfinite(d)) {
        issues.add(path, "must be finite");
        return std::nullopt;
    }
    return d;
}

inline std::optional<std::uint64_t> get_count(const json &obj, const std::string &key, const std::string &path,
                                              IssueList &issues, std::optional<std::uint64_t> fallback = std::nullopt) {
    if (!obj.contains(key)) {
        if (!fallback) issues.add(path, "missing required field");
        return fallback;
    }
    const json &v = obj.at(key);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer()) {
        if (v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
        issues.add(path, "constraint violated: must be non-negative");
        return std::nullopt;
    }
    issues.add(path, "type mismatch: expected non-negative integer");
    return std::nullopt;
}

inline std::optional<std::string> get_string(const json &obj, const std::string &key, const std::string &path,
                                             IssueList &issues, std::optional<std::string> fallback = std::nullopt) {
    if (!obj.contains(key)) {
        if (!fallback) issues.add(path, "missing required field");
        return fallback;
    }
    const json &v = obj.at(key);
    if (!v.is_string()) {
        issues.add(path, "type mismatch: expected string");
        return std::nullopt;
    }
    return v.get<std::string>();
}

inline void require_positive(std::optional<double> v, const std::string &path, IssueList &issues) {
    if (v && !(*v > 0.0)) issues.add(path, "constraint violated: must be positive");
}

inline std::optional<Complex> parse_complex(const json &v) {
    if (v.is_number()) return Complex(v.get<double>(), 0.0);
    if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number()) {
        return Complex(v[0].get<double>(), v[1].get<double>());
    }
    return std::nullopt;
}

inline json complex_to_json(Complex z) { return json::array({z.real(), z.imag()}); }

inline json matrix_to_json(const CMatrix &m) {
    json rows = json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Index j = 0; j < m.cols(); ++j) row.push_back(complex_to_json(m(i, j)));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline json vector_to_json(const CVector &v) {
    json out = json::array();
    for (Index i = 0; i < v.size(); ++i) out.push_back(complex_to_json(v[i]));
    return out;
}

inline std::optional<CMatrix> parse_matrix(const json &v, const std::string &path, IssueList &issues) {
    if (!v.is_array() || v.empty()) {
        issues.add(path, "type mismatch: expected nested array of [re, im] pairs");
        return std::nullopt;
    }
    const auto n = static_cast<Index>(v.size());
    CMatrix m(n, n);
    for (Index i = 0; i < n; ++i) {
        const json &row = v[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<Index>(row.size()) != n) {
            issues.add(path + "[" + std::to_string(i) + "]", "row length does not match the row count");
            return std::nullopt;
        }
        for (Index j = 0; j < n; ++j) {
            auto z = parse_complex(row[static_cast<std::size_t>(j)]);
            if (!z) {
                issues.add(path + "[" + std::to_string(i) + "][" + std::to_string(j) + "]",
                           "type mismatch: expected [re, im]");
                return std::nullopt;
            }
            m(i, j) = *z;
        }
    }
    return m;
}

inline std::optional<CMatrix> builtin_operator(const std::string &name, Index dim) {
    if (name == "identity") return CMatrix::Identity(dim, dim);
    if (name == "zero") return CMatrix::Zero(dim, dim);
    if (dim != 2) return std::nullopt;
    if (name == "sigma_x" || name == "pauli_x") return HermitianOperator::pauli_x().matrix();
    if (name == "sigma_y" || name == "pauli_y") return HermitianOperator::pauli_y().matrix();
    if (name == "sigma_z" || name == "pauli_z") return HermitianOperator::pauli_z().matrix();
    return std::nullopt;
}

inline std::optional<HermitianOperator> parse_operator(const json &v, Index dim, const std::string &path,
                                                       const std::filesystem::path &base_dir, IssueList &issues) {
    std::optional<CMatrix> m;
    if (v.is_string()) {
        const auto name = v.get<std::string>();
        m = builtin_operator(name, dim);
        if (!m) {
            std::filesystem::path file = name;
            if (file.is_relative()) file = base_dir / file;
            json contents;
            try {
                contents = json::parse(read_file(file));
            } catch (const Error &e) {
                issues.add(path, std::string("not a builtin operator and ") + e.what());
                return std::nullopt;
            } catch (const json::exception &e) {
                issues.add(path, "malformed operator file " + file.string() + ": " + e.what());
                return std::nullopt;
            }
            const json &body = contents.is_object() && contents.contains("matrix") ? contents.at("matrix") : contents;
            m = parse_matrix(body, path, issues);
        }
    } else {
        m = parse_matrix(v, path, issues);
    }
    if (!m) return std::nullopt;
    if (m->rows() != dim) {
        issues.add(path, "dimension " + std::to_string(m->rows()) + " does not match system.dim " +
                             std::to_string(dim));
        return std::nullopt;
    }
    try {
        return HermitianOperator(*m);
    } catch (const Error &e) {
        issues.add(path, e.what());
        return std::nullopt;
    }
}

}  // namespace detail

/// Validates a configuration document. Relative operator file paths resolve
/// against `base_dir`.
inline SimConfig parse_config_json(const json &doc, const std::filesystem::path &base_dir = ".") {
    using namespace detail;
    IssueList issues;
    SimConfig cfg;
    if (!doc.is_object()) {
        issues.add("$", "configuration must be a JSON object");
        throw ConfigError(issues.take());
    }
    json echo = json::object();

    if (auto m = get_string(doc, "mode", "mode", issues, std::string("nonlinear"))) {
        if (auto parsed = mode_from_string(*m)) {
            cfg.mode = *parsed;
        } else {
            issues.add("mode", "constraint violated: must be one of nonlinear, linear-replay, rpi-enumerate, me, "
                               "free-particle, compare");
        }
    }
    echo["mode"] = to_string(cfg.mode);

    auto kappa = get_number(doc, "kappa", "kappa", issues);
    require_positive(kappa, "kappa", issues);
    auto hbar = get_number(doc, "hbar", "hbar", issues, 1.0);
    require_positive(hbar, "hbar", issues);
    auto dt = get_number(doc, "dt", "dt", issues);
    require_positive(dt, "dt", issues);
    auto steps = get_count(doc, "steps", "steps", issues);
    auto trajectories = get_count(doc, "trajectories", "trajectories", issues, 1);
    if (trajectories && *trajectories < 1) issues.add("trajectories", "constraint violated: must be >= 1");
    auto seed = get_count(doc, "seed", "seed", issues, 0);
    auto stride = get_count(doc, "save_stride", "save_stride", issues, 1);
    if (stride && *stride < 1) issues.add("save_stride", "constraint violated: must be >= 1");
    auto output = get_string(doc, "output", "output", issues, std::string("out"));
    auto streams = get_count(doc, "streams", "streams", issues, 1);
    if (streams && *streams < 1) issues.add("streams", "constraint violated: must be >= 1");

    if (auto sm = get_string(doc, "step_mode", "step_mode", issues, std::string("renorm"))) {
        if (*sm == "renorm") {
            cfg.step_mode = StepMode::renorm;
        } else if (*sm == "raw") {
            cfg.step_mode = StepMode::raw;
        } else {
            issues.add("step_mode", "constraint violated: must be renorm or raw");
        }
        echo["step_mode"] = *sm;
    }
    if (auto rc = get_string(doc, "record_convention", "record_convention", issues, std::string("standard"))) {
        if (*rc == "standard") {
            cfg.record_convention = RecordConvention::standard;
        } else if (*rc == "literal") {
            cfg.record_convention = RecordConvention::literal;
        } else {
            issues.add("record_convention", "constraint violated: must be standard or literal");
        }
        echo["record_convention"] = *rc;
    }

    if (kappa) cfg.kappa = *kappa;
    if (hbar) cfg.hbar = *hbar;
    if (dt) cfg.dt = *dt;
    if (steps) cfg.steps = *steps;
    if (trajectories) cfg.trajectories = *trajectories;
    if (seed) cfg.seed = *seed;
    if (stride) cfg.save_stride = *stride;
    if (output) cfg.output = *output;
    if (streams) cfg.streams = *streams;
    echo["kappa"] = cfg.kappa;
    echo["hbar"] = cfg.hbar;
    echo["dt"] = cfg.dt;
    echo["steps"] = cfg.steps;
    echo["trajectories"] = cfg.trajectories;
    echo["seed"] = cfg.seed;
    echo["save_stride"] = cfg.save_stride;
    echo["streams"] = cfg.streams;

    // system
    if (!doc.contains("system") || !doc.at("system").is_object()) {
        issues.add("system", doc.contains("system") ? "type mismatch: expected object" : "missing required field");
    } else {
        const json &sys = doc.at("system");
        if (sys.contains("grid")) {
            const json &g = sys.at("grid");
            GridSystemSpec spec;
            if (!g.is_object()) {
                issues.add("system.grid", "type mismatch: expected object");
            } else {
                auto points = get_count(g, "points", "system.grid.points", issues, 1024);
                if (points && (*points < 2 || (*points & (*points - 1)) != 0)) {
                    issues.add("system.grid.points", "constraint violated: must be a power of two >= 2");
                }
                auto qmin = get_number(g, "q_min", "system.grid.q_min", issues, -32.0);
                auto qmax = get_number(g, "q_max", "system.grid.q_max", issues, 32.0);
                if (qmin && qmax && !(*qmax > *qmin)) {
                    issues.add("system.grid.q_max", "constraint violated: must exceed q_min");
                }
                auto mass = get_number(g, "mass", "system.grid.mass", issues, 1.0);
                require_positive(mass, "system.grid.mass", issues);
                if (points) spec.points = static_cast<Index>(*points);
                if (qmin) spec.q_min = *qmin;
                if (qmax) spec.q_max = *qmax;
                if (mass) spec.mass = *mass;
                json init = g.contains("initial") ? g.at("initial") : json::object();
                if (!init.is_object()) {
                    issues.add("system.grid.initial", "type mismatch: expected object");
                    init = json::object();
                }
                auto mq = get_number(init, "mean_q", "system.grid.initial.mean_q", issues, 0.0);
                auto mp = get_number(init, "mean_p", "system.grid.initial.mean_p", issues, 0.0);
                auto vq = get_number(init, "var_q", "system.grid.initial.var_q", issues, 1.0);
                require_positive(vq, "system.grid.initial.var_q", issues);
                auto cqp = get_number(init, "cov_qp", "system.grid.initial.cov_qp", issues, 0.0);
                if (mq && mp && vq && cqp && *vq > 0.0) {
                    spec.initial = GaussianState::pure(*mq, *mp, *vq, *cqp, cfg.hbar);
                }
            }
            echo["system"] = {{"grid",
                               {{"points", spec.points},
                                {"q_min", spec.q_min},
                                {"q_max", spec.q_max},
                                {"mass", spec.mass},
                                {"initial",
                                 {{"mean_q", spec.initial.mean_q},
                                  {"mean_p", spec.initial.mean_p},
                                  {"var_q", spec.initial.var_qq},
                                  {"cov_qp", spec.initial.cov_qp}}}}}};
            cfg.system = spec;
        } else {
            auto dim = get_count(sys, "dim", "system.dim", issues);
            if (dim && *dim < 2) {
                issues.add("system.dim", "constraint violated: must be >= 2");
                dim.reset();
            }
            MatrixSystemSpec spec;
            bool ok = dim.has_value();
            if (dim) {
                const auto d = static_cast<Index>(*dim);
                std::optional<HermitianOperator> h, a;
                if (!sys.contains("hamiltonian")) {
                    issues.add("system.hamiltonian", "missing required field");
                } else {
                    h = parse_operator(sys.at("hamiltonian"), d, "system.hamiltonian", base_dir, issues);
                }
                if (!sys.contains("observable")) {
                    issues.add("system.observable", "missing required field");
                } else {
                    a = parse_operator(sys.at("observable"), d, "system.observable", base_dir, issues);
                }
                CVector psi = CVector::Constant(d, 1.0 / std::sqrt(static_cast<double>(d)));
                if (sys.contains("initial_state")) {
                    const json &s = sys.at("initial_state");
                    if (!s.is_array() || static_cast<Index>(s.size()) != d) {
                        issues.add("system.initial_state", "expected array of " + std::to_string(d) + " [re, im] pairs");
                        ok = false;
                    } else {
                        for (Index i = 0; i < d; ++i) {
                            auto z = parse_complex(s[static_cast<std::size_t>(i)]);
                            if (!z || !std::isfinite(z->real()) || !std::isfinite(z->imag())) {
                                issues.add("system.initial_state[" + std::to_string(i) + "]",
                                           "type mismatch: expected finite [re, im]");
                                ok = false;
                            } else {
                                psi[i] = *z;
                            }
                        }
                        if (ok && !(psi.norm() > 0.0)) {
                            issues.add("system.initial_state", "constraint violated: must have non-zero norm");
                            ok = false;
                        }
                    }
                }
                if (ok && h && a) {
                    spec.hamiltonian = *h;
                    spec.observable = *a;
                    spec.initial_state = StateVector(psi / psi.norm());
                    echo["system"] = {{"dim", *dim},
                                      {"hamiltonian", matrix_to_json(h->matrix())},
                                      {"observable", matrix_to_json(a->matrix())},
                                      {"initial_state", vector_to_json(spec.initial_state.amplitudes())}};
                }
            }
            cfg.system = spec;
        }
    }

    if (cfg.mode == Mode::free_particle && doc.contains("system") && doc.at("system").is_object() &&
        !doc.at("system").contains("grid")) {
        issues.add("system", "free-particle mode requires a grid system");
    }
    if ((cfg.mode == Mode::rpi_enumerate || cfg.mode == Mode::me || cfg.mode == Mode::compare) &&
        doc.contains("system") && doc.at("system").is_object() && doc.at("system").contains("grid")) {
        issues.add("system", "mode " + to_string(cfg.mode) + " requires a matrix system");
    }

    if (doc.contains("lattice")) {
        const json &l = doc.at("lattice");
        if (!l.is_object()) {
            issues.add("lattice", "type mismatch: expected object");
        } else {
            auto span = get_number(l, "span_sigmas", "lattice.span_sigmas", issues, 6.0);
            require_positive(span, "lattice.span_sigmas", issues);
            auto pts = get_count(l, "points", "lattice.points", issues, 0);
            if (pts && *pts == 1) issues.add("lattice.points", "constraint violated: must be >= 2");
            auto pps = get_number(l, "points_per_sigma", "lattice.points_per_sigma", issues, 10.0);
            require_positive(pps, "lattice.points_per_sigma", issues);
            if (span) cfg.lattice.span_sigmas = *span;
            if (pts) cfg.lattice.points = *pts;
            if (pps) cfg.lattice.points_per_sigma = *pps;
        }
    }
    if (cfg.mode == Mode::rpi_enumerate) {
        echo["lattice"] = {{"span_sigmas", cfg.lattice.span_sigmas},
                           {"points", cfg.lattice.points},
                           {"points_per_sigma", cfg.lattice.points_per_sigma}};
    }

    if (doc.contains("me")) {
        const json &me = doc.at("me");
        if (!me.is_object()) {
            issues.add("me", "type mismatch: expected object");
        } else if (auto mdt = get_number(me, "dt", "me.dt", issues, cfg.dt)) {
            require_positive(mdt, "me.dt", issues);
            cfg.me_dt = *mdt;
        }
    }
    if (cfg.me_dt == 0.0) cfg.me_dt = cfg.dt;
    if (cfg.mode == Mode::me || cfg.mode == Mode::compare) echo["me"] = {{"dt", cfg.me_dt}};

    if (doc.contains("compare")) {
        const json &c = doc.at("compare");
        if (!c.is_object()) {
            issues.add("compare", "type mismatch: expected object");
        } else {
            if (auto d = get_string(c, "trajectories_dir", "compare.trajectories_dir", issues, std::string())) {
                cfg.trajectories_dir = *d;
            }
            if (auto m = get_string(c, "me_csv", "compare.me_csv", issues, std::string())) cfg.me_csv = *m;
            if (cfg.trajectories_dir.empty() != cfg.me_csv.empty()) {
                issues.add("compare", "trajectories_dir and me_csv must be given together");
            }
        }
    }
    if (cfg.mode == Mode::compare && !cfg.trajectories_dir.empty()) {
        echo["compare"] = {{"trajectories_dir", cfg.trajectories_dir}, {"me_csv", cfg.me_csv}};
    }
    if (cfg.mode == Mode::compare && cfg.trajectories_dir.empty() && cfg.trajectories < 2) {
        issues.add("trajectories", "constraint violated: compare mode needs >= 2 trajectories");
    }
    if (cfg.step_mode == StepMode::raw && doc.contains("system") && doc.at("system").is_object() &&
        doc.at("system").contains("grid")) {
        issues.add("step_mode", "raw stepping is only available for matrix systems");
    }

    if (!issues.empty()) throw ConfigError(issues.take());
    cfg.echo = std::move(echo);
    return cfg;
}

inline SimConfig parse_config(const std::filesystem::path &file) {
    json doc;
    try {
        doc = json::parse(read_file(file));
    } catch (const json::exception &e) {
        throw ConfigError("$", std::string("malformed JSON: ") + e.what());
    } catch (const Error &e) {
        throw ConfigError("$", e.what());
    }
    return parse_config_json(doc, file.has_parent_path() ? file.parent_path() : std::filesystem::path("."));
}

}  // namespace contmeas
