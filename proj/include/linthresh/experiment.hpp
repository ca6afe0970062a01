#pragma once

// Experiment configs (JSON, versioned) and the run/certify/oracle/spectral
// pipelines behind the command line tool. Requires nlohmann/json.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "linthresh/csv.hpp"
#include "linthresh/diagnostics.hpp"
#include "linthresh/generators.hpp"
#include "linthresh/oracle.hpp"
#include "linthresh/report.hpp"
#include "linthresh/solver.hpp"

namespace linthresh::experiment {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline constexpr int config_version = 1;

/// Tolerance of the certificate-respected flag: lambda_hat <= lambda + tol.
inline constexpr double certificate_tolerance = 1e-6;

enum ExitCode : int { exit_ok = 0, exit_validation = 1, exit_runtime = 2, exit_certificate = 3 };

/// Config or problem validation failure; the message names the offending field.
class ValidationError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

namespace detail {

/// Read-only view of a JSON value that remembers its path for error messages.
class Node {
public:
    Node(const json& j, std::string path) : j_(&j), path_(std::move(path)) {}

    const std::string& path() const noexcept { return path_; }
    const json& raw() const noexcept { return *j_; }

    [[noreturn]] void fail(const std::string& msg) const {
        throw ValidationError((path_.empty() ? std::string("config") : path_) + ": " + msg);
    }

    void require_object() const {
        if (!j_->is_object()) fail("expected an object");
    }

    /// Rejects keys outside `allowed`.
    void allow(std::initializer_list<const char*> allowed) const {
        require_object();
        for (const auto& [key, value] : j_->items()) {
            bool ok = false;
            for (const char* a : allowed) ok = ok || key == a;
            if (!ok) child_path_fail(key, "unknown field");
        }
    }

    bool has(const std::string& key) const { return j_->is_object() && j_->contains(key); }

    Node at(const std::string& key) const {
        require_object();
        if (!j_->contains(key)) child_path_fail(key, "missing required field");
        return Node((*j_)[key], join(key));
    }

    std::optional<Node> find(const std::string& key) const {
        if (!has(key) || (*j_)[key].is_null()) return std::nullopt;
        return Node((*j_)[key], join(key));
    }

    double number() const {
        if (!j_->is_number()) fail("expected a number");
        return j_->get<double>();
    }

    double positive() const {
        const double v = number();
        if (!(v > 0.0)) fail("must be positive");
        return v;
    }

    std::uint64_t unsigned_int() const {
        if (!j_->is_number_unsigned()) fail("expected a non-negative integer");
        return j_->get<std::uint64_t>();
    }

    std::string str() const {
        if (!j_->is_string()) fail("expected a string");
        return j_->get<std::string>();
    }

    bool boolean() const {
        if (!j_->is_boolean()) fail("expected true or false");
        return j_->get<bool>();
    }

    std::vector<double> numbers() const {
        if (!j_->is_array() || j_->empty()) fail("expected a non-empty array of numbers");
        std::vector<double> v;
        for (std::size_t i = 0; i < j_->size(); ++i) v.push_back(Node((*j_)[i], join_index(i)).number());
        return v;
    }

private:
    std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    std::string join_index(std::size_t i) const { return path_ + "[" + std::to_string(i) + "]"; }
    [[noreturn]] void child_path_fail(const std::string& key, const std::string& msg) const {
        throw ValidationError(join(key) + ": " + msg);
    }

    const json* j_;
    std::string path_;
};

inline Vector to_vector(const std::vector<double>& v) {
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline fs::path resolve(const fs::path& base, const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

} // namespace detail

struct OperatorSpec {
    std::string type; ///< identity | diagonal | diagonal-decay | random-gaussian | duplicate-column | file
    Index n = 0;
    Index rows = 0;
    Index cols = 0;
    double rate = 0.5;
    double scale = 1.0;
    std::vector<double> values;
    std::optional<std::uint64_t> seed;
    std::string path;
    std::shared_ptr<OperatorSpec> base;
    Index column = 0;
    Index copies = 1;
};

struct DataSpec {
    std::string type; ///< values | file | sparse-signal
    std::vector<double> values;
    std::string path;
    Index nonzeros = 1;
    double amplitude = 1.0;
    double noise = 0.0;
    std::optional<std::uint64_t> seed;
};

struct WeightSpec {
    std::optional<double> constant;
    std::vector<double> values;
    std::string path;
    std::optional<double> lower_bound;
};

struct PenaltySpec {
    std::string type; ///< weighted_l1 | joint | l1_ball
    WeightSpec alpha;
    Index block_size = 1;
    QNorm q = QNorm::two;
    double radius = 1.0;
};

/// Step sizes are absolute (`s`) or relative to 1 / ||K||^2 (`s_rel`).
struct StepSpec {
    std::string rule = "constant"; ///< constant | bounded | condition_b
    std::optional<double> s, s_rel;
    std::optional<double> lower, lower_rel, upper, upper_rel;
    std::optional<double> initial, initial_rel;
    std::string schedule = "upper"; ///< bounded: upper | alternate
    double delta = 0.1;
    double growth = 1.5;
    double backoff = 0.5;
};

struct ExperimentConfig {
    int version = config_version;
    std::string name;
    fs::path base_dir = ".";
    OperatorSpec op;
    DataSpec data;
    PenaltySpec penalty;
    StepSpec step;
    StoppingRule stopping;
    std::vector<double> initial; ///< empty: u0 = 0
    bool oracle = false;
    std::vector<std::string> certificates; ///< empty: every applicable one
    std::size_t fbi_order = 0;             ///< 0: check the active support only
    double fbi_threshold = 1e-8;
    std::optional<std::size_t> spectral_k_max;
    double spectral_tol = 1e-12;
    double certificate_tol = 1e-6; ///< optimality residual accepted for u*
    std::optional<std::size_t> burn_in;
    std::size_t reference_max_iters = 1000000;
    double reference_step_tol = 1e-15;
    std::string out_dir;
};

namespace detail {

inline std::optional<std::uint64_t> opt_seed(const Node& n) {
    if (auto s = n.find("seed")) return s->unsigned_int();
    return std::nullopt;
}

inline OperatorSpec parse_operator(const Node& n) {
    OperatorSpec op;
    op.type = n.at("type").str();
    if (op.type == "identity") {
        n.allow({"type", "n"});
        op.n = n.at("n").unsigned_int();
    } else if (op.type == "diagonal") {
        n.allow({"type", "values"});
        op.values = n.at("values").numbers();
    } else if (op.type == "diagonal-decay") {
        n.allow({"type", "n", "rate", "scale"});
        op.n = n.at("n").unsigned_int();
        op.rate = n.at("rate").positive();
        if (auto s = n.find("scale")) op.scale = s->positive();
    } else if (op.type == "random-gaussian") {
        n.allow({"type", "rows", "cols", "seed"});
        op.rows = n.at("rows").unsigned_int();
        op.cols = n.at("cols").unsigned_int();
        op.seed = opt_seed(n);
        if (!op.seed) n.at("seed"); // random sources need a seed
    } else if (op.type == "duplicate-column") {
        n.allow({"type", "base", "column", "copies"});
        op.base = std::make_shared<OperatorSpec>(parse_operator(n.at("base")));
        op.column = n.at("column").unsigned_int();
        if (auto c = n.find("copies")) op.copies = c->unsigned_int();
    } else if (op.type == "file") {
        n.allow({"type", "path"});
        op.path = n.at("path").str();
    } else {
        n.at("type").fail("unknown operator type '" + op.type +
                          "' (identity, diagonal, diagonal-decay, random-gaussian, "
                          "duplicate-column, file)");
    }
    return op;
}

inline DataSpec parse_data(const Node& n) {
    DataSpec d;
    d.type = n.at("type").str();
    if (d.type == "values") {
        n.allow({"type", "values"});
        d.values = n.at("values").numbers();
    } else if (d.type == "file") {
        n.allow({"type", "path"});
        d.path = n.at("path").str();
    } else if (d.type == "sparse-signal") {
        n.allow({"type", "nonzeros", "amplitude", "noise", "seed"});
        d.nonzeros = n.at("nonzeros").unsigned_int();
        if (auto a = n.find("amplitude")) d.amplitude = a->number();
        if (auto s = n.find("noise")) d.noise = s->number();
        d.seed = opt_seed(n);
        if (!d.seed) n.at("seed");
    } else {
        n.at("type").fail("unknown data type '" + d.type + "' (values, file, sparse-signal)");
    }
    return d;
}

inline WeightSpec parse_weights(const Node& n) {
    WeightSpec w;
    if (n.raw().is_number()) {
        w.constant = n.positive();
    } else if (n.raw().is_array()) {
        w.values = n.numbers();
    } else if (n.raw().is_object()) {
        n.allow({"file"});
        w.path = n.at("file").str();
    } else {
        n.fail("expected a number, an array or {\"file\": path}");
    }
    return w;
}

inline PenaltySpec parse_penalty(const Node& n) {
    PenaltySpec p;
    p.type = n.at("type").str();
    if (p.type == "weighted_l1") {
        n.allow({"type", "alpha", "alpha_lower"});
    } else if (p.type == "joint") {
        n.allow({"type", "alpha", "alpha_lower", "block_size", "q"});
        p.block_size = n.at("block_size").unsigned_int();
        if (p.block_size < 1) n.at("block_size").fail("must be at least 1");
        if (auto q = n.find("q")) {
            try {
                p.q = parse_qnorm(q->raw().is_number() ? std::to_string(q->raw().get<int>())
                                                        : q->str());
            } catch (const Error& e) {
                q->fail(e.what());
            }
        }
    } else if (p.type == "l1_ball") {
        n.allow({"type", "alpha", "alpha_lower", "radius"});
        if (auto r = n.find("radius")) p.radius = r->positive();
    } else {
        n.at("type").fail("unknown penalty type '" + p.type + "' (weighted_l1, joint, l1_ball)");
    }
    p.alpha = parse_weights(n.at("alpha"));
    if (auto lo = n.find("alpha_lower")) p.alpha.lower_bound = lo->positive();
    return p;
}

inline StepSpec parse_step(const Node& n) {
    StepSpec s;
    s.rule = n.at("rule").str();
    auto opt = [&](const char* key, std::optional<double>& out) {
        if (auto v = n.find(key)) out = v->positive();
    };
    if (s.rule == "constant") {
        n.allow({"rule", "s", "s_rel"});
        opt("s", s.s);
        opt("s_rel", s.s_rel);
        if (s.s.has_value() == s.s_rel.has_value()) n.fail("give exactly one of s, s_rel");
    } else if (s.rule == "bounded") {
        n.allow({"rule", "lower", "lower_rel", "upper", "upper_rel", "schedule"});
        opt("lower", s.lower);
        opt("lower_rel", s.lower_rel);
        opt("upper", s.upper);
        opt("upper_rel", s.upper_rel);
        if (s.lower.has_value() == s.lower_rel.has_value()) n.fail("give exactly one of lower, lower_rel");
        if (s.upper.has_value() == s.upper_rel.has_value()) n.fail("give exactly one of upper, upper_rel");
        if (auto sch = n.find("schedule")) {
            s.schedule = sch->str();
            if (s.schedule != "upper" && s.schedule != "alternate") sch->fail("expected upper or alternate");
        }
    } else if (s.rule == "condition_b") {
        n.allow({"rule", "lower", "lower_rel", "delta", "growth", "backoff", "initial", "initial_rel"});
        opt("lower", s.lower);
        opt("lower_rel", s.lower_rel);
        opt("initial", s.initial);
        opt("initial_rel", s.initial_rel);
        if (s.lower.has_value() == s.lower_rel.has_value()) n.fail("give exactly one of lower, lower_rel");
        if (auto d = n.find("delta")) s.delta = d->number();
        if (auto g = n.find("growth")) s.growth = g->number();
        if (auto b = n.find("backoff")) s.backoff = b->number();
    } else {
        n.at("rule").fail("unknown step rule '" + s.rule + "' (constant, bounded, condition_b)");
    }
    return s;
}

inline StoppingRule parse_stopping(const Node& n) {
    n.allow({"max_iters", "step_tol", "gap_tol"});
    StoppingRule stop;
    if (auto m = n.find("max_iters")) stop.max_iters = m->unsigned_int();
    if (auto s = n.find("step_tol")) stop.step_tol = s->number();
    if (auto g = n.find("gap_tol")) stop.gap_tol = g->number();
    if (stop.step_tol < 0.0) n.at("step_tol").fail("must be non-negative");
    if (stop.gap_tol < 0.0) n.at("gap_tol").fail("must be non-negative");
    return stop;
}

inline void override_seeds(OperatorSpec& op, std::uint64_t& next) {
    if (op.base) override_seeds(*op.base, next);
    if (op.type == "random-gaussian") op.seed = next++;
}

} // namespace detail

/// Parses a config tree; relative file paths are resolved against base_dir.
inline ExperimentConfig parse_config(const json& j, const fs::path& base_dir = ".") {
    detail::Node root(j, "");
    root.allow({"config_version", "name", "operator", "data", "penalty", "step", "stopping",
                "initial", "oracle", "certificates", "fbi", "spectral", "certificate_tol", "fit",
                "reference", "output"});
    ExperimentConfig c;
    c.base_dir = base_dir;
    const auto version = root.at("config_version").unsigned_int();
    if (version != static_cast<std::uint64_t>(config_version)) {
        root.at("config_version").fail("unsupported version " + std::to_string(version) +
                                       ", expected " + std::to_string(config_version));
    }
    if (auto n = root.find("name")) c.name = n->str();
    c.op = detail::parse_operator(root.at("operator"));
    c.data = detail::parse_data(root.at("data"));
    c.penalty = detail::parse_penalty(root.at("penalty"));
    c.step = detail::parse_step(root.at("step"));
    if (auto s = root.find("stopping")) c.stopping = detail::parse_stopping(*s);
    if (auto u = root.find("initial")) {
        if (u->raw().is_string()) {
            if (u->str() != "zero") u->fail("expected \"zero\" or an array");
        } else {
            c.initial = u->numbers();
        }
    }
    if (auto o = root.find("oracle")) c.oracle = o->boolean();
    if (auto cs = root.find("certificates")) {
        if (cs->raw().is_string()) {
            if (cs->str() != "auto") cs->fail("expected \"auto\" or a list of certificate names");
        } else {
            if (!cs->raw().is_array()) cs->fail("expected \"auto\" or a list of certificate names");
            for (std::size_t i = 0; i < cs->raw().size(); ++i) {
                detail::Node item(cs->raw()[i], cs->path() + "[" + std::to_string(i) + "]");
                const std::string name = item.str();
                if (name != "fbi" && name != "compact" && name != "strict_pattern") {
                    item.fail("unknown certificate '" + name + "' (fbi, compact, strict_pattern)");
                }
                c.certificates.push_back(name);
            }
        }
    }
    if (auto f = root.find("fbi")) {
        f->allow({"order", "threshold"});
        if (auto o = f->find("order")) c.fbi_order = o->unsigned_int();
        if (auto t = f->find("threshold")) c.fbi_threshold = t->positive();
    }
    if (auto s = root.find("spectral")) {
        s->allow({"k_max", "tol"});
        if (auto k = s->find("k_max")) c.spectral_k_max = k->unsigned_int();
        if (auto t = s->find("tol")) c.spectral_tol = t->positive();
    }
    if (auto t = root.find("certificate_tol")) c.certificate_tol = t->positive();
    if (auto f = root.find("fit")) {
        f->allow({"burn_in"});
        if (auto b = f->find("burn_in")) c.burn_in = b->unsigned_int();
    }
    if (auto r = root.find("reference")) {
        r->allow({"max_iters", "step_tol"});
        if (auto m = r->find("max_iters")) c.reference_max_iters = m->unsigned_int();
        if (auto s = r->find("step_tol")) c.reference_step_tol = s->number();
    }
    if (auto o = root.find("output")) {
        o->allow({"dir"});
        if (auto d = o->find("dir")) c.out_dir = d->str();
    }
    return c;
}

inline ExperimentConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
    return parse_config(j, path.has_parent_path() ? path.parent_path() : fs::path("."));
}

/// Replaces every generator seed: operator sources get seed, seed + 1, ... in
/// depth-first order, then the data source gets the next one.
inline void apply_seed_override(ExperimentConfig& c, std::uint64_t seed) {
    std::uint64_t next = seed;
    detail::override_seeds(c.op, next);
    if (c.data.type == "sparse-signal") c.data.seed = next;
}

inline DenseOperator build_operator(const OperatorSpec& s, const fs::path& base_dir) {
    if (s.type == "identity") return gen::identity(s.n);
    if (s.type == "diagonal") return DenseOperator::diagonal(detail::to_vector(s.values));
    if (s.type == "diagonal-decay") return gen::diagonal_decay(s.n, s.rate, s.scale);
    if (s.type == "random-gaussian") return gen::random_gaussian(s.rows, s.cols, *s.seed);
    if (s.type == "duplicate-column") {
        return gen::duplicate_column(build_operator(*s.base, base_dir), s.column, s.copies);
    }
    return DenseOperator(csv::read_matrix(detail::resolve(base_dir, s.path).string()));
}

struct Instance {
    Problem problem;
    Vector u0;
    std::optional<Vector> u_true;
};

/// Builds the problem; every failure is reported as a ValidationError.
inline Instance build_instance(const ExperimentConfig& c) {
    try {
        DenseOperator op = build_operator(c.op, c.base_dir);
        Vector f;
        std::optional<Vector> u_true;
        if (c.data.type == "values") {
            f = detail::to_vector(c.data.values);
        } else if (c.data.type == "file") {
            f = csv::read_vector(detail::resolve(c.base_dir, c.data.path).string());
        } else {
            auto sig = gen::sparse_signal(op, c.data.nonzeros, c.data.amplitude, c.data.noise, *c.data.seed);
            f = std::move(sig.data);
            u_true = std::move(sig.u_true);
        }
        if (static_cast<Index>(f.size()) != op.rows()) {
            throw ValidationError("data: length " + std::to_string(f.size()) +
                                  " does not match operator rows " + std::to_string(op.rows()));
        }

        const PenaltySpec& ps = c.penalty;
        Index count = op.cols();
        if (ps.type == "joint") {
            if (op.cols() % ps.block_size != 0) {
                throw ValidationError("penalty.block_size: " + std::to_string(ps.block_size) +
                                      " does not divide operator cols " + std::to_string(op.cols()));
            }
            count = op.cols() / ps.block_size;
        }
        Vector alpha;
        if (ps.alpha.constant) {
            alpha = Vector::Constant(static_cast<Eigen::Index>(count), *ps.alpha.constant);
        } else if (!ps.alpha.values.empty()) {
            alpha = detail::to_vector(ps.alpha.values);
        } else {
            alpha = csv::read_vector(detail::resolve(c.base_dir, ps.alpha.path).string());
        }
        if (static_cast<Index>(alpha.size()) != count) {
            throw ValidationError("penalty.alpha: expected " + std::to_string(count) +
                                  " weights, got " + std::to_string(alpha.size()));
        }
        Weights weights(alpha, ps.alpha.lower_bound);
        Penalty penalty = WeightedL1{weights};
        if (ps.type == "joint") penalty = JointPenalty{weights, BlockNorm{ps.q, ps.block_size}};
        if (ps.type == "l1_ball") penalty = L1BallIndicator{weights, ps.radius};

        Vector u0 = Vector::Zero(static_cast<Eigen::Index>(op.cols()));
        if (!c.initial.empty()) {
            u0 = detail::to_vector(c.initial);
            if (static_cast<Index>(u0.size()) != op.cols()) {
                throw ValidationError("initial: length " + std::to_string(u0.size()) +
                                      " does not match operator cols " + std::to_string(op.cols()));
            }
        }
        Problem p(std::move(op), std::move(f), std::move(penalty));
        if (std::isinf(penalty_value(p.penalty(), u0))) {
            throw ValidationError("initial: iterate lies outside the constraint set");
        }
        return Instance{std::move(p), std::move(u0), std::move(u_true)};
    } catch (const ValidationError&) {
        throw;
    } catch (const Error& e) {
        throw ValidationError(e.what());
    }
}

/// Turns a step spec into a rule using L = ||K||^2 and validates it.
inline StepSizeRule resolve_rule(const StepSpec& s, double lipschitz) {
    const double inv = lipschitz > 0.0 ? 1.0 / lipschitz : 1.0;
    auto pick = [&](const std::optional<double>& abs, const std::optional<double>& rel) {
        return abs ? *abs : *rel * inv;
    };
    StepSizeRule rule;
    if (s.rule == "constant") {
        rule = ConstantStep{pick(s.s, s.s_rel)};
    } else if (s.rule == "bounded") {
        BoundedStep b{pick(s.lower, s.lower_rel), pick(s.upper, s.upper_rel), {}};
        if (s.schedule == "alternate") {
            const double lo = b.lower, hi = b.upper;
            b.schedule = [lo, hi](std::size_t n) { return n % 2 == 0 ? hi : lo; };
        }
        rule = b;
    } else {
        ConditionB cb;
        cb.lower = pick(s.lower, s.lower_rel);
        cb.delta = s.delta;
        cb.growth = s.growth;
        cb.backoff = s.backoff;
        if (s.initial || s.initial_rel) cb.initial = pick(s.initial, s.initial_rel);
        rule = cb;
    }
    try {
        validate_rule(rule, lipschitz);
    } catch (const Error& e) {
        throw ValidationError(std::string("step: ") + e.what());
    }
    return rule;
}

struct Reference {
    Vector u_star;
    std::string source; ///< oracle | long_run
    std::optional<OracleResult> oracle;
};

inline OracleResult run_oracle(const Problem& p) {
    if (!p.has_penalty<WeightedL1>()) throw ValidationError("oracle: needs a weighted_l1 penalty");
    if (p.truncation_dim() > oracle_max_cols) {
        throw ValidationError("oracle: " + std::to_string(p.truncation_dim()) +
                              " columns exceed the limit of " + std::to_string(oracle_max_cols));
    }
    return oracle_minimizer(p);
}

/// Oracle minimizer when enabled, otherwise a long run of the configured rule
/// from u0 (the same trajectory, continued to a tighter tolerance).
inline Reference reference_minimizer(const ExperimentConfig& c, const Instance& inst,
                                     const StepSizeRule& rule) {
    Reference ref;
    if (c.oracle) {
        ref.oracle = run_oracle(inst.problem);
        ref.u_star = ref.oracle->minimizer;
        ref.source = "oracle";
        return ref;
    }
    StoppingRule stop;
    stop.max_iters = c.reference_max_iters;
    stop.step_tol = c.reference_step_tol;
    ref.u_star = solve(inst.problem, inst.u0, rule, stop).state.iterate;
    ref.source = "long_run";
    return ref;
}

struct CertificateOutcome {
    std::string name;
    std::optional<RateCertificate> certificate;
    std::string skipped; ///< reason when not applicable
    bool requested = false;
};

/// Builds every requested certificate (all applicable ones in auto mode).
/// Returns the outcomes and fills `extra` with the supporting reports.
inline std::vector<CertificateOutcome> build_certificates(const ExperimentConfig& c, const Instance& inst,
                                                          const StepSizeRule& rule, const RuleBounds& bounds,
                                                          const Vector& u_star, json& extra) {
    const Problem& p = inst.problem;
    std::vector<std::string> names = c.certificates;
    const bool automatic = names.empty();
    if (automatic) names = {"fbi", "compact", "strict_pattern"};

    std::optional<SupportAnalysis> analysis;
    try {
        analysis = support_analysis(p, u_star, c.certificate_tol);
        extra["support_analysis"] = report::to_json(*analysis);
    } catch (const Error& e) {
        extra["support_analysis"] = json{{"error", e.what()}};
    }

    std::vector<CertificateOutcome> out;
    for (const auto& name : names) {
        CertificateOutcome o;
        o.name = name;
        o.requested = !automatic;
        try {
            if (!analysis) throw CertificateError("reference minimizer failed the optimality check");
            if (name == "fbi") {
                const IndexSet cols = linthresh::detail::coefficient_columns(p.penalty(), analysis->active_set);
                FbiReport fbi = c.fbi_order > 0
                                    ? fbi_check(p.op(), c.fbi_order, std::nullopt, c.fbi_threshold)
                                    : fbi_check(p.op(), std::max<std::size_t>(1, cols.size()),
                                                std::vector<IndexSet>{cols}, c.fbi_threshold);
                extra["fbi"] = report::to_json(fbi);
                o.certificate = certificate_fbi(p, u_star, fbi, objective(p, inst.u0), bounds,
                                                c.certificate_tol);
            } else if (name == "compact") {
                if (!p.has_penalty<WeightedL1>()) throw CertificateError("needs a weighted_l1 penalty");
                if (!inst.u0.isZero(0.0)) throw CertificateError("needs u0 = 0");
                const auto* cs = std::get_if<ConstantStep>(&rule);
                if (!cs || std::abs(cs->s * p.lipschitz() - 1.0) > 1e-12) {
                    throw CertificateError("needs the constant step s = 1/||K||^2");
                }
                const std::size_t k_max = c.spectral_k_max.value_or(p.truncation_dim());
                SpectralReport spec = spectral_report(p.op(), std::min(k_max, p.truncation_dim()), c.spectral_tol);
                extra["spectral"] = report::to_json(spec);
                o.certificate = certificate_compact(spec, penalty_weights(p.penalty()), p.data().norm(),
                                                    p.lipschitz());
            } else {
                o.certificate = certificate_strict_pattern(p, *analysis, bounds);
            }
        } catch (const CertificateError& e) {
            if (o.requested) throw;
            o.skipped = e.what();
        }
        out.push_back(std::move(o));
    }
    return out;
}

/// max_n d_n / (C lambda^n) over the trace, ignoring n where both sides vanish.
inline double envelope_ratio(const std::vector<double>& d, const RateCertificate& cert) {
    double worst = 0.0;
    for (std::size_t n = 0; n < d.size(); ++n) {
        const double env = *cert.C * std::pow(cert.lambda, static_cast<double>(n));
        if (d[n] <= 1e-12) continue;
        worst = std::max(worst, env > 0.0 ? d[n] / env : unbounded);
    }
    return worst;
}

struct RunOutcome {
    int exit_code = exit_ok;
    json summary;
    json report;
    IterationTrace trace;
    Vector u_final;
    Vector u_star;
};

namespace detail {

inline fs::path prepare_out_dir(const ExperimentConfig& c) {
    if (c.out_dir.empty()) throw ValidationError("output.dir: no output directory (set it or pass --out-dir)");
    fs::path dir(c.out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error("cannot create output directory " + dir.string() + ": " + ec.message());
    return dir;
}

inline void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

inline json problem_json(const ExperimentConfig& c, const Problem& p) {
    return json{{"rows", p.op().rows()},
                {"cols", p.truncation_dim()},
                {"operator_norm_sq", report::number(p.lipschitz())},
                {"operator", c.op.type},
                {"penalty", c.penalty.type},
                {"alpha_lower", penalty_weights(p.penalty()).lower_bound()},
                {"data_norm", p.data().norm()}};
}

inline json bounds_json(const std::string& rule, const RuleBounds& b) {
    return json{{"rule", rule},
                {"s_lower", report::number(b.s_lower)},
                {"s_upper", report::number(b.s_upper)},
                {"delta", report::number(b.delta)}};
}

} // namespace detail

/// `run`: solve, trace, fit, certify. Writes trace.csv, report.json,
/// summary.json and u_final.csv into the output directory.
inline RunOutcome run_experiment(const ExperimentConfig& c, bool write = true) {
    Instance inst = build_instance(c);
    const Problem& p = inst.problem;
    const StepSizeRule rule = resolve_rule(c.step, p.lipschitz());
    if (c.oracle) run_oracle(p); // validate before any work
    const fs::path dir = write ? detail::prepare_out_dir(c) : fs::path();

    RunOutcome out;
    const Reference ref = reference_minimizer(c, inst, rule);
    SolveOptions opts;
    opts.reference = ref.u_star;
    const SolveResult res = solve(p, inst.u0, rule, c.stopping, opts);
    out.trace = res.trace;
    out.u_final = res.state.iterate;
    out.u_star = ref.u_star;

    json rep;
    rep["name"] = c.name;
    rep["problem"] = detail::problem_json(c, p);
    rep["step"] = detail::bounds_json(c.step.rule, res.bounds);
    rep["reference"] = json{{"source", ref.source}, {"u_star", report::numbers(report::to_std(ref.u_star))},
                            {"objective", report::number(objective(p, ref.u_star))}};
    if (ref.oracle) {
        rep["oracle"] = json{{"objective", report::number(ref.oracle->objective)},
                             {"patterns", ref.oracle->patterns},
                             {"feasible", ref.oracle->feasible},
                             {"singular_skipped", ref.oracle->singular_skipped}};
    }

    std::optional<RateFit> fit;
    std::string fit_error;
    try {
        fit = fit_rate(out.trace, c.burn_in);
    } catch (const ConfigError& e) {
        fit_error = e.what();
        if (!c.burn_in) {
            try {
                fit = fit_rate(out.trace, out.trace.support_stabilization_step());
                fit_error.clear();
            } catch (const ConfigError& e2) {
                fit_error = e2.what();
            }
        }
    }
    rep["fit"] = fit ? report::to_json(*fit) : json{{"error", fit_error}};
    rep["support_stabilization_step"] = out.trace.support_stabilization_step();

    const SublinearConstants k = sublinear_constants(p, inst.u0, ref.u_star, res.bounds);
    rep["sublinear"] = report::to_json(sublinear_check(out.trace, k));

    json extra = json::object();
    const auto certs = build_certificates(c, inst, rule, res.bounds, ref.u_star, extra);
    for (auto& [key, value] : extra.items()) rep[key] = value;

    bool respected = true;
    json cert_list = json::array();
    json cert_summary = json::array();
    const std::vector<double> d = out.trace.distances();
    for (const auto& o : certs) {
        if (!o.certificate) {
            cert_list.push_back(json{{"kind", o.name}, {"skipped", o.skipped}});
            continue;
        }
        json cj = report::to_json(*o.certificate);
        const bool ok = !fit || fit->lambda_hat <= o.certificate->lambda + certificate_tolerance;
        respected = respected && ok;
        cj["respected"] = ok;
        json s{{"kind", to_string(o.certificate->kind)},
               {"lambda", report::number(o.certificate->lambda)},
               {"respected", ok}};
        if (o.certificate->C) {
            const double ratio = envelope_ratio(d, *o.certificate);
            cj["envelope_ratio"] = report::number(ratio);
            s["envelope_respected"] = ratio <= 1.0 + 1e-9;
        }
        cert_list.push_back(cj);
        cert_summary.push_back(s);
    }
    rep["certificates"] = cert_list;

    json sum;
    sum["name"] = c.name;
    sum["iterations"] = res.iterations;
    sum["stop_reason"] = to_string(res.reason);
    sum["final_objective"] = report::number(objective(p, res.state.iterate));
    sum["reference"] = ref.source;
    sum["lambda_hat"] = fit ? report::number(fit->lambda_hat) : json(nullptr);
    sum["fit_geometric"] = fit ? json(fit->geometric) : json(nullptr);
    sum["certificates"] = cert_summary;
    sum["certificate_respected"] = respected;
    sum["sublinear_passes"] = rep["sublinear"]["passes"];
    sum["final_distance_to_reference"] = report::number((res.state.iterate - ref.u_star).norm());
    if (ref.oracle) sum["oracle_distance"] = report::number((res.state.iterate - ref.oracle->minimizer).norm());
    if (const auto* ball = std::get_if<L1BallIndicator>(&p.penalty())) {
        (void)ball;
        sum["data_outside_image"] = dual_vector(p, ref.u_star).norm() >
                                    1e-10 * std::max(1.0, p.op().adjoint_apply(p.data()).norm());
    }

    out.report = rep;
    out.summary = sum;
    out.exit_code = respected ? exit_ok : exit_certificate;
    if (write) {
        write_trace_csv((dir / "trace.csv").string(), out.trace);
        detail::write_json(dir / "report.json", rep);
        detail::write_json(dir / "summary.json", sum);
        csv::write_vector((dir / "u_final.csv").string(), out.u_final);
    }
    return out;
}

/// `certify`: reference minimizer and certificates, no traced iteration.
inline json certify(const ExperimentConfig& c, bool write = true) {
    Instance inst = build_instance(c);
    const Problem& p = inst.problem;
    const StepSizeRule rule = resolve_rule(c.step, p.lipschitz());
    if (c.oracle) run_oracle(p);
    const fs::path dir = write ? detail::prepare_out_dir(c) : fs::path();
    const RuleBounds bounds = validate_rule(rule, p.lipschitz());
    const Reference ref = reference_minimizer(c, inst, rule);

    json rep;
    rep["name"] = c.name;
    rep["problem"] = detail::problem_json(c, p);
    rep["step"] = detail::bounds_json(c.step.rule, bounds);
    rep["reference"] = json{{"source", ref.source}, {"u_star", report::numbers(report::to_std(ref.u_star))},
                            {"objective", report::number(objective(p, ref.u_star))}};
    json extra = json::object();
    const auto certs = build_certificates(c, inst, rule, bounds, ref.u_star, extra);
    for (auto& [key, value] : extra.items()) rep[key] = value;
    json list = json::array();
    for (const auto& o : certs) {
        list.push_back(o.certificate ? report::to_json(*o.certificate)
                                     : json{{"kind", o.name}, {"skipped", o.skipped}});
    }
    rep["certificates"] = list;
    if (write) detail::write_json(dir / "certificates.json", rep);
    return rep;
}

/// `oracle`: sign-pattern enumeration only.
inline json oracle_only(const ExperimentConfig& c, bool write = true) {
    Instance inst = build_instance(c);
    const OracleResult r = run_oracle(inst.problem);
    const fs::path dir = write ? detail::prepare_out_dir(c) : fs::path();
    json j{{"name", c.name},
           {"minimizer", report::numbers(report::to_std(r.minimizer))},
           {"objective", report::number(r.objective)},
           {"patterns", r.patterns},
           {"feasible", r.feasible},
           {"singular_skipped", r.singular_skipped}};
    if (write) {
        detail::write_json(dir / "oracle.json", j);
        csv::write_vector((dir / "u_oracle.csv").string(), r.minimizer);
    }
    return j;
}

/// `spectral`: SpectralReport only.
inline json spectral_only(const ExperimentConfig& c, bool write = true) {
    Instance inst = build_instance(c);
    const DenseOperator& K = inst.problem.op();
    const std::size_t k_max = c.spectral_k_max.value_or(K.cols());
    if (k_max < 1 || k_max > K.cols()) {
        throw ValidationError("spectral.k_max: must lie in [1, " + std::to_string(K.cols()) + "]");
    }
    const fs::path dir = write ? detail::prepare_out_dir(c) : fs::path();
    json j = report::to_json(spectral_report(K, k_max, c.spectral_tol));
    j["name"] = c.name;
    if (write) detail::write_json(dir / "spectral.json", j);
    return j;
}

} // namespace linthresh::experiment
