#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace sftpl::config {

using nlohmann::json;

// Invalid configuration; `path` is a JSON pointer to the offending field.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string path, const std::string& msg)
        : std::runtime_error((path.empty() ? std::string("/") : path) + ": " + msg), path_(std::move(path)) {}
    [[nodiscard]] const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

struct NoiseConfig {
    std::string kind = "uniform";  // uniform | truncated_gaussian
    double width = 0.2;
    double stddev = 0.1;
};

struct LinkConfig {
    std::string kind = "identity";  // identity | linear | tanh_augmented
    double param = 1.0;
};

struct PlanningLossConfig {
    std::string kind = "l1_tracking";  // zero | scaled_l1 | l1_tracking | quadratic_tracking
    std::vector<std::vector<double>> x_ref;  // per step; empty = untracked
    std::vector<std::vector<double>> u_ref;
    double wx = 1.0;
    double wu = 1.0;
    double scale = 1.0;
};

struct EnvironmentConfig {
    std::string kind = "threshold";  // threshold | pwa_tournament | pwa_margin | polynomial | planning
    double lo = 0.0;
    double hi = 1.0;
    std::size_t context_dim = 2;
    std::size_t modes = 2;
    std::size_t outputs = 1;
    bool bias = true;
    unsigned degree = 2;
    LinkConfig link;
    double margin = 0.5;
    double continuous_lo = -1.0, continuous_hi = 1.0;
    double discrete_lo = -1.0, discrete_hi = 1.0;
    std::size_t horizon = 2;
    double plan_lo = -0.2, plan_hi = 0.2;
    double D = 0.0;  // 0 derives the bound from the plan box and noise
    double state_bound = 0.0;  // 0 disables clipping
    PlanningLossConfig loss;
};

struct LabelConfig {
    std::string kind = "threshold";  // none | threshold | planted
    double theta_star = 0.3;
    double flip = 0.1;
    double noise_std = 0.05;
    std::uint64_t seed = 7;
};

struct AdversaryConfig {
    std::string kind = "uniform";  // uniform | mean_shift | greedy | planning_noise
    double box_lo = 0.0, box_hi = 1.0;
    NoiseConfig noise;
    std::string policy = "sweep";  // sweep | track_learner
    double period = 50.0;
    std::size_t candidates = 9;
    std::size_t probes = 16;
    LabelConfig labels;
    double x1_lo = -0.1414213562373095, x1_hi = 0.1414213562373095;
    NoiseConfig input_noise{"uniform", 0.4, 0.1};
    NoiseConfig process_noise{"uniform", 0.4, 0.1};
};

struct SolverConfig {
    std::string kind = "exact";  // exact | grid | alternating
    std::size_t mesh = 41;
    bool incremental = true;
    std::size_t restarts = 4;
    std::size_t iters = 50;
    std::uint64_t seed = 11;
};

struct LearnerConfig {
    std::string algorithm = "lazy_ftpl_expo";  // lazy_ftpl_expo | lazy_ftpl_gp
    std::string tuning = "auto";  // auto | explicit | affine | polynomial | planning | margin
    double eta = 0.0;
    std::size_t n = 1;
    double constant = 1.0;
    SolverConfig solver;
    std::size_t gp_anchors = 16;
    bool shared_successor = true;
};

struct RunConfig {
    std::vector<std::size_t> T{100};
    std::vector<std::uint64_t> seeds{1};
    std::optional<SolverConfig> hindsight;  // defaults to the learner's solver
};

struct OutputConfig {
    std::string dir = "out";
    std::vector<std::string> formats{"csv", "json"};
};

struct VerifyConfig {
    std::vector<std::string> battery{"uniform", "mean_shift", "greedy"};
    std::size_t pairs = 20;
    std::size_t n_mc = 20000;
    double pair_scale_lo = 0.001;
    double pair_scale_hi = 0.1;
    std::optional<double> alpha;  // overrides the isometry constant
    std::vector<double> epsilons{0.1, 0.2};
    std::size_t cells = 64;
    bool single_cell = false;
    std::size_t n = 200;
    double delta = 0.05;
    double epsilon = 0.1;
    std::size_t trials = 500;
    std::size_t grid_points = 11;
};

struct ExperimentConfig {
    EnvironmentConfig environment;
    AdversaryConfig adversary;
    LearnerConfig learner;
    RunConfig run;
    OutputConfig output;
    VerifyConfig verify;
};

namespace detail {

// Reads fields of one object and rejects keys it never asked about.
class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_, "expected an object");
    }
    ~Reader() = default;

    template <class T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        read(*it, out, path_ + "/" + key);
    }
    [[nodiscard]] const json* child(const char* key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }
    [[nodiscard]] std::string sub(const char* key) const { return path_ + "/" + key; }
    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError(path_ + "/" + it.key(), "unknown key");
    }

private:
    static void read(const json& v, double& out, const std::string& p) {
        if (!v.is_number()) throw ConfigError(p, "expected a number");
        out = v.get<double>();
        if (!std::isfinite(out)) throw ConfigError(p, "must be finite");
    }
    static void read(const json& v, bool& out, const std::string& p) {
        if (!v.is_boolean()) throw ConfigError(p, "expected a boolean");
        out = v.get<bool>();
    }
    static void read(const json& v, std::string& out, const std::string& p) {
        if (!v.is_string()) throw ConfigError(p, "expected a string");
        out = v.get<std::string>();
    }
    template <class U>
        requires std::is_unsigned_v<U>
    static void read(const json& v, U& out, const std::string& p) {
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
            throw ConfigError(p, "expected a nonnegative integer");
        out = static_cast<U>(v.get<std::uint64_t>());
    }
    template <class U>
    static void read(const json& v, std::vector<U>& out, const std::string& p) {
        if (!v.is_array()) throw ConfigError(p, "expected an array");
        out.clear();
        for (std::size_t i = 0; i < v.size(); ++i) {
            U x{};
            read(v[i], x, p + "/" + std::to_string(i));
            out.push_back(std::move(x));
        }
    }
    static void read(const json& v, std::optional<double>& out, const std::string& p) {
        if (v.is_null()) { out.reset(); return; }
        double x = 0.0;
        read(v, x, p);
        out = x;
    }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

inline void require(bool ok, const std::string& path, const std::string& msg) {
    if (!ok) throw ConfigError(path, msg);
}
inline void one_of(const std::string& v, std::initializer_list<const char*> options, const std::string& path) {
    std::string list;
    for (const char* o : options) {
        if (v == o) return;
        list += list.empty() ? o : std::string(", ") + o;
    }
    throw ConfigError(path, "'" + v + "' is not one of: " + list);
}

inline NoiseConfig parse_noise(const json& j, const std::string& path, NoiseConfig n) {
    Reader r(j, path);
    r.get("kind", n.kind);
    r.get("width", n.width);
    r.get("stddev", n.stddev);
    r.finish();
    one_of(n.kind, {"uniform", "truncated_gaussian"}, path + "/kind");
    require(n.width > 0.0, path + "/width", "must be positive");
    require(n.stddev > 0.0, path + "/stddev", "must be positive");
    return n;
}

inline SolverConfig parse_solver(const json& j, const std::string& path) {
    SolverConfig s;
    Reader r(j, path);
    r.get("kind", s.kind);
    r.get("mesh", s.mesh);
    r.get("incremental", s.incremental);
    r.get("restarts", s.restarts);
    r.get("iters", s.iters);
    r.get("seed", s.seed);
    r.finish();
    one_of(s.kind, {"exact", "grid", "alternating"}, path + "/kind");
    require(s.mesh >= 2, path + "/mesh", "must be at least 2");
    require(s.restarts >= 1, path + "/restarts", "must be at least 1");
    require(s.iters >= 1, path + "/iters", "must be at least 1");
    return s;
}

inline json to_json(const NoiseConfig& n) { return {{"kind", n.kind}, {"width", n.width}, {"stddev", n.stddev}}; }
inline json to_json(const SolverConfig& s) {
    return {{"kind", s.kind}, {"mesh", s.mesh}, {"incremental", s.incremental}, {"restarts", s.restarts},
            {"iters", s.iters}, {"seed", s.seed}};
}

}  // namespace detail

inline ExperimentConfig parse(const json& root) {
    using detail::one_of;
    using detail::Reader;
    using detail::require;
    ExperimentConfig c;
    Reader top(root, "");

    if (const json* j = top.child("environment")) {
        auto& e = c.environment;
        Reader r(*j, "/environment");
        r.get("kind", e.kind);
        r.get("lo", e.lo);
        r.get("hi", e.hi);
        r.get("context_dim", e.context_dim);
        r.get("modes", e.modes);
        r.get("outputs", e.outputs);
        r.get("bias", e.bias);
        r.get("degree", e.degree);
        r.get("margin", e.margin);
        r.get("continuous_lo", e.continuous_lo);
        r.get("continuous_hi", e.continuous_hi);
        r.get("discrete_lo", e.discrete_lo);
        r.get("discrete_hi", e.discrete_hi);
        r.get("horizon", e.horizon);
        r.get("plan_lo", e.plan_lo);
        r.get("plan_hi", e.plan_hi);
        r.get("D", e.D);
        r.get("state_bound", e.state_bound);
        if (const json* l = r.child("link")) {
            Reader lr(*l, r.sub("link"));
            lr.get("kind", e.link.kind);
            lr.get("param", e.link.param);
            lr.finish();
        }
        if (const json* l = r.child("loss")) {
            Reader lr(*l, r.sub("loss"));
            lr.get("kind", e.loss.kind);
            lr.get("x_ref", e.loss.x_ref);
            lr.get("u_ref", e.loss.u_ref);
            lr.get("wx", e.loss.wx);
            lr.get("wu", e.loss.wu);
            lr.get("scale", e.loss.scale);
            lr.finish();
        }
        r.finish();
        one_of(e.kind, {"threshold", "pwa_tournament", "pwa_margin", "polynomial", "planning"}, "/environment/kind");
        one_of(e.link.kind, {"identity", "linear", "tanh_augmented"}, "/environment/link/kind");
        one_of(e.loss.kind, {"zero", "scaled_l1", "l1_tracking", "quadratic_tracking"}, "/environment/loss/kind");
        require(e.lo < e.hi, "/environment/hi", "must exceed lo");
        require(e.context_dim >= 1 && e.context_dim <= 16, "/environment/context_dim", "must lie in 1..16");
        require(e.modes >= 1 && e.modes <= 8, "/environment/modes", "must lie in 1..8");
        require(e.outputs >= 1, "/environment/outputs", "must be at least 1");
        require(e.degree >= 1 && e.degree <= 6, "/environment/degree", "must lie in 1..6");
        require(e.link.param > 0.0 || e.link.kind == "identity", "/environment/link/param", "must be positive");
        require(e.margin >= 0.0, "/environment/margin", "must be nonnegative");
        require(e.continuous_lo <= e.continuous_hi, "/environment/continuous_hi", "must not be below continuous_lo");
        require(e.discrete_lo <= e.discrete_hi, "/environment/discrete_hi", "must not be below discrete_lo");
        require(e.horizon >= 1 && e.horizon <= 16, "/environment/horizon", "must lie in 1..16");
        require(e.plan_lo <= e.plan_hi, "/environment/plan_hi", "must not be below plan_lo");
        require(e.D >= 0.0, "/environment/D", "must be nonnegative");
        require(e.state_bound >= 0.0, "/environment/state_bound", "must be nonnegative");
        require(e.loss.wx >= 0.0 && e.loss.wx <= 1.0, "/environment/loss/wx", "must lie in [0,1]");
        require(e.loss.wu >= 0.0 && e.loss.wu <= 1.0, "/environment/loss/wu", "must lie in [0,1]");
        require(e.loss.scale > 0.0, "/environment/loss/scale", "must be positive");
        if (e.kind == "pwa_margin") require(e.margin > 0.0, "/environment/margin", "must be positive for pwa_margin");
    }

    if (const json* j = top.child("adversary")) {
        auto& a = c.adversary;
        Reader r(*j, "/adversary");
        r.get("kind", a.kind);
        r.get("box_lo", a.box_lo);
        r.get("box_hi", a.box_hi);
        r.get("policy", a.policy);
        r.get("period", a.period);
        r.get("candidates", a.candidates);
        r.get("probes", a.probes);
        r.get("x1_lo", a.x1_lo);
        r.get("x1_hi", a.x1_hi);
        if (const json* n = r.child("noise")) a.noise = detail::parse_noise(*n, r.sub("noise"), a.noise);
        if (const json* n = r.child("input_noise")) a.input_noise = detail::parse_noise(*n, r.sub("input_noise"), a.input_noise);
        if (const json* n = r.child("process_noise")) a.process_noise = detail::parse_noise(*n, r.sub("process_noise"), a.process_noise);
        if (const json* l = r.child("labels")) {
            Reader lr(*l, r.sub("labels"));
            lr.get("kind", a.labels.kind);
            lr.get("theta_star", a.labels.theta_star);
            lr.get("flip", a.labels.flip);
            lr.get("noise_std", a.labels.noise_std);
            lr.get("seed", a.labels.seed);
            lr.finish();
        }
        r.finish();
        one_of(a.kind, {"uniform", "mean_shift", "greedy", "planning_noise"}, "/adversary/kind");
        one_of(a.policy, {"sweep", "track_learner"}, "/adversary/policy");
        one_of(a.labels.kind, {"none", "threshold", "planted"}, "/adversary/labels/kind");
        require(a.box_lo < a.box_hi, "/adversary/box_hi", "must exceed box_lo");
        require(a.period > 0.0, "/adversary/period", "must be positive");
        require(a.candidates >= 1, "/adversary/candidates", "must be at least 1");
        require(a.probes >= 1, "/adversary/probes", "must be at least 1");
        require(a.x1_lo < a.x1_hi, "/adversary/x1_hi", "must exceed x1_lo");
        require(a.labels.flip >= 0.0 && a.labels.flip <= 1.0, "/adversary/labels/flip", "must lie in [0,1]");
        require(a.labels.noise_std >= 0.0, "/adversary/labels/noise_std", "must be nonnegative");
    }

    if (const json* j = top.child("learner")) {
        auto& l = c.learner;
        Reader r(*j, "/learner");
        r.get("algorithm", l.algorithm);
        r.get("tuning", l.tuning);
        r.get("eta", l.eta);
        r.get("n", l.n);
        r.get("constant", l.constant);
        r.get("gp_anchors", l.gp_anchors);
        r.get("shared_successor", l.shared_successor);
        if (const json* s = r.child("solver")) l.solver = detail::parse_solver(*s, r.sub("solver"));
        r.finish();
        one_of(l.algorithm, {"lazy_ftpl_expo", "lazy_ftpl_gp"}, "/learner/algorithm");
        one_of(l.tuning, {"auto", "explicit", "affine", "polynomial", "planning", "margin"}, "/learner/tuning");
        require(l.eta >= 0.0, "/learner/eta", "must be nonnegative");
        require(l.n >= 1, "/learner/n", "must be at least 1");
        require(l.constant > 0.0, "/learner/constant", "must be positive");
        require(l.gp_anchors >= 1, "/learner/gp_anchors", "must be at least 1");
        if (l.tuning == "explicit") require(l.eta > 0.0 || j->contains("eta"), "/learner/eta", "required for explicit tuning");
    }

    if (const json* j = top.child("run")) {
        auto& rc = c.run;
        Reader r(*j, "/run");
        r.get("T", rc.T);
        r.get("seeds", rc.seeds);
        if (const json* s = r.child("hindsight")) rc.hindsight = detail::parse_solver(*s, r.sub("hindsight"));
        r.finish();
        require(!rc.T.empty(), "/run/T", "must list at least one horizon");
        for (std::size_t i = 0; i < rc.T.size(); ++i)
            require(rc.T[i] >= 1 && rc.T[i] <= 10'000'000, "/run/T/" + std::to_string(i), "must lie in 1..1e7");
        require(!rc.seeds.empty(), "/run/seeds", "must list at least one seed");
    }

    if (const json* j = top.child("output")) {
        Reader r(*j, "/output");
        r.get("dir", c.output.dir);
        r.get("formats", c.output.formats);
        r.finish();
        for (std::size_t i = 0; i < c.output.formats.size(); ++i)
            one_of(c.output.formats[i], {"csv", "json"}, "/output/formats/" + std::to_string(i));
    }

    if (const json* j = top.child("verify")) {
        auto& v = c.verify;
        Reader r(*j, "/verify");
        r.get("battery", v.battery);
        r.get("pairs", v.pairs);
        r.get("n_mc", v.n_mc);
        r.get("pair_scale_lo", v.pair_scale_lo);
        r.get("pair_scale_hi", v.pair_scale_hi);
        r.get("alpha", v.alpha);
        r.get("epsilons", v.epsilons);
        r.get("cells", v.cells);
        r.get("single_cell", v.single_cell);
        r.get("n", v.n);
        r.get("delta", v.delta);
        r.get("epsilon", v.epsilon);
        r.get("trials", v.trials);
        r.get("grid_points", v.grid_points);
        r.finish();
        for (std::size_t i = 0; i < v.battery.size(); ++i)
            one_of(v.battery[i], {"uniform", "mean_shift", "greedy", "planning_noise"}, "/verify/battery/" + std::to_string(i));
        require(!v.battery.empty(), "/verify/battery", "must list at least one adversary");
        require(v.pairs >= 1, "/verify/pairs", "must be at least 1");
        require(v.n_mc >= 2, "/verify/n_mc", "must be at least 2");
        require(v.pair_scale_lo > 0.0 && v.pair_scale_lo <= v.pair_scale_hi, "/verify/pair_scale_lo", "need 0 < lo <= hi");
        if (v.alpha) require(*v.alpha >= 0.0, "/verify/alpha", "must be nonnegative");
        for (std::size_t i = 0; i < v.epsilons.size(); ++i)
            require(v.epsilons[i] > 0.0, "/verify/epsilons/" + std::to_string(i), "must be positive");
        require(v.cells >= 1, "/verify/cells", "must be at least 1");
        require(v.delta > 0.0 && v.delta < 1.0, "/verify/delta", "must lie in (0,1)");
        require(v.epsilon > 0.0, "/verify/epsilon", "must be positive");
        require(v.trials >= 1, "/verify/trials", "must be at least 1");
        require(v.grid_points >= 2, "/verify/grid_points", "must be at least 2");
    }
    top.finish();
    return c;
}

// Parses text; syntax errors report the line and column.
inline ExperimentConfig parse_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        std::size_t line = 1, col = 1;
        for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
            if (text[i] == '\n') { ++line; col = 1; } else { ++col; }
        }
        throw ConfigError("", "syntax error at line " + std::to_string(line) + ", column " + std::to_string(col) +
                                  ": " + e.what());
    }
    return parse(j);
}

// Canonical form with every field spelled out.
inline json to_json(const ExperimentConfig& c) {
    using detail::to_json;
    const auto& e = c.environment;
    const auto& a = c.adversary;
    const auto& l = c.learner;
    const auto& v = c.verify;
    json out;
    out["environment"] = {
        {"kind", e.kind}, {"lo", e.lo}, {"hi", e.hi}, {"context_dim", e.context_dim}, {"modes", e.modes},
        {"outputs", e.outputs}, {"bias", e.bias}, {"degree", e.degree},
        {"link", {{"kind", e.link.kind}, {"param", e.link.param}}}, {"margin", e.margin},
        {"continuous_lo", e.continuous_lo}, {"continuous_hi", e.continuous_hi}, {"discrete_lo", e.discrete_lo},
        {"discrete_hi", e.discrete_hi}, {"horizon", e.horizon}, {"plan_lo", e.plan_lo}, {"plan_hi", e.plan_hi},
        {"D", e.D}, {"state_bound", e.state_bound},
        {"loss", {{"kind", e.loss.kind}, {"x_ref", e.loss.x_ref}, {"u_ref", e.loss.u_ref}, {"wx", e.loss.wx},
                  {"wu", e.loss.wu}, {"scale", e.loss.scale}}}};
    out["adversary"] = {
        {"kind", a.kind}, {"box_lo", a.box_lo}, {"box_hi", a.box_hi}, {"noise", to_json(a.noise)},
        {"policy", a.policy}, {"period", a.period}, {"candidates", a.candidates}, {"probes", a.probes},
        {"labels", {{"kind", a.labels.kind}, {"theta_star", a.labels.theta_star}, {"flip", a.labels.flip},
                    {"noise_std", a.labels.noise_std}, {"seed", a.labels.seed}}},
        {"x1_lo", a.x1_lo}, {"x1_hi", a.x1_hi}, {"input_noise", to_json(a.input_noise)},
        {"process_noise", to_json(a.process_noise)}};
    out["learner"] = {{"algorithm", l.algorithm}, {"tuning", l.tuning}, {"eta", l.eta}, {"n", l.n},
                      {"constant", l.constant}, {"solver", to_json(l.solver)}, {"gp_anchors", l.gp_anchors},
                      {"shared_successor", l.shared_successor}};
    out["run"] = {{"T", c.run.T}, {"seeds", c.run.seeds}};
    if (c.run.hindsight) out["run"]["hindsight"] = to_json(*c.run.hindsight);
    out["output"] = {{"dir", c.output.dir}, {"formats", c.output.formats}};
    out["verify"] = {{"battery", v.battery}, {"pairs", v.pairs}, {"n_mc", v.n_mc},
                     {"pair_scale_lo", v.pair_scale_lo}, {"pair_scale_hi", v.pair_scale_hi},
                     {"alpha", v.alpha ? json(*v.alpha) : json(nullptr)}, {"epsilons", v.epsilons},
                     {"cells", v.cells}, {"single_cell", v.single_cell}, {"n", v.n}, {"delta", v.delta},
                     {"epsilon", v.epsilon}, {"trials", v.trials}, {"grid_points", v.grid_points}};
    return out;
}

// Replaces the value at a dotted path. The path must name an existing key of
// the canonical form; a scalar assigned to a list becomes a one-element list.
inline json with_override(const json& canonical, const std::string& dotted, const json& value) {
    json out = canonical;
    json* node = &out;
    std::string path;
    std::size_t start = 0;
    while (true) {
        const std::size_t dot = dotted.find('.', start);
        const std::string key = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        path += "/" + key;
        if (key.empty() || !node->is_object() || !node->contains(key)) throw ConfigError(path, "unknown parameter path");
        node = &(*node)[key];
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    *node = node->is_array() && !value.is_array() ? json::array({value}) : value;
    return out;
}

}  // namespace sftpl::config
