#pragma once

#include "dvpp/errors.hpp"
#include "dvpp/fleet.hpp"
#include "dvpp/sim.hpp"

#include "json.hpp"

#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace dvpp {

inline constexpr const char* kConfigSchema = "dvpp-config/1";
inline constexpr const char* kControllerSchema = "dvpp-controllers/1";

struct Config {
    FleetSpec fleet;
    std::vector<std::pair<int, int>> graph;
    std::vector<Scenario> scenarios;

    const Scenario& scenario(const std::string& name) const {
        for (const auto& s : scenarios)
            if (s.name == name) return s;
        throw ConfigError("scenarios", "no scenario named " + name);
    }
};

namespace config_detail {

using json = nlohmann::json;

// Cursor into the document that remembers its field path for messages.
class Node {
public:
    Node(const json& j, std::string path) : j_(j), path_(std::move(path)) {}

    const std::string& path() const { return path_; }
    const json& raw() const { return j_; }

    std::string child_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    void expect_object(std::initializer_list<const char*> allowed) const {
        if (!j_.is_object()) throw ConfigError(path_, "expected an object");
        std::set<std::string> ok(allowed.begin(), allowed.end());
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!ok.count(it.key())) throw ConfigError(child_path(it.key()), "unknown key");
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    Node at(const std::string& key) const {
        if (!j_.contains(key)) throw ConfigError(child_path(key), "missing required field");
        return {j_.at(key), child_path(key)};
    }

    Node item(std::size_t k) const { return {j_.at(k), path_ + "[" + std::to_string(k) + "]"}; }

    std::size_t array_size() const {
        if (!j_.is_array()) throw ConfigError(path_, "expected an array");
        return j_.size();
    }

    double number() const {
        if (!j_.is_number()) throw ConfigError(path_, "expected a number");
        return j_.get<double>();
    }
    std::string string() const {
        if (!j_.is_string()) throw ConfigError(path_, "expected a string");
        return j_.get<std::string>();
    }
    bool boolean() const {
        if (!j_.is_boolean()) throw ConfigError(path_, "expected true or false");
        return j_.get<bool>();
    }
    int integer() const {
        if (!j_.is_number_integer()) throw ConfigError(path_, "expected an integer");
        return j_.get<int>();
    }

    double num(const std::string& key) const { return at(key).number(); }
    double num(const std::string& key, double fallback) const { return has(key) ? at(key).number() : fallback; }

private:
    const json& j_;
    std::string path_;
};

inline double positive(const Node& n) {
    const double v = n.number();
    if (!(v > 0.0)) throw ConfigError(n.path(), "must be positive");
    return v;
}

inline double nonnegative(const Node& n) {
    const double v = n.number();
    if (!(v >= 0.0)) throw ConfigError(n.path(), "must be non-negative");
    return v;
}

inline DesiredBehavior parse_desired(const Node& n) {
    n.expect_object({"kind", "D", "H", "tau"});
    DesiredBehavior d;
    const std::string k = n.at("kind").string();
    if (k == "droop") d.kind = BehaviorKind::droop;
    else if (k == "inertia_droop") d.kind = BehaviorKind::inertia_droop;
    else throw ConfigError(n.child_path("kind"), "expected droop or inertia_droop");
    d.D = positive(n.at("D"));
    if (d.kind == BehaviorKind::inertia_droop) d.H = nonnegative(n.at("H"));
    else if (n.has("H")) throw ConfigError(n.child_path("H"), "only inertia_droop takes H");
    d.tau = positive(n.at("tau"));
    return d;
}

inline ChannelRole parse_role(const Node& n) {
    n.expect_object({"kind", "tau", "degree"});
    ChannelRole r;
    r.active = true;
    const std::string k = n.at("kind").string();
    if (k == "fixed") r.kind = ParticipationKind::fixed;
    else if (k == "lpf") r.kind = ParticipationKind::lpf;
    else if (k == "bpf") r.kind = ParticipationKind::bpf;
    else if (k == "hpf") r.kind = ParticipationKind::hpf;
    else throw ConfigError(n.child_path("kind"), "expected fixed, lpf, bpf or hpf");
    if (r.kind == ParticipationKind::lpf || r.kind == ParticipationKind::bpf) r.tau = positive(n.at("tau"));
    else if (n.has("tau")) r.tau = positive(n.at("tau"));
    if (n.has("degree")) {
        r.degree = n.at("degree").integer();
        if (r.degree < 0) throw ConfigError(n.child_path("degree"), "must be non-negative");
    }
    return r;
}

inline DeviceSpec parse_device(const Node& n) {
    n.expect_object({"id", "rating_mva", "roles", "hydro", "converter", "capacity_mw", "tuning"});
    DeviceSpec d;
    d.id = n.at("id").string();
    if (d.id.empty()) throw ConfigError(n.child_path("id"), "must not be empty");
    d.rating = positive(n.at("rating_mva"));
    const Node roles = n.at("roles");
    roles.expect_object({"fp", "vq"});
    if (roles.has("fp")) d.roles[0] = parse_role(roles.at("fp"));
    if (roles.has("vq")) d.roles[1] = parse_role(roles.at("vq"));
    if (!d.roles[0].active && !d.roles[1].active) throw ConfigError(roles.path(), "at least one channel role is required");
    if (n.has("hydro")) {
        const Node h = n.at("hydro");
        h.expect_object({"R_g", "R_t", "tau_g", "tau_r", "tau_w"});
        HydroParams p;
        p.R_g = positive(h.at("R_g"));
        p.R_t = positive(h.at("R_t"));
        p.tau_g = nonnegative(h.at("tau_g"));
        p.tau_r = nonnegative(h.at("tau_r"));
        p.tau_w = nonnegative(h.at("tau_w"));
        d.hydro = p;
    }
    if (d.fixed() && !d.hydro) throw ConfigError(n.child_path("hydro"), "fixed devices need a hydro model");
    if (n.has("converter")) {
        const Node c = n.at("converter");
        c.expect_object({"L_f", "R_f", "k_p", "k_i", "omega_b", "v_star"});
        ConverterParams p;
        p.L_f = c.has("L_f") ? positive(c.at("L_f")) : p.L_f;
        p.R_f = c.has("R_f") ? nonnegative(c.at("R_f")) : p.R_f;
        p.k_p = c.has("k_p") ? positive(c.at("k_p")) : p.k_p;
        p.k_i = c.has("k_i") ? positive(c.at("k_i")) : p.k_i;
        p.omega_b = c.has("omega_b") ? positive(c.at("omega_b")) : p.omega_b;
        p.v_star = c.has("v_star") ? positive(c.at("v_star")) : p.v_star;
        d.converter = p;
    }
    if (n.has("capacity_mw")) {
        const Node c = n.at("capacity_mw");
        c.expect_object({"lo", "hi", "nominal"});
        CapacityInterval iv;
        iv.lo = nonnegative(c.at("lo"));
        iv.hi = nonnegative(c.at("hi"));
        iv.nominal = c.has("nominal") ? nonnegative(c.at("nominal")) : iv.hi;
        if (iv.lo > iv.hi) throw ConfigError(c.path(), "lo must not exceed hi");
        if (iv.nominal < iv.lo || iv.nominal > iv.hi) throw ConfigError(c.child_path("nominal"), "must lie in [lo, hi]");
        if (iv.hi > d.rating) throw ConfigError(c.child_path("hi"), "exceeds the device rating");
        d.p_capacity = iv;
    }
    if (n.has("tuning")) {
        const Node t = n.at("tuning");
        t.expect_object({"alpha", "mu", "zeta"});
        d.tuning.alpha = t.has("alpha") ? positive(t.at("alpha")) : d.tuning.alpha;
        d.tuning.mu = t.has("mu") ? positive(t.at("mu")) : d.tuning.mu;
        if (t.has("zeta")) {
            const Node z = t.at("zeta");
            d.tuning.zeta.resize(static_cast<int>(z.array_size()));
            for (std::size_t k = 0; k < z.array_size(); ++k) d.tuning.zeta(static_cast<int>(k)) = positive(z.item(k));
        }
    }
    return d;
}

inline SignalKind parse_signal(const Node& n) {
    const std::string s = n.string();
    if (s == "df") return SignalKind::df;
    if (s == "dv") return SignalKind::dv;
    if (s == "load_p") return SignalKind::load_p;
    if (s == "load_q") return SignalKind::load_q;
    throw ConfigError(n.path(), "expected df, dv, load_p or load_q");
}

inline Scenario parse_scenario(const Node& n, const FleetSpec& f, const std::vector<std::pair<int, int>>& graph) {
    n.expect_object({"name", "dt", "horizon", "steps", "capacity_events", "adaptation", "grid", "clamp", "integrator",
                     "rk4_substeps"});
    Scenario s;
    s.name = n.at("name").string();
    s.dt = n.has("dt") ? positive(n.at("dt")) : s.dt;
    s.horizon = positive(n.at("horizon"));
    if (n.has("steps")) {
        const Node st = n.at("steps");
        for (std::size_t k = 0; k < st.array_size(); ++k) {
            const Node e = st.item(k);
            e.expect_object({"signal", "time", "value"});
            s.steps.push_back({parse_signal(e.at("signal")), nonnegative(e.at("time")), e.num("value")});
        }
    }
    if (n.has("capacity_events")) {
        const Node ce = n.at("capacity_events");
        double last = 0.0;
        for (std::size_t k = 0; k < ce.array_size(); ++k) {
            const Node e = ce.item(k);
            e.expect_object({"device", "time", "p_max_mw"});
            const std::string id = e.at("device").string();
            const int dev = f.device_index(id);
            if (dev < 0) throw ConfigError(e.child_path("device"), "unknown device " + id);
            const auto& cap = f.devices[static_cast<std::size_t>(dev)].p_capacity;
            if (!cap) throw ConfigError(e.child_path("device"), "device " + id + " has no capacity interval");
            const double p = nonnegative(e.at("p_max_mw"));
            if (p < cap->lo || p > cap->hi) throw ConfigError(e.child_path("p_max_mw"), "outside the capacity interval");
            const double t = nonnegative(e.at("time"));
            if (t < last) throw ConfigError(e.child_path("time"), "events must be time-sorted");
            last = t;
            s.capacity.push_back({t, dev, p});
        }
    }
    if (n.has("adaptation")) {
        const std::string a = n.at("adaptation").string();
        if (a == "none") s.adaptation = AdaptationMode::none;
        else if (a == "centralized") s.adaptation = AdaptationMode::centralized;
        else if (a == "consensus") s.adaptation = AdaptationMode::consensus;
        else throw ConfigError(n.child_path("adaptation"), "expected none, centralized or consensus");
        if (s.adaptation == AdaptationMode::consensus && graph.empty())
            throw ConfigError("graph", "consensus adaptation needs a communication graph");
    }
    s.graph = graph;
    if (n.has("grid")) {
        const Node g = n.at("grid");
        if (g.raw().is_string()) {
            if (g.string() != "open_loop") throw ConfigError(g.path(), "expected open_loop or a surrogate object");
        } else {
            g.expect_object({"H", "D_load", "v_sens"});
            s.grid.enabled = true;
            s.grid.H = g.has("H") ? positive(g.at("H")) : s.grid.H;
            s.grid.D_load = g.has("D_load") ? positive(g.at("D_load")) : s.grid.D_load;
            s.grid.v_sens = g.has("v_sens") ? nonnegative(g.at("v_sens")) : s.grid.v_sens;
        }
    }
    if (n.has("clamp")) s.clamp = n.at("clamp").boolean();
    if (n.has("integrator")) {
        const std::string i = n.at("integrator").string();
        if (i == "zoh") s.integrator = Integrator::zoh;
        else if (i == "rk4") s.integrator = Integrator::rk4;
        else throw ConfigError(n.child_path("integrator"), "expected zoh or rk4");
    }
    if (n.has("rk4_substeps")) s.rk4_substeps = n.at("rk4_substeps").integer();

    // The fixed step must resolve the fastest time constant of the fleet.
    double tmin = f.tau_c > 0.0 ? f.tau_c : std::numeric_limits<double>::infinity();
    for (const auto& d : f.desired)
        if (d) tmin = std::min(tmin, d->tau);
    for (const auto& d : f.devices)
        for (const auto& r : d.roles)
            if (r.active && r.tau > 0.0) tmin = std::min(tmin, r.tau);
    if (s.dt > tmin / 10.0 * (1.0 + 1e-9))
        throw ConfigError(n.child_path("dt"), "must not exceed a tenth of the fastest time constant");
    return s;
}

}  // namespace config_detail

inline Config parse_config(const nlohmann::json& j) {
    using config_detail::Node;
    const Node root(j, "");
    root.expect_object({"schema", "name", "rating_mva", "tau_c", "mode", "desired", "devices", "graph", "scenarios"});
    if (root.at("schema").string() != kConfigSchema)
        throw ConfigError("schema", std::string("unsupported schema, expected ") + kConfigSchema);
    Config c;
    FleetSpec& f = c.fleet;
    f.name = root.has("name") ? root.at("name").string() : "fleet";
    f.rating = config_detail::positive(root.at("rating_mva"));
    f.tau_c = config_detail::positive(root.at("tau_c"));
    if (root.has("mode")) {
        const std::string m = root.at("mode").string();
        if (m == "spf") f.mode = Disaggregation::spf;
        else if (m == "dpf") f.mode = Disaggregation::dpf;
        else if (m == "adpf") f.mode = Disaggregation::adpf;
        else throw ConfigError("mode", "expected spf, dpf or adpf");
    }
    const Node des = root.at("desired");
    des.expect_object({"fp", "vq"});
    if (des.has("fp")) f.desired[0] = config_detail::parse_desired(des.at("fp"));
    if (des.has("vq")) f.desired[1] = config_detail::parse_desired(des.at("vq"));
    if (!f.desired[0] && !f.desired[1]) throw ConfigError("desired", "at least one channel is required");

    const Node devs = root.at("devices");
    if (devs.array_size() == 0) throw ConfigError("devices", "at least one device is required");
    for (std::size_t k = 0; k < devs.array_size(); ++k) {
        DeviceSpec d = config_detail::parse_device(devs.item(k));
        if (f.device_index(d.id) >= 0) throw ConfigError(devs.item(k).child_path("id"), "duplicate device " + d.id);
        for (ChannelKind ch : {ChannelKind::fp, ChannelKind::vq})
            if (d.role(ch).active && !f.desired[static_cast<std::size_t>(ch)])
                throw ConfigError(devs.item(k).child_path(std::string("roles.") + to_string(ch)),
                                  "channel is not part of the desired behavior");
        f.devices.push_back(std::move(d));
    }
    if (root.has("graph")) {
        const Node g = root.at("graph");
        for (std::size_t k = 0; k < g.array_size(); ++k) {
            const Node e = g.item(k);
            if (e.array_size() != 2) throw ConfigError(e.path(), "expected a pair of device ids");
            const int a = f.device_index(e.item(0).string()), b = f.device_index(e.item(1).string());
            if (a < 0) throw ConfigError(e.item(0).path(), "unknown device " + e.item(0).string());
            if (b < 0) throw ConfigError(e.item(1).path(), "unknown device " + e.item(1).string());
            if (a == b) throw ConfigError(e.path(), "self loops are not allowed");
            c.graph.emplace_back(a, b);
        }
    }
    if (root.has("scenarios")) {
        const Node s = root.at("scenarios");
        for (std::size_t k = 0; k < s.array_size(); ++k)
            c.scenarios.push_back(config_detail::parse_scenario(s.item(k), f, c.graph));
    }
    return c;
}

inline Config parse_config_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("", std::string("malformed JSON: ") + e.what());
    }
    return parse_config(j);
}

inline Config load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("", "cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

// Controllers of a design in a document that reloads bit-exactly.
inline nlohmann::json controllers_to_json(const FleetDesign& d) {
    using json = nlohmann::json;
    auto mat = [](const MatrixXd& M) {
        json rows = json::array();
        for (Eigen::Index r = 0; r < M.rows(); ++r) {
            json row = json::array();
            for (Eigen::Index c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
            rows.push_back(row);
        }
        return rows;
    };
    auto vec = [](const VectorXd& v) {
        json a = json::array();
        for (Eigen::Index k = 0; k < v.size(); ++k) a.push_back(v(k));
        return a;
    };
    json out;
    out["schema"] = kControllerSchema;
    out["fleet"] = d.spec.name;
    out["tau_c"] = d.tau_c;
    out["mode"] = to_string(d.spec.mode);
    json devs = json::array();
    for (const auto& dd : d.devices) {
        const auto& dev = d.spec.devices[static_cast<std::size_t>(dd.device)];
        json e;
        e["id"] = dev.id;
        e["fixed"] = !dd.controllable();
        json ch = json::array();
        for (auto c : dd.channels) ch.push_back(to_string(c));
        e["channels"] = ch;
        json par = json::array();
        for (std::size_t a = 0; a < dd.adpm.size(); ++a) {
            json p;
            p["channel"] = to_string(dd.channels[a]);
            p["kind"] = to_string(dd.adpm[a].kind);
            p["dc_gain_nominal"] = dd.adpm[a].dc_gain(d.nominal_theta());
            par.push_back(p);
        }
        e["participation"] = par;
        if (dd.controllable()) {
            const auto& cs = dd.ctrl;
            e["params"] = cs.box.names;
            e["lo"] = vec(cs.box.lo);
            e["hi"] = vec(cs.box.hi);
            e["gamma"] = cs.gamma;
            e["iterations"] = cs.iterations;
            e["Q"] = mat(cs.Q);
            json verts = json::array(), gains = json::array();
            for (std::size_t l = 0; l < cs.K.size(); ++l) {
                verts.push_back(vec(cs.vertices[l]));
                gains.push_back(mat(cs.K[l]));
            }
            e["vertices"] = verts;
            e["K"] = gains;
            json lm = json::array();
            for (const auto& r : cs.lmis) lm.push_back({{"family", r.family}, {"max_eig", r.max_eig}});
            e["lmis"] = lm;
        }
        devs.push_back(e);
    }
    out["devices"] = devs;
    return out;
}

// Installs previously serialized controllers into an assembled design. Boxes
// and dimensions must agree with the current configuration.
inline void load_controllers(FleetDesign& d, const nlohmann::json& j) {
    using config_detail::Node;
    const Node root(j, "controllers");
    if (!j.is_object() || !j.contains("schema") || j.at("schema") != kControllerSchema)
        throw ConfigError("controllers.schema", std::string("expected ") + kControllerSchema);
    const Node devs = root.at("devices");
    auto read_mat = [](const Node& n, int rows, int cols) {
        if (static_cast<int>(n.array_size()) != rows) throw ConfigError(n.path(), "dimension mismatch");
        MatrixXd M(rows, cols);
        for (int r = 0; r < rows; ++r) {
            const Node row = n.item(static_cast<std::size_t>(r));
            if (static_cast<int>(row.array_size()) != cols) throw ConfigError(row.path(), "dimension mismatch");
            for (int c = 0; c < cols; ++c) M(r, c) = row.item(static_cast<std::size_t>(c)).number();
        }
        return M;
    };
    auto read_vec = [](const Node& n, int size) {
        if (static_cast<int>(n.array_size()) != size) throw ConfigError(n.path(), "dimension mismatch");
        VectorXd v(size);
        for (int k = 0; k < size; ++k) v(k) = n.item(static_cast<std::size_t>(k)).number();
        return v;
    };
    for (auto& dd : d.devices) {
        const auto& dev = d.spec.devices[static_cast<std::size_t>(dd.device)];
        if (dev.fixed()) continue;
        std::optional<Node> found;
        for (std::size_t k = 0; k < devs.array_size(); ++k)
            if (devs.item(k).at("id").string() == dev.id) found.emplace(devs.item(k));
        if (!found) throw ConfigError(devs.path(), "no controller for device " + dev.id);
        const Node& e = *found;
        const ThetaBox& box = dd.aug.sys.box;
        const int dim = box.dim(), nz = dd.aug.states(), m = dd.aug.sys.inputs();
        const VectorXd lo = read_vec(e.at("lo"), dim), hi = read_vec(e.at("hi"), dim);
        if (lo != box.lo || hi != box.hi) throw ConfigError(e.child_path("lo"), "parameter box differs from the configuration");
        ControllerSet cs;
        cs.box = box;
        cs.gamma = e.num("gamma");
        cs.iterations = e.at("iterations").integer();
        cs.Q = read_mat(e.at("Q"), nz, nz);
        const Node verts = e.at("vertices"), gains = e.at("K");
        const auto expect = vertex_enumerate(box);
        if (verts.array_size() != expect.size() || gains.array_size() != expect.size())
            throw ConfigError(e.child_path("K"), "vertex count differs from the parameter box");
        for (std::size_t l = 0; l < expect.size(); ++l) {
            cs.vertices.push_back(read_vec(verts.item(l), dim));
            cs.K.push_back(read_mat(gains.item(l), m, nz));
        }
        if (e.has("lmis")) {
            const Node lm = e.at("lmis");
            for (std::size_t k = 0; k < lm.array_size(); ++k)
                cs.lmis.push_back({lm.item(k).at("family").string(), lm.item(k).num("max_eig")});
        }
        dd.ctrl = std::move(cs);
    }
}

}  // namespace dvpp
