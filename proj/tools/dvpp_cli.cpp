#include "dvpp/config.hpp"
#include "dvpp/report.hpp"
#include "dvpp/sim.hpp"
#include "dvpp/verify.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

namespace fs = std::filesystem;
using namespace dvpp;

namespace {

struct Options {
    std::string command;
    std::string config;
    std::string out = ".";
    std::uint64_t seed = 1;
    int grid = 400;
    bool strict = false;
    std::string controllers;
    std::string scenario;
    int samples = 20;
};

// Writes through a temporary file so readers never see partial output.
void write_file(const fs::path& path, const std::string& text) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream o(tmp, std::ios::binary);
        if (!o) throw Error("cannot write " + tmp.string());
        o << text;
        if (!o) throw Error("cannot write " + tmp.string());
    }
    fs::rename(tmp, path);
}

FleetDesign build(const Config& cfg, const Options& opt) {
    if (opt.controllers.empty()) return design_fleet(cfg.fleet, opt.strict);
    FleetDesign d = plan_fleet(cfg.fleet, opt.strict);
    assemble_devices(d);
    std::ifstream in(opt.controllers);
    if (!in) throw ConfigError("controllers", "cannot read " + opt.controllers);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("controllers", std::string("malformed JSON: ") + e.what());
    }
    load_controllers(d, j);
    return d;
}

const Scenario& pick_scenario(const Config& cfg, const Options& opt) {
    if (!opt.scenario.empty()) return cfg.scenario(opt.scenario);
    if (cfg.scenarios.empty()) throw ConfigError("scenarios", "configuration defines no scenario");
    return cfg.scenarios.front();
}

int cmd_design(const Config& cfg, const Options& opt) {
    const FleetDesign d = build(cfg, opt);
    write_file(fs::path(opt.out) / "controllers.json", controllers_to_json(d).dump(1) + "\n");
    for (const auto& dd : d.devices) {
        const auto& dev = cfg.fleet.devices[static_cast<std::size_t>(dd.device)];
        std::cout << dev.id << ": ";
        if (!dd.controllable()) {
            std::cout << "fixed\n";
            continue;
        }
        std::cout << "gamma " << fmt_num(dd.ctrl.gamma) << ", " << dd.ctrl.K.size() << " vertices\n";
    }
    return 0;
}

int cmd_verify(const Config& cfg, const Options& opt) {
    const FleetDesign d = build(cfg, opt);
    const VerifyReport r = verify_design(d, opt.samples, opt.seed, FreqGrid::logspace(1e-3, 1e3, opt.grid));
    nlohmann::json j;
    j["ok"] = r.ok;
    for (const auto& c : r.channels) {
        j["participation_residual"][to_string(c.channel)] = c.max_residual;
        std::cout << "participation residual " << to_string(c.channel) << ": " << fmt_num(c.max_residual) << "\n";
    }
    for (const auto& c : r.devices) {
        j["devices"][c.id] = {{"gamma", c.gamma},   {"worst_lmi_eig", c.worst_lmi}, {"samples", c.samples},
                              {"hurwitz", c.hurwitz}, {"worst_hinf_over_gamma", c.worst_ratio}, {"ok", c.ok}};
        std::cout << c.id << ": gamma " << fmt_num(c.gamma) << ", worst LMI eigenvalue " << fmt_num(c.worst_lmi)
                  << ", Hurwitz " << c.hurwitz << "/" << c.samples << ", max norm/gamma " << fmt_num(c.worst_ratio)
                  << (c.ok ? "" : " FAILED") << "\n";
    }
    write_file(fs::path(opt.out) / "verify.json", j.dump(1) + "\n");
    return r.ok ? 0 : 3;
}

int cmd_simulate(const Config& cfg, const Options& opt) {
    const FleetDesign d = build(cfg, opt);
    const Scenario& sc = pick_scenario(cfg, opt);
    const SimTrace tr = simulate(d, sc);
    const Metrics m = metrics(tr, sc.grid.enabled);
    write_file(fs::path(opt.out) / ("trace_" + sc.name + ".csv"), trace_table(tr).str());
    const std::string mj = metrics_json(tr, m).dump(1);
    write_file(fs::path(opt.out) / ("metrics_" + sc.name + ".json"), mj + "\n");
    std::cout << mj << "\n";
    return 0;
}

int cmd_bode(const Config& cfg, const Options& opt) {
    FleetDesign d = plan_fleet(cfg.fleet, opt.strict);
    write_file(fs::path(opt.out) / "bode.csv",
               bode_table(d, d.nominal_theta(), FreqGrid::logspace(1e-3, 1e3, opt.grid)).str());
    return 0;
}

int cmd_consensus(const Config& cfg, const Options& opt) {
    const FleetDesign d = plan_fleet(cfg.fleet, opt.strict);
    const Scenario& sc = pick_scenario(cfg, opt);
    for (const auto& plan : d.plans) {
        if (plan.lpf_devices.size() < 2) continue;
        CommGraph g;
        g.n = static_cast<int>(plan.lpf_devices.size());
        auto local = [&](int dev) {
            for (std::size_t k = 0; k < plan.lpf_devices.size(); ++k)
                if (plan.lpf_devices[k] == dev) return static_cast<int>(k);
            return -1;
        };
        for (auto [a, b] : cfg.graph)
            if (local(a) >= 0 && local(b) >= 0) g.edges.emplace_back(local(a), local(b));
        CapacityProfile prof;
        std::vector<double> p = capacity_point(cfg.fleet, 0);
        prof.times.push_back(0.0);
        prof.values.push_back(channel_capacity(cfg.fleet, plan, p));
        for (const auto& e : sc.capacity) {
            p[static_cast<std::size_t>(e.device)] = e.p_max;
            prof.times.push_back(e.time);
            prof.values.push_back(channel_capacity(cfg.fleet, plan, p));
        }
        const ConsensusTrace tr =
            consensus_simulate(g, prof, allocate(prof.values.front(), plan.fixed_dc), sc.dt, sc.horizon, plan.fixed_dc);
        CsvTable t;
        t.column("t_s", "s", tr.t);
        for (std::size_t k = 0; k < plan.lpf_slots.size(); ++k) {
            std::vector<double> v;
            for (const auto& th : tr.theta) v.push_back(th(static_cast<int>(k)));
            t.column("theta_" + d.slots[static_cast<std::size_t>(plan.lpf_slots[k])].name, "1", v);
        }
        write_file(fs::path(opt.out) / (std::string("consensus_") + to_string(plan.channel) + ".csv"), t.str());
    }
    return 0;
}

int cmd_compare(const Config& cfg, const Options& opt) {
    const Scenario& sc = pick_scenario(cfg, opt);
    CsvTable summary;
    std::vector<double> mode_col, rms, nadir, ss, settle;
    for (Disaggregation mode : {Disaggregation::spf, Disaggregation::dpf, Disaggregation::adpf}) {
        FleetSpec f = cfg.fleet;
        f.mode = mode;
        const FleetDesign d = design_fleet(f, opt.strict);
        const SimTrace tr = simulate(d, sc);
        const Metrics m = metrics(tr, sc.grid.enabled);
        write_file(fs::path(opt.out) / ("compare_" + std::string(to_string(mode)) + ".csv"), trace_table(tr).str());
        mode_col.push_back(static_cast<double>(mode));
        rms.push_back(m.rms_aggregate_error);
        nadir.push_back(m.nadir);
        ss.push_back(m.steady_state_deviation);
        settle.push_back(m.settling_time);
        std::cout << to_string(mode) << ": rms aggregate error " << fmt_num(m.rms_aggregate_error) << " pu, nadir "
                  << fmt_num(m.nadir) << " pu, steady state " << fmt_num(m.steady_state_deviation) << " pu\n";
    }
    // Mode codes: 0 spf, 1 dpf, 2 adpf.
    summary.column("mode", "0 spf|1 dpf|2 adpf", mode_col);
    summary.column("rms_aggregate_error_pu", "pu", rms);
    summary.column("nadir_pu", "pu", nadir);
    summary.column("steady_state_pu", "pu", ss);
    summary.column("settling_time_s", "s", settle);
    write_file(fs::path(opt.out) / "compare_summary.csv", summary.str());
    return 0;
}

int run(const Options& opt) {
    const Config cfg = load_config(opt.config);
    fs::create_directories(opt.out);
    if (opt.command == "design") return cmd_design(cfg, opt);
    if (opt.command == "verify") return cmd_verify(cfg, opt);
    if (opt.command == "simulate") return cmd_simulate(cfg, opt);
    if (opt.command == "bode") return cmd_bode(cfg, opt);
    if (opt.command == "consensus") return cmd_consensus(cfg, opt);
    return cmd_compare(cfg, opt);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dynamic virtual power plant design and simulation"};
    app.require_subcommand(1, 1);
    Options opt;
    const char* help[][2] = {{"design", "disaggregate and synthesize controllers"},
                             {"verify", "check participation, certificates and frozen norms"},
                             {"simulate", "run a scenario and write its trace"},
                             {"bode", "participation factor frequency responses"},
                             {"consensus", "consensus allocation trajectories"},
                             {"compare", "static, dynamic and adaptive participation side by side"}};
    for (const auto& h : help) {
        CLI::App* sub = app.add_subcommand(h[0], h[1]);
        sub->add_option("--config", opt.config, "configuration file")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", opt.out, "output directory");
        sub->add_option("--seed", opt.seed, "seed for sampled parameters");
        sub->add_option("--grid", opt.grid, "frequency grid points")->check(CLI::PositiveNumber);
        sub->add_flag("--strict-participation", opt.strict, "exact participation condition (tau_c = 0)");
        sub->add_option("--controllers", opt.controllers, "reuse controllers written by design");
        sub->add_option("--scenario", opt.scenario, "scenario name (default: first)");
        sub->add_option("--samples", opt.samples, "sampled parameters for verify")->check(CLI::PositiveNumber);
        sub->callback([&opt, name = std::string(h[0])] { opt.command = name; });
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    try {
        return run(opt);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const SynthesisError& e) {
        std::cerr << "synthesis error: " << e.what() << "\n";
        return 3;
    } catch (const SimulationError& e) {
        std::cerr << "simulation error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
}
