#pragma once

#include "dvpp/adpf.hpp"
#include "dvpp/fleet.hpp"
#include "dvpp/sim.hpp"

#include "json.hpp"

#include <cstdio>
#include <numbers>
#include <string>
#include <vector>

namespace dvpp {

// Fixed-format numbers so that identical runs give identical bytes.
inline std::string fmt_num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v == 0.0 ? 0.0 : v);
    return buf;
}

class CsvTable {
public:
    void column(const std::string& name, const std::string& unit, std::vector<double> values) {
        header_.push_back(name + " (" + unit + ")");
        cols_.push_back(std::move(values));
    }

    std::string str() const {
        std::string out;
        for (std::size_t c = 0; c < header_.size(); ++c) out += (c ? "," : "") + header_[c];
        out += '\n';
        const std::size_t rows = cols_.empty() ? 0 : cols_.front().size();
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols_.size(); ++c) out += (c ? "," : "") + fmt_num(cols_[c][r]);
            out += '\n';
        }
        return out;
    }

private:
    std::vector<std::string> header_;
    std::vector<std::vector<double>> cols_;
};

inline std::vector<double> column_of(const MatrixXd& M, Eigen::Index c) {
    std::vector<double> v(static_cast<std::size_t>(M.rows()));
    for (Eigen::Index r = 0; r < M.rows(); ++r) v[static_cast<std::size_t>(r)] = M(r, c);
    return v;
}

inline CsvTable trace_table(const SimTrace& tr) {
    CsvTable t;
    t.column("t_s", "s", tr.t);
    t.column("df_pu", "pu", tr.df);
    t.column("dv_pu", "pu", tr.dv);
    const auto nd = static_cast<Eigen::Index>(tr.devices.size());
    for (Eigen::Index i = 0; i < nd; ++i) t.column("dp_" + tr.devices[static_cast<std::size_t>(i)] + "_pu", "pu", column_of(tr.dp, i));
    for (Eigen::Index i = 0; i < nd; ++i) t.column("dq_" + tr.devices[static_cast<std::size_t>(i)] + "_pu", "pu", column_of(tr.dq, i));
    for (Eigen::Index i = 0; i < nd; ++i)
        t.column("dp_ref_" + tr.devices[static_cast<std::size_t>(i)] + "_pu", "pu", column_of(tr.dp_ref, i));
    for (Eigen::Index i = 0; i < nd; ++i)
        t.column("dq_ref_" + tr.devices[static_cast<std::size_t>(i)] + "_pu", "pu", column_of(tr.dq_ref, i));
    for (Eigen::Index i = 0; i < nd; ++i) t.column("eps_" + tr.devices[static_cast<std::size_t>(i)] + "_pu", "pu", column_of(tr.eps, i));
    for (std::size_t j = 0; j < tr.params.size(); ++j)
        t.column("theta_" + tr.params[j], "1", column_of(tr.theta, static_cast<Eigen::Index>(j)));
    t.column("dp_agg_pu", "pu", tr.dp_agg);
    t.column("dq_agg_pu", "pu", tr.dq_agg);
    t.column("dp_des_pu", "pu", tr.dp_des);
    t.column("dq_des_pu", "pu", tr.dq_des);
    return t;
}

inline nlohmann::json metrics_json(const SimTrace& tr, const Metrics& m) {
    nlohmann::json j;
    j["nadir_pu"] = m.nadir;
    j["settling_time_s"] = m.settling_time;
    j["settled"] = m.settled;
    j["steady_state_deviation_pu"] = m.steady_state_deviation;
    j["rms_aggregate_error_pu"] = m.rms_aggregate_error;
    nlohmann::json dev = nlohmann::json::object();
    for (std::size_t i = 0; i < tr.devices.size(); ++i) dev[tr.devices[i]] = m.rms_matching_error[i];
    j["rms_matching_error_pu"] = dev;
    return j;
}

// Magnitude and phase of every participation factor at one parameter value.
inline CsvTable bode_table(const FleetDesign& d, const VectorXd& theta, const FreqGrid& grid) {
    CsvTable t;
    t.column("omega_rad_s", "rad/s", grid.omega);
    for (const auto& plan : d.plans)
        for (std::size_t k = 0; k < plan.adpf.size(); ++k) {
            const std::string name = d.spec.devices[static_cast<std::size_t>(plan.members[k])].id + "_" + to_string(plan.channel);
            std::vector<double> mag, ph;
            for (double w : grid.omega) {
                const std::complex<double> v = plan.adpf[k](std::complex<double>(0.0, w), theta);
                mag.push_back(std::abs(v));
                ph.push_back(std::arg(v) * 180.0 / std::numbers::pi);
            }
            t.column("mag_" + name, "1", mag);
            t.column("phase_" + name, "deg", ph);
        }
    return t;
}

}  // namespace dvpp
