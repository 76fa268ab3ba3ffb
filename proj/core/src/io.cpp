#include "ddpc/io.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "ddpc/error.hpp"
#include "json.hpp"

namespace ddpc {

namespace {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;
using nlohmann::json;

constexpr const char* kModelFormat = "ddpc-models";
constexpr int kModelVersion = 1;

std::string num(double v) { return fmt::format("{}", v); } // shortest round-trip

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    boost::split(out, line, boost::is_any_of(","));
    for (auto& s : out) boost::trim(s);
    return out;
}

double parse_double(const std::string& s, const std::string& where) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw IoError(fmt::format("{}: cannot parse '{}' as a number", where, s));
    }
}

Eigen::VectorXd parse_list(const std::string& s, const std::string& where) {
    std::vector<std::string> parts = split_csv_line(s);
    Eigen::VectorXd v(static_cast<Index>(parts.size()));
    for (std::size_t i = 0; i < parts.size(); ++i) v(static_cast<Index>(i)) = parse_double(parts[i], where);
    return v;
}

std::string join_list(const Eigen::VectorXd& v) {
    std::string s;
    for (Index i = 0; i < v.size(); ++i) {
        if (i) s += ", ";
        s += num(v(i));
    }
    return s;
}

json matrix_json(const Eigen::MatrixXd& M) {
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(M.size()));
    for (Index r = 0; r < M.rows(); ++r) {
        for (Index c = 0; c < M.cols(); ++c) data.push_back(M(r, c));
    }
    return json{{"rows", M.rows()}, {"cols", M.cols()}, {"data", std::move(data)}};
}

Eigen::MatrixXd matrix_from_json(const json& j, const std::string& name) {
    const auto rows = j.at("rows").get<Index>();
    const auto cols = j.at("cols").get<Index>();
    const auto& data = j.at("data");
    if (rows < 0 || cols < 0 || static_cast<Index>(data.size()) != rows * cols) {
        throw IoError(fmt::format("model file: matrix '{}' has inconsistent size", name));
    }
    Eigen::MatrixXd M(rows, cols);
    std::size_t k = 0;
    for (Index r = 0; r < rows; ++r) {
        for (Index c = 0; c < cols; ++c) M(r, c) = data[k++].get<double>();
    }
    return M;
}

json config_json(const HankelConfig& c) {
    return json{{"tau_p", c.tau_p}, {"tau_f", c.tau_f}, {"n_samples", c.n_samples}};
}

HankelConfig config_from_json(const json& j) {
    HankelConfig c;
    c.tau_p = j.at("tau_p").get<Index>();
    c.tau_f = j.at("tau_f").get<Index>();
    c.n_samples = j.at("n_samples").get<Index>();
    c.validate();
    return c;
}

json hankel_json(const HankelMatrix& h) {
    return json{{"channels", h.channels}, {"t0", h.t0}, {"t1", h.t1}, {"values", matrix_json(h.values)}};
}

HankelMatrix hankel_from_json(const json& j, const std::string& name) {
    HankelMatrix h;
    h.channels = j.at("channels").get<Index>();
    h.t0 = j.at("t0").get<Index>();
    h.t1 = j.at("t1").get<Index>();
    h.values = matrix_from_json(j.at("values"), name);
    return h;
}

} // namespace

void write_text_file(const std::string& path, const std::string& content) {
    const fs::path p(path);
    std::error_code ec;
    if (p.has_parent_path()) fs::create_directories(p.parent_path(), ec);
    if (ec) throw IoError(fmt::format("{}: cannot create directory: {}", p.parent_path().string(), ec.message()));
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(fmt::format("{}: cannot open for writing", path));
    out << content;
    out.close();
    if (!out) throw IoError(fmt::format("{}: write failed", path));
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(fmt::format("{}: cannot open for reading", path));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string trajectory_csv(const Trajectory& u, const Trajectory& y) {
    if (u.length() != y.length()) throw DimensionError("trajectory CSV: u and y lengths differ");
    std::string s = "t_s";
    for (Index i = 0; i < u.channels(); ++i) s += fmt::format(",u{}", i + 1);
    for (Index i = 0; i < y.channels(); ++i) s += fmt::format(",y{}", i + 1);
    s += "\n";
    for (Index t = 0; t < u.length(); ++t) {
        s += fmt::format("{:.6f}", u.time(t));
        for (Index i = 0; i < u.channels(); ++i) s += "," + num(u.data()(i, t));
        for (Index i = 0; i < y.channels(); ++i) s += "," + num(y.data()(i, t));
        s += "\n";
    }
    return s;
}

void write_trajectory_csv(const std::string& path, const Trajectory& u, const Trajectory& y) {
    write_text_file(path, trajectory_csv(u, y));
}

std::pair<Trajectory, Trajectory> read_trajectory_csv(const std::string& path) {
    std::istringstream in(read_text_file(path));
    std::string line;
    if (!std::getline(in, line)) throw IoError(fmt::format("{}: empty file", path));
    const std::vector<std::string> header = split_csv_line(line);
    if (header.empty() || header[0] != "t_s") throw IoError(fmt::format("{}: first column must be t_s", path));
    std::map<Index, std::size_t> ucol;
    std::map<Index, std::size_t> ycol;
    for (std::size_t c = 1; c < header.size(); ++c) {
        const std::string& h = header[c];
        if (h.size() < 2 || (h[0] != 'u' && h[0] != 'y')) continue;
        const Index k = static_cast<Index>(parse_double(h.substr(1), path)) - 1;
        (h[0] == 'u' ? ucol : ycol)[k] = c;
    }
    const auto m = static_cast<Index>(ucol.size());
    const auto p = static_cast<Index>(ycol.size());
    if (m == 0 || p == 0) throw IoError(fmt::format("{}: needs u<k> and y<k> columns", path));
    if (ucol.rbegin()->first != m - 1 || ycol.rbegin()->first != p - 1) {
        throw IoError(fmt::format("{}: channel columns must be numbered from 1 without gaps", path));
    }

    std::vector<std::vector<double>> rows;
    std::vector<double> times;
    Index lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        boost::trim(line);
        if (line.empty()) continue;
        const std::vector<std::string> cells = split_csv_line(line);
        if (cells.size() != header.size()) {
            throw IoError(fmt::format("{}:{}: expected {} columns, got {}", path, lineno, header.size(), cells.size()));
        }
        std::vector<double> row(cells.size());
        for (std::size_t c = 0; c < cells.size(); ++c) row[c] = parse_double(cells[c], fmt::format("{}:{}", path, lineno));
        times.push_back(row[0]);
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw IoError(fmt::format("{}: no samples", path));
    const double Ts = rows.size() > 1 ? (times.back() - times.front()) / static_cast<double>(rows.size() - 1)
                                      : kDefaultSamplePeriod;
    if (!(Ts > 0.0)) throw IoError(fmt::format("{}: t_s must increase", path));
    const auto n = static_cast<Index>(rows.size());
    Eigen::MatrixXd U(m, n);
    Eigen::MatrixXd Y(p, n);
    for (Index t = 0; t < n; ++t) {
        const auto& r = rows[static_cast<std::size_t>(t)];
        for (const auto& [k, c] : ucol) U(k, t) = r[c];
        for (const auto& [k, c] : ycol) Y(k, t) = r[c];
    }
    return {Trajectory(std::move(U), Ts), Trajectory(std::move(Y), Ts)};
}

std::string plant_spec_ini(const PlantSpec& spec) {
    std::string s = "[plant]\n";
    s += fmt::format("sample_period = {}\n", num(spec.sample_period));
    s += fmt::format("saturation_limit = {}\n", spec.saturation_limit ? num(*spec.saturation_limit) : "none");
    s += fmt::format("seed = {}\n", spec.seed);
    s += fmt::format("modes = {}\n", spec.modes.size());
    for (std::size_t k = 0; k < spec.modes.size(); ++k) {
        const ModeSpec& mode = spec.modes[k];
        s += fmt::format("\n[mode{}]\n", k + 1);
        s += fmt::format("freq_hz = {}\n", num(mode.freq_hz));
        s += fmt::format("damping_ratio = {}\n", num(mode.damping_ratio));
        s += fmt::format("input_residues = {}\n", join_list(mode.input_residues));
        s += fmt::format("output_residues = {}\n", join_list(mode.output_residues));
        s += fmt::format("disturbance_residues = {}\n", join_list(mode.disturbance_residues));
    }
    return s;
}

void save_plant_spec(const std::string& path, const PlantSpec& spec) { write_text_file(path, plant_spec_ini(spec)); }

PlantSpec load_plant_spec(const std::string& path) {
    pt::ptree tree;
    try {
        pt::read_ini(path, tree);
    } catch (const pt::ini_parser_error& e) {
        throw IoError(fmt::format("{}: {}", path, e.what()));
    }
    PlantSpec spec;
    try {
        const pt::ptree& plant = tree.get_child("plant");
        spec.sample_period = parse_double(plant.get<std::string>("sample_period", "0.1"), path);
        const std::string sat = boost::algorithm::to_lower_copy(plant.get<std::string>("saturation_limit", "none"));
        if (sat != "none" && !sat.empty()) spec.saturation_limit = parse_double(sat, path);
        spec.seed = plant.get<std::uint64_t>("seed", 0);
        const auto n_modes = plant.get<std::size_t>("modes");
        for (std::size_t k = 1; k <= n_modes; ++k) {
            const std::string section = fmt::format("mode{}", k);
            const pt::ptree& node = tree.get_child(section);
            const std::string where = fmt::format("{} [{}]", path, section);
            ModeSpec mode;
            mode.freq_hz = parse_double(node.get<std::string>("freq_hz"), where);
            mode.damping_ratio = parse_double(node.get<std::string>("damping_ratio"), where);
            mode.input_residues = parse_list(node.get<std::string>("input_residues"), where);
            mode.output_residues = parse_list(node.get<std::string>("output_residues"), where);
            mode.disturbance_residues = parse_list(node.get<std::string>("disturbance_residues", ""), where);
            spec.modes.push_back(std::move(mode));
        }
    } catch (const pt::ptree_error& e) {
        throw IoError(fmt::format("{}: {}", path, e.what()));
    }
    if (spec.modes.empty()) throw ConfigError(fmt::format("{}: plant needs at least one mode", path));
    return spec;
}

void save_models(const std::string& path, const TrainedModels& models) {
    json j;
    j["format"] = kModelFormat;
    j["version"] = kModelVersion;
    j["tpc"] = json{{"config", config_json(models.tpc.config)},
                    {"m", models.tpc.m},
                    {"p", models.tpc.p},
                    {"rank", models.tpc.rank},
                    {"H_p", matrix_json(models.tpc.H_p)},
                    {"H_u", matrix_json(models.tpc.H_u)}};
    j["single_arx"] = json{{"config", config_json(models.arx.config)},
                           {"m", models.arx.m},
                           {"p", models.arx.p},
                           {"rank", models.arx.rank},
                           {"phi", matrix_json(models.arx.phi)},
                           {"residual_std", matrix_json(models.arx.residual_std)}};
    j["deepc"] = json{{"config", config_json(models.deepc.config)},
                      {"m", models.deepc.m},
                      {"p", models.deepc.p},
                      {"U_p", hankel_json(models.deepc.U_p)},
                      {"Y_p", hankel_json(models.deepc.Y_p)},
                      {"U_f", hankel_json(models.deepc.U_f)},
                      {"Y_f", hankel_json(models.deepc.Y_f)}};
    write_text_file(path, j.dump(1) + "\n");
}

TrainedModels load_models(const std::string& path) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw IoError(fmt::format("{}: {}", path, e.what()));
    }
    try {
        if (j.at("format").get<std::string>() != kModelFormat) throw IoError(fmt::format("{}: not a model file", path));
        if (j.at("version").get<int>() != kModelVersion) {
            throw IoError(fmt::format("{}: unsupported model file version {}", path, j.at("version").get<int>()));
        }
        TrainedModels out;
        const json& t = j.at("tpc");
        out.tpc.config = config_from_json(t.at("config"));
        out.tpc.m = t.at("m").get<Index>();
        out.tpc.p = t.at("p").get<Index>();
        out.tpc.rank = t.at("rank").get<Index>();
        out.tpc.H_p = matrix_from_json(t.at("H_p"), "tpc.H_p");
        out.tpc.H_u = matrix_from_json(t.at("H_u"), "tpc.H_u");

        const json& a = j.at("single_arx");
        out.arx.config = config_from_json(a.at("config"));
        out.arx.m = a.at("m").get<Index>();
        out.arx.p = a.at("p").get<Index>();
        out.arx.rank = a.at("rank").get<Index>();
        out.arx.phi = matrix_from_json(a.at("phi"), "single_arx.phi");
        out.arx.residual_std = matrix_from_json(a.at("residual_std"), "single_arx.residual_std");
        const PredictorMatrices arx = expand_single_arx(out.arx.phi, out.arx.config, out.arx.p, out.arx.m);
        out.arx.H_p = arx.H_p;
        out.arx.H_u = arx.H_u;

        const json& d = j.at("deepc");
        out.deepc.config = config_from_json(d.at("config"));
        out.deepc.m = d.at("m").get<Index>();
        out.deepc.p = d.at("p").get<Index>();
        out.deepc.U_p = hankel_from_json(d.at("U_p"), "deepc.U_p");
        out.deepc.Y_p = hankel_from_json(d.at("Y_p"), "deepc.Y_p");
        out.deepc.U_f = hankel_from_json(d.at("U_f"), "deepc.U_f");
        out.deepc.Y_f = hankel_from_json(d.at("Y_f"), "deepc.Y_f");

        const Index tf = out.tpc.config.tau_f;
        const Index tp = out.tpc.config.tau_p;
        const Index p = out.tpc.p;
        const Index m = out.tpc.m;
        if (out.tpc.H_p.rows() != p * tf || out.tpc.H_p.cols() != (p + m) * tp || out.tpc.H_u.rows() != p * tf ||
            out.tpc.H_u.cols() != m * tf) {
            throw IoError(fmt::format("{}: TPC matrices do not match the stored horizons", path));
        }
        const Index nc = out.deepc.U_p.n_col();
        for (const HankelMatrix* h : {&out.deepc.Y_p, &out.deepc.U_f, &out.deepc.Y_f}) {
            if (h->n_col() != nc) throw IoError(fmt::format("{}: DeePC blocks have different column counts", path));
        }
        return out;
    } catch (const json::exception& e) {
        throw IoError(fmt::format("{}: {}", path, e.what()));
    }
}

std::string episode_csv(const EpisodeLog& log) {
    const Index p = log.y.rows();
    const Index m = log.u.rows();
    std::string s = "t_s";
    for (Index i = 0; i < p; ++i) s += fmt::format(",y{}", i + 1);
    for (Index i = 0; i < p; ++i) s += fmt::format(",yf{}", i + 1);
    for (Index i = 0; i < m; ++i) s += fmt::format(",u{}", i + 1);
    s += ",solve_ms,iters,status\n";
    for (Index t = 0; t < log.t.size(); ++t) {
        s += fmt::format("{:.6f}", log.t(t));
        for (Index i = 0; i < p; ++i) s += "," + num(log.y(i, t));
        for (Index i = 0; i < p; ++i) s += "," + num(log.y_filt(i, t));
        for (Index i = 0; i < m; ++i) s += "," + num(log.u(i, t));
        s += fmt::format(",{:.6f},{},{}\n", log.solve_ms(t), log.iterations(t), log.status[static_cast<std::size_t>(t)]);
    }
    return s;
}

void write_episode_csv(const std::string& path, const EpisodeLog& log) { write_text_file(path, episode_csv(log)); }

std::string linearity_csv(const LinearityReport& report) {
    Index p = 0;
    if (!report.rmse.empty() && !report.rmse.front().empty()) p = report.rmse.front().front().size();
    std::string s = "combo,scale";
    for (Index i = 0; i < p; ++i) s += fmt::format(",rmse_y{}", i + 1);
    s += "\n";
    for (std::size_t c = 0; c < report.combos.size(); ++c) {
        for (std::size_t k = 0; k < report.scales.size(); ++k) {
            s += fmt::format("{},{}", combo_label(report.combos[c]), num(report.scales[k]));
            for (Index i = 0; i < p; ++i) s += "," + num(report.rmse[c][k](i));
            s += "\n";
        }
    }
    return s;
}

} // namespace ddpc
