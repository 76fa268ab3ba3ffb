#include "campaign.hpp"

#include <algorithm>
#include <filesystem>
#include <set>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "ddpc/error.hpp"
#include "ddpc/io.hpp"

namespace ddpc::cli {

namespace {

namespace pt = boost::property_tree;

class Section {
public:
    Section(std::string name, const pt::ptree& tree, std::string source)
        : name_(std::move(name)), tree_(tree), source_(std::move(source)) {}

    void allow(std::initializer_list<const char*> keys) {
        std::set<std::string> ok(keys.begin(), keys.end());
        for (const auto& [key, value] : tree_) {
            if (!ok.count(key)) throw ConfigError(fmt::format("{}: unknown key '{}' in [{}]", source_, key, name_));
        }
    }

    std::optional<std::string> str(const char* key) const {
        auto it = tree_.find(key);
        if (it == tree_.not_found()) return std::nullopt;
        return boost::trim_copy(it->second.data());
    }

    template <class T>
    void read(const char* key, T& out) const {
        const auto s = str(key);
        if (!s) return;
        out = parse<T>(*s, key);
    }

    template <class T>
    T parse(const std::string& s, const char* key) const {
        try {
            if constexpr (std::is_same_v<T, std::string>) {
                return s;
            } else if constexpr (std::is_same_v<T, bool>) {
                const std::string v = boost::to_lower_copy(s);
                if (v == "true" || v == "on" || v == "yes" || v == "1") return true;
                if (v == "false" || v == "off" || v == "no" || v == "0") return false;
                throw std::invalid_argument(s);
            } else if constexpr (std::is_same_v<T, double>) {
                std::size_t pos = 0;
                const double v = std::stod(s, &pos);
                if (pos != s.size()) throw std::invalid_argument(s);
                return v;
            } else if constexpr (std::is_same_v<T, std::uint64_t>) {
                std::size_t pos = 0;
                const auto v = std::stoull(s, &pos);
                if (pos != s.size()) throw std::invalid_argument(s);
                return v;
            } else {
                std::size_t pos = 0;
                const auto v = std::stoll(s, &pos);
                if (pos != s.size()) throw std::invalid_argument(s);
                return static_cast<T>(v);
            }
        } catch (const std::exception&) {
            throw ConfigError(fmt::format("{}: [{}] {} = '{}' is not valid", source_, name_, key, s));
        }
    }

    template <class T>
    std::optional<std::vector<T>> list(const char* key) const {
        const auto s = str(key);
        if (!s) return std::nullopt;
        std::vector<T> out;
        for (const auto& item : split_list(*s)) out.push_back(parse<T>(item, key));
        return out;
    }

    std::optional<Eigen::VectorXd> vec(const char* key) const {
        const auto v = list<double>(key);
        if (!v) return std::nullopt;
        return Eigen::Map<const Eigen::VectorXd>(v->data(), static_cast<Index>(v->size()));
    }

    const std::string& name() const { return name_; }
    const std::string& source() const { return source_; }

private:
    std::string name_;
    const pt::ptree& tree_;
    std::string source_;
};

std::vector<ControllerKind> controller_list(const std::vector<std::string>& names) {
    std::vector<ControllerKind> out;
    for (const auto& n : names) out.push_back(parse_controller_kind(n));
    return out;
}

DisturbanceKind parse_kind(const std::string& s, const std::string& where) {
    const std::string v = boost::to_lower_copy(s);
    if (v == "impulse") return DisturbanceKind::Impulse;
    if (v == "step") return DisturbanceKind::Step;
    if (v == "ramp") return DisturbanceKind::Ramp;
    throw ConfigError(fmt::format("{}: unknown disturbance kind '{}'", where, s));
}

void read_horizon(const Section& s, HankelConfig& h) {
    s.read("tau_p", h.tau_p);
    s.read("tau_f", h.tau_f);
    s.read("n_samples", h.n_samples);
}

void read_weights(const Section& s, WeightSpec& w) {
    if (auto v = s.vec("q_bar")) w.Q_bar = v->asDiagonal();
    if (auto v = s.vec("r_bar")) w.R_bar = v->asDiagonal();
    if (auto v = s.vec("q_norm")) w.Q_norm = *v;
    if (auto v = s.vec("r_norm")) w.R_norm = *v;
    s.read("lambda_g2", w.lambda_g2);
    s.read("lambda_sigma", w.lambda_sigma);
}

} // namespace

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    boost::split(out, s, boost::is_any_of(","));
    for (auto& item : out) boost::trim(item);
    out.erase(std::remove(out.begin(), out.end(), std::string{}), out.end());
    return out;
}

CampaignConfig load_campaign(const std::string& path) {
    pt::ptree tree;
    try {
        pt::read_ini(path, tree);
    } catch (const pt::ini_parser_error& e) {
        throw IoError(fmt::format("{}: {}", path, e.what()));
    }
    CampaignConfig cfg;
    cfg.source = path;
    const std::filesystem::path base = std::filesystem::path(path).parent_path();
    std::vector<std::string> scenario_names;
    std::vector<ScenarioSpec> scenario_defs;

    for (const auto& [name, node] : tree) {
        if (!node.data().empty() && node.empty()) {
            throw ConfigError(fmt::format("{}: key '{}' outside of a section", path, name));
        }
        Section s(name, node, path);
        if (name == "plant") {
            s.allow({"spec", "dominant_damping", "seed", "saturation"});
            if (auto v = s.str("spec")) {
                const std::filesystem::path p(*v);
                cfg.plant_spec_path = p.is_absolute() ? p.string() : (base / p).string();
            }
            s.read("dominant_damping", cfg.dominant_damping);
            s.read("seed", cfg.plant_seed);
            if (s.str("saturation")) {
                bool sat = true;
                s.read("saturation", sat);
                cfg.saturation = sat;
            }
        } else if (name == "excitation") {
            s.allow({"n_samples", "u_std", "u_clip", "noise_std", "seed", "filter", "low_cutoff", "high_cutoff"});
            s.read("n_samples", cfg.excitation.n_samples);
            s.read("u_std", cfg.excitation.u_std);
            s.read("u_clip", cfg.excitation.u_clip);
            s.read("noise_std", cfg.excitation.noise_std);
            s.read("seed", cfg.excitation.seed);
            s.read("filter", cfg.excitation.filter_outputs);
            s.read("low_cutoff", cfg.excitation.filter.low_cutoff);
            s.read("high_cutoff", cfg.excitation.filter.high_cutoff);
        } else if (name == "tpc") {
            s.allow({"tau_p", "tau_f", "n_samples", "q_bar", "r_bar", "q_norm", "r_norm"});
            read_horizon(s, cfg.training.tpc);
            read_weights(s, cfg.controllers.tpc_weights);
        } else if (name == "deepc") {
            s.allow({"tau_p", "tau_f", "n_samples", "q_bar", "r_bar", "q_norm", "r_norm", "lambda_g2", "lambda_sigma"});
            read_horizon(s, cfg.training.deepc);
            read_weights(s, cfg.controllers.deepc_weights);
        } else if (name == "bounds") {
            s.allow({"u_limit", "y_limit"});
            double u_lim = 0.1;
            s.read("u_limit", u_lim);
            if (!(u_lim > 0.0)) throw ConfigError(fmt::format("{}: [bounds] u_limit must be > 0", path));
            cfg.controllers.bounds = OcpBounds::symmetric(3, 3, u_lim);
            if (s.str("y_limit")) {
                double y_lim = 0.0;
                s.read("y_limit", y_lim);
                cfg.controllers.bounds.y_lb.setConstant(-y_lim);
                cfg.controllers.bounds.y_ub.setConstant(y_lim);
            }
        } else if (name == "run") {
            s.allow({"controllers", "scenarios", "noise_seeds", "duration", "divergence_threshold",
                     "expect_divergence"});
            if (auto v = s.list<std::string>("controllers")) cfg.run_controllers = controller_list(*v);
            if (auto v = s.list<std::string>("scenarios")) scenario_names = *v;
            if (auto v = s.list<std::uint64_t>("noise_seeds")) cfg.noise_seeds = *v;
            s.read("duration", cfg.duration);
            s.read("divergence_threshold", cfg.divergence_threshold);
            if (auto v = s.list<std::string>("expect_divergence")) cfg.expect_divergence = controller_list(*v);
        } else if (boost::starts_with(name, "scenario.")) {
            s.allow({"kind", "magnitude", "first_swing", "at", "noise_std"});
            ScenarioSpec sc;
            sc.name = name.substr(9);
            if (auto v = s.str("kind")) sc.kind = parse_kind(*v, path);
            if (auto v = s.str("magnitude"); v && boost::to_lower_copy(*v) != "auto") {
                sc.magnitude = s.parse<double>(*v, "magnitude");
            }
            s.read("first_swing", sc.first_swing);
            s.read("at", sc.at);
            s.read("noise_std", sc.noise_std);
            scenario_defs.push_back(sc);
        } else if (name == "linearity") {
            s.allow({"scales", "combos", "amplitude", "duration", "start", "tau_sim", "saturation"});
            if (auto v = s.list<double>("scales")) cfg.linearity.scales = *v;
            if (auto v = s.list<std::string>("combos")) {
                cfg.linearity.combos.clear();
                for (const auto& c : *v) {
                    std::vector<std::string> parts;
                    boost::split(parts, c, boost::is_any_of("+"));
                    std::vector<Index> combo;
                    for (auto& part : parts) {
                        boost::trim(part);
                        if (!part.empty() && (part[0] == 'u' || part[0] == 'U')) part = part.substr(1);
                        combo.push_back(s.parse<Index>(part, "combos") - 1);
                    }
                    cfg.linearity.combos.push_back(combo);
                }
            }
            s.read("amplitude", cfg.linearity.amplitude);
            s.read("duration", cfg.linearity.duration);
            s.read("start", cfg.linearity.start);
            s.read("tau_sim", cfg.linearity.tau_sim);
            s.read("saturation", cfg.linearity_saturation);
        } else if (name == "bench") {
            s.allow({"controllers", "tau_f", "repetitions", "setup_repetitions"});
            if (auto v = s.list<std::string>("controllers")) cfg.bench.controllers = controller_list(*v);
            if (auto v = s.list<Index>("tau_f")) cfg.bench.tau_f = *v;
            s.read("repetitions", cfg.bench.repetitions);
            s.read("setup_repetitions", cfg.bench.setup_repetitions);
        } else if (name == "output") {
            s.allow({"dir"});
            if (auto v = s.str("dir")) cfg.out_dir = *v;
        } else {
            throw ConfigError(fmt::format("{}: unknown section [{}]", path, name));
        }
    }

    if (!scenario_names.empty()) {
        cfg.scenarios.clear();
        for (const auto& n : scenario_names) {
            auto it = std::find_if(scenario_defs.begin(), scenario_defs.end(),
                                   [&](const ScenarioSpec& sc) { return sc.name == n; });
            if (it != scenario_defs.end()) {
                cfg.scenarios.push_back(*it);
            } else if (n == "impulse" || n == "step" || n == "ramp") {
                ScenarioSpec sc;
                sc.name = n;
                sc.kind = parse_kind(n, path);
                cfg.scenarios.push_back(sc);
            } else {
                throw ConfigError(fmt::format("{}: scenario '{}' has no [scenario.{}] section", path, n, n));
            }
        }
    } else if (!scenario_defs.empty()) {
        cfg.scenarios = scenario_defs;
    }

    if (cfg.run_controllers.empty()) throw ConfigError(fmt::format("{}: [run] needs at least one controller", path));
    if (cfg.scenarios.empty()) throw ConfigError(fmt::format("{}: [run] needs at least one scenario", path));
    if (cfg.noise_seeds.empty()) throw ConfigError(fmt::format("{}: [run] needs at least one noise seed", path));
    if (!(cfg.duration > 0.0)) throw ConfigError(fmt::format("{}: [run] duration must be > 0", path));
    if (cfg.bench.repetitions < 1 || cfg.bench.setup_repetitions < 1) {
        throw ConfigError(fmt::format("{}: [bench] repetitions must be >= 1", path));
    }
    cfg.training.tpc.validate();
    cfg.training.deepc.validate();
    cfg.controllers.tpc_weights.validate(3, 3);
    cfg.controllers.deepc_weights.validate(3, 3);
    if (!cfg.plant_spec_path.empty() && !std::filesystem::exists(cfg.plant_spec_path)) {
        throw ConfigError(fmt::format("{}: plant spec '{}' does not exist", path, cfg.plant_spec_path));
    }
    return cfg;
}

PlantSpec campaign_plant_spec(const CampaignConfig& cfg) {
    PlantSpec spec = cfg.plant_spec_path.empty() ? benchmark_plant_spec(cfg.dominant_damping, cfg.plant_seed)
                                                 : load_plant_spec(cfg.plant_spec_path);
    if (cfg.saturation && !*cfg.saturation) spec.saturation_limit.reset();
    if (cfg.saturation && *cfg.saturation && !spec.saturation_limit) spec.saturation_limit = 0.1;
    return spec;
}

} // namespace ddpc::cli
