#include "ddpc/loop.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "ddpc/error.hpp"

namespace ddpc {

const char* to_string(ControllerKind k) {
    switch (k) {
    case ControllerKind::DeePC: return "deepc";
    case ControllerKind::TPC: return "tpc";
    case ControllerKind::SingleARX: return "single_arx";
    case ControllerKind::ClosedFormTPC: return "closed_form_tpc";
    case ControllerKind::ClosedFormDeePC: return "closed_form_deepc";
    case ControllerKind::Zero: return "zero";
    }
    return "unknown";
}

ControllerKind parse_controller_kind(const std::string& name) {
    std::string key;
    for (char c : name) {
        if (c == '-' || c == '_' || c == ' ') continue;
        key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    if (key == "deepc") return ControllerKind::DeePC;
    if (key == "tpc") return ControllerKind::TPC;
    if (key == "singlearx" || key == "arx") return ControllerKind::SingleARX;
    if (key == "closedformtpc") return ControllerKind::ClosedFormTPC;
    if (key == "closedformdeepc") return ControllerKind::ClosedFormDeePC;
    if (key == "zero" || key == "none") return ControllerKind::Zero;
    throw ConfigError(fmt::format("unknown controller '{}'", name));
}

PastBuffer::PastBuffer(Index p, Index m, Index tau_p) : p_(p), m_(m), tau_p_(tau_p) {
    if (p < 1 || m < 1 || tau_p < 0) throw ConfigError("past buffer needs p, m >= 1 and tau_p >= 0");
}

void PastBuffer::push(const Eigen::Ref<const Eigen::VectorXd>& y, const Eigen::Ref<const Eigen::VectorXd>& u) {
    if (y.size() != p_ || u.size() != m_) {
        throw DimensionError(fmt::format("past buffer expects y of {} and u of {}, got {} and {}", p_, m_, y.size(),
                                         u.size()));
    }
    if (tau_p_ == 0) return;
    Eigen::VectorXd z(p_ + m_);
    z << y, u;
    samples_.push_back(std::move(z));
    if (static_cast<Index>(samples_.size()) > tau_p_) samples_.pop_front();
}

Eigen::VectorXd PastBuffer::z_p() const {
    if (!full()) throw OutOfRangeError("past buffer is not full yet");
    const Index w = p_ + m_;
    Eigen::VectorXd z(w * tau_p_);
    for (Index s = 0; s < tau_p_; ++s) z.segment(w * s, w) = samples_[static_cast<std::size_t>(s)];
    return z;
}

Eigen::VectorXd PastBuffer::u_p(Index steps) const {
    if (steps > size()) throw OutOfRangeError("past buffer holds fewer samples than requested");
    Eigen::VectorXd v(m_ * steps);
    const Index first = size() - steps;
    for (Index s = 0; s < steps; ++s) v.segment(m_ * s, m_) = samples_[static_cast<std::size_t>(first + s)].tail(m_);
    return v;
}

Eigen::VectorXd PastBuffer::y_p(Index steps) const {
    if (steps > size()) throw OutOfRangeError("past buffer holds fewer samples than requested");
    Eigen::VectorXd v(p_ * steps);
    const Index first = size() - steps;
    for (Index s = 0; s < steps; ++s) v.segment(p_ * s, p_) = samples_[static_cast<std::size_t>(first + s)].head(p_);
    return v;
}

Controller Controller::zero(Index m) {
    Controller c;
    c.kind_ = ControllerKind::Zero;
    c.m_ = m;
    c.tau_p_ = 0;
    c.last_u_ = Eigen::VectorXd::Zero(m);
    return c;
}

Controller Controller::tpc(const PredictorMatrices& pred, const WeightSpec& w, const OcpBounds& b, Index tau_p,
                           const SolverSettings& s, ControllerKind kind) {
    if (kind != ControllerKind::TPC && kind != ControllerKind::SingleARX) {
        throw ConfigError("Controller::tpc builds TPC or Single-ARX controllers only");
    }
    Controller c;
    c.kind_ = kind;
    c.m_ = b.u_lb.size();
    c.tau_p_ = tau_p;
    c.bounds_ = b;
    c.qp_ = std::make_shared<QpProblem>(build_tpc_qp(pred, w, b, Eigen::VectorXd::Zero(pred.H_p.cols())));
    c.solver_ = std::make_shared<QpSolver>();
    c.solver_->setup(*c.qp_, s);
    c.last_u_ = Eigen::VectorXd::Zero(c.m_);
    return c;
}

Controller Controller::closed_form_tpc(const PredictorMatrices& pred, const WeightSpec& w, const OcpBounds& b,
                                       Index tau_p) {
    Controller c;
    c.kind_ = ControllerKind::ClosedFormTPC;
    c.m_ = b.u_lb.size();
    c.tau_p_ = tau_p;
    c.bounds_ = b;
    c.gain_ = tpc_gain(pred, w);
    c.last_u_ = Eigen::VectorXd::Zero(c.m_);
    return c;
}

Controller Controller::deepc(const DeePCData& data, const WeightSpec& w, const OcpBounds& b, const SolverSettings& s) {
    Controller c;
    c.kind_ = ControllerKind::DeePC;
    c.m_ = data.m;
    c.tau_p_ = data.config.tau_p;
    c.bounds_ = b;
    c.qp_ = std::make_shared<QpProblem>(build_deepc_qp(data, w, b, Eigen::VectorXd::Zero(data.U_p.n_row()),
                                                       Eigen::VectorXd::Zero(data.Y_p.n_row())));
    c.solver_ = std::make_shared<QpSolver>();
    c.solver_->setup(*c.qp_, s);
    c.last_u_ = Eigen::VectorXd::Zero(c.m_);
    return c;
}

Controller Controller::closed_form_deepc(const DeePCData& data, const WeightSpec& w, const OcpBounds& b) {
    Controller c;
    c.kind_ = ControllerKind::ClosedFormDeePC;
    c.m_ = data.m;
    c.tau_p_ = data.config.tau_p;
    c.bounds_ = b;
    c.gain_ = deepc_gain(data, w);
    c.last_u_ = Eigen::VectorXd::Zero(c.m_);
    return c;
}

Eigen::VectorXd Controller::past_vector(const PastBuffer& buffer) const {
    switch (kind_) {
    case ControllerKind::TPC:
    case ControllerKind::SingleARX:
    case ControllerKind::ClosedFormTPC:
        return buffer.z_p();
    case ControllerKind::DeePC:
    case ControllerKind::ClosedFormDeePC: {
        Eigen::VectorXd v(buffer.m() * tau_p_ + buffer.p() * tau_p_);
        v << buffer.u_p(tau_p_), buffer.y_p(tau_p_);
        return v;
    }
    case ControllerKind::Zero:
        break;
    }
    return {};
}

Eigen::VectorXd Controller::plan(const PastBuffer& buffer, StepInfo* info) {
    if (kind_ == ControllerKind::Zero) {
        if (info) info->status = "zero";
        return Eigen::VectorXd::Zero(m_);
    }
    if (buffer.tau_p() < tau_p_ || buffer.size() < tau_p_) {
        throw OutOfRangeError(fmt::format("controller needs {} past samples, buffer has {}", tau_p_, buffer.size()));
    }
    const Eigen::VectorXd past = past_vector(buffer);
    if (gain_.size() > 0) {
        if (info) info->status = "closed_form";
        return gain_ * past;
    }
    refresh_qp(*qp_, past);
    const auto t0 = std::chrono::steady_clock::now();
    const Solution sol = solver_->update_and_resolve(*qp_);
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (info) {
        info->solve_ms = ms;
        info->iterations = sol.stats.iterations;
        info->status = to_string(sol.status);
        info->failed = sol.status != SolveStatus::Solved;
    }
    if (sol.status != SolveStatus::Solved) return {};
    return qp_->inputs(sol.x);
}

Eigen::VectorXd Controller::step(const PastBuffer& buffer, StepInfo* info) {
    if (kind_ == ControllerKind::Zero) {
        if (info) *info = StepInfo{0.0, 0, "zero", false};
        return last_u_;
    }
    if (buffer.size() < tau_p_) {
        if (info) *info = StepInfo{0.0, 0, "bootstrap", false};
        last_u_.setZero();
        return last_u_;
    }
    StepInfo local;
    const Eigen::VectorXd planned = plan(buffer, &local);
    if (planned.size() < m_ || !planned.head(m_).allFinite()) {
        local.failed = true;
    } else {
        last_u_ = planned.head(m_).cwiseMax(bounds_.u_lb).cwiseMin(bounds_.u_ub);
    }
    if (info) *info = local;
    return last_u_;
}

Eigen::VectorXd controller_step(Controller& ctrl, const PastBuffer& buffer, StepInfo* info) {
    return ctrl.step(buffer, info);
}

const char* to_string(EpisodeStatus s) { return s == EpisodeStatus::Completed ? "completed" : "diverged"; }

EpisodeReport run_episode(const PlantModel& plant, Controller& ctrl, const Scenario& scenario,
                          std::uint64_t noise_seed, const EpisodeOptions& options) {
    plant.validate();
    const double Ts = plant.sample_period;
    const auto n = static_cast<Index>(std::llround(options.duration / Ts));
    if (n < 1) throw ConfigError("episode duration shorter than one sample");
    const Index p = plant.n_outputs();
    const Index m = plant.n_inputs();
    const Index nd = plant.n_disturbances();
    if (ctrl.m() != m) throw DimensionError("controller and plant input counts differ");

    Eigen::VectorXd dir = scenario.direction;
    if (dir.size() == 0) dir = Eigen::VectorXd::Unit(nd, 0);
    if (dir.size() != nd) throw DimensionError("scenario direction does not match the disturbance channels");
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(nd, n);
    if (scenario.magnitude != 0.0) {
        d += scenario_disturbance(scenario.kind, scenario.magnitude, scenario.at, options.duration, Ts, dir)
                 .data()
                 .leftCols(n);
    }
    if (scenario.noise_std > 0.0) {
        d += prbs_load_noise(nd, options.duration, scenario.noise_std, noise_seed, Ts).data().leftCols(n);
    }

    BandPassFilter filter(p, Ts, options.filter);
    PastBuffer buffer(p, m, std::max<Index>(ctrl.tau_p(), 1));
    PlantState state = PlantState::zero(plant);

    EpisodeReport rep;
    EpisodeLog& log = rep.log;
    log.t.resize(n);
    log.y.resize(p, n);
    log.y_filt.resize(p, n);
    log.u.resize(m, n);
    log.solve_ms = Eigen::VectorXd::Zero(n);
    log.iterations = Eigen::VectorXi::Zero(n);
    log.status.reserve(static_cast<std::size_t>(n));

    Index steps = n;
    for (Index t = 0; t < n; ++t) {
        const Eigen::VectorXd y = output(plant, state);
        const Eigen::VectorXd yf = filter.apply(y);
        StepInfo info;
        const Eigen::VectorXd u = ctrl.step(buffer, &info);
        if (info.failed) ++rep.solver_failures;
        buffer.push(yf, u);

        log.t(t) = static_cast<double>(t) * Ts;
        log.y.col(t) = y;
        log.y_filt.col(t) = yf;
        log.u.col(t) = u;
        log.solve_ms(t) = options.record_timing ? info.solve_ms : 0.0;
        log.iterations(t) = info.iterations;
        log.status.push_back(info.status);

        if (!y.allFinite() || y.norm() > options.divergence_threshold) {
            rep.status = EpisodeStatus::Diverged;
            rep.diverged_at = log.t(t);
            steps = t + 1;
            break;
        }
        state = step(plant, state, u, d.col(t)).state;
    }
    if (steps < n) {
        log.t.conservativeResize(steps);
        log.y.conservativeResize(Eigen::NoChange, steps);
        log.y_filt.conservativeResize(Eigen::NoChange, steps);
        log.u.conservativeResize(Eigen::NoChange, steps);
        log.solve_ms.conservativeResize(steps);
        log.iterations.conservativeResize(steps);
    }
    compute_metrics(rep);
    return rep;
}

void compute_metrics(EpisodeReport& rep) {
    const EpisodeLog& log = rep.log;
    const Index n = log.y.cols();
    const Index p = log.y.rows();
    rep.rms = Eigen::VectorXd::Zero(p);
    rep.rms_filtered = Eigen::VectorXd::Zero(p);
    rep.cumulative_abs = Eigen::MatrixXd::Zero(p, n);
    rep.input_effort = 0.0;
    rep.max_abs_u = 0.0;
    rep.max_abs_y = 0.0;
    if (n == 0) return;
    rep.rms = (log.y.rowwise().squaredNorm() / static_cast<double>(n)).cwiseSqrt();
    if (log.y_filt.cols() == n) rep.rms_filtered = (log.y_filt.rowwise().squaredNorm() / static_cast<double>(n)).cwiseSqrt();
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(p);
    for (Index t = 0; t < n; ++t) {
        acc += log.y.col(t).cwiseAbs();
        rep.cumulative_abs.col(t) = acc;
    }
    if (log.u.size() > 0) {
        rep.input_effort = log.u.cwiseAbs().sum();
        rep.max_abs_u = log.u.cwiseAbs().maxCoeff();
    }
    rep.max_abs_y = log.y.cwiseAbs().maxCoeff();

    std::vector<double> ms;
    for (Index t = 0; t < log.solve_ms.size(); ++t) {
        if (log.iterations(t) > 0) ms.push_back(log.solve_ms(t));
    }
    if (!ms.empty()) {
        std::sort(ms.begin(), ms.end());
        rep.median_solve_ms = ms[ms.size() / 2];
        rep.max_solve_ms = ms.back();
    }
}

double rms_correlation(const std::vector<EpisodeReport>& reports, Index a, Index b) {
    if (reports.size() < 2) throw ConfigError("correlation needs at least two episodes");
    const auto n = static_cast<double>(reports.size());
    double ma = 0.0;
    double mb = 0.0;
    for (const auto& r : reports) {
        if (a >= r.rms.size() || b >= r.rms.size()) throw OutOfRangeError("correlation channel out of range");
        ma += r.rms(a);
        mb += r.rms(b);
    }
    ma /= n;
    mb /= n;
    double sab = 0.0;
    double saa = 0.0;
    double sbb = 0.0;
    for (const auto& r : reports) {
        sab += (r.rms(a) - ma) * (r.rms(b) - mb);
        saa += (r.rms(a) - ma) * (r.rms(a) - ma);
        sbb += (r.rms(b) - mb) * (r.rms(b) - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

ExcitationData collect_excitation(const PlantModel& plant, const ExcitationConfig& cfg) {
    plant.validate();
    const double Ts = plant.sample_period;
    Trajectory u = white_excitation(plant.n_inputs(), cfg.n_samples, cfg.u_std, cfg.u_clip, cfg.seed, Ts);
    std::optional<Trajectory> d;
    if (cfg.noise_std > 0.0) {
        d = prbs_load_noise(plant.n_disturbances(), static_cast<double>(cfg.n_samples) * Ts, cfg.noise_std,
                            cfg.seed + 1, Ts);
    }
    Trajectory y_raw = simulate(plant, u, d ? &*d : nullptr);
    Trajectory y = y_raw;
    if (cfg.filter_outputs) {
        BandPassFilter filter(plant.n_outputs(), Ts, cfg.filter);
        y = filter.apply(y_raw);
    }
    return {std::move(u), std::move(y), std::move(y_raw)};
}

TrainedModels excite_and_fit(const PlantModel& plant, const ExcitationConfig& excitation, const TrainingConfig& cfg) {
    cfg.tpc.validate();
    cfg.deepc.validate();
    ExcitationConfig ex = excitation;
    ex.n_samples = std::max({excitation.n_samples, cfg.tpc.n_samples, cfg.deepc.n_samples});
    ExcitationData data = collect_excitation(plant, ex);
    TrainedModels models = fit_models(data.u, data.y, cfg);
    models.data = std::move(data);
    return models;
}

TrainedModels fit_models(const Trajectory& u, const Trajectory& y, const TrainingConfig& cfg) {
    cfg.tpc.validate();
    cfg.deepc.validate();
    TransientPredictor tpc = fit_transient_predictor(u, y, cfg.tpc);
    SingleArxPredictor arx = fit_single_arx(u, y, cfg.tpc);
    DeePCData deepc = build_deepc_data(u, y, cfg.deepc);
    return {std::move(tpc), std::move(arx), std::move(deepc), std::nullopt};
}

ControllerSettings::ControllerSettings() {
    deepc_solver.polish = false;
    deepc_solver.max_rho_updates = 10;
    deepc_solver.check_interval = 5;
}

Controller make_controller(ControllerKind kind, const TrainedModels& models, const ControllerSettings& s) {
    switch (kind) {
    case ControllerKind::TPC:
        return Controller::tpc({models.tpc.H_p, models.tpc.H_u}, s.tpc_weights, s.bounds, models.tpc.config.tau_p,
                               s.tpc_solver, ControllerKind::TPC);
    case ControllerKind::SingleARX:
        return Controller::tpc({models.arx.H_p, models.arx.H_u}, s.tpc_weights, s.bounds, models.arx.config.tau_p,
                               s.tpc_solver, ControllerKind::SingleARX);
    case ControllerKind::ClosedFormTPC:
        return Controller::closed_form_tpc({models.tpc.H_p, models.tpc.H_u}, s.tpc_weights, s.bounds,
                                           models.tpc.config.tau_p);
    case ControllerKind::DeePC:
        return Controller::deepc(models.deepc, s.deepc_weights, s.bounds, s.deepc_solver);
    case ControllerKind::ClosedFormDeePC:
        return Controller::closed_form_deepc(models.deepc, s.deepc_weights, s.bounds);
    case ControllerKind::Zero:
        return Controller::zero(s.bounds.u_lb.size());
    }
    throw ConfigError("unknown controller kind");
}

LinearityReport linearity_test(const PlantModel& plant, const LinearityConfig& cfg) {
    plant.validate();
    const double Ts = plant.sample_period;
    const Index m = plant.n_inputs();
    const Index p = plant.n_outputs();

    std::vector<Trajectory> basis_u;
    std::vector<Trajectory> basis_y;
    for (Index i = 0; i < m; ++i) {
        basis_u.push_back(doublet(i, cfg.amplitude, cfg.duration, Ts, m, cfg.tau_sim, cfg.start));
        basis_y.push_back(simulate(plant, basis_u.back()));
    }

    LinearityReport rep;
    rep.scales = cfg.scales;
    rep.combos = cfg.combos;
    rep.tau_sim = cfg.tau_sim;
    for (const auto& combo : cfg.combos) {
        if (combo.empty()) throw ConfigError("linearity combo must name at least one input");
        std::vector<Eigen::VectorXd> per_scale;
        for (double s : cfg.scales) {
            Eigen::MatrixXd u = Eigen::MatrixXd::Zero(m, basis_u.front().length());
            Eigen::MatrixXd y_hat = Eigen::MatrixXd::Zero(p, basis_y.front().length());
            for (Index i : combo) {
                if (i < 0 || i >= m) throw OutOfRangeError(fmt::format("linearity combo input {} out of range", i));
                u += s * basis_u[static_cast<std::size_t>(i)].data();
                y_hat += s * basis_y[static_cast<std::size_t>(i)].data();
            }
            const Trajectory y = simulate(plant, Trajectory(u, Ts));
            const Eigen::MatrixXd err = y_hat - y.data();
            per_scale.push_back((err.rowwise().squaredNorm() / static_cast<double>(err.cols())).cwiseSqrt());
        }
        rep.rmse.push_back(std::move(per_scale));
    }
    return rep;
}

std::string combo_label(const std::vector<Index>& combo) {
    std::string s;
    for (std::size_t k = 0; k < combo.size(); ++k) {
        if (k) s += "+";
        s += fmt::format("u{}", combo[k] + 1);
    }
    return s;
}

} // namespace ddpc
