#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ddpc/ocp.hpp"
#include "ddpc/plant.hpp"
#include "ddpc/predictors.hpp"
#include "ddpc/qpsolver.hpp"
#include "ddpc/signals.hpp"

namespace ddpc {

enum class ControllerKind { DeePC, TPC, SingleARX, ClosedFormTPC, ClosedFormDeePC, Zero };

const char* to_string(ControllerKind k);
/// Accepts the names produced by to_string (case-insensitive, '-' and '_' ignored). Throws ConfigError.
ControllerKind parse_controller_kind(const std::string& name);

/**
 * The last tau_p complete samples (y_filtered(s), u_applied(s)).
 */
class PastBuffer {
public:
    PastBuffer(Index p, Index m, Index tau_p);

    void push(const Eigen::Ref<const Eigen::VectorXd>& y, const Eigen::Ref<const Eigen::VectorXd>& u);
    void clear() { samples_.clear(); }
    bool full() const { return static_cast<Index>(samples_.size()) == tau_p_; }
    Index size() const { return static_cast<Index>(samples_.size()); }
    Index tau_p() const { return tau_p_; }
    Index p() const { return p_; }
    Index m() const { return m_; }

    /// Interleaved [y; u] per step, oldest first. Requires full().
    Eigen::VectorXd z_p() const;
    /// The last `steps` inputs / outputs stacked oldest first, per signal.
    Eigen::VectorXd u_p(Index steps) const;
    Eigen::VectorXd y_p(Index steps) const;

private:
    Index p_;
    Index m_;
    Index tau_p_;
    std::deque<Eigen::VectorXd> samples_; // [y; u]
};

struct StepInfo {
    double solve_ms = 0.0;
    int iterations = 0;
    std::string status = "idle";
    bool failed = false;
};

/**
 * @brief Receding-horizon controller. Owns its problem and solver workspace.
 *
 * QP variants build their problem once and only refresh the past-dependent
 * vectors each step, so the solver factorisation is reused.
 */
class Controller {
public:
    static Controller zero(Index m);
    static Controller tpc(const PredictorMatrices& pred, const WeightSpec& w, const OcpBounds& b, Index tau_p,
                          const SolverSettings& s = {}, ControllerKind kind = ControllerKind::TPC);
    static Controller closed_form_tpc(const PredictorMatrices& pred, const WeightSpec& w, const OcpBounds& b,
                                      Index tau_p);
    static Controller deepc(const DeePCData& data, const WeightSpec& w, const OcpBounds& b, const SolverSettings& s = {});
    static Controller closed_form_deepc(const DeePCData& data, const WeightSpec& w, const OcpBounds& b);

    ControllerKind kind() const { return kind_; }
    /// Samples the past buffer must hold before the controller acts.
    Index tau_p() const { return tau_p_; }
    Index m() const { return m_; }
    const QpSolver* solver() const { return solver_.get(); }
    const QpProblem* problem() const { return qp_.get(); }
    const Eigen::VectorXd& last_input() const { return last_u_; }

    /// Optimal stacked inputs for the given past (no clipping, no fail-safe).
    Eigen::VectorXd plan(const PastBuffer& buffer, StepInfo* info = nullptr);
    /// First planned input clipped to the bounds; previous input on solver failure; zero until the buffer fills.
    Eigen::VectorXd step(const PastBuffer& buffer, StepInfo* info = nullptr);

private:
    Controller() = default;
    Eigen::VectorXd past_vector(const PastBuffer& buffer) const;

    ControllerKind kind_ = ControllerKind::Zero;
    Index m_ = 0;
    Index tau_p_ = 0;
    OcpBounds bounds_;
    std::shared_ptr<QpProblem> qp_;
    std::shared_ptr<QpSolver> solver_;
    Eigen::MatrixXd gain_; // closed-form variants
    Eigen::VectorXd last_u_;
};

Eigen::VectorXd controller_step(Controller& ctrl, const PastBuffer& buffer, StepInfo* info = nullptr);

struct Scenario {
    std::string name = "impulse";
    DisturbanceKind kind = DisturbanceKind::Impulse;
    double magnitude = 0.0;
    double at = 5.0;               // s
    Eigen::VectorXd direction;     // on the disturbance channels; empty = first channel
    double noise_std = 0.0;        // load variation added on the disturbance channels
};

struct EpisodeOptions {
    double duration = 60.0;            // s
    double divergence_threshold = 1e3; // on |y|
    BandPassSettings filter;
    bool record_timing = true;
};

enum class EpisodeStatus { Completed, Diverged };
const char* to_string(EpisodeStatus s);

struct EpisodeLog {
    Eigen::VectorXd t;       // s
    Eigen::MatrixXd y;       // p x N
    Eigen::MatrixXd y_filt;  // p x N
    Eigen::MatrixXd u;       // m x N
    Eigen::VectorXd solve_ms;
    Eigen::VectorXi iterations;
    std::vector<std::string> status;
};

struct EpisodeReport {
    EpisodeStatus status = EpisodeStatus::Completed;
    double diverged_at = -1.0; // s
    Eigen::VectorXd rms;            // per output, raw y
    Eigen::VectorXd rms_filtered;   // per output, band-passed y
    Eigen::MatrixXd cumulative_abs; // p x N running sum of |y|
    double input_effort = 0.0;      // sum of |u|_1
    double max_abs_u = 0.0;
    double max_abs_y = 0.0;
    int solver_failures = 0;
    double median_solve_ms = 0.0;
    double max_solve_ms = 0.0;
    EpisodeLog log;
};

/// Measure, filter, act, push, advance. The episode stops early once |y| exceeds the divergence threshold.
EpisodeReport run_episode(const PlantModel& plant, Controller& ctrl, const Scenario& scenario,
                          std::uint64_t noise_seed, const EpisodeOptions& options = {});

/// RMS, cumulative |y| and effort of a log (the fields derived from it in EpisodeReport).
void compute_metrics(EpisodeReport& report);

/// Pearson correlation of channel a's RMS and channel b's RMS across reports.
double rms_correlation(const std::vector<EpisodeReport>& reports, Index a, Index b);

struct ExcitationConfig {
    Index n_samples = 2000;
    double u_std = 0.0025;
    double u_clip = 0.1;
    double noise_std = 0.0; // load variation during collection
    std::uint64_t seed = 1;
    bool filter_outputs = true;
    BandPassSettings filter;
};

struct ExcitationData {
    Trajectory u;
    Trajectory y;     // as used for fitting (filtered when configured)
    Trajectory y_raw;
};

ExcitationData collect_excitation(const PlantModel& plant, const ExcitationConfig& cfg);

struct TrainingConfig {
    HankelConfig tpc{30, 60, 2000};
    HankelConfig deepc{60, 60, 500};
};

struct TrainedModels {
    TransientPredictor tpc;
    SingleArxPredictor arx;
    DeePCData deepc;
    std::optional<ExcitationData> data; // absent when loaded from a model file
};

/// DeePC uses the last deepc.n_samples samples, TPC and ARX the last tpc.n_samples, of one excitation run.
TrainedModels excite_and_fit(const PlantModel& plant, const ExcitationConfig& excitation, const TrainingConfig& cfg);
/// Fits all three models on one (u, y) record; y as used for fitting.
TrainedModels fit_models(const Trajectory& u, const Trajectory& y, const TrainingConfig& cfg);

struct ControllerSettings {
    WeightSpec tpc_weights = WeightSpec::tpc_defaults();
    WeightSpec deepc_weights = WeightSpec::deepc_defaults();
    OcpBounds bounds = OcpBounds::symmetric(3, 3, 0.1);
    SolverSettings tpc_solver;
    SolverSettings deepc_solver;

    ControllerSettings();
};

Controller make_controller(ControllerKind kind, const TrainedModels& models, const ControllerSettings& settings);

struct LinearityConfig {
    std::vector<double> scales{1.0, 5.0, 10.0, 20.0};
    std::vector<std::vector<Index>> combos{{0}, {1}, {2}, {0, 1}, {0, 2}, {1, 2}, {0, 1, 2}};
    double amplitude = 0.01; // pu
    double duration = 1.0;   // s per half of the doublet
    double start = 1.0;      // s
    double tau_sim = 20.0;   // s
};

struct LinearityReport {
    std::vector<double> scales;
    std::vector<std::vector<Index>> combos;
    std::vector<std::vector<Eigen::VectorXd>> rmse; // [combo][scale] -> per output
    double tau_sim = 0.0;
};

/// Superposition test: RMSE per output between s * sum(doublet responses) and the response to s * sum(doublets).
LinearityReport linearity_test(const PlantModel& plant, const LinearityConfig& cfg = {});

std::string combo_label(const std::vector<Index>& combo);

} // namespace ddpc
