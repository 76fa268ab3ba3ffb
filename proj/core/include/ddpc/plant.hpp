#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "ddpc/signals.hpp"

namespace ddpc {

/**
 * One oscillatory mode of the surrogate plant.
 *
 * Each mode is a continuous-time 2x2 block with eigenvalues
 * -zeta*w +/- j*w*sqrt(1 - zeta^2), w = 2*pi*freq_hz. Residues are rank one:
 * the mode is driven by input_residues^T u (and disturbance_residues^T d) and
 * observed through output_residues, so the DC gain from input j to output i is
 * approximately output_residues(i) * input_residues(j).
 */
struct ModeSpec {
    double freq_hz = 0.0;
    double damping_ratio = 0.0;
    Eigen::VectorXd input_residues;
    Eigen::VectorXd output_residues;
    Eigen::VectorXd disturbance_residues;
};

/// Discrete-time LTI plant x(t+1) = A x + B sat(u) + Bd d, y(t) = C x(t) (+ D u, zero by default).
struct PlantModel {
    Eigen::MatrixXd A;
    Eigen::MatrixXd B;
    Eigen::MatrixXd Bd;
    Eigen::MatrixXd C;
    Eigen::MatrixXd D;
    double sample_period = kDefaultSamplePeriod;
    std::optional<double> saturation_limit;

    Index n_states() const { return A.rows(); }
    Index n_inputs() const { return B.cols(); }
    Index n_outputs() const { return C.rows(); }
    Index n_disturbances() const { return Bd.cols(); }

    /// Throws DimensionError on inconsistent shapes, ConfigError on non-zero D.
    void validate() const;
};

struct PlantState {
    Eigen::VectorXd x;
    Index t = 0;

    static PlantState zero(const PlantModel& plant);
};

struct StepResult {
    PlantState state;
    Eigen::VectorXd y; // y(t), measured before the state update
};

/// Everything needed to rebuild a plant; this is what plant specification files hold.
struct PlantSpec {
    std::vector<ModeSpec> modes;
    double sample_period = kDefaultSamplePeriod;
    std::optional<double> saturation_limit;
    std::uint64_t seed = 0; // default noise seed for campaigns using this plant
};

PlantModel build_modal_plant(const std::vector<ModeSpec>& modes, double sample_period,
                             std::optional<double> saturation_limit = std::nullopt);
PlantModel build_plant(const PlantSpec& spec);

Eigen::VectorXd saturate(const PlantModel& plant, const Eigen::Ref<const Eigen::VectorXd>& u);
Eigen::VectorXd output(const PlantModel& plant, const PlantState& state);
StepResult step(const PlantModel& plant, const PlantState& state, const Eigen::Ref<const Eigen::VectorXd>& u,
                const Eigen::Ref<const Eigen::VectorXd>& d);

/// Open-loop simulation from `x0` (zero if empty). Returns y(0..N-1). `d` may be omitted.
Trajectory simulate(const PlantModel& plant, const Trajectory& u, const Trajectory* d = nullptr,
                    const Eigen::VectorXd& x0 = {});

struct ModalDamping {
    double freq_hz = 0.0;
    double damping_ratio = 0.0;
};

/// Natural frequency |s|/2pi and damping of every complex eigenvalue pair (s = ln(lambda)/Ts), sorted by frequency.
std::vector<ModalDamping> eigen_damping(const PlantModel& plant);

/**
 * Single-excitation doublet: `amplitude` on channel `input_index` for `duration`
 * seconds starting at `start`, then -amplitude for `duration`, then zero.
 * All other channels are identically zero. Total length is `total_duration`.
 */
Trajectory doublet(Index input_index, double amplitude, double duration, double sample_period, Index n_inputs,
                   double total_duration, double start = 0.0);

enum class DisturbanceKind { Impulse, Step, Ramp };

/// Disturbance trajectory along `direction` with an event at time `at`. Ramps grow by `magnitude` per second.
Trajectory scenario_disturbance(DisturbanceKind kind, double magnitude, double at, double total_duration,
                                double sample_period, const Eigen::VectorXd& direction);

/// Surrogate of the four-mode test grid; residues are drawn from `seed` and normalised (see plant.cpp).
PlantSpec benchmark_plant_spec(double dominant_damping = 0.002, std::uint64_t seed = 7);

/// Unit direction on the disturbance channels that excites the dominant (first) mode most.
Eigen::VectorXd dominant_disturbance_direction(const PlantSpec& spec);

/// Impulse magnitude along `direction` whose first swing on output `channel` reaches `target_peak`.
double calibrate_impulse(const PlantModel& plant, const Eigen::VectorXd& direction, double target_peak,
                         Index channel = 1);

} // namespace ddpc
