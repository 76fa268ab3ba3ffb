#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "ddpc/plant.hpp"
#include "ddpc/qpsolver.hpp"
#include "ddpc/signals.hpp"

namespace ddpc::testing {

/// Random stable discrete LTI plant: n/2 rotation blocks with radii in [r_min, r_max], mixed by a random similarity.
PlantModel random_stable_plant(Index n, Index m, Index p, std::uint64_t seed, double r_min = 0.6,
                               double r_max = 0.95);

/// Rollout of x(t+1) = A x + B u, y = C x from x0. Returns y(0..N-1) and the final state x(N).
std::pair<Trajectory, Eigen::VectorXd> rollout(const PlantModel& plant, const Eigen::VectorXd& x0,
                                               const Eigen::MatrixXd& u);

/// Known ARX process y(t) = sum_k phi_k z(t - tau_p + k), z = [y; u], blocks oldest first.
struct ArxProcess {
    Eigen::MatrixXd phi; // p x ((p+m) tau_p)
    Index p = 0;
    Index m = 0;
    Index tau_p = 0;
};

/// Contractive coefficients: the y-part has absolute row sums below 0.9.
ArxProcess random_arx(Index p, Index m, Index tau_p, std::uint64_t seed);
Trajectory simulate_arx(const ArxProcess& arx, const Trajectory& u);

/// Min 1/2 x'Px + q'x s.t. l <= Mx <= u by enumerating every active set (P positive definite).
struct ActiveSetResult {
    Eigen::VectorXd x;
    double objective = 0.0;
    bool feasible = false;
};
ActiveSetResult active_set_qp(const Eigen::MatrixXd& P, const Eigen::VectorXd& q, const Eigen::MatrixXd& M,
                              const Eigen::VectorXd& l, const Eigen::VectorXd& u);

/// Magnitude of an analog Butterworth high-pass (order n_hp, f_low) cascaded with a low-pass (order n_lp, f_high).
double analog_bandpass_gain(double f, double f_low, double f_high, int n_hp, int n_lp);

/// Magnitude of a zero-order hold of width T at frequency f.
double zoh_gain(double f, double T);

/// Magnitude of a biquad cascade at frequency f, sampled at `rate`.
double cascade_gain(const std::vector<Biquad>& sections, double f, double rate);

/// Free response of one continuous modal block [[s, wd], [-wd, s]] integrated with RK4 at step h.
std::vector<Eigen::Vector2d> rk4_modal_free_response(const ModeSpec& mode, const Eigen::Vector2d& x0, double h,
                                                     double sample_period, Index steps);

/// Steady-state amplitude ratio of a filter driven by a sinusoid, measured over the last `measure_s` seconds.
double measured_gain(BandPassFilter& filter, double f, double sample_period, double duration_s, double measure_s);

} // namespace ddpc::testing
