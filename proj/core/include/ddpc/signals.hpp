#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace ddpc {

using Index = Eigen::Index;

inline constexpr double kDefaultSamplePeriod = 0.1;

/**
 * @brief Uniformly sampled multi-channel signal.
 *
 * Samples are stored column-wise: column t holds w(t). Values are per-unit.
 */
class Trajectory {
public:
    explicit Trajectory(Eigen::MatrixXd samples, double sample_period = kDefaultSamplePeriod);

    static Trajectory zeros(Index channels, Index length, double sample_period = kDefaultSamplePeriod);

    Index channels() const { return samples_.rows(); }
    Index length() const { return samples_.cols(); }
    double sample_period() const { return sample_period_; }
    double time(Index t) const { return static_cast<double>(t) * sample_period_; }

    Eigen::VectorXd sample(Index t) const;
    void set_sample(Index t, const Eigen::Ref<const Eigen::VectorXd>& value);

    /// Samples [t0, t0 + len).
    Trajectory slice(Index t0, Index len) const;

    const Eigen::MatrixXd& data() const { return samples_; }

private:
    Eigen::MatrixXd samples_;
    double sample_period_;
};

/// Past/future horizons and training length shared by every data-driven predictor.
struct HankelConfig {
    Index tau_p = 30;
    Index tau_f = 60;
    Index n_samples = 2000;

    Index window() const { return tau_p + tau_f; }
    /// n_col = n_samples - (tau_p + tau_f) + 1
    Index n_col() const { return n_samples - window() + 1; }
    /// Throws ConfigError when the invariants tau_p, tau_f >= 1 and n_col >= 1 fail.
    void validate() const;
};

/// 1/sqrt(n_col)-scaled block Hankel matrix of a window [t0, t1] of a trajectory.
struct HankelMatrix {
    Eigen::MatrixXd values;
    Index channels = 0;
    Index t0 = 0;
    Index t1 = 0;

    Index n_row() const { return values.rows(); }
    Index n_col() const { return values.cols(); }
};

/// Block-row i, column j holds w(t0 + i + j) / sqrt(n_col).
HankelMatrix build_hankel(const Trajectory& traj, Index t0, Index t1, Index n_col);

/// Stacks z(t) = [y(t); u(t)].
Trajectory interleave(const Trajectory& y, const Trajectory& u);

/// Inverse of interleave: splits the first p channels (outputs) from the rest.
std::pair<Trajectory, Trajectory> deinterleave(const Trajectory& z, Index p);

struct BandPassSettings {
    double low_cutoff = 0.05;     // Hz
    double high_cutoff = 5.0;     // Hz, clamped below the internal Nyquist rate
    int order = 4;                // total order, split evenly between high-pass and low-pass
    double internal_rate = 100.0; // Hz; samples are held (zero-order) at this rate
};

/// Second-order section, a0 normalised to 1. First-order sections have b2 = a2 = 0.
struct Biquad {
    double b0 = 1.0;
    double b1 = 0.0;
    double b2 = 0.0;
    double a1 = 0.0;
    double a2 = 0.0;
};

/**
 * @brief Streaming Butterworth band-pass filter for measurement conditioning.
 *
 * High-pass and low-pass Butterworth halves are cascaded as second-order
 * sections (bilinear transform with pre-warping) running at the internal rate.
 * Each call holds the incoming sample for `oversampling()` internal steps and
 * returns the last internal output, i.e. the stream is decimated back to the
 * caller's sample period. DC is rejected by the high-pass half, which is the
 * only mean-removal mechanism.
 */
class BandPassFilter {
public:
    BandPassFilter(Index channels, double sample_period, BandPassSettings settings = {});

    Eigen::VectorXd apply(const Eigen::Ref<const Eigen::VectorXd>& sample);
    /// Filters a whole trajectory, continuing from the current state.
    Trajectory apply(const Trajectory& traj);
    void reset();

    Index channels() const { return channels_; }
    double low_cutoff() const { return low_; }
    double high_cutoff() const { return high_; }
    double internal_rate() const { return rate_; }
    int oversampling() const { return oversampling_; }
    int order() const { return order_; }
    const std::vector<Biquad>& sections() const { return sections_; }

private:
    Index channels_;
    double low_;
    double high_;
    double rate_;
    int oversampling_;
    int order_;
    std::vector<Biquad> sections_;
    // state_(2*section, channel), state_(2*section+1, channel)
    Eigen::MatrixXd state_;
};

/// Designs the cascade used by BandPassFilter (exposed for frequency-response checks).
std::vector<Biquad> design_bandpass_sections(double low, double high, int order, double rate);

/**
 * @brief Load-variation noise: a bank of low-pass filtered PRBS registers per channel.
 *
 * Five maximal-length LFSR registers per channel switch at rates log-spaced over
 * 0.01-10 Hz; each is first-order low-pass filtered at its own switching rate.
 * The sum is mean-removed and rescaled to the requested standard deviation.
 */
Trajectory prbs_load_noise(Index n_channels, double duration, double std_dev, std::uint64_t seed,
                           double sample_period = kDefaultSamplePeriod);

/// I.i.d. zero-mean Gaussian excitation, hard-clipped to +/-clip.
Trajectory white_excitation(Index m, Index n_samples, double std_dev, double clip, std::uint64_t seed,
                            double sample_period = kDefaultSamplePeriod);

} // namespace ddpc
