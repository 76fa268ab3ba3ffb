#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "ddpc/error.hpp"
#include "ddpc/signals.hpp"

namespace ddpc {

namespace {

enum class Kind { LowPass, HighPass };

// Butterworth of order n as cascaded sections, bilinear transform with the
// cutoff pre-warped so the -3 dB point lands exactly at `cutoff`.
void append_butterworth(std::vector<Biquad>& out, Kind kind, int n, double cutoff, double rate) {
    const double k = std::tan(std::numbers::pi * cutoff / rate);
    for (int i = 0; i < n / 2; ++i) {
        const double theta = std::numbers::pi * (2.0 * i + 1.0) / (2.0 * n);
        const double q = 1.0 / (2.0 * std::cos(theta));
        const double norm = 1.0 / (1.0 + k / q + k * k);
        Biquad s;
        if (kind == Kind::LowPass) {
            s.b0 = k * k * norm;
            s.b1 = 2.0 * s.b0;
            s.b2 = s.b0;
        } else {
            s.b0 = norm;
            s.b1 = -2.0 * norm;
            s.b2 = norm;
        }
        s.a1 = 2.0 * (k * k - 1.0) * norm;
        s.a2 = (1.0 - k / q + k * k) * norm;
        out.push_back(s);
    }
    if (n % 2 == 1) {
        const double norm = 1.0 / (1.0 + k);
        Biquad s;
        if (kind == Kind::LowPass) {
            s.b0 = k * norm;
            s.b1 = s.b0;
        } else {
            s.b0 = norm;
            s.b1 = -norm;
        }
        s.a1 = (k - 1.0) * norm;
        out.push_back(s);
    }
}

} // namespace

std::vector<Biquad> design_bandpass_sections(double low, double high, int order, double rate) {
    if (order < 2 || order % 2 != 0) {
        throw ConfigError(fmt::format("band-pass order must be even and >= 2, got {}", order));
    }
    if (!(low > 0.0) || !(high > low) || !(high < rate / 2.0)) {
        throw ConfigError(fmt::format("band-pass cutoffs need 0 < {} < {} < {}", low, high, rate / 2.0));
    }
    std::vector<Biquad> sections;
    append_butterworth(sections, Kind::HighPass, order / 2, low, rate);
    append_butterworth(sections, Kind::LowPass, order / 2, high, rate);
    return sections;
}

BandPassFilter::BandPassFilter(Index channels, double sample_period, BandPassSettings settings)
    : channels_(channels), low_(settings.low_cutoff), high_(settings.high_cutoff), rate_(settings.internal_rate),
      oversampling_(0), order_(settings.order) {
    if (channels < 1) throw ConfigError("band-pass filter needs at least one channel");
    if (!(sample_period > 0.0)) throw ConfigError("band-pass filter needs a positive sample period");

    const double ratio = rate_ * sample_period;
    oversampling_ = static_cast<int>(std::lround(ratio));
    if (oversampling_ < 1 || std::abs(ratio - oversampling_) > 1e-9 * ratio) {
        throw ConfigError(fmt::format("internal rate {} Hz is not an integer multiple of the sample rate {} Hz",
                                      rate_, 1.0 / sample_period));
    }
    // a 5 Hz corner cannot be realised at a 10 Hz internal rate
    if (high_ >= rate_ / 2.0) high_ = 0.45 * rate_;

    sections_ = design_bandpass_sections(low_, high_, order_, rate_);
    state_ = Eigen::MatrixXd::Zero(2 * static_cast<Index>(sections_.size()), channels_);
}

void BandPassFilter::reset() { state_.setZero(); }

Eigen::VectorXd BandPassFilter::apply(const Eigen::Ref<const Eigen::VectorXd>& sample) {
    if (sample.size() != channels_) {
        throw DimensionError(
            fmt::format("band-pass filter has {} channels, sample has {}", channels_, sample.size()));
    }
    Eigen::VectorXd out(channels_);
    for (Index c = 0; c < channels_; ++c) {
        double y = 0.0;
        for (int r = 0; r < oversampling_; ++r) {
            double x = sample(c);
            for (std::size_t s = 0; s < sections_.size(); ++s) {
                const Biquad& q = sections_[s];
                double& s1 = state_(2 * static_cast<Index>(s), c);
                double& s2 = state_(2 * static_cast<Index>(s) + 1, c);
                // transposed direct form II
                const double v = q.b0 * x + s1;
                s1 = q.b1 * x - q.a1 * v + s2;
                s2 = q.b2 * x - q.a2 * v;
                x = v;
            }
            y = x;
        }
        out(c) = y;
    }
    return out;
}

Trajectory BandPassFilter::apply(const Trajectory& traj) {
    Eigen::MatrixXd out(traj.channels(), traj.length());
    for (Index t = 0; t < traj.length(); ++t) {
        out.col(t) = apply(traj.data().col(t));
    }
    return Trajectory(std::move(out), traj.sample_period());
}

} // namespace ddpc
