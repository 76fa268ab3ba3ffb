#include "ddpc/signals.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include <fmt/format.h>

#include "ddpc/error.hpp"

namespace ddpc {

Trajectory::Trajectory(Eigen::MatrixXd samples, double sample_period)
    : samples_(std::move(samples)), sample_period_(sample_period) {
    if (samples_.rows() < 1 || samples_.cols() < 1) {
        throw ConfigError("trajectory needs at least one channel and one sample");
    }
    if (!(sample_period_ > 0.0)) {
        throw ConfigError(fmt::format("sample period must be positive, got {}", sample_period_));
    }
}

Trajectory Trajectory::zeros(Index channels, Index length, double sample_period) {
    return Trajectory(Eigen::MatrixXd::Zero(channels, length), sample_period);
}

Eigen::VectorXd Trajectory::sample(Index t) const {
    if (t < 0 || t >= length()) {
        throw OutOfRangeError(fmt::format("sample {} outside trajectory of length {}", t, length()));
    }
    return samples_.col(t);
}

void Trajectory::set_sample(Index t, const Eigen::Ref<const Eigen::VectorXd>& value) {
    if (t < 0 || t >= length()) {
        throw OutOfRangeError(fmt::format("sample {} outside trajectory of length {}", t, length()));
    }
    if (value.size() != channels()) {
        throw DimensionError(fmt::format("sample has {} entries, trajectory has {} channels", value.size(),
                                         channels()));
    }
    samples_.col(t) = value;
}

Trajectory Trajectory::slice(Index t0, Index len) const {
    if (t0 < 0 || len < 1 || t0 + len > length()) {
        throw OutOfRangeError(
            fmt::format("slice [{}, {}) outside trajectory of length {}", t0, t0 + len, length()));
    }
    return Trajectory(samples_.middleCols(t0, len), sample_period_);
}

void HankelConfig::validate() const {
    if (tau_p < 1 || tau_f < 1) {
        throw ConfigError(fmt::format("horizons must be >= 1 (tau_p={}, tau_f={})", tau_p, tau_f));
    }
    if (n_col() < 1) {
        throw ConfigError(fmt::format("n_samples={} too short for tau_p + tau_f = {}", n_samples, window()));
    }
}

HankelMatrix build_hankel(const Trajectory& traj, Index t0, Index t1, Index n_col) {
    if (t0 < 0 || t1 < t0 || n_col < 1) {
        throw OutOfRangeError(fmt::format("invalid Hankel window [{}, {}] with n_col={}", t0, t1, n_col));
    }
    if (t1 + n_col - 1 >= traj.length()) {
        throw OutOfRangeError(fmt::format("Hankel window [{}, {}] with {} columns needs {} samples, have {}", t0,
                                          t1, n_col, t1 + n_col, traj.length()));
    }
    const Index nw = traj.channels();
    const Index rows = t1 - t0 + 1;
    const double scale = 1.0 / std::sqrt(static_cast<double>(n_col));

    HankelMatrix h;
    h.channels = nw;
    h.t0 = t0;
    h.t1 = t1;
    h.values.resize(nw * rows, n_col);
    const auto& w = traj.data();
    for (Index i = 0; i < rows; ++i) {
        h.values.middleRows(i * nw, nw) = scale * w.middleCols(t0 + i, n_col);
    }
    return h;
}

Trajectory interleave(const Trajectory& y, const Trajectory& u) {
    if (y.length() != u.length()) {
        throw DimensionError(fmt::format("interleave: output length {} != input length {}", y.length(),
                                         u.length()));
    }
    if (y.sample_period() != u.sample_period()) {
        throw DimensionError("interleave: sample periods differ");
    }
    Eigen::MatrixXd z(y.channels() + u.channels(), y.length());
    z.topRows(y.channels()) = y.data();
    z.bottomRows(u.channels()) = u.data();
    return Trajectory(std::move(z), y.sample_period());
}

std::pair<Trajectory, Trajectory> deinterleave(const Trajectory& z, Index p) {
    if (p < 1 || p >= z.channels()) {
        throw DimensionError(fmt::format("deinterleave: p={} invalid for {} channels", p, z.channels()));
    }
    return {Trajectory(z.data().topRows(p), z.sample_period()),
            Trajectory(z.data().bottomRows(z.channels() - p), z.sample_period())};
}

namespace {

// PRBS31 (x^31 + x^28 + 1), Fibonacci form.
class Lfsr31 {
public:
    explicit Lfsr31(std::uint32_t seed) : state_(seed & 0x7fffffffu) {
        if (state_ == 0) state_ = 1;
    }
    int next() {
        const std::uint32_t bit = ((state_ >> 30) ^ (state_ >> 27)) & 1u;
        state_ = ((state_ << 1) | bit) & 0x7fffffffu;
        return bit ? 1 : -1;
    }

private:
    std::uint32_t state_;
};

} // namespace

Trajectory prbs_load_noise(Index n_channels, double duration, double std_dev, std::uint64_t seed,
                           double sample_period) {
    if (std_dev < 0.0) throw ConfigError("load noise standard deviation must be >= 0");
    if (!(duration > 0.0)) throw ConfigError("load noise duration must be positive");
    if (n_channels < 1) throw ConfigError("load noise needs at least one channel");

    const auto n = static_cast<Index>(std::llround(duration / sample_period));
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n_channels, std::max<Index>(n, 1));
    if (std_dev == 0.0) return Trajectory(std::move(out), sample_period);

    constexpr int kRegisters = 5;
    constexpr double kMinRate = 0.01;
    constexpr double kMaxRate = 10.0;
    std::array<double, kRegisters> rates{};
    for (int k = 0; k < kRegisters; ++k) {
        const double frac = static_cast<double>(k) / (kRegisters - 1);
        rates[k] = kMinRate * std::pow(kMaxRate / kMinRate, frac);
    }

    std::mt19937_64 rng(seed);
    for (Index c = 0; c < n_channels; ++c) {
        for (int k = 0; k < kRegisters; ++k) {
            Lfsr31 reg(static_cast<std::uint32_t>(rng()));
            const double pole = std::exp(-2.0 * std::numbers::pi * rates[k] * sample_period);
            double value = reg.next();
            long long ticks = 0;
            double lp = 0.0;
            for (Index t = 0; t < out.cols(); ++t) {
                const auto due = static_cast<long long>(std::floor(static_cast<double>(t) * sample_period * rates[k]));
                while (ticks < due) {
                    value = reg.next();
                    ++ticks;
                }
                lp = pole * lp + (1.0 - pole) * value;
                out(c, t) += lp;
            }
        }
        auto row = out.row(c);
        row.array() -= row.mean();
        const double sd = std::sqrt(row.squaredNorm() / static_cast<double>(row.size()));
        if (sd > 0.0) row *= std_dev / sd;
    }
    return Trajectory(std::move(out), sample_period);
}

Trajectory white_excitation(Index m, Index n_samples, double std_dev, double clip, std::uint64_t seed,
                            double sample_period) {
    if (!(std_dev > 0.0) || !(clip > 0.0)) {
        throw ConfigError("white excitation needs std > 0 and clip > 0");
    }
    if (m < 1 || n_samples < 1) throw ConfigError("white excitation needs m >= 1 and n_samples >= 1");

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, std_dev);
    Eigen::MatrixXd u(m, n_samples);
    for (Index t = 0; t < n_samples; ++t) {
        for (Index i = 0; i < m; ++i) {
            u(i, t) = std::clamp(normal(rng), -clip, clip);
        }
    }
    return Trajectory(std::move(u), sample_period);
}

} // namespace ddpc
