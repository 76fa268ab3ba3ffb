#include "ddpc/plant.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include <Eigen/Eigenvalues>
#include <fmt/format.h>

#include "ddpc/error.hpp"

namespace ddpc {

void PlantModel::validate() const {
    const Index n = A.rows();
    if (A.cols() != n || B.rows() != n || Bd.rows() != n || C.cols() != n) {
        throw DimensionError(fmt::format("plant shapes inconsistent: A {}x{}, B {}x{}, Bd {}x{}, C {}x{}", A.rows(),
                                         A.cols(), B.rows(), B.cols(), Bd.rows(), Bd.cols(), C.rows(), C.cols()));
    }
    if (D.rows() != C.rows() || D.cols() != B.cols()) {
        throw DimensionError(fmt::format("D is {}x{}, expected {}x{}", D.rows(), D.cols(), C.rows(), B.cols()));
    }
    if (!D.isZero(0.0)) {
        throw ConfigError("feedthrough D must be zero: inputs reach the outputs one step later");
    }
    if (!(sample_period > 0.0)) throw ConfigError("plant sample period must be positive");
    if (saturation_limit && !(*saturation_limit > 0.0)) throw ConfigError("saturation limit must be positive");
}

PlantState PlantState::zero(const PlantModel& plant) { return {Eigen::VectorXd::Zero(plant.n_states()), 0}; }

PlantModel build_modal_plant(const std::vector<ModeSpec>& modes, double sample_period,
                             std::optional<double> saturation_limit) {
    if (modes.empty()) throw ConfigError("plant needs at least one mode");
    if (!(sample_period > 0.0)) throw ConfigError("plant sample period must be positive");

    const Index m = modes.front().input_residues.size();
    const Index p = modes.front().output_residues.size();
    const Index nd = modes.front().disturbance_residues.size();
    const Index n = 2 * static_cast<Index>(modes.size());
    const double nyquist = 0.5 / sample_period;

    PlantModel plant;
    plant.A = Eigen::MatrixXd::Zero(n, n);
    plant.B = Eigen::MatrixXd::Zero(n, m);
    plant.Bd = Eigen::MatrixXd::Zero(n, nd);
    plant.C = Eigen::MatrixXd::Zero(p, n);
    plant.D = Eigen::MatrixXd::Zero(p, m);
    plant.sample_period = sample_period;
    plant.saturation_limit = saturation_limit;

    for (std::size_t k = 0; k < modes.size(); ++k) {
        const ModeSpec& mode = modes[k];
        if (!(mode.freq_hz > 0.0)) throw ConfigError(fmt::format("mode {}: frequency must be positive", k));
        if (mode.freq_hz >= nyquist) {
            throw ConfigError(
                fmt::format("mode {}: {} Hz violates the Nyquist limit {} Hz", k, mode.freq_hz, nyquist));
        }
        if (!(mode.damping_ratio > -1.0 && mode.damping_ratio < 1.0)) {
            throw ConfigError(fmt::format("mode {}: damping ratio {} outside (-1, 1)", k, mode.damping_ratio));
        }
        if (mode.input_residues.size() != m || mode.output_residues.size() != p ||
            mode.disturbance_residues.size() != nd) {
            throw DimensionError(fmt::format("mode {}: residue vector sizes differ from mode 0", k));
        }
        if (!mode.input_residues.allFinite() || !mode.output_residues.allFinite() ||
            !mode.disturbance_residues.allFinite()) {
            throw ConfigError(fmt::format("mode {}: residues must be finite", k));
        }

        const double w = 2.0 * std::numbers::pi * mode.freq_hz;
        const double sigma = -mode.damping_ratio * w;
        const double wd = w * std::sqrt(1.0 - mode.damping_ratio * mode.damping_ratio);

        // continuous block [[sigma, wd], [-wd, sigma]]; its exponential is a scaled rotation
        const double decay = std::exp(sigma * sample_period);
        const double c = std::cos(wd * sample_period);
        const double s = std::sin(wd * sample_period);
        Eigen::Matrix2d ad;
        ad << decay * c, decay * s, -decay * s, decay * c;

        Eigen::Matrix2d ac;
        ac << sigma, wd, -wd, sigma;
        // zero-order-hold integral of exp(ac*tau) over one sample: ac^-1 (ad - I)
        const Eigen::Matrix2d hold = ac.inverse() * (ad - Eigen::Matrix2d::Identity());

        const Index r = 2 * static_cast<Index>(k);
        plant.A.block<2, 2>(r, r) = ad;
        // inputs drive the second state of the block so the DC gain is ~ output_residues * input_residues^T
        plant.B.middleRows(r, 2) = hold.col(1) * (w * mode.input_residues.transpose());
        plant.Bd.middleRows(r, 2) = hold.col(1) * (w * mode.disturbance_residues.transpose());
        plant.C.col(r) = mode.output_residues;
    }
    plant.validate();
    return plant;
}

PlantModel build_plant(const PlantSpec& spec) {
    return build_modal_plant(spec.modes, spec.sample_period, spec.saturation_limit);
}

Eigen::VectorXd saturate(const PlantModel& plant, const Eigen::Ref<const Eigen::VectorXd>& u) {
    if (!plant.saturation_limit) return u;
    const double lim = *plant.saturation_limit;
    return u.cwiseMax(-lim).cwiseMin(lim);
}

Eigen::VectorXd output(const PlantModel& plant, const PlantState& state) { return plant.C * state.x; }

StepResult step(const PlantModel& plant, const PlantState& state, const Eigen::Ref<const Eigen::VectorXd>& u,
                const Eigen::Ref<const Eigen::VectorXd>& d) {
    if (u.size() != plant.n_inputs() || d.size() != plant.n_disturbances() || state.x.size() != plant.n_states()) {
        throw DimensionError(fmt::format("step: u has {} (want {}), d has {} (want {}), x has {} (want {})",
                                         u.size(), plant.n_inputs(), d.size(), plant.n_disturbances(),
                                         state.x.size(), plant.n_states()));
    }
    StepResult r;
    r.y = plant.C * state.x;
    r.state.x = plant.A * state.x + plant.B * saturate(plant, u) + plant.Bd * d;
    r.state.t = state.t + 1;
    return r;
}

Trajectory simulate(const PlantModel& plant, const Trajectory& u, const Trajectory* d, const Eigen::VectorXd& x0) {
    if (u.channels() != plant.n_inputs()) {
        throw DimensionError(fmt::format("simulate: {} input channels, plant has {}", u.channels(), plant.n_inputs()));
    }
    if (d && (d->channels() != plant.n_disturbances() || d->length() < u.length())) {
        throw DimensionError("simulate: disturbance trajectory shape does not match");
    }
    Eigen::VectorXd x = x0.size() ? x0 : Eigen::VectorXd::Zero(plant.n_states());
    if (x.size() != plant.n_states()) throw DimensionError("simulate: initial state has wrong size");

    Eigen::MatrixXd y(plant.n_outputs(), u.length());
    for (Index t = 0; t < u.length(); ++t) {
        y.col(t) = plant.C * x;
        Eigen::VectorXd next = plant.A * x + plant.B * saturate(plant, u.data().col(t));
        if (d) next += plant.Bd * d->data().col(t);
        x = std::move(next);
    }
    return Trajectory(std::move(y), u.sample_period());
}

std::vector<ModalDamping> eigen_damping(const PlantModel& plant) {
    Eigen::EigenSolver<Eigen::MatrixXd> solver(plant.A, false);
    std::vector<ModalDamping> out;
    for (Index i = 0; i < solver.eigenvalues().size(); ++i) {
        const std::complex<double> lambda = solver.eigenvalues()(i);
        if (lambda.imag() <= 0.0) continue; // one per conjugate pair, real poles skipped
        const std::complex<double> s = std::log(lambda) / plant.sample_period;
        out.push_back({std::abs(s) / (2.0 * std::numbers::pi), -s.real() / std::abs(s)});
    }
    std::sort(out.begin(), out.end(), [](const ModalDamping& a, const ModalDamping& b) {
        return a.freq_hz != b.freq_hz ? a.freq_hz < b.freq_hz : a.damping_ratio < b.damping_ratio;
    });
    return out;
}

Trajectory doublet(Index input_index, double amplitude, double duration, double sample_period, Index n_inputs,
                   double total_duration, double start) {
    if (input_index < 0 || input_index >= n_inputs) {
        throw OutOfRangeError(fmt::format("doublet channel {} outside [0, {})", input_index, n_inputs));
    }
    if (!(amplitude > 0.0) || !(duration > 0.0)) throw ConfigError("doublet needs amplitude > 0 and duration > 0");
    const auto n = static_cast<Index>(std::llround(total_duration / sample_period));
    const auto k0 = static_cast<Index>(std::llround(start / sample_period));
    const auto len = static_cast<Index>(std::llround(duration / sample_period));
    if (k0 + 2 * len > n) throw OutOfRangeError("doublet does not fit in the requested total duration");

    Eigen::MatrixXd u = Eigen::MatrixXd::Zero(n_inputs, n);
    u.row(input_index).segment(k0, len).setConstant(amplitude);
    u.row(input_index).segment(k0 + len, len).setConstant(-amplitude);
    return Trajectory(std::move(u), sample_period);
}

Trajectory scenario_disturbance(DisturbanceKind kind, double magnitude, double at, double total_duration,
                                double sample_period, const Eigen::VectorXd& direction) {
    if (!std::isfinite(magnitude)) throw ConfigError("disturbance magnitude must be finite");
    if (direction.size() < 1) throw DimensionError("disturbance direction is empty");
    const auto n = static_cast<Index>(std::llround(total_duration / sample_period));
    const auto k0 = static_cast<Index>(std::llround(at / sample_period));
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(direction.size(), std::max<Index>(n, 1));
    for (Index t = k0; t < d.cols(); ++t) {
        switch (kind) {
        case DisturbanceKind::Impulse:
            if (t == k0) d.col(t) = magnitude * direction;
            break;
        case DisturbanceKind::Step:
            d.col(t) = magnitude * direction;
            break;
        case DisturbanceKind::Ramp:
            d.col(t) = magnitude * static_cast<double>(t - k0) * sample_period * direction;
            break;
        }
    }
    return Trajectory(std::move(d), sample_period);
}

namespace {

constexpr double kNoiseStd = 0.01;       // pu, load variation level
constexpr double kTargetOutputStd = 0.01; // pu, open-loop noise-driven output level
constexpr double kExcitationStd = 0.0025;  // pu, training excitation level

Eigen::VectorXd unit_normal(std::mt19937_64& rng, Index n) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd v(n);
    for (Index i = 0; i < n; ++i) v(i) = normal(rng);
    return v.normalized();
}

} // namespace

PlantSpec benchmark_plant_spec(double dominant_damping, std::uint64_t seed) {
    struct Freq {
        double hz;
        double zeta;
    };
    // dominant inter-area mode first, then the 0.77 Hz pair and the local mode
    const Freq inventory[] = {{0.44, 0.002}, {0.77, 0.03}, {0.77, 0.035}, {1.3, 0.08}};
    constexpr Index m = 3;
    constexpr Index p = 3;
    constexpr Index nd = 3;

    std::mt19937_64 rng(seed);
    PlantSpec spec;
    spec.sample_period = kDefaultSamplePeriod;
    spec.saturation_limit = 0.1;
    spec.seed = seed;
    for (const Freq& f : inventory) {
        ModeSpec mode;
        mode.freq_hz = f.hz;
        mode.damping_ratio = f.zeta;
        mode.input_residues = unit_normal(rng, m);
        mode.output_residues = unit_normal(rng, p);
        mode.disturbance_residues = unit_normal(rng, nd);
        spec.modes.push_back(mode);
    }

    // Scale each output channel so load noise alone drives it to kTargetOutputStd.
    // Long horizon: the 0.2 % mode needs ~1/(zeta*w) = 180 s to reach stationarity.
    {
        const PlantModel plant = build_plant(spec);
        const double settle = 1000.0;
        const double span = 2000.0;
        const Trajectory noise = prbs_load_noise(nd, settle + span, kNoiseStd, seed + 1, spec.sample_period);
        const Trajectory u = Trajectory::zeros(m, noise.length(), spec.sample_period);
        const Trajectory y = simulate(plant, u, &noise);
        const auto skip = static_cast<Index>(settle / spec.sample_period);
        const Eigen::MatrixXd tail = y.data().rightCols(y.length() - skip);
        for (Index i = 0; i < p; ++i) {
            const Eigen::RowVectorXd row = tail.row(i).array() - tail.row(i).mean();
            const double sd = std::sqrt(row.squaredNorm() / static_cast<double>(row.size()));
            for (ModeSpec& mode : spec.modes) mode.output_residues(i) *= kTargetOutputStd / sd;
        }
    }
    // Equal input authority per mode, then one common factor so the training
    // excitation drives the outputs to the same level as the load noise.
    for (ModeSpec& mode : spec.modes) mode.input_residues /= mode.output_residues.norm();
    {
        const PlantModel plant = build_plant(spec);
        const double settle = 1000.0;
        const double span = 2000.0;
        const auto n = static_cast<Index>((settle + span) / spec.sample_period);
        const Trajectory u = white_excitation(m, n, kExcitationStd, 10.0 * kExcitationStd, seed + 2, spec.sample_period);
        const Trajectory y = simulate(plant, u);
        const auto skip = static_cast<Index>(settle / spec.sample_period);
        const Eigen::MatrixXd tail = y.data().rightCols(y.length() - skip);
        double var = 0.0;
        for (Index i = 0; i < p; ++i) {
            const Eigen::RowVectorXd row = tail.row(i).array() - tail.row(i).mean();
            var += row.squaredNorm() / static_cast<double>(row.size());
        }
        const double sd = std::sqrt(var / static_cast<double>(p));
        for (ModeSpec& mode : spec.modes) mode.input_residues *= kTargetOutputStd / sd;
    }
    spec.modes.front().damping_ratio = dominant_damping;
    return spec;
}

Eigen::VectorXd dominant_disturbance_direction(const PlantSpec& spec) {
    if (spec.modes.empty()) throw ConfigError("plant spec has no modes");
    return spec.modes.front().disturbance_residues.normalized();
}

double calibrate_impulse(const PlantModel& plant, const Eigen::VectorXd& direction, double target_peak,
                         Index channel) {
    if (channel < 0 || channel >= plant.n_outputs()) throw OutOfRangeError("calibration channel out of range");
    const double window = 4.0; // s, covers the first swing of a 0.44 Hz mode
    const Trajectory d = scenario_disturbance(DisturbanceKind::Impulse, 1.0, 0.0, window, plant.sample_period,
                                              direction);
    const Trajectory u = Trajectory::zeros(plant.n_inputs(), d.length(), plant.sample_period);
    const Trajectory y = simulate(plant, u, &d);
    const double peak = y.data().row(channel).cwiseAbs().maxCoeff();
    if (!(peak > 0.0)) throw DegenerateDataError("impulse direction does not reach the calibration channel");
    return target_peak / peak;
}

} // namespace ddpc
