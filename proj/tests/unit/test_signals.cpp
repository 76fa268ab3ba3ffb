#include <doctest.h>

#include <cmath>

#include <Eigen/SVD>

#include "ddpc/error.hpp"
#include "ddpc/signals.hpp"
#include "oracles.hpp"

using namespace ddpc;
using ddpc::testing::analog_bandpass_gain;
using ddpc::testing::cascade_gain;
using ddpc::testing::measured_gain;
using ddpc::testing::zoh_gain;

namespace {

Trajectory ramp(Index channels, Index n) {
    Eigen::MatrixXd d(channels, n);
    for (Index c = 0; c < channels; ++c)
        for (Index t = 0; t < n; ++t) d(c, t) = 1.0 + t + 100.0 * c;
    return Trajectory(d);
}

double stddev(const Eigen::MatrixXd& v) {
    const double mean = v.mean();
    return std::sqrt((v.array() - mean).square().sum() / static_cast<double>(v.size()));
}

} // namespace

TEST_CASE("trajectory invariants") {
    CHECK_THROWS_AS(Trajectory(Eigen::MatrixXd(0, 3)), ConfigError);
    CHECK_THROWS_AS(Trajectory(Eigen::MatrixXd::Zero(2, 3), 0.0), ConfigError);
    Trajectory t = Trajectory::zeros(2, 5);
    CHECK(t.sample_period() == doctest::Approx(0.1));
    CHECK_THROWS_AS(t.sample(5), OutOfRangeError);
    CHECK_THROWS_AS(t.set_sample(0, Eigen::VectorXd::Zero(3)), DimensionError);
    t.set_sample(4, Eigen::Vector2d(1.0, 2.0));
    CHECK(t.slice(4, 1).sample(0) == Eigen::Vector2d(1.0, 2.0));
}

TEST_CASE("hankel of a short scalar trajectory") {
    Eigen::MatrixXd d(1, 4);
    d << 1, 2, 3, 4;
    const HankelMatrix H = build_hankel(Trajectory(d), 0, 1, 3);
    Eigen::MatrixXd expected(2, 3);
    expected << 1, 2, 3, 2, 3, 4;
    expected /= std::sqrt(3.0);
    CHECK(H.n_row() == 2);
    CHECK(H.n_col() == 3);
    CHECK((H.values - expected).norm() == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("hankel of a constant trajectory") {
    const Trajectory c(Eigen::MatrixXd::Constant(2, 50, 0.7));
    const HankelMatrix H = build_hankel(c, 3, 9, 20);
    CHECK(H.n_row() == 2 * 7);
    CHECK((H.values.array() - 0.7 / std::sqrt(20.0)).abs().maxCoeff() < 1e-15);
}

TEST_CASE("hankel shift structure and row scaling") {
    const Trajectory w = ramp(3, 40);
    const Index n_col = 25;
    const HankelMatrix H = build_hankel(w, 2, 10, n_col);
    const Index ch = 3;
    for (Index i = 0; i + 1 < H.n_row() / ch; ++i) {
        for (Index j = 0; j + 1 < n_col; ++j) {
            CHECK(H.values.block(i * ch, j + 1, ch, 1) == H.values.block((i + 1) * ch, j, ch, 1));
        }
    }
    for (Index r = 0; r < H.n_row(); ++r) {
        const Index i = r / ch, c = r % ch;
        double sum = 0.0;
        for (Index j = 0; j < n_col; ++j) sum += std::pow(w.data()(c, 2 + i + j), 2);
        CHECK(H.values.row(r).squaredNorm() == doctest::Approx(sum / n_col).epsilon(1e-13));
    }
}

TEST_CASE("hankel window errors") {
    const Trajectory w = ramp(1, 10);
    CHECK_THROWS_AS(build_hankel(w, 0, 5, 6), OutOfRangeError);
    CHECK_THROWS_AS(build_hankel(w, 3, 2, 2), OutOfRangeError);
    CHECK_NOTHROW(build_hankel(w, 0, 4, 6));
}

TEST_CASE("hankel config column count") {
    HankelConfig cfg{30, 60, 2000};
    CHECK(cfg.n_col() == 1911);
    CHECK_THROWS_AS((HankelConfig{0, 60, 2000}.validate()), ConfigError);
    CHECK_THROWS_AS((HankelConfig{30, 60, 89}.validate()), ConfigError);
    CHECK_NOTHROW((HankelConfig{30, 60, 90}.validate()));
}

TEST_CASE("interleave ordering and round trip") {
    Eigen::MatrixXd y(1, 2), u(1, 2);
    y << 1, 2;
    u << 9, 8;
    const Trajectory z = interleave(Trajectory(y), Trajectory(u));
    Eigen::MatrixXd expected(2, 2);
    expected << 1, 2, 9, 8;
    CHECK(z.data() == expected);

    const Trajectory y3 = ramp(3, 7), u3 = ramp(3, 7);
    const Trajectory z3 = interleave(y3, u3);
    CHECK(z3.channels() == 6);
    CHECK(z3.data().topRows(3) == y3.data());
    const auto [yb, ub] = deinterleave(z3, 3);
    CHECK(yb.data() == y3.data());
    CHECK(ub.data() == u3.data());

    CHECK_THROWS_AS(interleave(ramp(1, 3), ramp(1, 4)), DimensionError);
    CHECK_THROWS_AS(interleave(Trajectory(y, 0.1), Trajectory(u, 0.2)), DimensionError);
}

TEST_CASE("band-pass rejects DC") {
    BandPassFilter f(1, 0.1);
    Eigen::VectorXd one = Eigen::VectorXd::Ones(1);
    double last = 1.0;
    for (int t = 0; t < 600; ++t) last = f.apply(one)(0);
    CHECK(std::abs(last) < 1e-3);
}

TEST_CASE("band-pass design matches the analog Butterworth prototype") {
    const BandPassFilter f(1, 0.1);
    CHECK(f.internal_rate() == doctest::Approx(100.0));
    CHECK(f.oversampling() == 10);
    for (double hz : {0.01, 0.05, 0.2, 0.44, 1.3, 3.0, 5.0}) {
        CAPTURE(hz);
        const double digital = cascade_gain(f.sections(), hz, f.internal_rate());
        CHECK(digital == doctest::Approx(analog_bandpass_gain(hz, 0.05, 5.0, 2, 2)).epsilon(0.02));
    }
}

TEST_CASE("band-pass steady-state gains") {
    BandPassFilter f(1, 0.1);
    const double g044 = measured_gain(f, 0.44, 0.1, 200.0, 60.0);
    // hold at 0.1 s then the designed response; folded images add about 1%
    const double oracle = analog_bandpass_gain(0.44, 0.05, 5.0, 2, 2) * zoh_gain(0.44, 0.1);
    CHECK(g044 == doctest::Approx(oracle).epsilon(0.03));
    CHECK(g044 >= 0.7);
    CHECK(g044 <= 1.0);

    f.reset();
    const double g0005 = measured_gain(f, 0.005, 0.1, 2000.0, 800.0);
    CHECK(g0005 == doctest::Approx(analog_bandpass_gain(0.005, 0.05, 5.0, 2, 2)).epsilon(0.05));
    CHECK(g0005 < 0.1);
}

TEST_CASE("band-pass linearity on fresh states") {
    const Trajectory x = white_excitation(2, 300, 1.0, 3.0, 4);
    Eigen::MatrixXd yd(2, 300);
    for (Index t = 0; t < 300; ++t) yd.col(t) = Eigen::Vector2d(std::sin(0.3 * t), std::cos(0.11 * t));
    const Trajectory y(yd);
    const double a = 0.7, b = -2.5;
    BandPassFilter f1(2, 0.1), f2(2, 0.1), f3(2, 0.1);
    const Trajectory combo(a * x.data() + b * y.data());
    const Eigen::MatrixXd lhs = f1.apply(combo).data();
    const Eigen::MatrixXd rhs = a * f2.apply(x).data() + b * f3.apply(y).data();
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, rhs.cwiseAbs().maxCoeff()));
}

TEST_CASE("band-pass settings validation") {
    CHECK_THROWS_AS(BandPassFilter(1, 0.1, BandPassSettings{5.0, 1.0}), ConfigError);
    CHECK_THROWS_AS(BandPassFilter(1, 0.1, BandPassSettings{0.05, 5.0, 3}), ConfigError);
    CHECK_THROWS_AS(BandPassFilter(0, 0.1), ConfigError);
    const BandPassFilter clamped(1, 0.1, BandPassSettings{0.05, 80.0});
    CHECK(clamped.high_cutoff() < clamped.internal_rate() / 2.0);
}

TEST_CASE("load noise") {
    const Trajectory n = prbs_load_noise(3, 600.0, 0.01, 5);
    CHECK(n.length() == 6000);
    for (Index c = 0; c < 3; ++c) CHECK(stddev(n.data().row(c)) == doctest::Approx(0.01).epsilon(0.05));
    CHECK(prbs_load_noise(3, 600.0, 0.01, 5).data() == n.data());
    CHECK(prbs_load_noise(3, 600.0, 0.01, 6).data() != n.data());
    CHECK(prbs_load_noise(2, 10.0, 0.0, 5).data().isZero(0.0));
    CHECK_THROWS_AS(prbs_load_noise(2, 10.0, -1.0, 5), ConfigError);
}

TEST_CASE("white excitation") {
    const Trajectory u = white_excitation(3, 2000, 0.0025, 0.1, 1);
    CHECK(u.data().cwiseAbs().maxCoeff() <= 0.1);
    for (Index c = 0; c < 3; ++c) CHECK(stddev(u.data().row(c)) == doctest::Approx(0.0025).epsilon(0.05));
    CHECK(white_excitation(3, 2000, 0.0025, 0.1, 1).data() == u.data());

    const Trajectory sat = white_excitation(2, 500, 0.0025, 0.000025, 3);
    const double frac = (sat.data().cwiseAbs().array() == 0.000025).cast<double>().mean();
    CHECK(frac > 0.98);

    // persistency of excitation of order tau_p + tau_f
    const Trajectory e = white_excitation(3, 400, 0.0025, 0.1, 9);
    const HankelMatrix H = build_hankel(e, 0, 39, 400 - 40 + 1);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(H.values);
    const auto& s = svd.singularValues();
    CHECK(s(s.size() - 1) > 1e-6 * s(0));

    CHECK_THROWS_AS(white_excitation(3, 10, 0.0, 0.1, 1), ConfigError);
    CHECK_THROWS_AS(white_excitation(3, 10, 0.1, 0.0, 1), ConfigError);
}
