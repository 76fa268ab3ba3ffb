#include <doctest.h>

#include <cmath>

#include "ddpc/error.hpp"
#include "ddpc/predictors.hpp"
#include "oracles.hpp"

using namespace ddpc;
using ddpc::testing::random_stable_plant;
using ddpc::testing::rollout;

namespace {

struct Dataset {
    PlantModel plant;
    Trajectory u;
    Trajectory y;
    Eigen::VectorXd x_end;
};

Dataset noiseless_data(Index n, Index m, Index p, Index samples, std::uint64_t seed) {
    PlantModel plant = random_stable_plant(n, m, p, seed);
    const Trajectory u = white_excitation(m, samples, 1.0, 4.0, seed + 100);
    auto [y, x_end] = rollout(plant, Eigen::VectorXd::Zero(n), u.data());
    return {plant, u, y, x_end};
}

// past z_p and true future from continuing the data-generating plant with fresh inputs
struct Window {
    Eigen::VectorXd z_p;
    Eigen::VectorXd u_p;
    Eigen::VectorXd y_p;
    Eigen::VectorXd u_f;
    Eigen::VectorXd y_f;
};

Window fresh_window(const PlantModel& plant, Index tau_p, Index tau_f, std::uint64_t seed) {
    const Index m = plant.B.cols(), p = plant.C.rows();
    const Trajectory u = white_excitation(m, 200 + tau_p + tau_f, 1.0, 4.0, seed);
    auto [y, x_end] = rollout(plant, Eigen::VectorXd::Zero(plant.A.rows()), u.data());
    Window w;
    w.z_p.resize((p + m) * tau_p);
    w.u_p.resize(m * tau_p);
    w.y_p.resize(p * tau_p);
    for (Index k = 0; k < tau_p; ++k) {
        const Index t = 200 + k;
        w.z_p.segment(k * (p + m), p) = y.data().col(t);
        w.z_p.segment(k * (p + m) + p, m) = u.data().col(t);
        w.u_p.segment(k * m, m) = u.data().col(t);
        w.y_p.segment(k * p, p) = y.data().col(t);
    }
    w.u_f.resize(m * tau_f);
    w.y_f.resize(p * tau_f);
    for (Index k = 0; k < tau_f; ++k) {
        const Index t = 200 + tau_p + k;
        w.u_f.segment(k * m, m) = u.data().col(t);
        w.y_f.segment(k * p, p) = y.data().col(t);
    }
    return w;
}

double rel(const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return (a - b).norm() / b.norm(); }

void check_block_strictly_lower(const Eigen::MatrixXd& H_u, Index p, Index m, Index tau_f) {
    for (Index k = 0; k < tau_f; ++k)
        for (Index j = k; j < tau_f; ++j) CHECK(H_u.block(k * p, j * m, p, m).isZero(0.0));
}

} // namespace

TEST_CASE("deepc data shapes") {
    const Trajectory u = white_excitation(3, 500, 0.0025, 0.1, 1);
    const Trajectory y = white_excitation(3, 500, 0.0025, 0.1, 2);
    const DeePCData d = build_deepc_data(u, y, {60, 60, 500});
    CHECK(d.n_col() == 381);
    CHECK(d.U_p.n_row() == 180);
    CHECK(d.Y_p.n_row() == 180);
    CHECK(d.U_f.n_row() == 180);
    CHECK(d.Y_f.n_row() == 180);
    CHECK(d.U_p.n_col() == 381);
    CHECK(d.Y_f.n_col() == 381);

    const Trajectory u1 = white_excitation(1, 50, 1.0, 3.0, 3);
    const Trajectory y1 = white_excitation(1, 50, 1.0, 3.0, 4);
    const DeePCData s = build_deepc_data(u1, y1, {1, 1, 50});
    CHECK(s.U_p.values.rows() == 1);
    CHECK(s.U_p.values.cols() == 49);
    const double scale = std::sqrt(49.0);
    for (Index j = 0; j < 49; ++j) {
        CHECK(s.U_p.values(0, j) * scale == doctest::Approx(u1.data()(0, j)));
        CHECK(s.Y_p.values(0, j) * scale == doctest::Approx(y1.data()(0, j)));
        CHECK(s.U_f.values(0, j) * scale == doctest::Approx(u1.data()(0, j + 1)));
        CHECK(s.Y_f.values(0, j) * scale == doctest::Approx(y1.data()(0, j + 1)));
    }
    CHECK_THROWS_AS(build_deepc_data(u1, y1, {1, 1, 51}), OutOfRangeError);
}

TEST_CASE("deepc data uses the last n_samples samples") {
    const Trajectory u = white_excitation(2, 300, 1.0, 3.0, 5);
    const Trajectory y = white_excitation(2, 300, 1.0, 3.0, 6);
    const DeePCData full = build_deepc_data(u, y, {5, 5, 100});
    const DeePCData tail = build_deepc_data(u.slice(200, 100), y.slice(200, 100), {5, 5, 100});
    CHECK(full.U_p.values == tail.U_p.values);
    CHECK(full.Y_f.values == tail.Y_f.values);
}

TEST_CASE("lq reconstruction of a random matrix") {
    const Eigen::MatrixXd Z = white_excitation(6, 50, 1.0, 5.0, 7).data();
    const LqFactors f = lq_decompose(Z);
    CHECK(f.rank == 6);
    CHECK((f.L * f.Q_orth - Z).norm() <= 1e-10 * Z.norm());
    CHECK((f.Q_orth * f.Q_orth.transpose() - Eigen::MatrixXd::Identity(6, 6)).norm() <= 1e-10);
    for (Index i = 0; i < 6; ++i)
        for (Index j = i + 1; j < 6; ++j) CHECK(f.L(i, j) == 0.0);

    Eigen::MatrixXd Zp = Z;
    Zp.row(0).swap(Zp.row(4));
    const LqFactors g = lq_decompose(Zp);
    CHECK((g.L * g.Q_orth - Zp).norm() <= 1e-10 * Z.norm());
    CHECK((g.L - f.L).norm() > 1e-6);
}

TEST_CASE("lq of an already triangular matrix") {
    Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(3, 7);
    Z.leftCols(3) << 2, 0, 0, 1, 3, 0, -1, 4, 5;
    const LqFactors f = lq_decompose(Z);
    // unique up to column signs of L / row signs of Q
    const Eigen::VectorXd sgn = f.L.diagonal().cwiseSign();
    CHECK((f.L * sgn.asDiagonal() - Z.leftCols(3)).norm() < 1e-12);
    Eigen::MatrixXd expected_q = Eigen::MatrixXd::Zero(3, 7);
    expected_q.leftCols(3).setIdentity();
    CHECK((sgn.asDiagonal() * f.Q_orth - expected_q).norm() < 1e-12);
}

TEST_CASE("lq deflates dependent rows") {
    Eigen::MatrixXd Z = white_excitation(4, 30, 1.0, 5.0, 8).data();
    Z.row(2) = 2.0 * Z.row(0) - Z.row(1);
    const LqFactors f = lq_decompose(Z);
    CHECK(f.rank == 3);
    CHECK_FALSE(f.kept[2]);
    CHECK(f.L.col(2).isZero(0.0));
    CHECK((f.L * f.Q_orth - Z).norm() <= 1e-10 * Z.norm());
    CHECK((f.Q_orth * f.Q_orth.transpose() - Eigen::MatrixXd::Identity(4, 4)).norm() <= 1e-10);
}

TEST_CASE("transient predictor is exact on noiseless order-4 data") {
    const Dataset d = noiseless_data(4, 2, 2, 800, 11);
    const HankelConfig cfg{30, 20, 800};
    const TransientPredictor tp = fit_transient_predictor(d.u, d.y, cfg);
    CHECK(tp.H_p.rows() == 2 * 20);
    CHECK(tp.H_p.cols() == 4 * 30);
    CHECK(tp.H_u.cols() == 2 * 20);
    check_block_strictly_lower(tp.H_u, 2, 2, 20);
    CHECK(tp.H_u.topRows(2).isZero(0.0));
    for (std::uint64_t s : {1, 2, 3}) {
        const Window w = fresh_window(d.plant, 30, 20, 500 + s);
        CHECK(rel(predict(tp, w.z_p, w.u_f), w.y_f) < 1e-6);
    }
}

TEST_CASE("transient predictor intermediates") {
    const Dataset d = noiseless_data(4, 2, 2, 500, 12);
    const HankelConfig cfg{6, 5, 500};
    const TransientPredictor tp = fit_transient_predictor(d.u, d.y, cfg);
    const Index p = 2, m = 2, w = p + m;
    CHECK(tp.Phi.rows() == p * 5);
    CHECK(tp.Phi.cols() == w * 11);
    // block row k regresses on z up to t + k - 1 only
    for (Index k = 0; k < 5; ++k) {
        const Index used = w * (6 + k);
        CHECK(tp.Phi.block(k * p, used, p, tp.Phi.cols() - used).isZero(0.0));
    }
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(p * 5, p * 5);
    CHECK((tp.H_p - (I - tp.Phi_y).inverse() * tp.Phi_p).norm() < 1e-8 * (1.0 + tp.H_p.norm()));
    CHECK((tp.H_u - (I - tp.Phi_y).inverse() * tp.Phi_u).norm() < 1e-8 * (1.0 + tp.H_u.norm()));
}

TEST_CASE("zero outputs give zero predictors") {
    const Trajectory u = white_excitation(2, 300, 1.0, 3.0, 13);
    const Trajectory y = Trajectory::zeros(2, 300);
    const TransientPredictor tp = fit_transient_predictor(u, y, {5, 4, 300});
    CHECK(tp.H_p.isZero(0.0));
    CHECK(tp.H_u.isZero(0.0));
    const SingleArxPredictor arx = fit_single_arx(u, y, {5, 4, 300});
    CHECK(arx.phi.isZero(0.0));
}

TEST_CASE("inputs that do not excite are rejected") {
    const Trajectory u = Trajectory::zeros(2, 300);
    const Trajectory y = white_excitation(2, 300, 1.0, 3.0, 14);
    CHECK_THROWS_AS(fit_transient_predictor(u, y, {5, 4, 300}), DegenerateDataError);
}

TEST_CASE("single-arx recovers a known arx process") {
    const auto arx = ddpc::testing::random_arx(2, 1, 3, 15);
    const Trajectory u = white_excitation(1, 600, 1.0, 4.0, 16);
    const Trajectory y = ddpc::testing::simulate_arx(arx, u);
    const SingleArxPredictor fit = fit_single_arx(u, y, {3, 4, 600});
    CHECK((fit.phi - arx.phi).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(fit.residual_std.maxCoeff() < 1e-8);
    check_block_strictly_lower(fit.H_u, 2, 1, 4);

    // multi-step expansion equals running the process forward
    const Index tau_p = 3, tau_f = 4, w = 3;
    const Index t0 = 300;
    Eigen::VectorXd z_p(w * tau_p), u_f(tau_f), y_f(2 * tau_f);
    for (Index k = 0; k < tau_p; ++k) {
        z_p.segment(k * w, 2) = y.data().col(t0 - tau_p + k);
        z_p(k * w + 2) = u.data()(0, t0 - tau_p + k);
    }
    for (Index k = 0; k < tau_f; ++k) {
        u_f(k) = u.data()(0, t0 + k);
        y_f.segment(k * 2, 2) = y.data().col(t0 + k);
    }
    CHECK((predict(fit, z_p, u_f) - y_f).norm() < 1e-8 * y_f.norm());
}

TEST_CASE("expand_single_arx on hand-unrolled cases") {
    const double a = 0.8, b = 0.3;
    Eigen::MatrixXd phi(1, 2);
    phi << a, b;
    const PredictorMatrices pm = expand_single_arx(phi, {1, 5, 10}, 1, 1);
    for (Index k = 0; k < 5; ++k) {
        CHECK(pm.H_p(k, 0) == doctest::Approx(std::pow(a, k + 1)));
        CHECK(pm.H_p(k, 1) == doctest::Approx(std::pow(a, k) * b));
        for (Index j = 0; j < 5; ++j) {
            const double expected = j < k ? std::pow(a, k - j - 1) * b : 0.0;
            CHECK(pm.H_u(k, j) == doctest::Approx(expected));
        }
    }

    const auto arx = ddpc::testing::random_arx(2, 2, 4, 17);
    const PredictorMatrices one = expand_single_arx(arx.phi, {4, 1, 10}, 2, 2);
    CHECK(one.H_p == arx.phi);
    CHECK(one.H_u.isZero(0.0));
}

TEST_CASE("predictors agree with the true rollout and with deepc") {
    const Dataset d = noiseless_data(6, 2, 2, 600, 18);
    const HankelConfig cfg{8, 10, 600};
    const TransientPredictor tp = fit_transient_predictor(d.u, d.y, cfg);
    const SingleArxPredictor arx = fit_single_arx(d.u, d.y, cfg);
    const DeePCData dd = build_deepc_data(d.u, d.y, cfg);
    for (std::uint64_t s : {1, 2}) {
        const Window w = fresh_window(d.plant, 8, 10, 900 + s);
        CHECK(rel(predict(tp, w.z_p, w.u_f), w.y_f) < 1e-5);
        CHECK(rel(predict(arx, w.z_p, w.u_f), w.y_f) < 1e-5);
        CHECK(rel(deepc_predict(dd, w.u_p, w.y_p, w.u_f), w.y_f) < 1e-5);
    }
    CHECK(predict(tp, Eigen::VectorXd::Zero(32), Eigen::VectorXd::Zero(20)).isZero(0.0));
    CHECK_THROWS_AS(predict(tp, Eigen::VectorXd::Zero(31), Eigen::VectorXd::Zero(20)), DimensionError);
}

TEST_CASE("first block rows coincide on full-rank data") {
    const Dataset d = noiseless_data(12, 2, 2, 400, 19);
    const HankelConfig cfg{2, 2, 400};
    const TransientPredictor tp = fit_transient_predictor(d.u, d.y, cfg);
    const SingleArxPredictor arx = fit_single_arx(d.u, d.y, cfg);
    CHECK(tp.rank == 16);
    CHECK((tp.H_p.topRows(2) - arx.phi).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(tp.H_u.topRows(2).isZero(0.0));
}

TEST_CASE("fitting ignores samples before the configured window") {
    const Dataset d = noiseless_data(4, 2, 2, 700, 20);
    const HankelConfig cfg{6, 6, 500};
    const TransientPredictor a = fit_transient_predictor(d.u, d.y, cfg);
    const TransientPredictor b = fit_transient_predictor(d.u.slice(200, 500), d.y.slice(200, 500), cfg);
    CHECK(a.H_p == b.H_p);
    CHECK(a.H_u == b.H_u);
}
