#include "ddpc/predictors.hpp"

#include <cmath>

#include <Eigen/QR>
#include <fmt/format.h>

#include "ddpc/error.hpp"

namespace ddpc {

namespace {

constexpr double kRankTol = 1e-10;

struct Window {
    Trajectory u;
    Trajectory y;
};

Window training_window(const Trajectory& u, const Trajectory& y, const HankelConfig& cfg) {
    cfg.validate();
    if (u.length() != y.length()) {
        throw DimensionError(fmt::format("input has {} samples, output has {}", u.length(), y.length()));
    }
    if (u.length() < cfg.n_samples) {
        throw OutOfRangeError(fmt::format("need {} training samples, have {}", cfg.n_samples, u.length()));
    }
    const Index t0 = u.length() - cfg.n_samples;
    return {u.slice(t0, cfg.n_samples), y.slice(t0, cfg.n_samples)};
}

struct Partition {
    Eigen::MatrixXd Phi_p;
    Eigen::MatrixXd Phi_y;
    Eigen::MatrixXd Phi_u;
    Eigen::MatrixXd H_p;
    Eigen::MatrixXd H_u;
};

// Splits Phi over [z_p | z(tau_p) ... z(tau_p + tau_f - 1)] and solves
// (I - Phi_y) H = [Phi_p, Phi_u]. I - Phi_y is unit lower triangular.
Partition eliminate_future_outputs(const Eigen::MatrixXd& Phi, const HankelConfig& cfg, Index p, Index m) {
    const Index w = p + m;
    const Index tp = cfg.tau_p;
    const Index tf = cfg.tau_f;
    Partition out;
    out.Phi_p = Phi.leftCols(w * tp);
    out.Phi_y.resize(p * tf, p * tf);
    out.Phi_u.resize(p * tf, m * tf);
    for (Index j = 0; j < tf; ++j) {
        out.Phi_y.middleCols(p * j, p) = Phi.middleCols(w * (tp + j), p);
        out.Phi_u.middleCols(m * j, m) = Phi.middleCols(w * (tp + j) + p, m);
    }
    const Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(p * tf, p * tf) - out.Phi_y;
    const auto tri = lhs.triangularView<Eigen::UnitLower>();
    out.H_p = tri.solve(out.Phi_p);
    out.H_u = tri.solve(out.Phi_u);
    for (Index k = 0; k < tf; ++k) {
        out.H_u.block(p * k, m * k, p, m * (tf - k)).setZero();
    }
    return out;
}

void check_finite(const Eigen::MatrixXd& M, const char* what) {
    if (!M.allFinite()) throw DegenerateDataError(fmt::format("{} has non-finite entries", what));
}

} // namespace

DeePCData build_deepc_data(const Trajectory& u, const Trajectory& y, const HankelConfig& cfg) {
    const Window win = training_window(u, y, cfg);
    const Index n_col = cfg.n_col();
    const Index tp = cfg.tau_p;
    const Index tf = cfg.tau_f;
    DeePCData d;
    d.config = cfg;
    d.m = u.channels();
    d.p = y.channels();
    d.U_p = build_hankel(win.u, 0, tp - 1, n_col);
    d.Y_p = build_hankel(win.y, 0, tp - 1, n_col);
    d.U_f = build_hankel(win.u, tp, tp + tf - 1, n_col);
    d.Y_f = build_hankel(win.y, tp, tp + tf - 1, n_col);
    return d;
}

TransientPredictor fit_transient_predictor(const Trajectory& u, const Trajectory& y, const HankelConfig& cfg) {
    const Window win = training_window(u, y, cfg);
    const Index p = y.channels();
    const Index m = u.channels();
    const Index w = p + m;
    const Index tp = cfg.tau_p;
    const Index tf = cfg.tau_f;

    const HankelMatrix Z = build_hankel(interleave(win.y, win.u), 0, cfg.window() - 1, cfg.n_col());
    if (Z.n_row() > Z.n_col()) {
        throw DegenerateDataError(fmt::format("Z is {}x{}: need n_samples >= {} for a wide data matrix", Z.n_row(),
                                              Z.n_col(), Z.n_row() + cfg.window() - 1));
    }
    const LqFactors lq = lq_decompose(Z, false, kRankTol);

    TransientPredictor pred;
    pred.config = cfg;
    pred.p = p;
    pred.m = m;
    pred.rank = lq.rank;

    // Inputs must be persistently exciting; dependent output rows are expected for noise-free data.
    for (Index s = 0; s < cfg.window(); ++s) {
        for (Index j = 0; j < m; ++j) {
            if (!lq.kept[w * s + p + j]) {
                throw DegenerateDataError(
                    fmt::format("input u{} at time lag {} is linearly dependent on earlier data", j + 1, s));
            }
        }
    }
    if (lq.rank < Z.n_row()) {
        pred.warnings.push_back(fmt::format("Z has rank {} of {}; dependent output rows get zero weight", lq.rank,
                                            Z.n_row()));
    }

    std::vector<Index> keep;
    for (Index i = 0; i < Z.n_row(); ++i) {
        if (lq.kept[i]) keep.push_back(i);
    }
    const auto nk = static_cast<Index>(keep.size());
    Eigen::MatrixXd L_kk(nk, nk);
    for (Index a = 0; a < nk; ++a) {
        for (Index b = 0; b < nk; ++b) L_kk(a, b) = lq.L(keep[a], keep[b]);
    }

    // L_y^0: output rows of the future steps, each cut off at its own time step.
    Eigen::MatrixXd Ly0_k = Eigen::MatrixXd::Zero(p * tf, nk);
    for (Index k = 0; k < tf; ++k) {
        const Index cut = w * (tp + k);
        for (Index c = 0; c < p; ++c) {
            for (Index b = 0; b < nk && keep[b] < cut; ++b) Ly0_k(p * k + c, b) = lq.L(cut + c, keep[b]);
        }
    }
    // Phi L = L_y^0  <=>  L^T Phi^T = L_y^0^T
    const Eigen::MatrixXd Phi_k =
        L_kk.transpose().triangularView<Eigen::Upper>().solve(Ly0_k.transpose()).transpose();

    pred.Phi = Eigen::MatrixXd::Zero(p * tf, Z.n_row());
    for (Index b = 0; b < nk; ++b) pred.Phi.col(keep[b]) = Phi_k.col(b);
    for (Index k = 0; k < tf; ++k) {
        const Index cut = w * (tp + k);
        pred.Phi.block(p * k, cut, p, Z.n_row() - cut).setZero();
    }
    check_finite(pred.Phi, "transient predictor");

    Partition part = eliminate_future_outputs(pred.Phi, cfg, p, m);
    pred.Phi_p = std::move(part.Phi_p);
    pred.Phi_y = std::move(part.Phi_y);
    pred.Phi_u = std::move(part.Phi_u);
    pred.H_p = std::move(part.H_p);
    pred.H_u = std::move(part.H_u);
    check_finite(pred.H_p, "H_p");
    check_finite(pred.H_u, "H_u");
    return pred;
}

SingleArxPredictor fit_single_arx(const Trajectory& u, const Trajectory& y, const HankelConfig& cfg) {
    const Window win = training_window(u, y, cfg);
    const Index p = y.channels();
    const Index m = u.channels();
    const Index w = p + m;
    const Index tp = cfg.tau_p;

    // Same columns as the transient predictor, only the first tau_p + 1 steps of each window.
    const HankelMatrix Z = build_hankel(interleave(win.y, win.u), 0, tp, cfg.n_col());
    const Eigen::MatrixXd X = Z.values.topRows(w * tp);
    const Eigen::MatrixXd T = Z.values.middleRows(w * tp, p);

    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod;
    cod.setThreshold(kRankTol);
    cod.compute(X.transpose());

    SingleArxPredictor pred;
    pred.config = cfg;
    pred.p = p;
    pred.m = m;
    pred.rank = cod.rank();
    if (pred.rank < X.rows()) {
        pred.warnings.push_back(fmt::format("ARX regressor has rank {} of {}; using the minimum-norm solution",
                                            pred.rank, X.rows()));
    }
    pred.phi = cod.solve(T.transpose()).transpose();
    check_finite(pred.phi, "ARX coefficients");

    const Eigen::MatrixXd resid = (T - pred.phi * X) * std::sqrt(static_cast<double>(cfg.n_col()));
    pred.residual_std = (resid.rowwise().squaredNorm() / static_cast<double>(resid.cols())).cwiseSqrt();

    PredictorMatrices H = expand_single_arx(pred.phi, cfg, p, m);
    pred.H_p = std::move(H.H_p);
    pred.H_u = std::move(H.H_u);
    return pred;
}

PredictorMatrices expand_single_arx(const Eigen::MatrixXd& phi, const HankelConfig& cfg, Index p, Index m) {
    cfg.validate();
    const Index w = p + m;
    if (phi.rows() != p || phi.cols() != w * cfg.tau_p) {
        throw DimensionError(fmt::format("phi is {}x{}, expected {}x{}", phi.rows(), phi.cols(), p, w * cfg.tau_p));
    }
    // banded Psi: row block k regresses on steps k ... k + tau_p - 1 of the window
    Eigen::MatrixXd Psi = Eigen::MatrixXd::Zero(p * cfg.tau_f, w * cfg.window());
    for (Index k = 0; k < cfg.tau_f; ++k) Psi.block(p * k, w * k, p, w * cfg.tau_p) = phi;
    Partition part = eliminate_future_outputs(Psi, cfg, p, m);
    return {std::move(part.H_p), std::move(part.H_u)};
}

Eigen::VectorXd predict(const Eigen::MatrixXd& H_p, const Eigen::MatrixXd& H_u,
                        const Eigen::Ref<const Eigen::VectorXd>& z_p, const Eigen::Ref<const Eigen::VectorXd>& u) {
    if (z_p.size() != H_p.cols() || u.size() != H_u.cols() || H_p.rows() != H_u.rows()) {
        throw DimensionError(fmt::format("predict: z_p has {} (want {}), u has {} (want {})", z_p.size(),
                                         H_p.cols(), u.size(), H_u.cols()));
    }
    return H_p * z_p + H_u * u;
}

Eigen::VectorXd deepc_predict(const DeePCData& data, const Eigen::Ref<const Eigen::VectorXd>& u_p,
                              const Eigen::Ref<const Eigen::VectorXd>& y_p,
                              const Eigen::Ref<const Eigen::VectorXd>& u_f) {
    if (u_p.size() != data.U_p.n_row() || y_p.size() != data.Y_p.n_row() || u_f.size() != data.U_f.n_row()) {
        throw DimensionError("deepc_predict: stacked vectors do not match the Hankel blocks");
    }
    const Index n = data.n_col();
    Eigen::MatrixXd A(data.U_p.n_row() + data.Y_p.n_row() + data.U_f.n_row(), n);
    A << data.U_p.values, data.Y_p.values, data.U_f.values;
    Eigen::VectorXd b(A.rows());
    b << u_p, y_p, u_f;
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod;
    cod.setThreshold(kRankTol);
    cod.compute(A);
    return data.Y_f.values * cod.solve(b);
}

} // namespace ddpc
