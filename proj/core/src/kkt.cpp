#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/QR>

#include "ddpc/error.hpp"
#include "ddpc/qpsolver.hpp"

namespace ddpc {

Eigen::VectorXd nnls(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, int max_iter) {
    const Index n = A.cols();
    if (A.rows() != b.size()) throw DimensionError("nnls: A and b row counts differ");
    if (max_iter <= 0) max_iter = static_cast<int>(3 * n + 10);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    if (n == 0) return x;
    std::vector<bool> passive(static_cast<std::size_t>(n), false);
    const double tol = 1e-12 * std::max(1.0, A.cwiseAbs().maxCoeff()) * std::max(1.0, b.cwiseAbs().maxCoeff()) *
                       static_cast<double>(std::max<Index>(A.rows(), n));

    auto solve_passive = [&](Eigen::VectorXd& s) {
        std::vector<Index> idx;
        for (Index j = 0; j < n; ++j) {
            if (passive[static_cast<std::size_t>(j)]) idx.push_back(j);
        }
        Eigen::MatrixXd Ap(A.rows(), static_cast<Index>(idx.size()));
        for (std::size_t k = 0; k < idx.size(); ++k) Ap.col(static_cast<Index>(k)) = A.col(idx[k]);
        const Eigen::VectorXd sp = Ap.completeOrthogonalDecomposition().solve(b);
        s.setZero(n);
        for (std::size_t k = 0; k < idx.size(); ++k) s(idx[k]) = sp(static_cast<Index>(k));
    };

    Eigen::VectorXd w = A.transpose() * (b - A * x);
    Eigen::VectorXd s(n);
    for (int outer = 0; outer < max_iter; ++outer) {
        Index t = -1;
        double best = tol;
        for (Index j = 0; j < n; ++j) {
            if (!passive[static_cast<std::size_t>(j)] && w(j) > best) {
                best = w(j);
                t = j;
            }
        }
        if (t < 0) break;
        passive[static_cast<std::size_t>(t)] = true;
        for (int inner = 0; inner < max_iter; ++inner) {
            solve_passive(s);
            bool all_positive = true;
            double step = 1.0;
            for (Index j = 0; j < n; ++j) {
                if (passive[static_cast<std::size_t>(j)] && s(j) <= 0.0) {
                    all_positive = false;
                    const double denom = x(j) - s(j);
                    if (denom > 0.0) step = std::min(step, x(j) / denom);
                }
            }
            if (all_positive) {
                x = s;
                break;
            }
            x += step * (s - x);
            for (Index j = 0; j < n; ++j) {
                if (passive[static_cast<std::size_t>(j)] && x(j) <= tol) {
                    passive[static_cast<std::size_t>(j)] = false;
                    x(j) = 0.0;
                }
            }
        }
        w = A.transpose() * (b - A * x);
    }
    return x;
}

KktReport kkt_oracle_check(const QpProblem& qp, const Eigen::VectorXd& x, double tol) {
    qp.validate();
    if (x.size() != qp.n_dec) throw DimensionError("kkt_oracle_check: x has the wrong size");
    const Index n = qp.n_dec;
    const Eigen::VectorXd Px = qp.P * x;
    const Eigen::VectorXd grad = Px + qp.q;
    const double scale = std::max({1.0, qp.q.cwiseAbs().maxCoeff(), Px.cwiseAbs().maxCoeff()});

    struct Side {
        Eigen::VectorXd a; // outward normal: a'x <= bound
        double slack;
    };
    std::vector<Eigen::VectorXd> eq_rows;
    std::vector<Side> sides;
    KktReport rep;

    for (Index i = 0; i < qp.A_eq.rows(); ++i) {
        const double r = qp.A_eq.row(i).dot(x) - qp.b_eq(i);
        rep.primal_feasibility =
            std::max(rep.primal_feasibility, std::abs(r) / std::max(1.0, std::abs(qp.b_eq(i))));
        eq_rows.push_back(qp.A_eq.row(i).transpose());
    }
    auto add_two_sided = [&](const Eigen::VectorXd& a, double lo, double hi) {
        const double v = a.dot(x);
        if (std::isfinite(hi)) {
            const double s = hi - v;
            rep.primal_feasibility = std::max(rep.primal_feasibility, -s / std::max(1.0, std::abs(hi)));
            if (s <= tol * std::max(1.0, std::abs(hi))) sides.push_back({a, s});
        }
        if (std::isfinite(lo)) {
            const double s = v - lo;
            rep.primal_feasibility = std::max(rep.primal_feasibility, -s / std::max(1.0, std::abs(lo)));
            if (s <= tol * std::max(1.0, std::abs(lo))) sides.push_back({-a, s});
        }
    };
    for (Index i = 0; i < n; ++i) {
        add_two_sided(Eigen::VectorXd::Unit(n, i), qp.x_lb(i), qp.x_ub(i));
    }
    for (Index i = 0; i < qp.G.rows(); ++i) {
        add_two_sided(qp.G.row(i).transpose(), qp.g_lb(i), qp.g_ub(i));
    }

    // grad + sum nu_i a_i + sum lambda_j n_j = 0 with lambda >= 0; nu split into two signs
    const auto ne = static_cast<Index>(eq_rows.size());
    const auto ns = static_cast<Index>(sides.size());
    Eigen::MatrixXd B(n, 2 * ne + ns);
    for (Index k = 0; k < ne; ++k) {
        B.col(2 * k) = eq_rows[static_cast<std::size_t>(k)];
        B.col(2 * k + 1) = -eq_rows[static_cast<std::size_t>(k)];
    }
    for (Index k = 0; k < ns; ++k) B.col(2 * ne + k) = sides[static_cast<std::size_t>(k)].a;
    const Eigen::VectorXd w = nnls(B, -grad);
    rep.stationarity = (grad + B * w).cwiseAbs().maxCoeff() / scale;

    rep.multipliers.resize(ne + ns);
    for (Index k = 0; k < ne; ++k) rep.multipliers(k) = w(2 * k) - w(2 * k + 1);
    for (Index k = 0; k < ns; ++k) {
        const double lam = w(2 * ne + k);
        rep.multipliers(ne + k) = lam;
        rep.complementarity =
            std::max(rep.complementarity, std::abs(lam * sides[static_cast<std::size_t>(k)].slack) / scale);
    }
    rep.primal_feasibility = std::max(rep.primal_feasibility, 0.0);
    rep.passed = rep.stationarity <= tol && rep.primal_feasibility <= tol && rep.complementarity <= tol;
    return rep;
}

} // namespace ddpc
