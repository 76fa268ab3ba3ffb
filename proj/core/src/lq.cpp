#include <Eigen/Householder>
#include <fmt/format.h>

#include "ddpc/error.hpp"
#include "ddpc/predictors.hpp"

namespace ddpc {

LqFactors lq_decompose(const Eigen::MatrixXd& Z, bool compute_q, double rel_tol) {
    const Index n_row = Z.rows();
    const Index n_col = Z.cols();
    if (n_row < 1) throw DimensionError("lq_decompose: empty matrix");
    if (n_row > n_col) {
        throw DimensionError(fmt::format("lq_decompose needs rows <= cols, got {}x{}", n_row, n_col));
    }
    const double tol = rel_tol * Z.norm();

    // QR of Z^T one column at a time. A column whose residual is below tol does
    // not consume a reflector, so later columns keep the slot numbering dense.
    Eigen::MatrixXd W = Z.transpose();
    Eigen::MatrixXd V = Eigen::MatrixXd::Zero(n_col, n_row);
    Eigen::VectorXd taus(n_row);
    std::vector<Index> slot(n_row, -1);
    Eigen::VectorXd work(n_row);
    Index r = 0;
    for (Index k = 0; k < n_row; ++k) {
        const Index len = n_col - r;
        if (W.col(k).segment(r, len).norm() <= tol) continue;
        double tau = 0.0;
        double beta = 0.0;
        Eigen::VectorXd essential(len - 1);
        W.col(k).segment(r, len).makeHouseholder(essential, tau, beta);
        if (k + 1 < n_row) {
            W.block(r, k + 1, len, n_row - k - 1).applyHouseholderOnTheLeft(essential, tau, work.data());
        }
        W(r, k) = beta;
        V(r, r) = 1.0;
        V.col(r).segment(r + 1, len - 1) = essential;
        taus(r) = tau;
        slot[k] = r;
        ++r;
    }

    LqFactors out;
    out.rank = r;
    out.kept.resize(n_row);
    out.L = Eigen::MatrixXd::Zero(n_row, n_row);
    Eigen::VectorXd sign = Eigen::VectorXd::Ones(n_row);
    for (Index i = 0; i < n_row; ++i) {
        out.kept[i] = slot[i] >= 0;
        if (!out.kept[i]) continue;
        if (W(slot[i], i) < 0.0) sign(i) = -1.0;
        for (Index k = i; k < n_row; ++k) out.L(k, i) = sign(i) * W(slot[i], k);
    }

    if (compute_q) {
        Eigen::HouseholderSequence<Eigen::MatrixXd, Eigen::VectorXd> H(V, taus);
        H.setLength(r);
        const Eigen::MatrixXd basis = H * Eigen::MatrixXd::Identity(n_col, n_row);
        out.Q_orth.resize(n_row, n_col);
        Index spare = r;
        for (Index i = 0; i < n_row; ++i) {
            const Index s = out.kept[i] ? slot[i] : spare++;
            out.Q_orth.row(i) = sign(i) * basis.col(s).transpose();
        }
    }
    return out;
}

LqFactors lq_decompose(const HankelMatrix& Z, bool compute_q, double rel_tol) {
    return lq_decompose(Z.values, compute_q, rel_tol);
}

} // namespace ddpc
