#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ddpc/signals.hpp"

namespace ddpc {

/// The four Hankel blocks used by DeePC, sharing one column count.
struct DeePCData {
    HankelMatrix U_p;
    HankelMatrix Y_p;
    HankelMatrix U_f;
    HankelMatrix Y_f;
    HankelConfig config;
    Index m = 0;
    Index p = 0;

    Index n_col() const { return U_p.n_col(); }
};

/// Uses the last cfg.n_samples samples of (u, y).
DeePCData build_deepc_data(const Trajectory& u, const Trajectory& y, const HankelConfig& cfg);

/**
 * Z = L * Q_orth with L lower triangular and Q_orth with orthonormal rows.
 *
 * Rows of Z that are (numerically) combinations of the rows above them are
 * deflated: their column of L is exactly zero and their row of Q_orth is a
 * unit vector from the orthogonal complement. `kept[i]` is false for those rows.
 */
struct LqFactors {
    Eigen::MatrixXd L;
    Eigen::MatrixXd Q_orth; // empty if not requested
    std::vector<bool> kept;
    Index rank = 0;
};

/// Householder QR of Z^T. Requires rows <= cols. `rel_tol` is relative to ||Z||_F.
LqFactors lq_decompose(const Eigen::MatrixXd& Z, bool compute_q = true, double rel_tol = 1e-10);
LqFactors lq_decompose(const HankelMatrix& Z, bool compute_q = true, double rel_tol = 1e-10);

/**
 * Multi-step predictor y_f = H_p z_p + H_u u_f.
 *
 * z_p stacks z(t - tau_p) ... z(t - 1) oldest first, z = [y; u].
 * u_f stacks u(t) ... u(t + tau_f - 1); y_f stacks y(t) ... y(t + tau_f - 1).
 */
struct TransientPredictor {
    Eigen::MatrixXd H_p; // (p tau_f) x ((p+m) tau_p)
    Eigen::MatrixXd H_u; // (p tau_f) x (m tau_f), block strictly lower triangular
    Eigen::MatrixXd Phi; // (p tau_f) x ((p+m)(tau_p+tau_f))
    Eigen::MatrixXd Phi_p;
    Eigen::MatrixXd Phi_y;
    Eigen::MatrixXd Phi_u;
    HankelConfig config;
    Index m = 0;
    Index p = 0;
    Index rank = 0; // rank estimate of Z
    std::vector<std::string> warnings;
};

struct SingleArxPredictor {
    Eigen::MatrixXd phi;          // p x ((p+m) tau_p), regressors z(t - tau_p) ... z(t - 1)
    Eigen::VectorXd residual_std; // one-step error per output
    Eigen::MatrixXd H_p;
    Eigen::MatrixXd H_u;
    HankelConfig config;
    Index m = 0;
    Index p = 0;
    Index rank = 0; // rank of the regressor matrix
    std::vector<std::string> warnings;
};

/// Both predictors fit on the last cfg.n_samples samples of (u, y).
TransientPredictor fit_transient_predictor(const Trajectory& u, const Trajectory& y, const HankelConfig& cfg);
SingleArxPredictor fit_single_arx(const Trajectory& u, const Trajectory& y, const HankelConfig& cfg);

struct PredictorMatrices {
    Eigen::MatrixXd H_p;
    Eigen::MatrixXd H_u;
};

/// Repeats `phi` along the horizon (banded Psi) and eliminates the future outputs.
PredictorMatrices expand_single_arx(const Eigen::MatrixXd& phi, const HankelConfig& cfg, Index p, Index m);

Eigen::VectorXd predict(const Eigen::MatrixXd& H_p, const Eigen::MatrixXd& H_u,
                        const Eigen::Ref<const Eigen::VectorXd>& z_p, const Eigen::Ref<const Eigen::VectorXd>& u);

template <class Predictor>
Eigen::VectorXd predict(const Predictor& pred, const Eigen::Ref<const Eigen::VectorXd>& z_p,
                        const Eigen::Ref<const Eigen::VectorXd>& u) {
    return predict(pred.H_p, pred.H_u, z_p, u);
}

/// Minimum-norm g with [U_p; Y_p; U_f] g = [u_p; y_p; u_f], returns Y_f g. u_p, y_p stacked per signal.
Eigen::VectorXd deepc_predict(const DeePCData& data, const Eigen::Ref<const Eigen::VectorXd>& u_p,
                              const Eigen::Ref<const Eigen::VectorXd>& y_p, const Eigen::Ref<const Eigen::VectorXd>& u_f);

} // namespace ddpc
