#pragma once

#include <vector>

#include <Eigen/Dense>

#include "ddpc/predictors.hpp"

namespace ddpc {

/**
 * Per-step weights. The effective weight on step k's output is
 * diag(1/Q_norm) Q_bar diag(1/Q_norm), repeated block-diagonally over the
 * horizon; likewise for inputs.
 */
struct WeightSpec {
    Eigen::MatrixXd Q_bar;
    Eigen::MatrixXd R_bar;
    Eigen::VectorXd Q_norm;
    Eigen::VectorXd R_norm;
    double lambda_g2 = 0.0;
    double lambda_sigma = 1.0;

    /// Unit weights with the TPC/ARX normalisation scales.
    static WeightSpec tpc_defaults();
    /// Diagonal DeePC weights, unit normalisation, lambda_g2 = 30, lambda_sigma = 1e5.
    static WeightSpec deepc_defaults();

    Eigen::MatrixXd Q_step() const;
    Eigen::MatrixXd R_step() const;
    /// Throws ConfigError unless Q_bar is PSD, R_bar PD, norms > 0 and sizes are p and m.
    void validate(Index p, Index m) const;
};

/// Stacked per-step weight over a horizon.
Eigen::MatrixXd horizon_weight(const Eigen::MatrixXd& step_weight, Index horizon);

struct OcpBounds {
    Eigen::VectorXd u_lb;
    Eigen::VectorXd u_ub;
    Eigen::VectorXd y_lb; // +-infinity entries mean unbounded
    Eigen::VectorXd y_ub;

    static OcpBounds symmetric(Index m, Index p, double u_limit = 0.1);
    bool y_bounded() const;
    bool u_bounded() const;
    void validate(Index m, Index p) const;
};

enum class ProblemKind { Tpc, DeePC, ModifiedDeePC };

/**
 * min 1/2 x'Px + q'x  s.t.  A_eq x = b_eq,  g_lb <= G x <= g_ub,  x_lb <= x <= x_ub.
 *
 * Bounds may be infinite. Only q, b_eq, g_lb and g_ub depend on the measured
 * past; refresh_qp recomputes them from the stored maps.
 */
struct QpProblem {
    ProblemKind kind = ProblemKind::Tpc;
    Eigen::MatrixXd P;
    Eigen::VectorXd q;
    Eigen::MatrixXd A_eq;
    Eigen::VectorXd b_eq;
    Eigen::MatrixXd G;
    Eigen::VectorXd g_lb;
    Eigen::VectorXd g_ub;
    Eigen::VectorXd x_lb;
    Eigen::VectorXd x_ub;
    Index n_dec = 0;

    // decision layout: TPC x = u; DeePC x = [g; sigma]
    Index n_g = 0;
    Index n_sigma = 0;
    Eigen::MatrixXd u_map; // stacked future inputs = u_map * x

    // refresh data
    Index past_dim = 0;
    Eigen::MatrixXd q_map;      // q = q_map * past (empty: q constant)
    Eigen::MatrixXd g_past_map; // G rows shift by -g_past_map * past
    Eigen::VectorXd g_lb_base;
    Eigen::VectorXd g_ub_base;

    Eigen::VectorXd inputs(const Eigen::Ref<const Eigen::VectorXd>& x) const { return u_map * x; }
    void validate() const;
};

/// z_p stacks z(t - tau_p) ... z(t - 1), z = [y; u].
QpProblem build_tpc_qp(const PredictorMatrices& pred, const WeightSpec& w, const OcpBounds& b,
                       const Eigen::Ref<const Eigen::VectorXd>& z_p);

template <class Predictor>
QpProblem build_tpc_qp(const Predictor& pred, const WeightSpec& w, const OcpBounds& b,
                       const Eigen::Ref<const Eigen::VectorXd>& z_p) {
    return build_tpc_qp(PredictorMatrices{pred.H_p, pred.H_u}, w, b, z_p);
}

/// u_p, y_p stacked per signal, oldest first (the row order of U_p and Y_p).
QpProblem build_deepc_qp(const DeePCData& data, const WeightSpec& w, const OcpBounds& b,
                         const Eigen::Ref<const Eigen::VectorXd>& u_p, const Eigen::Ref<const Eigen::VectorXd>& y_p);

/// Equalities replaced by the lambda_sigma soft term; decision x = g. Input bounds kept if finite.
QpProblem build_modified_deepc_qp(const DeePCData& data, const WeightSpec& w, const OcpBounds& b,
                                  const Eigen::Ref<const Eigen::VectorXd>& u_p,
                                  const Eigen::Ref<const Eigen::VectorXd>& y_p);

/// TPC: past = z_p. DeePC variants: past = [u_p; y_p].
void refresh_qp(QpProblem& qp, const Eigen::Ref<const Eigen::VectorXd>& past);

/// K with u* = K z_p for the unconstrained TPC problem.
Eigen::MatrixXd tpc_gain(const PredictorMatrices& pred, const WeightSpec& w);
Eigen::VectorXd closed_form_tpc(const PredictorMatrices& pred, const WeightSpec& w,
                                const Eigen::Ref<const Eigen::VectorXd>& z_p);

/// K with u* = K [u_p; y_p] for modified DeePC, pseudo-inverse if the bracket is singular.
Eigen::MatrixXd deepc_gain(const DeePCData& data, const WeightSpec& w);
/// Minimiser g* of the modified DeePC cost.
Eigen::VectorXd closed_form_deepc_g(const DeePCData& data, const WeightSpec& w,
                                    const Eigen::Ref<const Eigen::VectorXd>& u_p,
                                    const Eigen::Ref<const Eigen::VectorXd>& y_p);
Eigen::VectorXd closed_form_deepc(const DeePCData& data, const WeightSpec& w,
                                  const Eigen::Ref<const Eigen::VectorXd>& u_p,
                                  const Eigen::Ref<const Eigen::VectorXd>& y_p);

enum class Cone { Zero, NonNeg };

/// A x + s = b, s in K. Zero-cone rows first, then upper-bound rows [I; G], then lower-bound rows [-I; -G].
struct ConeProblem {
    Eigen::MatrixXd P;
    Eigen::VectorXd q;
    Eigen::MatrixXd A;
    Eigen::VectorXd b;
    std::vector<Cone> cones;
    Index n_zero = 0;
};

ConeProblem to_conic(const QpProblem& qp);

} // namespace ddpc
