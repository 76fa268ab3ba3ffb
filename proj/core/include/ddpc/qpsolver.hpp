#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "ddpc/ocp.hpp"

namespace ddpc {

struct SolverSettings {
    double rho = 0.1;
    double sigma = 1e-6;
    double alpha = 1.6;
    double eps_abs = 1e-6;
    double eps_rel = 1e-4;
    double eps_infeasible = 1e-7;
    int max_iter = 4000;
    bool warm_start = true;
    bool polish = true;
    int scaling_iters = 10;
    bool adaptive_rho = true;
    int adaptive_rho_interval = 25;
    int max_rho_updates = 1; // over the lifetime of a workspace; each one refactorises
    int infeasibility_interval = 10;
    int check_interval = 1; // iterations between termination checks

    void validate() const;
};

enum class SolveStatus { Solved, MaxIter, PrimalInfeasible, DualInfeasible };

const char* to_string(SolveStatus s);

struct SolveStats {
    int iterations = 0;
    double setup_time_s = 0.0;
    double solve_time_s = 0.0;
    double primal_res = 0.0;
    double dual_res = 0.0;
    double rho = 0.0;
    bool polished = false;
};

struct Solution {
    Eigen::VectorXd x;
    Eigen::VectorXd y; // multipliers of l <= Mx <= u, positive when the upper side is active
    Eigen::VectorXd z; // Mx projected onto [l, u]
    SolveStatus status = SolveStatus::MaxIter;
    SolveStats stats;
};

/// l <= M x <= u with equality rows first, then finite box rows, then G rows.
struct ConstraintForm {
    Eigen::MatrixXd M;
    Eigen::VectorXd l;
    Eigen::VectorXd u;
    std::vector<Index> box_index; // variable of each box row
    std::vector<Index> g_index;   // G row of each inequality row (rows with no finite bound are dropped)
    Index n_eq = 0;
    Index n_box = 0;
    Index n_ineq = 0;
};

ConstraintForm stack_constraints(const QpProblem& qp);
/// Bounds only, in the same row order as stack_constraints.
void stack_bounds(const QpProblem& qp, const ConstraintForm& form, Eigen::VectorXd& l, Eigen::VectorXd& u);

/**
 * @brief ADMM (operator splitting) QP solver with a cached factorisation.
 *
 * Solves min 1/2 x'Px + q'x s.t. l <= Mx <= u. Each iteration solves the
 * reduced KKT system (P + sigma I + M' diag(rho) M) x = rhs with a Cholesky
 * factor computed at setup, so a change in q, l or u never refactorises.
 * Problem data are equilibrated (modified Ruiz) before factorisation.
 */
class QpSolver {
public:
    QpSolver() = default;

    void setup(const QpProblem& qp, const SolverSettings& settings = {});
    void setup(const Eigen::MatrixXd& P, const Eigen::VectorXd& q, const Eigen::MatrixXd& M, const Eigen::VectorXd& l,
               const Eigen::VectorXd& u, const SolverSettings& settings = {});

    Solution solve();
    /// New q, l, u; P and M untouched. Warm-starts from the previous iterates.
    Solution update_and_resolve(const Eigen::VectorXd& q, const Eigen::VectorXd& l, const Eigen::VectorXd& u);
    /// Pulls q and the bounds from a refreshed problem with the structure given to setup.
    Solution update_and_resolve(const QpProblem& qp);

    void cold_start();
    void warm_start(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

    bool is_setup() const { return n_ > 0; }
    Index n_variables() const { return n_; }
    Index n_constraints() const { return m_; }
    /// Factorisations of the ADMM system since setup (setup itself counts as one).
    int factorizations() const { return factorizations_; }
    int polish_factorizations() const { return polish_factorizations_; }
    /// Hash of the cached factor values.
    std::uint64_t factorization_fingerprint() const;
    const SolverSettings& settings() const { return settings_; }
    const ConstraintForm& constraints() const { return form_; }
    double setup_time_s() const { return setup_time_s_; }

private:
    void scale_problem();
    void factorize();
    void polish(Solution& sol);
    void compute_rho_vector();
    void unscale_into(Solution& sol) const;
    void mul_M(const Eigen::VectorXd& v, Eigen::VectorXd& out) const;
    void mul_MT(const Eigen::VectorXd& v, Eigen::VectorXd& out) const;

    SolverSettings settings_;
    ConstraintForm form_;
    Index n_ = 0;
    Index m_ = 0;

    // original data
    Eigen::MatrixXd P_;
    Eigen::VectorXd q_;
    Eigen::VectorXd l_;
    Eigen::VectorXd u_;

    // scaled data
    Eigen::MatrixXd Ps_;
    Eigen::VectorXd qs_;
    Eigen::SparseMatrix<double> Ms_;
    Eigen::SparseMatrix<double> MsT_;
    Eigen::MatrixXd Ms_dense_; // used instead of Ms_ when M is mostly nonzero
    bool dense_M_ = false;
    Eigen::VectorXd ls_;
    Eigen::VectorXd us_;
    Eigen::VectorXd D_;
    Eigen::VectorXd E_;
    double c_ = 1.0;

    double rho_ = 0.1;
    Eigen::VectorXd rho_vec_;
    Eigen::LLT<Eigen::MatrixXd> kkt_;
    int factorizations_ = 0;
    int rho_updates_ = 0;
    int polish_factorizations_ = 0;

    // iterates (scaled)
    Eigen::VectorXd x_;
    Eigen::VectorXd z_;
    Eigen::VectorXd y_;
    bool have_iterate_ = false;

    std::map<std::vector<signed char>, std::shared_ptr<Eigen::LDLT<Eigen::MatrixXd>>> polish_cache_;
    double setup_time_s_ = 0.0;
};

/// Solves qp in a fresh workspace.
Solution solve_qp(const QpProblem& qp, const SolverSettings& settings = {});

struct KktReport {
    double stationarity = 0.0;
    double primal_feasibility = 0.0;
    double complementarity = 0.0;
    bool passed = false;
    Eigen::VectorXd multipliers; // fitted, one per near-active or equality row
};

/**
 * Certifies x against the KKT conditions of qp without using solver duals.
 * Multipliers for equality and near-active rows are fitted by non-negative
 * least squares; residuals are relative to max(1, |q|, |Px|).
 */
KktReport kkt_oracle_check(const QpProblem& qp, const Eigen::VectorXd& x, double tol);

/// min |Ax - b|_2 subject to x >= 0 (Lawson-Hanson).
Eigen::VectorXd nnls(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, int max_iter = 0);

} // namespace ddpc
