#include <doctest.h>

#include <cmath>
#include <random>

#include "ddpc/error.hpp"
#include "ddpc/qpsolver.hpp"
#include "oracles.hpp"

using namespace ddpc;

namespace {

SolverSettings tight() {
    SolverSettings s;
    s.eps_abs = 1e-9;
    s.eps_rel = 1e-9;
    s.max_iter = 50000;
    return s;
}

Eigen::MatrixXd random_pd(Index n, std::mt19937_64& rng) {
    std::normal_distribution<double> nd;
    Eigen::MatrixXd A(n, n);
    for (Index i = 0; i < A.size(); ++i) A.data()[i] = nd(rng);
    return A * A.transpose() + 0.1 * Eigen::MatrixXd::Identity(n, n);
}

Eigen::VectorXd randn(Index n, std::mt19937_64& rng) {
    std::normal_distribution<double> nd;
    Eigen::VectorXd v(n);
    for (Index i = 0; i < n; ++i) v(i) = nd(rng);
    return v;
}

QpProblem box_qp(const Eigen::MatrixXd& P, const Eigen::VectorXd& q, double lo, double hi) {
    QpProblem qp;
    const Index n = P.rows();
    qp.P = P;
    qp.q = q;
    qp.n_dec = n;
    qp.A_eq.resize(0, n);
    qp.b_eq.resize(0);
    qp.G.resize(0, n);
    qp.g_lb.resize(0);
    qp.g_ub.resize(0);
    qp.x_lb = Eigen::VectorXd::Constant(n, lo);
    qp.x_ub = Eigen::VectorXd::Constant(n, hi);
    qp.u_map = Eigen::MatrixXd::Identity(n, n);
    return qp;
}

} // namespace

TEST_CASE("settings validation") {
    SolverSettings s;
    CHECK_NOTHROW(s.validate());
    s.rho = 0.0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = {};
    s.alpha = 2.5;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = {};
    s.max_iter = 0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("one-dimensional problems") {
    const Eigen::MatrixXd P = Eigen::MatrixXd::Constant(1, 1, 2.0);
    // unconstrained minimum at 1.5 inside, at the bound, and beyond
    struct Case {
        double q, lo, hi, x;
    };
    for (const Case c : {Case{-3.0, -10.0, 10.0, 1.5}, Case{-3.0, -1.0, 1.0, 1.0}, Case{3.0, -1.0, 1.0, -1.0},
                         Case{-3.0, 2.0, 5.0, 2.0}}) {
        const Solution s = solve_qp(box_qp(P, Eigen::VectorXd::Constant(1, c.q), c.lo, c.hi), tight());
        CHECK(s.status == SolveStatus::Solved);
        CHECK(s.x(0) == doctest::Approx(c.x).epsilon(1e-7));
    }
    // equality pins the variable
    QpProblem eq = box_qp(P, Eigen::VectorXd::Constant(1, -3.0), -10.0, 10.0);
    eq.A_eq = Eigen::MatrixXd::Constant(1, 1, 1.0);
    eq.b_eq = Eigen::VectorXd::Constant(1, -0.25);
    CHECK(solve_qp(eq, tight()).x(0) == doctest::Approx(-0.25).epsilon(1e-7));
}

TEST_CASE("no constraints") {
    std::mt19937_64 rng(5);
    const Eigen::MatrixXd P = random_pd(6, rng);
    const Eigen::VectorXd q = randn(6, rng);
    QpSolver s;
    s.setup(P, q, Eigen::MatrixXd::Zero(0, 6), Eigen::VectorXd(0), Eigen::VectorXd(0), tight());
    CHECK(s.n_constraints() == 0);
    const Solution sol = s.solve();
    CHECK(sol.status == SolveStatus::Solved);
    const Eigen::VectorXd ref = P.ldlt().solve(-q);
    CHECK((sol.x - ref).norm() < 1e-7 * (1.0 + ref.norm()));
}

TEST_CASE("random QPs agree with active-set enumeration") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> ud(0.1, 1.0);
    for (int trial = 0; trial < 25; ++trial) {
        const Index n = 3 + trial % 3;
        const Index mi = 2 + trial % 3;
        const Eigen::MatrixXd P = random_pd(n, rng);
        const Eigen::VectorXd q = 3.0 * randn(n, rng);

        QpProblem qp = box_qp(P, q, -1.0, 1.0);
        qp.G.resize(mi, n);
        for (Index i = 0; i < qp.G.size(); ++i) qp.G.data()[i] = randn(1, rng)(0);
        qp.g_lb.resize(mi);
        qp.g_ub.resize(mi);
        for (Index i = 0; i < mi; ++i) {
            qp.g_lb(i) = -ud(rng);
            qp.g_ub(i) = ud(rng);
        }
        if (trial % 4 == 0) {
            qp.A_eq = randn(n, rng).transpose();
            qp.b_eq = Eigen::VectorXd::Constant(1, 0.1);
        }

        Eigen::MatrixXd M(qp.A_eq.rows() + n + mi, n);
        M << qp.A_eq, Eigen::MatrixXd::Identity(n, n), qp.G;
        Eigen::VectorXd l(M.rows()), u(M.rows());
        l << qp.b_eq, qp.x_lb, qp.g_lb;
        u << qp.b_eq, qp.x_ub, qp.g_ub;
        const auto ref = ddpc::testing::active_set_qp(P, q, M, l, u);
        REQUIRE(ref.feasible);

        const Solution sol = solve_qp(qp, tight());
        INFO("trial " << trial);
        CHECK(sol.status == SolveStatus::Solved);
        CHECK((sol.x - ref.x).cwiseAbs().maxCoeff() < 1e-6);
        CHECK(kkt_oracle_check(qp, sol.x, 1e-6).passed);
    }
}

TEST_CASE("kkt oracle rejects perturbed solutions") {
    std::mt19937_64 rng(8);
    const Eigen::MatrixXd P = random_pd(5, rng);
    const QpProblem qp = box_qp(P, 4.0 * randn(5, rng), -0.5, 0.5);
    const Solution sol = solve_qp(qp, tight());
    const KktReport ok = kkt_oracle_check(qp, sol.x, 1e-6);
    CHECK(ok.passed);
    CHECK(ok.stationarity < 1e-6);

    Eigen::VectorXd off = sol.x;
    off(0) = std::clamp(off(0) + 0.05, -0.5, 0.5) == off(0) ? off(0) - 0.05 : std::clamp(off(0) + 0.05, -0.5, 0.5);
    CHECK_FALSE(kkt_oracle_check(qp, off, 1e-6).passed);
    Eigen::VectorXd out = sol.x;
    out(1) = 0.7;
    const KktReport bad = kkt_oracle_check(qp, out, 1e-6);
    CHECK_FALSE(bad.passed);
    CHECK(bad.primal_feasibility > 0.1);
}

TEST_CASE("solutions respect the box") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 10; ++trial) {
        const QpProblem qp = box_qp(random_pd(8, rng), 50.0 * randn(8, rng), -0.1, 0.1);
        const Solution sol = solve_qp(qp);
        CHECK(sol.status == SolveStatus::Solved);
        CHECK(sol.x.maxCoeff() <= 0.1 + 1e-6);
        CHECK(sol.x.minCoeff() >= -0.1 - 1e-6);
    }
}

TEST_CASE("infeasible constraints are reported") {
    QpProblem qp = box_qp(Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Zero(2), -1.0, 1.0);
    qp.A_eq = Eigen::RowVector2d(1.0, 1.0);
    qp.b_eq = Eigen::VectorXd::Constant(1, 5.0);
    CHECK(solve_qp(qp).status == SolveStatus::PrimalInfeasible);
}

TEST_CASE("updates reuse the factorisation") {
    std::mt19937_64 rng(21);
    const Eigen::MatrixXd P = random_pd(10, rng);
    QpProblem qp = box_qp(P, randn(10, rng), -0.3, 0.3);
    SolverSettings s = tight();
    s.adaptive_rho = false;
    QpSolver solver;
    solver.setup(qp, s);
    CHECK(solver.factorizations() == 1);
    const std::uint64_t fp = solver.factorization_fingerprint();
    solver.solve();
    for (int k = 0; k < 20; ++k) {
        qp.q = randn(10, rng);
        const Solution warm = solver.update_and_resolve(qp);
        const Solution cold = solve_qp(qp, s);
        CHECK((warm.x - cold.x).cwiseAbs().maxCoeff() < 1e-6);
    }
    CHECK(solver.factorizations() == 1);
    CHECK(solver.factorization_fingerprint() == fp);

    QpSolver again;
    again.setup(qp, s);
    CHECK(again.factorization_fingerprint() == fp);
}

TEST_CASE("warm start from the optimum converges at once") {
    std::mt19937_64 rng(3);
    const QpProblem qp = box_qp(random_pd(12, rng), 5.0 * randn(12, rng), -0.2, 0.2);
    SolverSettings s;
    s.polish = false;
    QpSolver solver;
    solver.setup(qp, s);
    const Solution first = solver.solve();
    const Solution second = solver.update_and_resolve(qp);
    CHECK(second.stats.iterations < first.stats.iterations);
    CHECK(second.stats.iterations <= 2);

    solver.cold_start();
    const Solution cold = solver.solve();
    CHECK(cold.stats.iterations > second.stats.iterations);
    CHECK((cold.x - first.x).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("deterministic results") {
    std::mt19937_64 rng(17);
    const QpProblem qp = box_qp(random_pd(7, rng), randn(7, rng), -0.4, 0.4);
    const Solution a = solve_qp(qp);
    const Solution b = solve_qp(qp);
    CHECK(a.x == b.x);
    CHECK(a.stats.iterations == b.stats.iterations);
}

TEST_CASE("nnls") {
    Eigen::MatrixXd A(3, 2);
    A << 1, 0, 0, 1, 1, 1;
    const Eigen::Vector3d b(1.0, -2.0, 0.0);
    const Eigen::VectorXd x = nnls(A, b);
    CHECK(x.minCoeff() >= 0.0);
    CHECK(x(1) == doctest::Approx(0.0));
    CHECK(x(0) == doctest::Approx(0.5));
}

TEST_CASE("converged dual residual does not drive rho to its limit") {
    // the first adaptive check sees a dual residual of ~1e-15 on this problem
    Eigen::MatrixXd P(1, 1), M(3, 1);
    P << 1.6790957767368646;
    M << -1.9934433418619308, -1.2273853819537921, 0.36017280567078375;
    Eigen::VectorXd q(1), l(3), u(3);
    q << -4.5770229477113089;
    l << -1.229148850236766, -INFINITY, -0.3269479176386248;
    u << 0.30114452231273892, 0.32095377136391517, 0.18453858774914686;
    QpSolver s;
    s.setup(P, q, M, l, u);
    const Solution sol = s.solve();
    CHECK(sol.status == SolveStatus::Solved);
    CHECK(sol.x(0) == doctest::Approx(0.18453858774914686 / 0.36017280567078375).epsilon(1e-9));
    CHECK(sol.stats.rho < 1e3);
}
