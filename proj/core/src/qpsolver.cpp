#include "ddpc/qpsolver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <limits>

#include <fmt/format.h>

#include "ddpc/error.hpp"

namespace ddpc {

namespace {

using Clock = std::chrono::steady_clock;

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kMinScaling = 1e-4;
constexpr double kMaxScaling = 1e4;
constexpr double kRhoMin = 1e-6;
constexpr double kRhoMax = 1e6;
constexpr double kRhoEqFactor = 1e3;
constexpr double kPolishDelta = 1e-6;
constexpr int kPolishRefine = 3;
constexpr std::size_t kPolishCacheSize = 64;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double inf_norm(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

double clamp_scaling(double v) {
    if (v < kMinScaling) return 1.0;
    return std::min(v, kMaxScaling);
}

bool is_equality(double l, double u) { return std::isfinite(l) && std::isfinite(u) && std::abs(u - l) < 1e-12 * std::max(1.0, std::abs(u)); }

} // namespace

void SolverSettings::validate() const {
    if (!(rho > 0.0) || !(sigma > 0.0) || !(eps_abs >= 0.0) || !(eps_rel >= 0.0) || max_iter < 1) {
        throw ConfigError("solver settings: rho, sigma must be > 0, tolerances >= 0, max_iter >= 1");
    }
    if (!(alpha > 0.0 && alpha < 2.0)) throw ConfigError("solver settings: alpha must lie in (0, 2)");
    if (check_interval < 1 || adaptive_rho_interval < 1) throw ConfigError("solver settings: intervals must be >= 1");
    if (eps_abs == 0.0 && eps_rel == 0.0) throw ConfigError("solver settings: at least one tolerance must be > 0");
}

const char* to_string(SolveStatus s) {
    switch (s) {
    case SolveStatus::Solved: return "solved";
    case SolveStatus::MaxIter: return "max_iter";
    case SolveStatus::PrimalInfeasible: return "primal_infeasible";
    case SolveStatus::DualInfeasible: return "dual_infeasible";
    }
    return "unknown";
}

ConstraintForm stack_constraints(const QpProblem& qp) {
    qp.validate();
    ConstraintForm f;
    const Index n = qp.n_dec;
    for (Index i = 0; i < n; ++i) {
        if (std::isfinite(qp.x_lb(i)) || std::isfinite(qp.x_ub(i))) f.box_index.push_back(i);
    }
    for (Index i = 0; i < qp.G.rows(); ++i) {
        if (std::isfinite(qp.g_lb(i)) || std::isfinite(qp.g_ub(i))) f.g_index.push_back(i);
    }
    f.n_eq = qp.A_eq.rows();
    f.n_box = static_cast<Index>(f.box_index.size());
    f.n_ineq = static_cast<Index>(f.g_index.size());
    f.M = Eigen::MatrixXd::Zero(f.n_eq + f.n_box + f.n_ineq, n);
    f.M.topRows(f.n_eq) = qp.A_eq;
    for (Index k = 0; k < f.n_box; ++k) f.M(f.n_eq + k, f.box_index[k]) = 1.0;
    for (Index k = 0; k < f.n_ineq; ++k) f.M.row(f.n_eq + f.n_box + k) = qp.G.row(f.g_index[k]);
    stack_bounds(qp, f, f.l, f.u);
    return f;
}

void stack_bounds(const QpProblem& qp, const ConstraintForm& f, Eigen::VectorXd& l, Eigen::VectorXd& u) {
    const Index rows = f.n_eq + f.n_box + f.n_ineq;
    if (qp.b_eq.size() != f.n_eq || qp.g_lb.size() != qp.G.rows()) {
        throw ContractViolation("problem structure differs from the stacked constraint form");
    }
    l.resize(rows);
    u.resize(rows);
    l.head(f.n_eq) = qp.b_eq;
    u.head(f.n_eq) = qp.b_eq;
    for (Index k = 0; k < f.n_box; ++k) {
        l(f.n_eq + k) = qp.x_lb(f.box_index[k]);
        u(f.n_eq + k) = qp.x_ub(f.box_index[k]);
    }
    for (Index k = 0; k < f.n_ineq; ++k) {
        l(f.n_eq + f.n_box + k) = qp.g_lb(f.g_index[k]);
        u(f.n_eq + f.n_box + k) = qp.g_ub(f.g_index[k]);
    }
}

void QpSolver::setup(const QpProblem& qp, const SolverSettings& settings) {
    ConstraintForm form = stack_constraints(qp);
    setup(qp.P, qp.q, form.M, form.l, form.u, settings);
    form_ = std::move(form);
}

void QpSolver::setup(const Eigen::MatrixXd& P, const Eigen::VectorXd& q, const Eigen::MatrixXd& M,
                     const Eigen::VectorXd& l, const Eigen::VectorXd& u, const SolverSettings& settings) {
    const auto t0 = Clock::now();
    settings.validate();
    const Index n = P.rows();
    if (n < 1 || P.cols() != n || q.size() != n) throw DimensionError("setup: P must be square and match q");
    if (M.cols() != n || l.size() != M.rows() || u.size() != M.rows()) {
        throw DimensionError("setup: constraint matrix and bounds do not match");
    }
    if ((l.array() > u.array()).any()) throw ConfigError("setup: lower bound exceeds upper bound");
    if (!P.allFinite() || !q.allFinite() || !M.allFinite()) throw ConfigError("setup: non-finite problem data");

    settings_ = settings;
    n_ = n;
    m_ = M.rows();
    P_ = 0.5 * (P + P.transpose());
    q_ = q;
    l_ = l;
    u_ = u;
    form_ = ConstraintForm{};
    form_.M = M;
    form_.l = l;
    form_.u = u;
    form_.n_ineq = m_;
    for (Index i = 0; i < m_; ++i) form_.g_index.push_back(i);

    scale_problem();
    rho_ = settings_.rho;
    rho_updates_ = 0;
    factorizations_ = 0;
    polish_factorizations_ = 0;
    polish_cache_.clear();
    compute_rho_vector();
    factorize();
    cold_start();
    setup_time_s_ = seconds_since(t0);
}

void QpSolver::scale_problem() {
    Eigen::MatrixXd Ps = P_;
    Eigen::MatrixXd Ms = form_.M;
    Eigen::VectorXd qs = q_;
    D_ = Eigen::VectorXd::Ones(n_);
    E_ = Eigen::VectorXd::Ones(m_);
    c_ = 1.0;
    for (int it = 0; it < settings_.scaling_iters; ++it) {
        Eigen::VectorXd d(n_);
        for (Index j = 0; j < n_; ++j) {
            double nrm = Ps.col(j).cwiseAbs().maxCoeff();
            if (m_ > 0) nrm = std::max(nrm, Ms.col(j).cwiseAbs().maxCoeff());
            d(j) = 1.0 / std::sqrt(clamp_scaling(nrm));
        }
        Eigen::VectorXd e(m_);
        for (Index i = 0; i < m_; ++i) e(i) = 1.0 / std::sqrt(clamp_scaling(Ms.row(i).cwiseAbs().maxCoeff()));
        Ps = d.asDiagonal() * Ps * d.asDiagonal();
        Ms = e.asDiagonal() * Ms * d.asDiagonal();
        qs = d.cwiseProduct(qs);
        D_ = D_.cwiseProduct(d);
        E_ = E_.cwiseProduct(e);

        double mean_col = 0.0;
        for (Index j = 0; j < n_; ++j) mean_col += Ps.col(j).cwiseAbs().maxCoeff();
        mean_col /= static_cast<double>(n_);
        const double cost = 1.0 / clamp_scaling(std::max(mean_col, inf_norm(qs)));
        Ps *= cost;
        qs *= cost;
        c_ *= cost;
    }
    Ps_ = std::move(Ps);
    qs_ = std::move(qs);
    const double density = m_ > 0 ? static_cast<double>((Ms.array() != 0.0).count()) / static_cast<double>(Ms.size()) : 0.0;
    dense_M_ = density > 0.2;
    if (dense_M_) {
        Ms_dense_ = Ms;
        Ms_.resize(0, 0);
        MsT_.resize(0, 0);
    } else {
        Ms_ = Ms.sparseView();
        MsT_ = Ms_.transpose();
        Ms_dense_.resize(0, 0);
    }
    ls_ = E_.cwiseProduct(l_);
    us_ = E_.cwiseProduct(u_);
}

void QpSolver::compute_rho_vector() {
    rho_vec_.resize(m_);
    for (Index i = 0; i < m_; ++i) {
        if (!std::isfinite(l_(i)) && !std::isfinite(u_(i))) {
            rho_vec_(i) = kRhoMin;
        } else if (is_equality(l_(i), u_(i))) {
            rho_vec_(i) = kRhoEqFactor * rho_;
        } else {
            rho_vec_(i) = rho_;
        }
    }
}

void QpSolver::factorize() {
    Eigen::MatrixXd K = Ps_;
    K.diagonal().array() += settings_.sigma;
    if (m_ > 0) {
        if (dense_M_) K.noalias() += Ms_dense_.transpose() * rho_vec_.asDiagonal() * Ms_dense_;
        else K += Eigen::MatrixXd(MsT_ * rho_vec_.asDiagonal() * Ms_);
    }
    kkt_.compute(K);
    if (kkt_.info() != Eigen::Success) {
        throw ConfigError("KKT system could not be factorised (P not positive semidefinite?)");
    }
    ++factorizations_;
}

std::uint64_t QpSolver::factorization_fingerprint() const {
    // FNV-1a over the factor's bytes
    std::uint64_t h = 1469598103934665603ull;
    const Eigen::MatrixXd& L = kkt_.matrixLLT();
    const auto* bytes = reinterpret_cast<const unsigned char*>(L.data());
    for (std::size_t i = 0; i < static_cast<std::size_t>(L.size()) * sizeof(double); ++i) {
        h ^= bytes[i];
        h *= 1099511628211ull;
    }
    return h;
}

void QpSolver::mul_M(const Eigen::VectorXd& v, Eigen::VectorXd& out) const {
    if (dense_M_) out.noalias() = Ms_dense_ * v;
    else out.noalias() = Ms_ * v;
}

void QpSolver::mul_MT(const Eigen::VectorXd& v, Eigen::VectorXd& out) const {
    if (dense_M_) out.noalias() = Ms_dense_.transpose() * v;
    else out.noalias() = MsT_ * v;
}

void QpSolver::cold_start() {
    x_ = Eigen::VectorXd::Zero(n_);
    z_ = Eigen::VectorXd::Zero(m_);
    y_ = Eigen::VectorXd::Zero(m_);
    have_iterate_ = false;
}

void QpSolver::warm_start(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    if (x.size() != n_ || y.size() != m_) throw ContractViolation("warm_start: iterate dimensions differ");
    x_ = D_.cwiseInverse().cwiseProduct(x);
    y_ = c_ * E_.cwiseInverse().cwiseProduct(y);
    Eigen::VectorXd Mx(m_);
    mul_M(x_, Mx);
    z_ = Mx.cwiseMax(ls_).cwiseMin(us_);
    have_iterate_ = true;
}

void QpSolver::unscale_into(Solution& sol) const {
    sol.x = D_.cwiseProduct(x_);
    sol.z = E_.cwiseInverse().cwiseProduct(z_);
    sol.y = E_.cwiseProduct(y_) / c_;
}

Solution QpSolver::solve() {
    if (!is_setup()) throw ContractViolation("solve called before setup");
    const auto t0 = Clock::now();
    if (!settings_.warm_start || !have_iterate_) cold_start();

    const double sigma = settings_.sigma;
    const double alpha = settings_.alpha;
    const Eigen::VectorXd Dinv = D_.cwiseInverse();
    const Eigen::VectorXd Einv = E_.cwiseInverse();

    Eigen::VectorXd xt(n_), zt(m_), zr(m_), rhs(n_), Px(n_), MTy(n_), Mx(m_), x_prev(n_), y_prev(m_), tmp_n(n_),
        tmp_m(m_);
    if (m_ > 0) mul_M(x_, Mx);
    Solution sol;
    sol.status = SolveStatus::MaxIter;
    double prim = 0.0;
    double dual = 0.0;
    int iter = 0;
    for (iter = 1; iter <= settings_.max_iter; ++iter) {
        x_prev = x_;
        y_prev = y_;

        rhs = sigma * x_ - qs_;
        if (m_ > 0) {
            mul_MT(rho_vec_.cwiseProduct(z_) - y_, tmp_n);
            rhs += tmp_n;
        }
        xt = rhs;
        kkt_.matrixL().solveInPlace(xt);
        kkt_.matrixU().solveInPlace(xt);
        x_ = alpha * xt + (1.0 - alpha) * x_;
        if (m_ > 0) {
            mul_M(xt, zt);
            Mx = alpha * zt + (1.0 - alpha) * Mx;
            zr = alpha * zt + (1.0 - alpha) * z_;
            z_ = (zr + y_.cwiseQuotient(rho_vec_)).cwiseMax(ls_).cwiseMin(us_);
            y_ += rho_vec_.cwiseProduct(zr - z_);
        }

        const bool rho_due = settings_.adaptive_rho && m_ > 0 && iter % settings_.adaptive_rho_interval == 0 &&
                             rho_updates_ < settings_.max_rho_updates;
        if (iter % settings_.check_interval != 0 && iter != settings_.max_iter && !rho_due) continue;

        // residuals in original units
        Px.noalias() = Ps_ * x_;
        double prim_scale = 0.0;
        if (m_ > 0) {
            mul_MT(y_, MTy);
            prim = inf_norm(Einv.cwiseProduct(Mx - z_));
            prim_scale = std::max(inf_norm(Einv.cwiseProduct(Mx)), inf_norm(Einv.cwiseProduct(z_)));
        } else {
            MTy.setZero();
            prim = 0.0;
        }
        dual = inf_norm(Dinv.cwiseProduct(Px + qs_ + MTy)) / c_;
        const double dual_scale =
            std::max({inf_norm(Dinv.cwiseProduct(Px)), inf_norm(Dinv.cwiseProduct(MTy)), inf_norm(Dinv.cwiseProduct(qs_))}) / c_;
        const double eps_p = settings_.eps_abs + settings_.eps_rel * prim_scale;
        const double eps_d = settings_.eps_abs + settings_.eps_rel * dual_scale;
        if (prim <= eps_p && dual <= eps_d) {
            sol.status = SolveStatus::Solved;
            break;
        }

        // infeasibility certificates from successive differences
        const double eps_inf = settings_.eps_infeasible;
        const bool check_inf = settings_.infeasibility_interval > 0 && iter % settings_.infeasibility_interval == 0;
        if (check_inf && m_ > 0) {
            const Eigen::VectorXd dy = y_ - y_prev;
            const double dy_norm = inf_norm(E_.cwiseProduct(dy));
            if (dy_norm > eps_inf) {
                mul_MT(dy, tmp_n);
                const double lhs = inf_norm(Dinv.cwiseProduct(tmp_n));
                double support = 0.0;
                for (Index i = 0; i < m_ && std::isfinite(support); ++i) {
                    if (dy(i) > 0.0) support = std::isfinite(us_(i)) ? support + us_(i) * dy(i) : kInf;
                    if (dy(i) < 0.0) support = std::isfinite(ls_(i)) ? support + ls_(i) * dy(i) : kInf;
                }
                if (lhs <= eps_inf * dy_norm && support < -eps_inf * dy_norm) {
                    sol.status = SolveStatus::PrimalInfeasible;
                    break;
                }
            }
        }
        if (check_inf) {
            const Eigen::VectorXd dx = x_ - x_prev;
            const double dx_norm = inf_norm(D_.cwiseProduct(dx));
            if (dx_norm > eps_inf) {
                bool cert = inf_norm(Dinv.cwiseProduct(Ps_ * dx)) <= c_ * eps_inf * dx_norm &&
                            qs_.dot(dx) < -c_ * eps_inf * dx_norm;
                if (cert && m_ > 0) {
                    mul_M(dx, tmp_m);
                    const Eigen::VectorXd Mdx = Einv.cwiseProduct(tmp_m);
                    for (Index i = 0; i < m_ && cert; ++i) {
                        const bool lo = std::isfinite(ls_(i));
                        const bool hi = std::isfinite(us_(i));
                        if (lo && hi) cert = std::abs(Mdx(i)) <= eps_inf * dx_norm;
                        else if (hi) cert = Mdx(i) <= eps_inf * dx_norm;
                        else if (lo) cert = Mdx(i) >= -eps_inf * dx_norm;
                    }
                }
                if (cert) {
                    sol.status = SolveStatus::DualInfeasible;
                    break;
                }
            }
        }

        if (rho_due) {
            // residuals floored at their tolerance: one that has converged says nothing about the balance
            const double rp = std::max(prim, eps_p) / (prim_scale + 1e-10);
            const double rd = std::max(dual, eps_d) / (dual_scale + 1e-10);
            const double rho_new = std::clamp(rho_ * std::sqrt(rp / (rd + 1e-30)), kRhoMin, kRhoMax);
            if (rho_new > 5.0 * rho_ || rho_new < 0.2 * rho_) {
                rho_ = rho_new;
                compute_rho_vector();
                factorize();
                ++rho_updates_;
            }
        }
    }
    have_iterate_ = true;

    sol.stats.iterations = std::min(iter, settings_.max_iter);
    sol.stats.primal_res = prim;
    sol.stats.dual_res = dual;
    sol.stats.rho = rho_;
    unscale_into(sol);
    if (sol.status == SolveStatus::Solved && settings_.polish) polish(sol);
    sol.stats.setup_time_s = setup_time_s_;
    sol.stats.solve_time_s = seconds_since(t0);
    return sol;
}

void QpSolver::polish(Solution& sol) {
    const Eigen::MatrixXd& M = form_.M;
    std::vector<signed char> tags(static_cast<std::size_t>(m_), 0);
    std::vector<Index> active;
    Eigen::VectorXd Mx = M * sol.x;
    for (Index i = 0; i < m_; ++i) {
        signed char t = 0;
        if (is_equality(l_(i), u_(i))) t = 2;
        else if (std::isfinite(l_(i)) && sol.z(i) - l_(i) < -sol.y(i)) t = -1;
        else if (std::isfinite(u_(i)) && u_(i) - sol.z(i) < sol.y(i)) t = 1;
        tags[static_cast<std::size_t>(i)] = t;
        if (t != 0) active.push_back(i);
    }
    const auto na = static_cast<Index>(active.size());
    Eigen::MatrixXd A(na, n_);
    Eigen::VectorXd b(na);
    for (Index k = 0; k < na; ++k) {
        const Index i = active[k];
        A.row(k) = M.row(i);
        b(k) = tags[static_cast<std::size_t>(i)] == -1 ? l_(i) : u_(i);
    }

    Eigen::MatrixXd K0(n_ + na, n_ + na);
    K0 << P_, A.transpose(), A, Eigen::MatrixXd::Zero(na, na);
    std::shared_ptr<Eigen::LDLT<Eigen::MatrixXd>> fact;
    auto it = polish_cache_.find(tags);
    if (it != polish_cache_.end()) {
        fact = it->second;
    } else {
        Eigen::MatrixXd K = K0;
        K.topLeftCorner(n_, n_).diagonal().array() += kPolishDelta;
        K.bottomRightCorner(na, na).diagonal().array() -= kPolishDelta;
        fact = std::make_shared<Eigen::LDLT<Eigen::MatrixXd>>(K);
        ++polish_factorizations_;
        if (polish_cache_.size() >= kPolishCacheSize) polish_cache_.clear();
        polish_cache_.emplace(tags, fact);
    }
    if (fact->info() != Eigen::Success) return;

    Eigen::VectorXd rhs(n_ + na);
    rhs << -q_, b;
    Eigen::VectorXd s = fact->solve(rhs);
    for (int r = 0; r < kPolishRefine; ++r) s += fact->solve(rhs - K0 * s);
    if (!s.allFinite()) return;

    const Eigen::VectorXd xp = s.head(n_);
    Eigen::VectorXd yp = Eigen::VectorXd::Zero(m_);
    for (Index k = 0; k < na; ++k) yp(active[k]) = s(n_ + k);

    // accept only if feasible, sign-consistent and at least as accurate as ADMM
    const Eigen::VectorXd Mxp = M * xp;
    double viol = 0.0;
    for (Index i = 0; i < m_; ++i) viol = std::max({viol, l_(i) - Mxp(i), Mxp(i) - u_(i)});
    const double prim_scale = std::max(inf_norm(Mxp), 1e-12);
    const double eps_p = settings_.eps_abs + settings_.eps_rel * prim_scale;
    const Eigen::VectorXd grad = P_ * xp + q_;
    const Eigen::VectorXd MTy = M.transpose() * yp;
    const double dual = inf_norm(grad + MTy);
    const double eps_d =
        settings_.eps_abs + settings_.eps_rel * std::max({inf_norm(P_ * xp), inf_norm(MTy), inf_norm(q_)});
    bool signs = true;
    for (Index k = 0; k < na && signs; ++k) {
        const signed char t = tags[static_cast<std::size_t>(active[k])];
        const double yk = yp(active[k]);
        if (t == -1 && yk > eps_d) signs = false;
        if (t == 1 && yk < -eps_d) signs = false;
    }
    if (!(viol <= eps_p) || !(dual <= eps_d) || !signs) return;

    sol.x = xp;
    sol.y = yp;
    sol.z = Mxp.cwiseMax(l_).cwiseMin(u_);
    sol.stats.polished = true;
    sol.stats.primal_res = std::max(viol, 0.0);
    sol.stats.dual_res = dual;
    // continue later solves from the polished point
    x_ = D_.cwiseInverse().cwiseProduct(sol.x);
    z_ = E_.cwiseProduct(sol.z);
    y_ = c_ * E_.cwiseInverse().cwiseProduct(sol.y);
}

Solution QpSolver::update_and_resolve(const Eigen::VectorXd& q, const Eigen::VectorXd& l, const Eigen::VectorXd& u) {
    if (!is_setup()) throw ContractViolation("update_and_resolve called before setup");
    if (q.size() != n_ || l.size() != m_ || u.size() != m_) {
        throw ContractViolation(fmt::format("update_and_resolve: sizes ({}, {}, {}) differ from setup ({}, {})",
                                            q.size(), l.size(), u.size(), n_, m_));
    }
    if ((l.array() > u.array()).any()) throw ConfigError("update: lower bound exceeds upper bound");
    bool pattern_changed = false;
    for (Index i = 0; i < m_ && !pattern_changed; ++i) {
        pattern_changed = is_equality(l(i), u(i)) != is_equality(l_(i), u_(i)) ||
                          std::isfinite(l(i)) != std::isfinite(l_(i)) || std::isfinite(u(i)) != std::isfinite(u_(i));
    }
    q_ = q;
    l_ = l;
    u_ = u;
    qs_ = c_ * D_.cwiseProduct(q_);
    ls_ = E_.cwiseProduct(l_);
    us_ = E_.cwiseProduct(u_);
    if (pattern_changed) {
        compute_rho_vector();
        factorize();
    }
    return solve();
}

Solution QpSolver::update_and_resolve(const QpProblem& qp) {
    if (qp.n_dec != n_) throw ContractViolation("update_and_resolve: decision dimension changed");
    Eigen::VectorXd l;
    Eigen::VectorXd u;
    stack_bounds(qp, form_, l, u);
    return update_and_resolve(qp.q, l, u);
}

Solution solve_qp(const QpProblem& qp, const SolverSettings& settings) {
    QpSolver solver;
    solver.setup(qp, settings);
    return solver.solve();
}

} // namespace ddpc
