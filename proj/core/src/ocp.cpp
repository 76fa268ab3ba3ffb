#include "ddpc/ocp.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <fmt/format.h>

#include "ddpc/error.hpp"

namespace ddpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double min_eigenvalue(const Eigen::MatrixXd& M) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (M + M.transpose()), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

Eigen::VectorXd repeat(const Eigen::VectorXd& v, Index times) { return v.replicate(times, 1); }

void symmetrize(Eigen::MatrixXd& P) { P = 0.5 * (P + P.transpose()).eval(); }

} // namespace

WeightSpec WeightSpec::tpc_defaults() {
    WeightSpec w;
    w.Q_bar = Eigen::MatrixXd::Identity(3, 3);
    w.R_bar = Eigen::MatrixXd::Identity(3, 3);
    w.Q_norm = Eigen::Vector3d(0.002, 0.04, 0.02);
    w.R_norm = Eigen::Vector3d::Constant(0.0025);
    return w;
}

WeightSpec WeightSpec::deepc_defaults() {
    WeightSpec w;
    w.Q_bar = Eigen::Vector3d(1e8, 1e7, 1e7).asDiagonal();
    w.R_bar = Eigen::Vector3d(1e-2, 1.0, 1e-2).asDiagonal();
    w.Q_norm = Eigen::Vector3d::Ones();
    w.R_norm = Eigen::Vector3d::Ones();
    w.lambda_g2 = 30.0;
    w.lambda_sigma = 1e5;
    return w;
}

Eigen::MatrixXd WeightSpec::Q_step() const {
    const Eigen::VectorXd s = Q_norm.cwiseInverse();
    return s.asDiagonal() * Q_bar * s.asDiagonal();
}

Eigen::MatrixXd WeightSpec::R_step() const {
    const Eigen::VectorXd s = R_norm.cwiseInverse();
    return s.asDiagonal() * R_bar * s.asDiagonal();
}

void WeightSpec::validate(Index p, Index m) const {
    if (Q_bar.rows() != p || Q_bar.cols() != p || Q_norm.size() != p) {
        throw ConfigError(fmt::format("output weights must be {0}x{0} with {0} normalisation scales", p));
    }
    if (R_bar.rows() != m || R_bar.cols() != m || R_norm.size() != m) {
        throw ConfigError(fmt::format("input weights must be {0}x{0} with {0} normalisation scales", m));
    }
    if (!(Q_norm.array() > 0.0).all() || !(R_norm.array() > 0.0).all()) {
        throw ConfigError("normalisation scales must be strictly positive");
    }
    if (!Q_bar.allFinite() || !R_bar.allFinite()) throw ConfigError("weights must be finite");
    if ((Q_bar - Q_bar.transpose()).norm() > 1e-12 * Q_bar.norm() ||
        (R_bar - R_bar.transpose()).norm() > 1e-12 * R_bar.norm()) {
        throw ConfigError("weights must be symmetric");
    }
    if (min_eigenvalue(Q_bar) < -1e-12 * Q_bar.norm()) throw ConfigError("Q_bar must be positive semidefinite");
    if (!(min_eigenvalue(R_bar) > 1e-12 * R_bar.norm())) throw ConfigError("R_bar must be positive definite");
    if (!(lambda_g2 >= 0.0)) throw ConfigError("lambda_g2 must be >= 0");
}

Eigen::MatrixXd horizon_weight(const Eigen::MatrixXd& step_weight, Index horizon) {
    const Index s = step_weight.rows();
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(s * horizon, s * horizon);
    for (Index k = 0; k < horizon; ++k) W.block(s * k, s * k, s, s) = step_weight;
    return W;
}

OcpBounds OcpBounds::symmetric(Index m, Index p, double u_limit) {
    OcpBounds b;
    b.u_lb = Eigen::VectorXd::Constant(m, -u_limit);
    b.u_ub = Eigen::VectorXd::Constant(m, u_limit);
    b.y_lb = Eigen::VectorXd::Constant(p, -kInf);
    b.y_ub = Eigen::VectorXd::Constant(p, kInf);
    return b;
}

bool OcpBounds::y_bounded() const { return y_lb.array().isFinite().any() || y_ub.array().isFinite().any(); }
bool OcpBounds::u_bounded() const { return u_lb.array().isFinite().any() || u_ub.array().isFinite().any(); }

void OcpBounds::validate(Index m, Index p) const {
    if (u_lb.size() != m || u_ub.size() != m || y_lb.size() != p || y_ub.size() != p) {
        throw ConfigError(fmt::format("bounds need {} input and {} output entries", m, p));
    }
    if ((u_lb.array() > u_ub.array()).any() || (y_lb.array() > y_ub.array()).any()) {
        throw ConfigError("lower bounds must not exceed upper bounds");
    }
    if (u_lb.hasNaN() || u_ub.hasNaN() || y_lb.hasNaN() || y_ub.hasNaN()) throw ConfigError("bounds contain NaN");
}

void QpProblem::validate() const {
    const Index n = n_dec;
    auto fail = [](const std::string& what) { throw DimensionError("QpProblem: " + what); };
    if (P.rows() != n || P.cols() != n || q.size() != n) fail("P/q size");
    if (A_eq.cols() != n || A_eq.rows() != b_eq.size()) fail("equality block size");
    if (G.cols() != n || G.rows() != g_lb.size() || G.rows() != g_ub.size()) fail("inequality block size");
    if (x_lb.size() != n || x_ub.size() != n) fail("box size");
    if (u_map.cols() != n) fail("input extractor size");
}

QpProblem build_tpc_qp(const PredictorMatrices& pred, const WeightSpec& w, const OcpBounds& b,
                       const Eigen::Ref<const Eigen::VectorXd>& z_p) {
    const Index m = b.u_lb.size();
    const Index p = w.Q_bar.rows();
    w.validate(p, m);
    b.validate(m, p);
    if (pred.H_u.cols() % m != 0 || pred.H_u.rows() % p != 0) {
        throw DimensionError("predictor matrices do not match the weight and bound sizes");
    }
    const Index tf = pred.H_u.cols() / m;
    if (pred.H_u.rows() != p * tf || pred.H_p.rows() != p * tf) {
        throw DimensionError("predictor output rows must equal p * tau_f");
    }
    if (z_p.size() != pred.H_p.cols()) {
        throw DimensionError(fmt::format("z_p has {} entries, predictor expects {}", z_p.size(), pred.H_p.cols()));
    }

    const Eigen::MatrixXd Q = horizon_weight(w.Q_step(), tf);
    const Eigen::MatrixXd R = horizon_weight(w.R_step(), tf);
    const Eigen::MatrixXd HuQ = pred.H_u.transpose() * Q;

    QpProblem qp;
    qp.kind = ProblemKind::Tpc;
    qp.n_dec = m * tf;
    qp.P = HuQ * pred.H_u + R;
    symmetrize(qp.P);
    qp.q_map = HuQ * pred.H_p;
    qp.past_dim = z_p.size();
    qp.A_eq.resize(0, qp.n_dec);
    qp.b_eq.resize(0);
    qp.x_lb = repeat(b.u_lb, tf);
    qp.x_ub = repeat(b.u_ub, tf);
    if (b.y_bounded()) {
        qp.G = pred.H_u;
        qp.g_past_map = pred.H_p;
        qp.g_lb_base = repeat(b.y_lb, tf);
        qp.g_ub_base = repeat(b.y_ub, tf);
    } else {
        qp.G.resize(0, qp.n_dec);
        qp.g_past_map.resize(0, qp.past_dim);
        qp.g_lb_base.resize(0);
        qp.g_ub_base.resize(0);
    }
    qp.u_map = Eigen::MatrixXd::Identity(qp.n_dec, qp.n_dec);
    refresh_qp(qp, z_p);
    qp.validate();
    return qp;
}

namespace {

void check_deepc_inputs(const DeePCData& data, const WeightSpec& w, const OcpBounds& b,
                        const Eigen::Ref<const Eigen::VectorXd>& u_p, const Eigen::Ref<const Eigen::VectorXd>& y_p) {
    w.validate(data.p, data.m);
    b.validate(data.m, data.p);
    if (!(w.lambda_sigma > 0.0)) throw ConfigError("lambda_sigma must be > 0");
    if (u_p.size() != data.U_p.n_row() || y_p.size() != data.Y_p.n_row()) {
        throw DimensionError(fmt::format("u_p/y_p have {}/{} entries, expected {}/{}", u_p.size(), y_p.size(),
                                         data.U_p.n_row(), data.Y_p.n_row()));
    }
}

Eigen::MatrixXd deepc_cost_block(const DeePCData& data, const WeightSpec& w) {
    const Index tf = data.config.tau_f;
    const Eigen::MatrixXd Q = horizon_weight(w.Q_step(), tf);
    const Eigen::MatrixXd R = horizon_weight(w.R_step(), tf);
    const Eigen::MatrixXd& Yf = data.Y_f.values;
    const Eigen::MatrixXd& Uf = data.U_f.values;
    Eigen::MatrixXd H = Yf.transpose() * Q * Yf + Uf.transpose() * R * Uf;
    H.diagonal().array() += w.lambda_g2;
    return H;
}

Eigen::MatrixXd stacked_past(const DeePCData& data) {
    Eigen::MatrixXd Zp(data.U_p.n_row() + data.Y_p.n_row(), data.n_col());
    Zp << data.U_p.values, data.Y_p.values;
    return Zp;
}

// input bounds on U_f g (rows with both bounds infinite dropped) and output bounds on Y_f g
void deepc_inequalities(QpProblem& qp, const DeePCData& data, const OcpBounds& b, Index n_extra) {
    const Index tf = data.config.tau_f;
    std::vector<std::pair<const Eigen::MatrixXd*, std::pair<Eigen::VectorXd, Eigen::VectorXd>>> blocks;
    if (b.u_bounded()) blocks.push_back({&data.U_f.values, {repeat(b.u_lb, tf), repeat(b.u_ub, tf)}});
    if (b.y_bounded()) blocks.push_back({&data.Y_f.values, {repeat(b.y_lb, tf), repeat(b.y_ub, tf)}});
    Index rows = 0;
    for (const auto& blk : blocks) rows += blk.first->rows();
    qp.G = Eigen::MatrixXd::Zero(rows, data.n_col() + n_extra);
    qp.g_lb_base.resize(rows);
    qp.g_ub_base.resize(rows);
    Index r = 0;
    for (const auto& blk : blocks) {
        const Index k = blk.first->rows();
        qp.G.block(r, 0, k, data.n_col()) = *blk.first;
        qp.g_lb_base.segment(r, k) = blk.second.first;
        qp.g_ub_base.segment(r, k) = blk.second.second;
        r += k;
    }
    qp.g_lb = qp.g_lb_base;
    qp.g_ub = qp.g_ub_base;
}

} // namespace

QpProblem build_deepc_qp(const DeePCData& data, const WeightSpec& w, const OcpBounds& b,
                         const Eigen::Ref<const Eigen::VectorXd>& u_p,
                         const Eigen::Ref<const Eigen::VectorXd>& y_p) {
    check_deepc_inputs(data, w, b, u_p, y_p);
    const Index nc = data.n_col();
    const Index ns = data.Y_p.n_row();
    const Index nu = data.U_p.n_row();

    QpProblem qp;
    qp.kind = ProblemKind::DeePC;
    qp.n_g = nc;
    qp.n_sigma = ns;
    qp.n_dec = nc + ns;
    qp.P = Eigen::MatrixXd::Zero(qp.n_dec, qp.n_dec);
    qp.P.topLeftCorner(nc, nc) = deepc_cost_block(data, w);
    qp.P.bottomRightCorner(ns, ns).diagonal().setConstant(w.lambda_sigma);
    symmetrize(qp.P);
    qp.q = Eigen::VectorXd::Zero(qp.n_dec);

    qp.A_eq = Eigen::MatrixXd::Zero(nu + ns, qp.n_dec);
    qp.A_eq.topLeftCorner(nu, nc) = data.U_p.values;
    qp.A_eq.bottomLeftCorner(ns, nc) = data.Y_p.values;
    qp.A_eq.bottomRightCorner(ns, ns) = -Eigen::MatrixXd::Identity(ns, ns);
    qp.past_dim = nu + ns;

    deepc_inequalities(qp, data, b, ns);
    qp.g_past_map.resize(0, qp.past_dim);
    qp.x_lb = Eigen::VectorXd::Constant(qp.n_dec, -kInf);
    qp.x_ub = Eigen::VectorXd::Constant(qp.n_dec, kInf);
    qp.u_map = Eigen::MatrixXd::Zero(data.U_f.n_row(), qp.n_dec);
    qp.u_map.leftCols(nc) = data.U_f.values;

    Eigen::VectorXd past(qp.past_dim);
    past << u_p, y_p;
    refresh_qp(qp, past);
    qp.validate();
    return qp;
}

QpProblem build_modified_deepc_qp(const DeePCData& data, const WeightSpec& w, const OcpBounds& b,
                                  const Eigen::Ref<const Eigen::VectorXd>& u_p,
                                  const Eigen::Ref<const Eigen::VectorXd>& y_p) {
    check_deepc_inputs(data, w, b, u_p, y_p);
    const Index nc = data.n_col();
    const Eigen::MatrixXd Zp = stacked_past(data);

    QpProblem qp;
    qp.kind = ProblemKind::ModifiedDeePC;
    qp.n_g = nc;
    qp.n_dec = nc;
    qp.P = deepc_cost_block(data, w) + w.lambda_sigma * Zp.transpose() * Zp;
    symmetrize(qp.P);
    qp.q_map = -w.lambda_sigma * Zp.transpose();
    qp.past_dim = Zp.rows();
    qp.A_eq.resize(0, nc);
    qp.b_eq.resize(0);
    deepc_inequalities(qp, data, b, 0);
    qp.g_past_map.resize(0, qp.past_dim);
    qp.x_lb = Eigen::VectorXd::Constant(nc, -kInf);
    qp.x_ub = Eigen::VectorXd::Constant(nc, kInf);
    qp.u_map = data.U_f.values;

    Eigen::VectorXd past(qp.past_dim);
    past << u_p, y_p;
    refresh_qp(qp, past);
    qp.validate();
    return qp;
}

void refresh_qp(QpProblem& qp, const Eigen::Ref<const Eigen::VectorXd>& past) {
    if (past.size() != qp.past_dim) {
        throw ContractViolation(
            fmt::format("refresh_qp: past vector has {} entries, problem was built for {}", past.size(), qp.past_dim));
    }
    if (qp.q_map.size() > 0) {
        qp.q = qp.q_map * past;
    } else if (qp.q.size() != qp.n_dec) {
        qp.q = Eigen::VectorXd::Zero(qp.n_dec);
    }
    if (qp.kind == ProblemKind::DeePC) qp.b_eq = past;
    if (qp.g_past_map.rows() > 0) {
        const Eigen::VectorXd shift = qp.g_past_map * past;
        // infinite bounds stay infinite
        qp.g_lb = qp.g_lb_base - shift;
        qp.g_ub = qp.g_ub_base - shift;
    } else {
        qp.g_lb = qp.g_lb_base;
        qp.g_ub = qp.g_ub_base;
    }
}

Eigen::MatrixXd tpc_gain(const PredictorMatrices& pred, const WeightSpec& w) {
    const Index p = w.Q_bar.rows();
    const Index m = w.R_bar.rows();
    w.validate(p, m);
    if (pred.H_u.cols() % m != 0) throw DimensionError("H_u columns are not a multiple of m");
    const Index tf = pred.H_u.cols() / m;
    const Eigen::MatrixXd Q = horizon_weight(w.Q_step(), tf);
    const Eigen::MatrixXd R = horizon_weight(w.R_step(), tf);
    const Eigen::MatrixXd HuQ = pred.H_u.transpose() * Q;
    Eigen::MatrixXd P = HuQ * pred.H_u + R;
    symmetrize(P);
    Eigen::LLT<Eigen::MatrixXd> llt(P);
    if (llt.info() != Eigen::Success) throw ConfigError("TPC Hessian is not positive definite");
    return -llt.solve(HuQ * pred.H_p);
}

Eigen::VectorXd closed_form_tpc(const PredictorMatrices& pred, const WeightSpec& w,
                                const Eigen::Ref<const Eigen::VectorXd>& z_p) {
    const Eigen::MatrixXd K = tpc_gain(pred, w);
    if (z_p.size() != K.cols()) throw DimensionError("closed_form_tpc: z_p size mismatch");
    return K * z_p;
}

namespace {

// [Y_f'QY_f + U_f'RU_f + lambda_g2 I + lambda_sigma Z_p'Z_p]^+ applied to rhs
Eigen::MatrixXd deepc_bracket_solve(const DeePCData& data, const WeightSpec& w, const Eigen::MatrixXd& rhs) {
    const Eigen::MatrixXd Zp = stacked_past(data);
    Eigen::MatrixXd M = deepc_cost_block(data, w) + w.lambda_sigma * Zp.transpose() * Zp;
    symmetrize(M);
    Eigen::LLT<Eigen::MatrixXd> llt(M);
    if (llt.info() == Eigen::Success) return llt.solve(rhs);
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(M);
    return cod.solve(rhs);
}

} // namespace

Eigen::MatrixXd deepc_gain(const DeePCData& data, const WeightSpec& w) {
    w.validate(data.p, data.m);
    if (!(w.lambda_sigma > 0.0)) throw ConfigError("lambda_sigma must be > 0");
    const Eigen::MatrixXd Zp = stacked_past(data);
    return w.lambda_sigma * data.U_f.values * deepc_bracket_solve(data, w, Zp.transpose());
}

Eigen::VectorXd closed_form_deepc_g(const DeePCData& data, const WeightSpec& w,
                                    const Eigen::Ref<const Eigen::VectorXd>& u_p,
                                    const Eigen::Ref<const Eigen::VectorXd>& y_p) {
    check_deepc_inputs(data, w, OcpBounds::symmetric(data.m, data.p, kInf), u_p, y_p);
    Eigen::VectorXd past(u_p.size() + y_p.size());
    past << u_p, y_p;
    const Eigen::MatrixXd Zp = stacked_past(data);
    return w.lambda_sigma * deepc_bracket_solve(data, w, Zp.transpose() * past);
}

Eigen::VectorXd closed_form_deepc(const DeePCData& data, const WeightSpec& w,
                                  const Eigen::Ref<const Eigen::VectorXd>& u_p,
                                  const Eigen::Ref<const Eigen::VectorXd>& y_p) {
    return data.U_f.values * closed_form_deepc_g(data, w, u_p, y_p);
}

ConeProblem to_conic(const QpProblem& qp) {
    qp.validate();
    const Index n = qp.n_dec;
    struct Row {
        Eigen::RowVectorXd a;
        double b;
    };
    std::vector<Row> upper;
    std::vector<Row> lower;
    for (Index i = 0; i < n; ++i) {
        Eigen::RowVectorXd e = Eigen::RowVectorXd::Zero(n);
        e(i) = 1.0;
        if (std::isfinite(qp.x_ub(i))) upper.push_back({e, qp.x_ub(i)});
        if (std::isfinite(qp.x_lb(i))) lower.push_back({-e, -qp.x_lb(i)});
    }
    for (Index i = 0; i < qp.G.rows(); ++i) {
        if (std::isfinite(qp.g_ub(i))) upper.push_back({qp.G.row(i), qp.g_ub(i)});
        if (std::isfinite(qp.g_lb(i))) lower.push_back({-qp.G.row(i), -qp.g_lb(i)});
    }

    ConeProblem c;
    c.P = qp.P;
    c.q = qp.q;
    c.n_zero = qp.A_eq.rows();
    const Index rows = c.n_zero + static_cast<Index>(upper.size() + lower.size());
    c.A.resize(rows, n);
    c.b.resize(rows);
    c.cones.assign(static_cast<std::size_t>(rows), Cone::NonNeg);
    c.A.topRows(c.n_zero) = qp.A_eq;
    c.b.head(c.n_zero) = qp.b_eq;
    for (Index i = 0; i < c.n_zero; ++i) c.cones[static_cast<std::size_t>(i)] = Cone::Zero;
    Index r = c.n_zero;
    for (const auto* rows_ : {&upper, &lower}) {
        for (const Row& row : *rows_) {
            c.A.row(r) = row.a;
            c.b(r) = row.b;
            ++r;
        }
    }
    return c;
}

} // namespace ddpc
