#include "magtv/solver.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <stdexcept>

namespace magtv {

void SolveOptions::validate() const {
    if (max_iters <= 0) throw std::invalid_argument("max_iters must be positive");
    if (!(certificate_tol > 0)) {
        throw std::invalid_argument("certificate_tol must be positive");
    }
    if (!(objective_tol > 0)) {
        throw std::invalid_argument("objective_tol must be positive");
    }
    if (!(backtrack_shrink > 0 && backtrack_shrink < 1)) {
        throw std::invalid_argument("backtrack_shrink must lie in (0,1)");
    }
    if (stall_patience <= 0) {
        throw std::invalid_argument("stall_patience must be positive");
    }
}

const char* to_string(ConvergedBy c) {
    switch (c) {
        case ConvergedBy::certificate: return "certificate";
        case ConvergedBy::objective_stall: return "objective_stall";
        case ConvergedBy::max_iters: return "max_iters";
    }
    return "unknown";
}

double objective_value(const ForwardModel& model, const VectorXd& f,
                       double lambda, const VectorXd& m) {
    if (!(lambda > 0)) throw std::invalid_argument("lambda must be positive");
    const VectorXd r = f - model.apply(m);
    return model.inner(r, r) + lambda * group_tv(m);
}

double shifted_objective_value(const ForwardModel& model, const VectorXd& f,
                               double lambda, const VectorXd& m) {
    return objective_value(model, f, lambda, m) - model.inner(f, f);
}

Vec3 block_soft_threshold(const Vec3& u, double tau) {
    if (tau < 0) throw std::invalid_argument("threshold must be nonnegative");
    const double n = u.norm();
    if (n <= tau) return Vec3::Zero();
    return (1.0 - tau / n) * u;
}

double group_tv(const VectorXd& m) {
    double s = 0;
    for (Eigen::Index k = 0; k + 2 < m.size(); k += 3) {
        s += m.segment<3>(k).norm();
    }
    return s;
}

double lambda_max(const ForwardModel& model, const VectorXd& f) {
    const VectorXd c = model.adjoint_apply(f);
    double best = 0;
    for (int k = 0; k < model.num_nodes(); ++k) {
        best = std::max(best, c.segment<3>(3 * k).norm());
    }
    return 2.0 * best;
}

namespace {

VectorXd bst_blocks(const VectorXd& u, double tau) {
    VectorXd out(u.size());
    for (Eigen::Index k = 0; k + 2 < u.size(); k += 3) {
        out.segment<3>(k) = block_soft_threshold(Vec3(u.segment<3>(k)), tau);
    }
    return out;
}

int count_active(const VectorXd& m) {
    int n = 0;
    for (Eigen::Index k = 0; k + 2 < m.size(); k += 3) {
        if (m.segment<3>(k).norm() > 0) ++n;
    }
    return n;
}

}  // namespace

namespace detail {

double operator_norm_sq_estimate(const ForwardModel& model, int iterations) {
    const int n = model.num_unknowns();
    VectorXd v = VectorXd::Constant(n, 1.0 / std::sqrt(double(n)));
    double est = 0;
    for (int it = 0; it < iterations; ++it) {
        VectorXd u = model.adjoint_apply(model.apply(v));
        est = u.norm();
        if (est == 0) return 0;
        v = u / est;
    }
    return est;
}

Vec3 exact_group_prox(const Eigen::Matrix3d& G, const Vec3& q, double lambda) {
    if (!(lambda > 0)) throw std::invalid_argument("lambda must be positive");
    if (q.norm() <= lambda / 2) return Vec3::Zero();

    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(G);
    const Vec3 d = es.eigenvalues().cwiseMax(0.0);
    const Eigen::Matrix3d V = es.eigenvectors();
    const Vec3 qt = V.transpose() * q;

    // Stationarity (G + lambda/(2 rho) I) m = q gives a scalar equation for
    // rho = |m|; the ratio radius(rho)/rho is strictly decreasing, so the
    // positive root is unique and bisection is safe.
    const auto radius = [&](double rho) {
        const double sigma = lambda / (2.0 * rho);
        double s = 0;
        for (int i = 0; i < 3; ++i) {
            const double t = qt[i] / (d[i] + sigma);
            s += t * t;
        }
        return std::sqrt(s);
    };

    double lo = 0, hi = 1;
    int guard = 0;
    while (radius(hi) > hi && guard++ < 2000) hi *= 2;
    for (int it = 0; it < 500 && (hi - lo) > 1e-16 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (radius(mid) > mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    const double rho = 0.5 * (lo + hi);
    const double sigma = lambda / (2.0 * rho);
    Vec3 mt;
    for (int i = 0; i < 3; ++i) mt[i] = qt[i] / (d[i] + sigma);
    return V * mt;
}

}  // namespace detail

SolveResult solve(const ForwardModel& model, const VectorXd& f, double lambda,
                  const SolveOptions& opts) {
    opts.validate();
    if (!(lambda > 0)) throw std::invalid_argument("lambda must be positive");
    if (f.size() != model.num_sensors()) {
        throw std::invalid_argument("data vector size does not match model");
    }
    if (!f.allFinite()) throw std::invalid_argument("data vector has non-finite entries");

    const int n = model.num_unknowns();
    VectorXd m_prev;
    if (opts.warm_start) {
        if (opts.warm_start->size() != n) {
            throw std::invalid_argument("warm start size does not match model");
        }
        if (!opts.warm_start->allFinite()) {
            throw std::invalid_argument("warm start has non-finite entries");
        }
        m_prev = *opts.warm_start;
    } else {
        m_prev = VectorXd::Zero(n);
    }

    const double half_lambda = lambda / 2;
    const double gap_target = opts.certificate_tol * half_lambda;

    const double norm_sq = detail::operator_norm_sq_estimate(model, opts.power_iterations);
    double step = norm_sq > 0 ? 1.0 / (2.0 * norm_sq) : 1.0;

    VectorXd r_prev = f - model.apply(m_prev);
    double F_prev = model.inner(r_prev, r_prev) + lambda * group_tv(m_prev);

    VectorXd y = m_prev;
    VectorXd z_old = m_prev;
    double t = 1.0;

    SolveResult result;
    result.trace.reserve(std::min(opts.max_iters, 4096));
    result.converged_by = ConvergedBy::max_iters;

    VectorXd m = m_prev;
    VectorXd r_m = r_prev;
    double F_m = F_prev;
    int stall = 0;

    int it = 0;
    for (it = 1; it <= opts.max_iters; ++it) {
        const VectorXd r_y = f - model.apply(y);
        const double g_y = model.inner(r_y, r_y);
        const VectorXd grad = -2.0 * model.adjoint_apply(r_y);

        // Backtracking on the quadratic upper model of the smooth part.
        VectorXd z, r_z;
        double g_z = 0;
        for (int bt = 0; bt < 100; ++bt) {
            z = bst_blocks(y - step * grad, step * lambda);
            r_z = f - model.apply(z);
            g_z = model.inner(r_z, r_z);
            const VectorXd dz = z - y;
            const double bound = g_y + grad.dot(dz) +
                                 dz.squaredNorm() / (2.0 * step) +
                                 1e-15 * (1.0 + std::abs(g_y));
            if (g_z <= bound || step < 1e-30) break;
            step *= opts.backtrack_shrink;
        }
        const double F_z = g_z + lambda * group_tv(z);

        // Monotone step: keep the previous point when the prox step is worse.
        const double F_before = F_m;
        if (F_z <= F_m) {
            m = z;
            r_m = r_z;
            F_m = F_z;
        }

        // Certificate at the monotone point.
        const VectorXd c = model.adjoint_apply(r_m);
        double bound_gap = 0, align_gap = 0, pairing = 0, tv = 0;
        for (int k = 0; k < model.num_nodes(); ++k) {
            const Vec3 ck = c.segment<3>(3 * k);
            const Vec3 mk = m.segment<3>(3 * k);
            const double cn = ck.norm();
            bound_gap = std::max(bound_gap, cn - half_lambda);
            const double mn = mk.norm();
            if (mn > 0) {
                align_gap = std::max(align_gap, (ck - half_lambda * mk / mn).norm());
                pairing += mk.dot(ck);
                tv += mn;
            }
        }
        bound_gap = std::max(bound_gap, 0.0);
        const double pairing_res = std::abs(pairing - half_lambda * tv);
        const double gap = std::max({bound_gap, align_gap, pairing_res / (1.0 + tv)});

        result.trace.push_back(
            SolveIterRecord{it, F_m, gap, step, count_active(m)});

        if (gap <= gap_target) {
            result.converged_by = ConvergedBy::certificate;
            break;
        }
        if (F_before - F_m <= opts.objective_tol * (1.0 + std::abs(F_m))) {
            if (++stall >= opts.stall_patience) {
                result.converged_by = ConvergedBy::objective_stall;
                break;
            }
        } else {
            stall = 0;
        }

        // Momentum with gradient-style restart.
        bool restart_now = false;
        if (opts.restart && (y - z).dot(z - z_old) > 0) restart_now = true;
        if (restart_now) {
            t = 1.0;
            y = m;
            m_prev = m;
        } else {
            const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
            y = m + (t / t_next) * (z - m) + ((t - 1.0) / t_next) * (m - m_prev);
            t = t_next;
            m_prev = m;
        }
        z_old = z;
    }

    result.iterations = std::min(it, opts.max_iters);
    if (result.converged_by == ConvergedBy::max_iters) result.warning = true;

    result.moments = m;
    result.measure = measure_from_stacked(m, model.space());
    result.objective = F_m;
    result.certificate =
        certificate_check_stacked(model, f, lambda, m, opts.certificate_tol);
    return result;
}

VectorXd oracle_solve(const ForwardModel& model, const VectorXd& f,
                      double lambda) {
    if (!(lambda > 0)) throw std::invalid_argument("lambda must be positive");
    if (model.num_unknowns() > 50) {
        throw std::invalid_argument(
            "oracle_solve is a verification oracle for at most 50 unknowns");
    }
    if (f.size() != model.num_sensors()) {
        throw std::invalid_argument("data vector size does not match model");
    }
    const MatrixXd& B = model.matrix();
    const VectorXd& w = model.sensors().weights;
    const int nodes = model.num_nodes();

    std::vector<Eigen::Matrix3d> gram(nodes);
    for (int k = 0; k < nodes; ++k) {
        const auto Bk = B.middleCols<3>(3 * k);
        gram[k] = Bk.transpose() * w.asDiagonal() * Bk;
    }

    VectorXd m = VectorXd::Zero(3 * nodes);
    VectorXd r = f;
    double obj = model.inner(r, r);
    for (int sweep = 0; sweep < 200000; ++sweep) {
        for (int k = 0; k < nodes; ++k) {
            const auto Bk = B.middleCols<3>(3 * k);
            const VectorXd r_plus = r + Bk * m.segment<3>(3 * k);
            const Vec3 q = Bk.transpose() * w.cwiseProduct(r_plus);
            const Vec3 mk = detail::exact_group_prox(gram[k], q, lambda);
            r = r_plus - Bk * mk;
            m.segment<3>(3 * k) = mk;
        }
        const double new_obj = model.inner(r, r) + lambda * group_tv(m);
        if (obj - new_obj < 1e-14 * (1.0 + std::abs(new_obj))) break;
        obj = new_obj;
    }
    return m;
}

}  // namespace magtv
