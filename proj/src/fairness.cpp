#include "spinnet/fairness.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>

#include <Eigen/Dense>
#include <Eigen/SVD>

namespace spinnet {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Vec route_price_sums(const Topology& topo, const Vec& prices) {
    Vec sums = Vec::Zero(topo.route_count());
    for (int k = 0; k < topo.incidence_count(); ++k)
        sums[topo.incidences[k].second] += prices[topo.incidences[k].first];
    return sums;
}

// Dual objective of the fairness program. +inf when a route with documents
// has zero total price (the allocation would be unbounded there).
double dual_value(const Topology& topo, const Vec& n, const Vec& prices) {
    const Vec sums = route_price_sums(topo, prices);
    double value = prices.dot(topo.capacities);
    for (int i = 0; i < topo.route_count(); ++i) {
        if (n[i] <= 0.0) continue;
        if (sums[i] <= 0.0) return kInf;
        value += n[i] * std::log(n[i] / sums[i]) - n[i];
    }
    return value;
}

Vec dual_gradient(const Topology& topo, const Vec& n, const Vec& prices) {
    const Vec sums = route_price_sums(topo, prices);
    Vec lambda = Vec::Zero(topo.route_count());
    for (int i = 0; i < topo.route_count(); ++i)
        if (n[i] > 0.0) lambda[i] = n[i] / sums[i];
    return topo.capacities - queue_loads(topo, lambda);
}

// Allocation induced by prices, capped at the tightest capacity on the route
// so intermediate iterates cannot blow up.
Vec priced_allocation(const Topology& topo, const Vec& n, const Vec& prices) {
    const Vec sums = route_price_sums(topo, prices);
    Vec lambda = Vec::Zero(topo.route_count());
    for (int i = 0; i < topo.route_count(); ++i) {
        if (n[i] <= 0.0) continue;
        double cap = kInf;
        for (int j : topo.routes[i]) cap = std::min(cap, topo.capacities[j]);
        lambda[i] = sums[i] > 0.0 ? std::min(n[i] / sums[i], cap) : cap;
    }
    return lambda;
}

double exit_residual(const Topology& topo, const Vec& n, const Vec& prices,
                     const Vec& lambda) {
    const Vec sums = route_price_sums(topo, prices);
    const Vec slack = topo.capacities - queue_loads(topo, lambda);
    double res = 0.0;
    for (int j = 0; j < topo.queue_count(); ++j) {
        res = std::max(res, std::abs(prices[j] * slack[j]));
        res = std::max(res, -slack[j]);
    }
    for (int i = 0; i < topo.route_count(); ++i)
        if (n[i] > 0.0) res = std::max(res, std::abs(n[i] / lambda[i] - sums[i]));
    return res;
}

// Newton iteration on the stationarity system restricted to queues with
// positive price; complementary slackness becomes exact for the rest.
bool newton_polish(const Topology& topo, const Vec& n, Vec& prices, double tol) {
    const int queues = topo.queue_count();
    for (int round = 0; round < 40; ++round) {
        const Vec lambda = priced_allocation(topo, n, prices);
        const double res = exit_residual(topo, n, prices, lambda);
        if (res <= tol) return true;

        const Vec slack = topo.capacities - queue_loads(topo, lambda);
        std::vector<int> active;
        for (int j = 0; j < queues; ++j)
            if (prices[j] > 1e-12 || slack[j] < -tol) active.push_back(j);
        if (active.empty()) return false;

        const Vec sums = route_price_sums(topo, prices);
        const int a = static_cast<int>(active.size());
        Vec f(a);
        Mat jac = Mat::Zero(a, a);
        for (int c = 0; c < a; ++c) {
            const int j = active[c];
            double load = 0.0;
            for (int i : topo.routes_at_queue(j)) {
                if (n[i] <= 0.0) continue;
                if (sums[i] <= 0.0) return false;
                load += n[i] / sums[i];
                for (int d = 0; d < a; ++d)
                    if (topo.incidence_index(active[d], i) >= 0)
                        jac(c, d) += n[i] / (sums[i] * sums[i]);
            }
            f[c] = topo.capacities[j] - load;
        }
        jac.diagonal().array() += 1e-14 * (1.0 + jac.trace());
        const Vec delta = jac.ldlt().solve(-f);

        bool moved = false;
        for (double s = 1.0; s >= 1e-6; s *= 0.5) {
            Vec cand = prices;
            for (int c = 0; c < a; ++c)
                cand[active[c]] = std::max(0.0, prices[active[c]] + s * delta[c]);
            const Vec cand_lambda = priced_allocation(topo, n, cand);
            if (exit_residual(topo, n, cand, cand_lambda) < res) {
                prices = cand;
                moved = true;
                break;
            }
        }
        if (!moved) return false;
    }
    const Vec lambda = priced_allocation(topo, n, prices);
    return exit_residual(topo, n, prices, lambda) <= tol;
}

double xlogratio(double x, double num, double den) {
    return x > 0.0 ? x * std::log(num / den) : 0.0;
}

// Small dense nonnegative least squares, active-set style. Fine for the
// handful of saturated queues we ever see.
Vec nnls(const Mat& a, const Vec& b) {
    const int cols = static_cast<int>(a.cols());
    Vec x = Vec::Zero(cols);
    std::vector<bool> passive(cols, false);
    for (int outer = 0; outer < 4 * cols + 8; ++outer) {
        const Vec w = a.transpose() * (b - a * x);
        int best = -1;
        double best_w = 1e-12;
        for (int c = 0; c < cols; ++c)
            if (!passive[c] && w[c] > best_w) {
                best_w = w[c];
                best = c;
            }
        if (best < 0) break;
        passive[best] = true;
        for (int inner = 0; inner < 4 * cols + 8; ++inner) {
            std::vector<int> idx;
            for (int c = 0; c < cols; ++c)
                if (passive[c]) idx.push_back(c);
            Mat sub(a.rows(), static_cast<int>(idx.size()));
            for (std::size_t c = 0; c < idx.size(); ++c) sub.col(c) = a.col(idx[c]);
            const Vec z = sub.completeOrthogonalDecomposition().solve(b);
            if ((z.array() > 0.0).all()) {
                x.setZero();
                for (std::size_t c = 0; c < idx.size(); ++c) x[idx[c]] = z[c];
                break;
            }
            double alpha = 1.0;
            for (std::size_t c = 0; c < idx.size(); ++c)
                if (z[c] <= 0.0 && x[idx[c]] > z[c])
                    alpha = std::min(alpha, x[idx[c]] / (x[idx[c]] - z[c]));
            for (std::size_t c = 0; c < idx.size(); ++c) {
                x[idx[c]] += alpha * (z[c] - x[idx[c]]);
                if (x[idx[c]] <= 1e-14) {
                    x[idx[c]] = 0.0;
                    passive[idx[c]] = false;
                }
            }
        }
    }
    return x;
}

struct ManifoldSystem {
    std::vector<int> saturated;
    std::vector<int> column_of;  // queue -> column in x, -1 elsewhere
    Mat a;                       // active routes x saturated queues
    Vec b;
};

ManifoldSystem manifold_system(const Topology& topo, const Vec& n, const PFSolution& pf) {
    ManifoldSystem sys;
    sys.saturated = saturated_queues(topo, pf);
    sys.column_of.assign(topo.queue_count(), -1);
    for (std::size_t c = 0; c < sys.saturated.size(); ++c)
        sys.column_of[sys.saturated[c]] = static_cast<int>(c);

    std::vector<int> active_routes;
    for (int i = 0; i < topo.route_count(); ++i)
        if (n[i] > 0.0) active_routes.push_back(i);

    sys.a = Mat::Zero(static_cast<int>(active_routes.size()),
                      static_cast<int>(sys.saturated.size()));
    sys.b = Vec::Zero(static_cast<int>(active_routes.size()));
    for (std::size_t r = 0; r < active_routes.size(); ++r) {
        const int i = active_routes[r];
        sys.b[r] = n[i];
        for (int j : topo.routes[i])
            if (sys.column_of[j] >= 0)
                sys.a(r, sys.column_of[j]) = pf.lambda[i] / topo.capacities[j];
    }
    return sys;
}

// Packet state generated by saturated-queue totals x: the proportional split
// of each saturated queue, zero elsewhere.
Vec manifold_packets(const Topology& topo, const PFSolution& pf, const ManifoldSystem& sys,
                     const Vec& x) {
    Vec m = Vec::Zero(topo.incidence_count());
    for (int k = 0; k < topo.incidence_count(); ++k) {
        const int j = topo.incidences[k].first;
        const int i = topo.incidences[k].second;
        if (sys.column_of[j] >= 0)
            m[k] = x[sys.column_of[j]] * pf.lambda[i] / topo.capacities[j];
    }
    return m;
}

// Derivative-free simplex minimizer; deterministic, good enough for the tiny
// dimensions the manifold work needs.
double nelder_mead(const std::function<double(const Vec&)>& f, Vec& x, double scale,
                   int max_iter) {
    const int dim = static_cast<int>(x.size());
    if (dim == 0) return f(x);
    std::vector<Vec> pts(dim + 1, x);
    std::vector<double> val(dim + 1);
    for (int k = 1; k <= dim; ++k) pts[k][k - 1] += scale;
    for (int k = 0; k <= dim; ++k) val[k] = f(pts[k]);

    for (int iter = 0; iter < max_iter; ++iter) {
        std::vector<int> order(dim + 1);
        for (int k = 0; k <= dim; ++k) order[k] = k;
        std::sort(order.begin(), order.end(), [&](int u, int v) { return val[u] < val[v]; });
        const int best = order[0], worst = order[dim], second = order[dim - 1];
        if (val[worst] - val[best] < 1e-13 * (1.0 + std::abs(val[best]))) break;

        Vec centroid = Vec::Zero(dim);
        for (int k = 0; k <= dim; ++k)
            if (k != worst) centroid += pts[k];
        centroid /= dim;

        Vec refl = centroid + (centroid - pts[worst]);
        double refl_v = f(refl);
        if (refl_v < val[best]) {
            Vec expand = centroid + 2.0 * (centroid - pts[worst]);
            double expand_v = f(expand);
            if (expand_v < refl_v) {
                pts[worst] = expand;
                val[worst] = expand_v;
            } else {
                pts[worst] = refl;
                val[worst] = refl_v;
            }
        } else if (refl_v < val[second]) {
            pts[worst] = refl;
            val[worst] = refl_v;
        } else {
            Vec contract = centroid + 0.5 * (pts[worst] - centroid);
            double contract_v = f(contract);
            if (contract_v < val[worst]) {
                pts[worst] = contract;
                val[worst] = contract_v;
            } else {
                for (int k = 0; k <= dim; ++k) {
                    if (k == best) continue;
                    pts[k] = pts[best] + 0.5 * (pts[k] - pts[best]);
                    val[k] = f(pts[k]);
                }
            }
        }
    }
    int best = 0;
    for (int k = 1; k <= dim; ++k)
        if (val[k] < val[best]) best = k;
    x = pts[best];
    return val[best];
}

// Interior minimization of the packet-state exponent over the fiber
// {route sums == n} by multiplicative gradient steps per route slice.
double mirror_min_rate(const Topology& topo, const Vec& route_weights, const Vec& n) {
    const int inc = topo.incidence_count();
    Vec m = Vec::Zero(inc);
    for (int i = 0; i < topo.route_count(); ++i) {
        if (n[i] <= 0.0) continue;
        for (int k : topo.incidence_by_route_[i])
            m[k] = n[i] / static_cast<double>(topo.incidence_by_route_[i].size());
    }
    double value = packet_state_rate(topo, route_weights, m);
    double eta = 1.0;
    int flat = 0;
    for (int iter = 0; iter < 20000 && flat < 25; ++iter) {
        const Vec mq = queue_totals(topo, m);
        Vec logstep(inc);
        for (int k = 0; k < inc; ++k) {
            const int j = topo.incidences[k].first;
            const int i = topo.incidences[k].second;
            const double mk = std::max(m[k], 1e-300);
            const double mj = std::max(mq[j], 1e-300);
            const double grad = std::log(mk * topo.capacities[j] / (mj * route_weights[i]));
            logstep[k] = std::log(mk) - eta * grad;
        }
        Vec cand = Vec::Zero(inc);
        for (int i = 0; i < topo.route_count(); ++i) {
            if (n[i] <= 0.0) continue;
            const auto& slots = topo.incidence_by_route_[i];
            double top = -kInf;
            for (int k : slots) top = std::max(top, logstep[k]);
            double z = 0.0;
            for (int k : slots) z += std::exp(logstep[k] - top);
            for (int k : slots) cand[k] = n[i] * std::exp(logstep[k] - top) / z;
        }
        const double cand_value = packet_state_rate(topo, route_weights, cand);
        if (cand_value <= value) {
            flat = value - cand_value < 1e-13 * (1.0 + std::abs(value)) ? flat + 1 : 0;
            m = cand;
            value = cand_value;
            eta = std::min(eta * 1.2, 2.0);
        } else {
            eta *= 0.5;
            if (eta < 1e-8) break;
        }
    }
    return value;
}

}  // namespace

// ---- proportional fairness ------------------------------------------------

PFSolution solve_pf(const Topology& topo, const Vec& n, const PFOptions& opts) {
    if (n.size() != topo.route_count()) throw ConfigError("document counts must match route count");
    if ((n.array() < 0.0).any()) throw ConfigError("document counts must be nonnegative");

    PFSolution sol;
    sol.lambda = Vec::Zero(topo.route_count());
    sol.queue_prices = Vec::Zero(topo.queue_count());
    if ((n.array() <= 0.0).all()) return sol;

    Vec prices = Vec::Zero(topo.queue_count());
    for (int j = 0; j < topo.queue_count(); ++j) {
        double docs = 0.0;
        for (int i : topo.routes_at_queue(j)) docs += n[i];
        prices[j] = docs / topo.capacities[j];
    }

    double value = dual_value(topo, n, prices);
    Vec grad = dual_gradient(topo, n, prices);
    double step = 1.0 / std::max(1.0, grad.norm());
    Vec prev_prices, prev_grad;

    int iter = 0;
    for (; iter < opts.max_iters; ++iter) {
        const Vec lambda = priced_allocation(topo, n, prices);
        const double res = exit_residual(topo, n, prices, lambda);
        if (res <= opts.tol) break;
        if (res < 1e-3 || (iter > 0 && iter % 100 == 0)) {
            if (newton_polish(topo, n, prices, opts.tol)) break;
            value = dual_value(topo, n, prices);
            grad = dual_gradient(topo, n, prices);
        }

        if (prev_prices.size() > 0) {
            const Vec dq = prices - prev_prices;
            const Vec dg = grad - prev_grad;
            const double denom = dq.dot(dg);
            if (denom > 1e-300)
                step = std::clamp(dq.dot(dq) / denom, 1e-12, 1e12);
        }
        prev_prices = prices;
        prev_grad = grad;

        double t = step;
        Vec cand;
        double cand_value = kInf;
        for (int halving = 0; halving < 60; ++halving) {
            cand = (prices - t * grad).cwiseMax(0.0);
            cand_value = dual_value(topo, n, cand);
            const double move = (prices - cand).squaredNorm();
            if (cand_value <= value - 1e-4 / std::max(t, 1e-300) * move || move == 0.0) break;
            t *= 0.5;
        }
        prices = cand;
        value = cand_value;
        grad = dual_gradient(topo, n, prices);
    }

    sol.lambda = priced_allocation(topo, n, prices);
    sol.queue_prices = prices;
    sol.kkt_residual = exit_residual(topo, n, prices, sol.lambda);
    sol.iterations = iter;
    if (sol.kkt_residual > opts.tol)
        throw DidNotConvergeError("fairness solve stalled at residual " +
                                  std::to_string(sol.kkt_residual));
    for (int i = 0; i < topo.route_count(); ++i)
        if (n[i] > 0.0) sol.objective += n[i] * std::log(sol.lambda[i]);
    return sol;
}

double KKTReport::max_residual() const {
    double res = std::max(0.0, -min_price);
    for (int i = 0; i < stationarity.size(); ++i) res = std::max(res, stationarity[i]);
    for (int j = 0; j < slackness.size(); ++j) {
        res = std::max(res, slackness[j]);
        res = std::max(res, -slacks[j]);
    }
    return res;
}

KKTReport kkt_residuals(const Topology& topo, const Vec& n, const Vec& lambda,
                        const Vec& prices) {
    KKTReport report;
    const Vec sums = route_price_sums(topo, prices);
    report.stationarity = Vec::Zero(topo.route_count());
    for (int i = 0; i < topo.route_count(); ++i) {
        if (n[i] > 0.0)
            report.stationarity[i] =
                lambda[i] > 0.0 ? std::abs(n[i] / lambda[i] - sums[i]) : kInf;
        else
            report.stationarity[i] = std::abs(lambda[i]);
    }
    report.slacks = topo.capacities - queue_loads(topo, lambda);
    report.slackness = (prices.array() * report.slacks.array()).abs();
    report.min_price = prices.size() > 0 ? prices.minCoeff() : 0.0;
    return report;
}

// ---- rate functions -------------------------------------------------------

double packet_state_rate(const Topology& topo, const Vec& route_weights, const Vec& m) {
    if (m.size() != topo.incidence_count())
        throw ConfigError("packet state must match incidence count");
    if (route_weights.size() != topo.route_count())
        throw ConfigError("route weights must match route count");
    const Vec mq = queue_totals(topo, m);
    double value = 0.0;
    for (int k = 0; k < topo.incidence_count(); ++k) {
        const int j = topo.incidences[k].first;
        const int i = topo.incidences[k].second;
        value += xlogratio(m[k], m[k] * topo.capacities[j], mq[j] * route_weights[i]);
    }
    return value;
}

Vec packet_state_rate_gradient(const Topology& topo, const Vec& route_weights,
                               const Vec& m) {
    const Vec mq = queue_totals(topo, m);
    Vec grad(topo.incidence_count());
    for (int k = 0; k < topo.incidence_count(); ++k) {
        const int j = topo.incidences[k].first;
        const int i = topo.incidences[k].second;
        grad[k] = m[k] > 0.0
                      ? std::log(m[k] * topo.capacities[j] / (mq[j] * route_weights[i]))
                      : -kInf;
    }
    return grad;
}

double doc_count_rate_dual(const Topology& topo, const Vec& route_weights, const Vec& n,
                           const PFSolution* pf) {
    PFSolution local;
    if (!pf) {
        local = solve_pf(topo, n);
        pf = &local;
    }
    double value = 0.0;
    for (int i = 0; i < topo.route_count(); ++i)
        if (n[i] > 0.0) value += n[i] * std::log(pf->lambda[i] / route_weights[i]);
    return value;
}

PrimalRate doc_count_rate_primal(const Topology& topo, const Vec& route_weights,
                                 const Vec& n, const PFSolution* pf) {
    PrimalRate out;
    out.minimizer = Vec::Zero(topo.incidence_count());
    if ((n.array() <= 0.0).all()) return out;

    PFSolution local;
    if (!pf) {
        local = solve_pf(topo, n);
        pf = &local;
    }
    const ManifoldPoint point = manifold_point(topo, n, pf);
    out.value = packet_state_rate(topo, route_weights, point.packets);
    out.minimizer = point.packets;

    const double mirror = mirror_min_rate(topo, route_weights, n);
    if (std::abs(mirror - out.value) > 1e-5)
        throw NumericError("fiber minimization disagrees with the manifold value by " +
                           std::to_string(std::abs(mirror - out.value)));
    return out;
}

// ---- invariant manifold ---------------------------------------------------

std::vector<int> saturated_queues(const Topology& topo, const PFSolution& pf) {
    const Vec load = queue_loads(topo, pf.lambda);
    std::vector<int> sat;
    for (int j = 0; j < topo.queue_count(); ++j)
        if (topo.capacities[j] - load[j] <= kSaturationTol * topo.capacities[j])
            sat.push_back(j);
    return sat;
}

ManifoldPoint manifold_point(const Topology& topo, const Vec& n, const PFSolution* pf) {
    PFSolution local;
    if (!pf) {
        local = solve_pf(topo, n);
        pf = &local;
    }
    ManifoldPoint point;
    const ManifoldSystem sys = manifold_system(topo, n, *pf);
    point.saturated = sys.saturated;
    if (sys.b.size() > 0 && sys.a.cols() == 0)
        throw NumericallySingularError("documents present but no queue is saturated");

    Vec x = sys.a.completeOrthogonalDecomposition().solve(sys.b);
    if ((x.array() < -1e-9).any()) x = nnls(sys.a, sys.b);
    x = x.cwiseMax(0.0);

    const double resid = sys.b.size() > 0 ? (sys.a * x - sys.b).cwiseAbs().maxCoeff() : 0.0;
    if (resid > 1e-6 * (1.0 + sys.b.cwiseAbs().maxCoeff()))
        throw NumericallySingularError("saturated-queue system residual " +
                                       std::to_string(resid));
    point.packets = manifold_packets(topo, *pf, sys, x);
    return point;
}

double manifold_distance(const Topology& topo, const Vec& n, const Vec& m,
                         const PFSolution* pf) {
    if (m.size() != topo.incidence_count())
        throw ConfigError("packet state must match incidence count");
    PFSolution local;
    if (!pf) {
        local = solve_pf(topo, n);
        pf = &local;
    }
    const ManifoldSystem sys = manifold_system(topo, n, *pf);
    const int cols = static_cast<int>(sys.a.cols());
    if (cols == 0) return m.cwiseAbs().maxCoeff();

    Eigen::JacobiSVD<Mat> svd(sys.a, Eigen::ComputeThinU | Eigen::ComputeFullV);
    const double top = svd.singularValues().size() > 0 ? svd.singularValues()[0] : 0.0;
    int rank = 0;
    for (int k = 0; k < svd.singularValues().size(); ++k)
        if (svd.singularValues()[k] > 1e-10 * std::max(1.0, top)) ++rank;

    Vec x0 = Vec::Zero(cols);
    for (int k = 0; k < rank; ++k)
        x0 += svd.matrixV().col(k) * (svd.matrixU().col(k).dot(sys.b) /
                                      svd.singularValues()[k]);

    auto gap = [&](const Vec& x) {
        return (m - manifold_packets(topo, *pf, sys, x)).cwiseAbs().maxCoeff();
    };

    if (rank == cols) {
        if ((x0.array() < -1e-9).any()) x0 = nnls(sys.a, sys.b);
        return gap(x0.cwiseMax(0.0));
    }

    // Free directions remain: search the affine family, penalizing negative
    // queue totals, seeded at the projection of m's own totals.
    const int dim = cols - rank;
    Mat null_basis(cols, dim);
    for (int k = 0; k < dim; ++k) null_basis.col(k) = svd.matrixV().col(rank + k);

    Vec m_totals = Vec::Zero(cols);
    for (int k = 0; k < topo.incidence_count(); ++k) {
        const int c = sys.column_of[topo.incidences[k].first];
        if (c >= 0) m_totals[c] += m[k];
    }

    auto objective = [&](const Vec& t) {
        const Vec x = x0 + null_basis * t;
        return gap(x) + 1e6 * x.cwiseMin(0.0).squaredNorm();
    };

    double best = kInf;
    const Vec x_feas = nnls(sys.a, sys.b);
    const std::vector<Vec> seeds = {null_basis.transpose() * (m_totals - x0),
                                    null_basis.transpose() * (x_feas - x0),
                                    Vec::Zero(dim)};
    for (const Vec& seed : seeds) {
        Vec t = seed;
        best = std::min(best, objective(t));
        best = std::min(best, nelder_mead(objective, t, 0.3 * (1.0 + n.cwiseAbs().maxCoeff()),
                                          400 * dim));
    }
    return std::max(0.0, best);
}

// ---- decompositions and closed forms --------------------------------------

KLDecomposition kl_decompose(const Topology& topo, const Vec& route_weights, const Vec& m) {
    KLDecomposition out;
    out.kl_terms = Vec::Zero(topo.queue_count());
    out.offset_terms = Vec::Zero(topo.queue_count());
    const Vec mq = queue_totals(topo, m);
    Vec wq = Vec::Zero(topo.queue_count());
    for (int k = 0; k < topo.incidence_count(); ++k)
        wq[topo.incidences[k].first] += route_weights[topo.incidences[k].second];
    for (int k = 0; k < topo.incidence_count(); ++k) {
        const int j = topo.incidences[k].first;
        const int i = topo.incidences[k].second;
        if (m[k] > 0.0)
            out.kl_terms[j] +=
                m[k] * std::log(m[k] * wq[j] / (mq[j] * route_weights[i]));
    }
    for (int j = 0; j < topo.queue_count(); ++j)
        if (mq[j] > 0.0)
            out.offset_terms[j] = mq[j] * std::log(topo.capacities[j] / wq[j]);
    return out;
}

double rate_queue_term(double capacity, const Vec& weights, const Vec& m_slice) {
    const double total = m_slice.sum();
    double value = 0.0;
    for (int i = 0; i < m_slice.size(); ++i)
        value += xlogratio(m_slice[i], m_slice[i] * capacity, total * weights[i]);
    return value;
}

SplitOptimum rate_min_split(double capacity, const Vec& rate_slice) {
    SplitOptimum out;
    const double total = rate_slice.sum();
    out.value = std::log(capacity / total);
    out.split = rate_slice / total;
    return out;
}

// ---- collapse margin ------------------------------------------------------

double collapse_margin(const Topology& topo, const Vec& route_weights, const Vec& n,
                       double epsilon, std::uint64_t seed) {
    if (epsilon <= 0.0) return 0.0;
    const PFSolution pf = solve_pf(topo, n);
    const ManifoldPoint point = manifold_point(topo, n, &pf);
    const double base = packet_state_rate(topo, route_weights, point.packets);

    std::vector<int> free_slots;
    std::vector<int> free_routes;
    for (int i = 0; i < topo.route_count(); ++i) {
        if (n[i] <= 0.0) continue;
        free_routes.push_back(i);
        for (int k : topo.incidence_by_route_[i]) free_slots.push_back(k);
    }
    const int dim = static_cast<int>(free_slots.size());
    if (dim == 0) return 0.0;

    auto decode = [&](const Vec& z) {
        Vec m = Vec::Zero(topo.incidence_count());
        int pos = 0;
        for (int i : free_routes) {
            const auto& slots = topo.incidence_by_route_[i];
            double top = -kInf;
            for (std::size_t s = 0; s < slots.size(); ++s)
                top = std::max(top, z[pos + static_cast<int>(s)]);
            double mass = 0.0;
            for (std::size_t s = 0; s < slots.size(); ++s)
                mass += std::exp(z[pos + static_cast<int>(s)] - top);
            for (std::size_t s = 0; s < slots.size(); ++s)
                m[slots[s]] = n[i] * std::exp(z[pos + static_cast<int>(s)] - top) / mass;
            pos += static_cast<int>(slots.size());
        }
        return m;
    };

    std::mt19937_64 gen(seed);
    std::normal_distribution<double> jitter(0.0, 1.5);
    double best = kInf;
    for (int start = 0; start < 6; ++start) {
        Vec z = Vec::Zero(dim);
        if (start > 0)
            for (int k = 0; k < dim; ++k) z[k] = jitter(gen);
        for (double penalty : {1e2, 1e4, 1e6}) {
            auto objective = [&](const Vec& zz) {
                const Vec m = decode(zz);
                const double dist = manifold_distance(topo, n, m, &pf);
                const double shortfall = std::max(0.0, epsilon - dist);
                return packet_state_rate(topo, route_weights, m) +
                       penalty * shortfall * shortfall;
            };
            nelder_mead(objective, z, 0.5, 250 * dim);
        }
        const Vec m = decode(z);
        if (manifold_distance(topo, n, m, &pf) >= epsilon - 1e-6)
            best = std::min(best, packet_state_rate(topo, route_weights, m));
    }
    if (best == kInf) return kInf;
    return std::max(0.0, best - base);
}

}  // namespace spinnet
