#pragma once

#include <cstdint>
#include <vector>

#include "spinnet/productform.hpp"
#include "spinnet/topology.hpp"
#include "spinnet/types.hpp"

namespace spinnet {

// Proportional fairness: maximize sum n_i log lambda_i over the capacity
// polytope. Solved through the dual prices q (one per queue) with
// lambda_i = n_i / sum_{j in route i} q_j.

struct PFOptions {
    double tol = 1e-8;  // max KKT residual at exit
    int max_iters = 100000;
};

struct PFSolution {
    Vec lambda;        // per route; exactly 0 where n_i == 0
    Vec queue_prices;  // q, per queue, nonnegative
    double objective = 0.0;
    double kkt_residual = 0.0;
    int iterations = 0;
};

PFSolution solve_pf(const Topology& topo, const Vec& n, const PFOptions& opts = {});

// Residual record for an arbitrary (allocation, prices) pair. Stationarity is
// infinite where lambda_i == 0 with n_i > 0.
struct KKTReport {
    Vec stationarity;  // per route: |n_i/lambda_i - sum of prices on the route|
    Vec slackness;     // per queue: |q_j * (C_j - load_j)|
    Vec slacks;        // per queue: C_j - load_j
    double min_price = 0.0;
    double max_residual() const;
};

KKTReport kkt_residuals(const Topology& topo, const Vec& n, const Vec& lambda,
                        const Vec& prices);

// Large-deviation decay exponents. route_weights is any positive per-route
// vector (the traffic intensities in the stationary regime, all ones for the
// unweighted exponent). Convention throughout: 0 log 0 = 0.

// Exponent of a packet state: sum over (j,i) with m_j > 0 of
// m_ji log(m_ji C_j / (m_j w_i)).
double packet_state_rate(const Topology& topo, const Vec& route_weights, const Vec& m);

// Per-incidence derivative log(m_ji C_j / (m_j w_i)); unbounded at the
// boundary, callers keep m interior.
Vec packet_state_rate_gradient(const Topology& topo, const Vec& route_weights,
                               const Vec& m);

// Exponent of a document count, dual form: sum n_i log(lambda_pf_i / w_i).
// Pass a precomputed solution for n to skip the solve.
double doc_count_rate_dual(const Topology& topo, const Vec& route_weights, const Vec& n,
                           const PFSolution* pf = nullptr);

// Primal form: minimize packet_state_rate over route sums == n. The returned
// value comes from the manifold construction; an independent mirror-descent
// minimization must agree within 1e-5 or the solve is reported as faulty.
struct PrimalRate {
    double value = 0.0;
    Vec minimizer;  // per incidence
};

PrimalRate doc_count_rate_primal(const Topology& topo, const Vec& route_weights,
                                 const Vec& n, const PFSolution* pf = nullptr);

// Queue j counts as saturated when its PF slack is below this times C_j.
constexpr double kSaturationTol = 1e-7;

std::vector<int> saturated_queues(const Topology& topo, const PFSolution& pf);

// The set of packet states the conditioned network collapses onto:
// m_ji C_j = m_j lambda_pf_i on saturated queues, m_j = 0 elsewhere, route
// sums n. manifold_point returns the minimum-norm representative.
struct ManifoldPoint {
    Vec packets;  // per incidence
    std::vector<int> saturated;
};

ManifoldPoint manifold_point(const Topology& topo, const Vec& n,
                             const PFSolution* pf = nullptr);

// Sup-norm distance from m to the manifold of n; exact when the manifold is a
// single point, otherwise minimized over the saturated-queue parametrization.
double manifold_distance(const Topology& topo, const Vec& n, const Vec& m,
                         const PFSolution* pf = nullptr);

// packet_state_rate split per queue into an information term and a load term:
// m_j * KL(packet shares at j || weight shares at j) and
// m_j * log(C_j / sum of weights through j). Totals match packet_state_rate.
struct KLDecomposition {
    Vec kl_terms;      // per queue
    Vec offset_terms;  // per queue
    double total() const { return kl_terms.sum() + offset_terms.sum(); }
};

KLDecomposition kl_decompose(const Topology& topo, const Vec& route_weights, const Vec& m);

// Single-queue closed forms, used as oracles.
// Value of one queue's term: sum_i m_i log(m_i C / (m w_i)) with m = sum m_i.
double rate_queue_term(double capacity, const Vec& weights, const Vec& m_slice);

// Minimum of sum_i p_i log(p_i C / r_i) over probability vectors p, attained
// at p ~ r; the value is log(C / sum r_i).
struct SplitOptimum {
    double value = 0.0;
    Vec split;
};

SplitOptimum rate_min_split(double capacity, const Vec& rate_slice);

// Estimated extra decay exponent for staying at least epsilon away from the
// manifold: min of packet_state_rate over {route sums n, distance >= epsilon}
// minus the on-manifold minimum. Multi-start local search, so a lower
// confidence estimate; 0 at epsilon 0, +infinity when nothing in the fiber is
// that far out.
double collapse_margin(const Topology& topo, const Vec& route_weights, const Vec& n,
                       double epsilon, std::uint64_t seed = 0x5eed);

}  // namespace spinnet
