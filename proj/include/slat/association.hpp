#pragma once

#include "slat/rfs.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace slat {

/// Marginal probabilities of the measurement-to-Bernoulli association.
struct MarginalAssociation {
    Eigen::VectorXd p_miss;  ///< n
    Eigen::MatrixXd p_assoc; ///< n x m
    Eigen::VectorXd p_new;   ///< m
    int iterations = 0;
    bool converged = true;
};

struct BpSettings {
    int max_iters = 200;
    double tol = 1e-6;
};

inline constexpr int kExactMaxSize = 10;

/// Sums over every one-to-one partial assignment of measurements to
/// Bernoullis. Reference solver; exponential cost, guarded at 10x10.
inline MarginalAssociation exact_marginals(const AssociationProblem& prob) {
    const auto n = static_cast<int>(prob.n());
    const auto m = static_cast<int>(prob.m());
    require(prob.is_consistent(), "exact_marginals: inconsistent association problem");
    if (n > kExactMaxSize || m > kExactMaxSize)
        throw ContractViolation("exact_marginals: instance " + std::to_string(n) + "x" + std::to_string(m) +
                                " exceeds the enumeration guard; use bp_marginals");

    std::vector<int> choice(n, -1);
    std::vector<bool> taken(m, false);

    auto hypothesis_log_weight = [&]() {
        double w = 0.0;
        for (int i = 0; i < n; ++i) w += choice[i] < 0 ? prob.log_miss[i] : prob.log_detect(i, choice[i]);
        for (int k = 0; k < m; ++k)
            if (!taken[k]) w += prob.log_new[k];
        return w;
    };

    std::function<void(int, const std::function<void()>&)> walk = [&](int i, const std::function<void()>& visit) {
        if (i == n) {
            visit();
            return;
        }
        choice[i] = -1;
        walk(i + 1, visit);
        for (int k = 0; k < m; ++k) {
            if (taken[k] || prob.log_detect(i, k) == kNegInf) continue;
            taken[k] = true;
            choice[i] = k;
            walk(i + 1, visit);
            taken[k] = false;
        }
        choice[i] = -1;
    };

    double best = kNegInf;
    walk(0, [&] { best = std::max(best, hypothesis_log_weight()); });
    require(std::isfinite(best), "exact_marginals: every association hypothesis has zero weight");

    MarginalAssociation out;
    out.p_miss = Eigen::VectorXd::Zero(n);
    out.p_assoc = Eigen::MatrixXd::Zero(n, m);
    out.p_new = Eigen::VectorXd::Zero(m);
    double total = 0.0;
    walk(0, [&] {
        const double w = std::exp(hypothesis_log_weight() - best);
        if (w == 0.0) return;
        total += w;
        for (int i = 0; i < n; ++i) {
            if (choice[i] < 0) out.p_miss[i] += w;
            else out.p_assoc(i, choice[i]) += w;
        }
        for (int k = 0; k < m; ++k)
            if (!taken[k]) out.p_new[k] += w;
    });
    out.p_miss /= total;
    out.p_assoc /= total;
    out.p_new /= total;
    return out;
}

namespace detail {

// Ratios are capped at exp(345) ~ 1e150: a miss or new option that is
// structurally impossible, or negligible against a detection, is floored
// there so messages stay finite. The effect on the marginals is far below
// double precision.
inline constexpr double kBpLogCap = 345.0;

/// Detection-to-(miss x new) likelihood ratios psi(i, k). Every hypothesis
/// weight divided by prod_i miss_i * prod_k new_k is a product of psi
/// entries, so common per-row and per-column constants cancel exactly.
inline Eigen::MatrixXd likelihood_ratios(const AssociationProblem& prob) {
    const auto n = prob.n();
    const auto m = prob.m();
    Eigen::VectorXd miss(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double hi = kNegInf;
        for (Eigen::Index k = 0; k < m; ++k) hi = std::max(hi, prob.log_detect(i, k));
        require(std::isfinite(hi) || std::isfinite(prob.log_miss[i]), "bp_marginals: Bernoulli with no feasible association");
        miss[i] = std::isfinite(hi) ? std::max(prob.log_miss[i], hi - kBpLogCap) : prob.log_miss[i];
    }
    Eigen::MatrixXd psi(n, m);
    for (Eigen::Index k = 0; k < m; ++k) {
        double hi = kNegInf;
        for (Eigen::Index i = 0; i < n; ++i) hi = std::max(hi, prob.log_detect(i, k) - miss[i]);
        require(std::isfinite(hi) || std::isfinite(prob.log_new[k]), "bp_marginals: measurement with no feasible origin");
        const double fresh = std::isfinite(hi) ? std::max(prob.log_new[k], hi - kBpLogCap) : prob.log_new[k];
        for (Eigen::Index i = 0; i < n; ++i) psi(i, k) = std::exp(prob.log_detect(i, k) - miss[i] - fresh);
    }
    return psi;
}

} // namespace detail

/// Loopy belief propagation on the bipartite association graph with a
/// synchronous schedule: all Bernoulli-to-measurement messages, then all
/// measurement-to-Bernoulli messages. Stops when the largest change of any
/// Bernoulli-side marginal drops below `tol`.
inline MarginalAssociation bp_marginals(const AssociationProblem& prob, const BpSettings& settings = {}) {
    require(prob.is_consistent(), "bp_marginals: inconsistent association problem");
    const auto n = prob.n();
    const auto m = prob.m();
    MarginalAssociation out;
    out.p_miss = Eigen::VectorXd::Ones(n);
    out.p_assoc = Eigen::MatrixXd::Zero(n, m);
    out.p_new = Eigen::VectorXd::Ones(m);
    out.iterations = 0;
    out.converged = true;
    if (n == 0 || m == 0) return out;

    const Eigen::MatrixXd psi = detail::likelihood_ratios(prob);
    Eigen::MatrixXd to_meas(n, m);                         // Bernoulli i -> measurement k
    Eigen::MatrixXd to_bern = Eigen::MatrixXd::Ones(n, m); // measurement k -> Bernoulli i

    auto marginals = [&](Eigen::VectorXd& miss, Eigen::MatrixXd& assoc) {
        for (Eigen::Index i = 0; i < n; ++i) {
            double denom = 1.0;
            for (Eigen::Index k = 0; k < m; ++k) denom += psi(i, k) * to_bern(i, k);
            miss[i] = 1.0 / denom;
            for (Eigen::Index k = 0; k < m; ++k) assoc(i, k) = psi(i, k) * to_bern(i, k) / denom;
        }
    };

    Eigen::VectorXd miss(n);
    Eigen::MatrixXd assoc(n, m);
    marginals(miss, assoc);
    out.converged = false;
    for (int iter = 1; iter <= settings.max_iters; ++iter) {
        // Leave-one-out sums are formed explicitly; subtracting from the
        // full sum loses everything when one term dominates.
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index k = 0; k < m; ++k) {
                double rest = 1.0;
                for (Eigen::Index q = 0; q < m; ++q)
                    if (q != k) rest += psi(i, q) * to_bern(i, q);
                to_meas(i, k) = psi(i, k) / rest;
            }
        }
        for (Eigen::Index k = 0; k < m; ++k) {
            for (Eigen::Index i = 0; i < n; ++i) {
                double rest = 1.0;
                for (Eigen::Index q = 0; q < n; ++q)
                    if (q != i) rest += to_meas(q, k);
                to_bern(i, k) = 1.0 / rest;
            }
        }
        Eigen::VectorXd next_miss(n);
        Eigen::MatrixXd next_assoc(n, m);
        marginals(next_miss, next_assoc);
        const double change =
            std::max((next_miss - miss).cwiseAbs().maxCoeff(), (next_assoc - assoc).cwiseAbs().maxCoeff());
        miss = next_miss;
        assoc = next_assoc;
        out.iterations = iter;
        if (change < settings.tol) {
            out.converged = true;
            break;
        }
    }
    out.p_miss = miss;
    out.p_assoc = assoc;
    for (Eigen::Index k = 0; k < m; ++k) out.p_new[k] = std::clamp(1.0 - assoc.col(k).sum(), 0.0, 1.0);
    return out;
}

} // namespace slat
