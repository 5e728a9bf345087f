#pragma once

#include <Eigen/Dense>
#include <numeric>
#include <vector>

#include "streamsparse/adiht.hpp"

namespace streamsparse {

// Reference solvers used as test and diagnostic oracles. Unlike the stream
// driver they hold every batch in memory.

/// Hard-thresholding descent on the exact cumulative gradient over all retained
/// batches, with the same schedule and learning-rate rule as the streaming
/// solver. With a single batch the two are the same computation.
template <class Observer>
FitResult offline_iht(const GlmFamily& family, const std::vector<BatchData>& all_batches,
                      const IhtConfig& cfg, Observer&& observe) {
    validate_iht_config(cfg);
    if (all_batches.empty()) throw DomainError("offline_iht: need at least one batch");
    const Index p = all_batches.front().p();
    long n_total = 0;
    long max_batch_index = 0;
    for (const BatchData& batch : all_batches) {
        if (batch.p() != p) throw ShapeError("offline_iht: inconsistent batch dimensions");
        n_total += batch.n();
        max_batch_index = std::max(max_batch_index, batch.batch_index);
    }
    if (!cfg.lambda_floor_const)
        throw DomainError("offline_iht: lambda_floor_const is unresolved");
    const double eta = cfg.eta_const / static_cast<double>(n_total);
    const double bp = std::max(static_cast<double>(max_batch_index) * static_cast<double>(p), 2.0);
    const double lambda_floor =
        *cfg.lambda_floor_const * std::sqrt(std::log(bp) / static_cast<double>(n_total));

    auto grad_at = [&](const VectorXd& beta) {
        VectorXd g = batch_gradient(family, all_batches.front(), beta);
        for (std::size_t j = 1; j < all_batches.size(); ++j)
            g += batch_gradient(family, all_batches[j], beta);
        return g;
    };

    double lambda_init;
    if (cfg.lambda_init_rule == LambdaInitRule::UserValue) {
        lambda_init = cfg.lambda_init_value;
    } else {
        const VectorXd g0 = grad_at(VectorXd::Zero(p));
        const double scale = eta * g0.lpNorm<Eigen::Infinity>() * 1.05;
        lambda_init = scale > 0.0 ? scale : lambda_floor;
    }
    lambda_init = std::max(lambda_init, lambda_floor);
    const ThresholdSchedule schedule{lambda_init, lambda_floor, cfg.kappa, cfg.refine_const};
    const long planned = planned_iterations(schedule, n_total);
    const long iterations = std::min(planned, cfg.max_iters_cap.value_or(10 * planned));
    return detail::iht_loop(p, grad_at, eta, schedule, iterations, VectorXd::Zero(p),
                            std::forward<Observer>(observe));
}

inline FitResult offline_iht(const GlmFamily& family, const std::vector<BatchData>& all_batches,
                             const IhtConfig& cfg) {
    return offline_iht(family, all_batches, cfg, detail::observe_nothing);
}

/// Newton's method with step-halving on the likelihood restricted to a known
/// support; zeros elsewhere. Converged when the restricted gradient sup-norm
/// falls below tol.
inline VectorXd oracle_support_mle(const GlmFamily& family, const std::vector<BatchData>& all_batches,
                                   const std::vector<Index>& support_star, int newton_iters = 50,
                                   double tol = 1e-10) {
    if (all_batches.empty()) throw DomainError("oracle_support_mle: need at least one batch");
    const Index p = all_batches.front().p();
    const Index k = static_cast<Index>(support_star.size());
    if (k < 1) throw DomainError("oracle_support_mle: empty support");
    long n_total = 0;
    for (const BatchData& batch : all_batches) n_total += batch.n();
    if (static_cast<long>(k) > n_total)
        throw DomainError("oracle_support_mle: support larger than the sample");

    // Stack the restricted columns once.
    MatrixXd x(n_total, k);
    VectorXd y(n_total);
    Index row = 0;
    for (const BatchData& batch : all_batches) {
        for (Index a = 0; a < k; ++a) x.block(row, a, batch.n(), 1) = batch.design.col(support_star[a]);
        y.segment(row, batch.n()) = batch.response;
        row += batch.n();
    }

    auto restricted_loss = [&](const VectorXd& coef) {
        const VectorXd eta = x * coef;
        double total = 0.0;
        for (Index i = 0; i < eta.size(); ++i) total += link_value(family, eta[i]) - y[i] * eta[i];
        return total;
    };

    VectorXd coef = VectorXd::Zero(k);
    for (int it = 0; it < newton_iters; ++it) {
        const VectorXd eta = x * coef;
        VectorXd resid(eta.size()), weight(eta.size());
        for (Index i = 0; i < eta.size(); ++i) {
            resid[i] = link_deriv(family, eta[i]) - y[i];
            weight[i] = link_second(family, eta[i]);
        }
        const VectorXd grad = x.transpose() * resid;
        if (grad.lpNorm<Eigen::Infinity>() <= tol) {
            VectorXd full = VectorXd::Zero(p);
            for (Index a = 0; a < k; ++a) full[support_star[a]] = coef[a];
            return full;
        }
        const MatrixXd hess = x.transpose() * weight.asDiagonal() * x;
        Eigen::LDLT<MatrixXd> ldlt(hess);
        const VectorXd d = ldlt.vectorD();
        if (ldlt.info() != Eigen::Success ||
            d.minCoeff() <= 1e-12 * std::max(1.0, d.maxCoeff()))
            throw SingularError("oracle_support_mle: restricted Hessian is singular");
        const VectorXd direction = ldlt.solve(grad);
        // Halve the step until the restricted loss stops increasing.
        double alpha = 1.0;
        const double base = restricted_loss(coef);
        VectorXd candidate = coef - alpha * direction;
        while (restricted_loss(candidate) > base && alpha > 1e-10) {
            alpha *= 0.5;
            candidate = coef - alpha * direction;
        }
        coef = candidate;
    }
    VectorXd full = VectorXd::Zero(p);
    for (Index a = 0; a < k; ++a) full[support_star[a]] = coef[a];
    throw ConvergenceError("oracle_support_mle: Newton did not converge", std::move(full));
}

}  // namespace streamsparse
