#pragma once

#include <cmath>

#include "streamsparse/adiht.hpp"
#include "streamsparse/glm.hpp"

namespace streamsparse {

/// State of the l1-penalized renewable baseline: the cumulative Hessian at the
/// historical estimates, the previous estimate the next surrogate expands
/// around, and the cumulative sample count.
struct RenewableState {
    MatrixXd hess_cum;
    VectorXd beta_prev;
    long n_total = 0;
    long batches_absorbed = 0;

    Index p() const { return beta_prev.size(); }
};

inline RenewableState init_renewable(Index p) {
    if (p < 1) throw DomainError("init_renewable: p must be >= 1");
    return {MatrixXd::Zero(p, p), VectorXd::Zero(p), 0, 0};
}

/// sign(z_j) * max(|z_j| - tau, 0): the proximal operator of tau * ||.||_1.
inline VectorXd soft_threshold(const VectorXd& z, double tau) {
    if (!(tau >= 0.0)) throw DomainError("soft_threshold: tau must be >= 0");
    VectorXd out(z.size());
    for (Index j = 0; j < z.size(); ++j) {
        const double mag = std::abs(z[j]) - tau;
        out[j] = mag > 0.0 ? (z[j] > 0.0 ? mag : -mag) : 0.0;
    }
    return out;
}

/// Penalized surrogate objective:
///   (f_b(beta) + 0.5 (beta - beta_prev)' hess_cum (beta - beta_prev)) / N_b
///   + lambda_b ||beta||_1
inline double renewable_objective(const RenewableState& state, const GlmFamily& family,
                                  const BatchData& batch, const VectorXd& beta, double lambda_b) {
    const long n_cum = state.n_total + static_cast<long>(batch.n());
    const VectorXd diff = beta - state.beta_prev;
    const double smooth =
        batch_loss(family, batch, beta).value + 0.5 * diff.dot(state.hess_cum * diff);
    return smooth / static_cast<double>(n_cum) + lambda_b * beta.lpNorm<1>();
}

/// Fixed budget of proximal-gradient (ISTA) steps on the penalized surrogate,
/// started at the previous estimate. The caller folds the result back into the
/// state afterwards (absorb_renewable).
template <class Observer>
VectorXd fit_batch_renewable(const RenewableState& state, const GlmFamily& family, const BatchData& batch,
                             double lambda_b, long inner_iters, double step, Observer&& observe) {
    if (batch.p() != state.p()) throw ShapeError("fit_batch_renewable: batch dimension != state dimension");
    if (!(lambda_b > 0.0) && lambda_b != 0.0) throw DomainError("fit_batch_renewable: lambda_b must be >= 0");
    if (inner_iters < 1) throw DomainError("fit_batch_renewable: inner_iters must be >= 1");
    if (!(step > 0.0)) throw DomainError("fit_batch_renewable: step must be > 0");
    const double n_cum = static_cast<double>(state.n_total + static_cast<long>(batch.n()));
    VectorXd beta = state.beta_prev;
    for (long k = 1; k <= inner_iters; ++k) {
        VectorXd grad = batch_gradient(family, batch, beta);
        if (state.batches_absorbed > 0) grad += state.hess_cum * (beta - state.beta_prev);
        grad /= n_cum;
        beta = soft_threshold(beta - step * grad, step * lambda_b);
        if (!beta.allFinite() || beta.lpNorm<Eigen::Infinity>() > detail::kDivergenceCap)
            throw DivergenceError("renewable iterate diverged", k, batch.batch_index);
        observe(k, beta);
    }
    return beta;
}

inline VectorXd fit_batch_renewable(const RenewableState& state, const GlmFamily& family,
                                    const BatchData& batch, double lambda_b, long inner_iters,
                                    double step) {
    return fit_batch_renewable(state, family, batch, lambda_b, inner_iters, step,
                               [](long, const VectorXd&) {});
}

/// Fold a finished batch into the cumulative Hessian and advance the expansion
/// point. Consumes the batch.
inline void absorb_renewable(RenewableState& state, const GlmFamily& family, BatchData batch,
                             const VectorXd& beta_hat) {
    if (batch.p() != state.p()) throw ShapeError("absorb_renewable: batch dimension != state dimension");
    if (beta_hat.size() != state.p()) throw ShapeError("absorb_renewable: beta_hat length != state dimension");
    state.hess_cum += batch_hessian(family, batch, beta_hat);
    state.beta_prev = beta_hat;
    state.n_total += batch.n();
    state.batches_absorbed += 1;
}

/// Step size that keeps the ISTA objective nonincreasing: N_b over a slightly
/// inflated upper bound on the top eigenvalue of the smooth part's Hessian.
/// The per-family curvature bound is exact for Gaussian and logistic; for
/// Poisson the Hessian at the expansion point stands in and the divergence
/// guard backstops it.
inline double renewable_auto_step(const RenewableState& state, const GlmFamily& family,
                                  const BatchData& batch) {
    const double n_cum = static_cast<double>(state.n_total + static_cast<long>(batch.n()));
    MatrixXd curvature;
    switch (family.kind) {
        case FamilyKind::Gaussian:
            curvature = batch.design.transpose() * batch.design;
            break;
        case FamilyKind::Logistic:
            curvature = 0.25 * (batch.design.transpose() * batch.design);
            break;
        case FamilyKind::Poisson:
            curvature = batch_hessian(family, batch, state.beta_prev);
            break;
    }
    if (state.batches_absorbed > 0) curvature += state.hess_cum;
    const double lam_max = detail::power_iteration_max_eigenvalue(curvature, 60);
    if (!(lam_max > 0.0)) return 1.0;
    return n_cum / (1.01 * lam_max);
}

}  // namespace streamsparse
