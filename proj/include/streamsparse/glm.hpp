#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>

#include "streamsparse/errors.hpp"

namespace streamsparse {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class FamilyKind { Gaussian, Logistic, Poisson };

/// Canonical-link exponential family. The log-partition g and its derivatives
/// define the per-batch loss; `dispersion` is used only by the data generator
/// and the oracle (Gaussian noise variance, allowed to be 0 for noiseless data).
struct GlmFamily {
    FamilyKind kind = FamilyKind::Gaussian;
    double dispersion = 1.0;
};

inline GlmFamily gaussian_family(double noise_variance = 1.0) { return {FamilyKind::Gaussian, noise_variance}; }
inline GlmFamily logistic_family() { return {FamilyKind::Logistic, 1.0}; }
inline GlmFamily poisson_family() { return {FamilyKind::Poisson, 1.0}; }

inline const char* family_name(FamilyKind k) {
    switch (k) {
        case FamilyKind::Gaussian: return "gaussian";
        case FamilyKind::Logistic: return "logistic";
        case FamilyKind::Poisson: return "poisson";
    }
    return "?";
}

/// g(u). Logistic uses log(1+e^u) = max(u,0) + log1p(e^{-|u|}) so it never overflows.
inline double link_value(const GlmFamily& family, double u) {
    if (!std::isfinite(u)) throw DomainError("link_value: non-finite input");
    switch (family.kind) {
        case FamilyKind::Gaussian: return 0.5 * u * u;
        case FamilyKind::Logistic: return std::max(u, 0.0) + std::log1p(std::exp(-std::abs(u)));
        case FamilyKind::Poisson: return std::exp(u);
    }
    return 0.0;
}

/// g'(u); the conditional mean of the response at natural parameter u.
inline double link_deriv(const GlmFamily& family, double u) {
    if (!std::isfinite(u)) throw DomainError("link_deriv: non-finite input");
    switch (family.kind) {
        case FamilyKind::Gaussian: return u;
        case FamilyKind::Logistic: {
            if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
            const double e = std::exp(u);
            return e / (1.0 + e);
        }
        case FamilyKind::Poisson: return std::exp(u);
    }
    return 0.0;
}

/// g''(u) > 0 for all finite u.
inline double link_second(const GlmFamily& family, double u) {
    if (!std::isfinite(u)) throw DomainError("link_second: non-finite input");
    switch (family.kind) {
        case FamilyKind::Gaussian: return 1.0;
        case FamilyKind::Logistic: {
            const double p = link_deriv(family, u);
            return p * (1.0 - p);
        }
        case FamilyKind::Poisson: return std::exp(u);
    }
    return 0.0;
}

/// One arriving batch: n x p design, n responses, 1-based batch index.
struct BatchData {
    MatrixXd design;
    VectorXd response;
    long batch_index = 1;

    BatchData() = default;
    BatchData(MatrixXd design_, VectorXd response_, long batch_index_)
        : design(std::move(design_)), response(std::move(response_)), batch_index(batch_index_) {
        if (design.rows() != response.size())
            throw ShapeError("BatchData: design rows != response length");
        if (batch_index < 1) throw DomainError("BatchData: batch_index must be >= 1");
        if (!design.allFinite() || !response.allFinite())
            throw DomainError("BatchData: non-finite entries");
    }

    Index n() const { return design.rows(); }
    Index p() const { return design.cols(); }
};

namespace detail {
inline void check_beta(const BatchData& batch, const VectorXd& beta, const char* where) {
    if (beta.size() != batch.design.cols())
        throw ShapeError(std::string(where) + ": beta length does not match design columns");
}
}  // namespace detail

struct LossValue {
    double value = 0.0;
    bool overflowed = false;  // value saturated to +inf (Poisson log-partition blow-up)
};

/// sum_i g(x_i beta) - y_i x_i beta. Saturates to +inf with the flag set if any
/// term overflows.
inline LossValue batch_loss(const GlmFamily& family, const BatchData& batch, const VectorXd& beta) {
    detail::check_beta(batch, beta, "batch_loss");
    const VectorXd eta = batch.design * beta;
    double total = 0.0;
    for (Index i = 0; i < eta.size(); ++i)
        total += link_value(family, eta[i]) - batch.response[i] * eta[i];
    if (!std::isfinite(total))
        return {std::numeric_limits<double>::infinity(), true};
    return {total, false};
}

/// sum_i x_i^T (g'(x_i beta) - y_i).
inline VectorXd batch_gradient(const GlmFamily& family, const BatchData& batch, const VectorXd& beta) {
    detail::check_beta(batch, beta, "batch_gradient");
    const VectorXd eta = batch.design * beta;
    VectorXd resid(eta.size());
    for (Index i = 0; i < eta.size(); ++i)
        resid[i] = link_deriv(family, eta[i]) - batch.response[i];
    return batch.design.transpose() * resid;
}

/// sum_i x_i^T x_i g''(x_i beta). Built from a rank update so the result is
/// symmetric to the bit; PSD since g'' >= 0.
inline MatrixXd batch_hessian(const GlmFamily& family, const BatchData& batch, const VectorXd& beta) {
    detail::check_beta(batch, beta, "batch_hessian");
    const Index p = batch.design.cols();
    const VectorXd eta = batch.design * beta;
    VectorXd w(eta.size());
    for (Index i = 0; i < eta.size(); ++i)
        w[i] = std::sqrt(link_second(family, eta[i]));
    const MatrixXd scaled = w.asDiagonal() * batch.design;
    MatrixXd hess = MatrixXd::Zero(p, p);
    hess.selfadjointView<Eigen::Lower>().rankUpdate(scaled.transpose());
    hess.triangularView<Eigen::StrictlyUpper>() = hess.transpose().triangularView<Eigen::StrictlyUpper>();
    return hess;
}

}  // namespace streamsparse
