#pragma once

#include <Eigen/Cholesky>
#include <algorithm>
#include <optional>
#include <utility>
#include <vector>

#include "streamsparse/glm.hpp"
#include "streamsparse/rng.hpp"

namespace streamsparse {

enum class CovarianceKind { Identity, Ar1, UserMatrix };
enum class EntryLaw { GaussianStd, RademacherStd, HeavyTailUnsupported };

/// Row law of the design: i.i.d. unit-variance entries mixed by Sigma^{1/2}.
/// AR(1) is the canonical correlated choice because its spectrum has closed-form
/// bounds. The heavy-tail law (scaled t_3) violates the sub-Gaussian model and
/// exists only for robustness probing.
struct DesignSpec {
    Index p = 1;
    CovarianceKind covariance = CovarianceKind::Identity;
    double rho = 0.0;         // Ar1 only
    MatrixXd user_sigma;      // UserMatrix only; must be symmetric positive definite
    EntryLaw entry_law = EntryLaw::GaussianStd;
};

/// Analytic spectrum bounds of the AR(1) correlation matrix.
inline std::pair<double, double> ar1_eigen_bounds(double rho) {
    return {(1.0 - rho) / (1.0 + rho), (1.0 + rho) / (1.0 - rho)};
}

namespace detail {

inline void validate_design(const DesignSpec& spec) {
    if (spec.p < 1) throw DomainError("DesignSpec: p must be >= 1");
    if (spec.covariance == CovarianceKind::Ar1 && !(spec.rho >= 0.0 && spec.rho < 1.0))
        throw DomainError("DesignSpec: rho must be in [0,1)");
    if (spec.covariance == CovarianceKind::UserMatrix) {
        if (spec.user_sigma.rows() != spec.p || spec.user_sigma.cols() != spec.p)
            throw ShapeError("DesignSpec: user covariance must be p x p");
        if (!spec.user_sigma.isApprox(spec.user_sigma.transpose()))
            throw DomainError("DesignSpec: user covariance must be symmetric");
    }
}

/// Lower Cholesky factor of the mixing covariance, or nothing when the rows
/// need no mixing. rho == 0 degenerates to the identity path on purpose so the
/// two specs generate bit-identical data.
inline std::optional<MatrixXd> mixing_factor(const DesignSpec& spec) {
    validate_design(spec);
    switch (spec.covariance) {
        case CovarianceKind::Identity:
            return std::nullopt;
        case CovarianceKind::Ar1: {
            if (spec.rho == 0.0) return std::nullopt;
            MatrixXd sigma(spec.p, spec.p);
            for (Index i = 0; i < spec.p; ++i)
                for (Index j = 0; j < spec.p; ++j)
                    sigma(i, j) = std::pow(spec.rho, std::abs(static_cast<double>(i - j)));
            return MatrixXd(sigma.llt().matrixL());
        }
        case CovarianceKind::UserMatrix: {
            Eigen::LLT<MatrixXd> llt(spec.user_sigma);
            if (llt.info() != Eigen::Success)
                throw DomainError("DesignSpec: user covariance is not positive definite");
            return MatrixXd(llt.matrixL());
        }
    }
    return std::nullopt;
}

inline double draw_entry(EntryLaw law, Rng& rng) {
    switch (law) {
        case EntryLaw::GaussianStd: return rng.normal();
        case EntryLaw::RademacherStd: return rng.rademacher();
        case EntryLaw::HeavyTailUnsupported: {
            // t_3 scaled to unit variance: z / sqrt(chi2_3 / 3) / sqrt(3)
            const double z = rng.normal();
            const double c1 = rng.normal(), c2 = rng.normal(), c3 = rng.normal();
            const double chi2 = c1 * c1 + c2 * c2 + c3 * c3;
            return z / std::sqrt(chi2 / 3.0) / std::sqrt(3.0);
        }
    }
    return 0.0;
}

}  // namespace detail

/// n rows drawn i.i.d. as z * L^T with unit-variance entries z and Sigma = L L^T.
inline MatrixXd make_design(const DesignSpec& spec, Index n, Rng& rng,
                            const std::optional<MatrixXd>* cached_factor = nullptr) {
    if (n < 1) throw DomainError("make_design: n must be >= 1");
    const std::optional<MatrixXd> local =
        cached_factor ? std::nullopt : detail::mixing_factor(spec);
    const std::optional<MatrixXd>& factor = cached_factor ? *cached_factor : local;
    MatrixXd z(n, spec.p);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < spec.p; ++j) z(i, j) = detail::draw_entry(spec.entry_law, rng);
    if (!factor) return z;
    return z * factor->transpose();
}

enum class SupportRule { FirstS, RandomS };
enum class MagnitudeRule { Constant, UniformRange, SignedConstant };

struct TruthSpec {
    Index p = 1;
    Index s = 1;
    SupportRule support_rule = SupportRule::FirstS;
    MagnitudeRule magnitude_rule = MagnitudeRule::Constant;
    double value = 1.0;  // Constant / SignedConstant
    double lo = 0.5;     // UniformRange
    double hi = 1.5;
};

/// Exactly s nonzeros, support and magnitudes per the rules.
inline std::pair<VectorXd, std::vector<Index>> make_truth(const TruthSpec& spec, Rng& rng) {
    if (spec.s < 1 || spec.s > spec.p) throw DomainError("TruthSpec: need 1 <= s <= p");
    std::vector<Index> support;
    if (spec.support_rule == SupportRule::FirstS) {
        for (Index j = 0; j < spec.s; ++j) support.push_back(j);
    } else {
        // Floyd's sampling of s distinct indices, then sorted for readability.
        std::vector<Index> pool(spec.p);
        for (Index j = 0; j < spec.p; ++j) pool[j] = j;
        for (Index j = 0; j < spec.s; ++j) {
            const Index k = j + static_cast<Index>(rng.uniform() * static_cast<double>(spec.p - j));
            std::swap(pool[j], pool[std::min(k, spec.p - 1)]);
        }
        support.assign(pool.begin(), pool.begin() + spec.s);
        std::sort(support.begin(), support.end());
    }
    VectorXd beta = VectorXd::Zero(spec.p);
    for (Index j : support) {
        switch (spec.magnitude_rule) {
            case MagnitudeRule::Constant: beta[j] = spec.value; break;
            case MagnitudeRule::UniformRange: beta[j] = spec.lo + (spec.hi - spec.lo) * rng.uniform(); break;
            case MagnitudeRule::SignedConstant: beta[j] = rng.rademacher() * spec.value; break;
        }
        if (beta[j] == 0.0) throw DomainError("TruthSpec: magnitudes must be nonzero");
    }
    return {std::move(beta), std::move(support)};
}

struct ResponseSample {
    VectorXd values;
    bool capped = false;  // a Poisson draw hit the 1e9 cap
};

/// Responses at natural parameter x_i beta*: Gaussian adds sqrt(dispersion)
/// noise (dispersion 0 gives the noiseless limit), logistic draws Bernoulli(g'),
/// Poisson draws at rate exp(.) capped at 1e9.
inline ResponseSample make_responses(const GlmFamily& family, const MatrixXd& design,
                                     const VectorXd& beta_star, Rng& rng) {
    if (design.cols() != beta_star.size())
        throw ShapeError("make_responses: beta_star length != design columns");
    const VectorXd eta = design * beta_star;
    ResponseSample out;
    out.values.resize(eta.size());
    constexpr double kPoissonCap = 1e9;
    for (Index i = 0; i < eta.size(); ++i) {
        switch (family.kind) {
            case FamilyKind::Gaussian:
                out.values[i] = eta[i] + std::sqrt(family.dispersion) * rng.normal();
                break;
            case FamilyKind::Logistic:
                out.values[i] = rng.bernoulli(link_deriv(family, eta[i])) ? 1.0 : 0.0;
                break;
            case FamilyKind::Poisson: {
                const double rate = std::exp(eta[i]);
                double draw = std::isfinite(rate) ? static_cast<double>(rng.poisson(rate)) : kPoissonCap;
                if (draw >= kPoissonCap) {
                    draw = kPoissonCap;
                    out.capped = true;
                }
                out.values[i] = draw;
                break;
            }
        }
    }
    return out;
}

struct StreamSpec {
    DesignSpec design;
    TruthSpec truth;
    GlmFamily family;
    long constant_n = 0;              // used when batch_schedule is empty
    std::vector<long> batch_schedule; // explicit per-batch sizes
    long num_batches = 0;
    std::uint64_t seed = 0;
};

inline void validate_stream_spec(const StreamSpec& spec) {
    detail::validate_design(spec.design);
    if (spec.truth.p != spec.design.p) throw ShapeError("StreamSpec: truth and design dimensions differ");
    if (spec.batch_schedule.empty()) {
        if (spec.constant_n < 1) throw DomainError("StreamSpec: batch size must be >= 1");
        if (spec.num_batches < 0) throw DomainError("StreamSpec: num_batches must be >= 0");
    } else {
        for (long n : spec.batch_schedule)
            if (n < 1) throw DomainError("StreamSpec: batch sizes must be >= 1");
        if (spec.num_batches != 0 &&
            spec.num_batches != static_cast<long>(spec.batch_schedule.size()))
            throw DomainError("StreamSpec: num_batches conflicts with the batch schedule");
    }
    if (!(spec.family.dispersion >= 0.0)) throw DomainError("StreamSpec: dispersion must be >= 0");
}

/// Lazy batch source. Batches are generated on demand from (seed, batch_index)
/// sub-seeds, so batch b is reproducible without touching batches 1..b-1; the
/// truth uses counter 0. Nothing generated is retained.
class BatchStream {
public:
    explicit BatchStream(StreamSpec spec) : spec_(std::move(spec)) {
        validate_stream_spec(spec_);
        factor_ = detail::mixing_factor(spec_.design);
        Rng truth_rng(derive_subseed(spec_.seed, 0));
        auto truth = make_truth(spec_.truth, truth_rng);
        beta_star_ = std::move(truth.first);
        support_star_ = std::move(truth.second);
    }

    long num_batches() const {
        return spec_.batch_schedule.empty() ? spec_.num_batches
                                            : static_cast<long>(spec_.batch_schedule.size());
    }

    long batch_size(long b) const {
        return spec_.batch_schedule.empty() ? spec_.constant_n : spec_.batch_schedule[b - 1];
    }

    BatchData batch(long b) const {
        if (b < 1 || b > num_batches()) throw DomainError("BatchStream: batch index out of range");
        Rng rng(derive_subseed(spec_.seed, static_cast<std::uint64_t>(b)));
        MatrixXd design = make_design(spec_.design, batch_size(b), rng, &factor_);
        ResponseSample resp = make_responses(spec_.family, design, beta_star_, rng);
        return BatchData(std::move(design), std::move(resp.values), b);
    }

    std::optional<BatchData> next() {
        if (cursor_ > num_batches()) return std::nullopt;
        return batch(cursor_++);
    }

    const VectorXd& beta_star() const { return beta_star_; }
    const std::vector<Index>& support_star() const { return support_star_; }
    const StreamSpec& spec() const { return spec_; }

private:
    StreamSpec spec_;
    std::optional<MatrixXd> factor_;
    VectorXd beta_star_;
    std::vector<Index> support_star_;
    long cursor_ = 1;
};

}  // namespace streamsparse
