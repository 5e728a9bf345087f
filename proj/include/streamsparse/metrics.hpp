#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "streamsparse/glm.hpp"
#include "streamsparse/threshold.hpp"

namespace streamsparse {

inline double l2_error(const VectorXd& beta_hat, const VectorXd& beta_star) {
    if (beta_hat.size() != beta_star.size()) throw ShapeError("l2_error: length mismatch");
    return (beta_hat - beta_star).norm();
}

inline double linf_error(const VectorXd& beta_hat, const VectorXd& beta_star) {
    if (beta_hat.size() != beta_star.size()) throw ShapeError("linf_error: length mismatch");
    return (beta_hat - beta_star).lpNorm<Eigen::Infinity>();
}

struct SupportErrors {
    long false_positives = 0;
    long false_negatives = 0;
};

/// Set differences between supp(beta_hat) and the true support. Support means
/// exactly nonzero: both estimators produce exact zeros, so no epsilon.
inline SupportErrors support_errors(const VectorXd& beta_hat, const std::vector<Index>& support_star) {
    std::vector<char> truth(static_cast<std::size_t>(beta_hat.size()), 0);
    for (Index j : support_star) truth[static_cast<std::size_t>(j)] = 1;
    SupportErrors out;
    for (Index j = 0; j < beta_hat.size(); ++j) {
        const bool estimated = beta_hat[j] != 0.0;
        if (estimated && !truth[static_cast<std::size_t>(j)]) ++out.false_positives;
        if (!estimated && truth[static_cast<std::size_t>(j)]) ++out.false_negatives;
    }
    return out;
}

/// l2 error divided by sqrt(s (ln p + ln b) / N_b) — the constant that stays
/// bounded in b when the error tracks the streaming rate. Natural logs.
inline double scaled_error(double l2, long n_cumulative, long s, long p, long b) {
    if (n_cumulative < 1 || s < 1 || p < 1 || b < 1)
        throw DomainError("scaled_error: all counts must be >= 1");
    const double rate = std::sqrt(static_cast<double>(s) *
                                  (std::log(static_cast<double>(p)) + std::log(static_cast<double>(b))) /
                                  static_cast<double>(n_cumulative));
    return l2 / rate;
}

/// Running cumulative score at the known truth (simulation-only diagnostic):
/// absorbs each batch's gradient at beta* and reports the sup-norm and the
/// norm restricted to the true support.
class ScoreAccumulator {
public:
    ScoreAccumulator(GlmFamily family, VectorXd beta_star)
        : family_(family), beta_star_(std::move(beta_star)),
          support_star_(support_of(beta_star_)),
          score_(VectorXd::Zero(beta_star_.size())) {}

    void absorb(const BatchData& batch) { score_ += batch_gradient(family_, batch, beta_star_); }

    struct Reading {
        double alpha;  // || cumulative score ||_inf
        double theta;  // || cumulative score restricted to supp(beta*) ||_2
    };

    Reading read() const {
        double theta_sq = 0.0;
        for (Index j : support_star_) theta_sq += score_[j] * score_[j];
        return {score_.lpNorm<Eigen::Infinity>(), std::sqrt(theta_sq)};
    }

    const VectorXd& score() const { return score_; }

private:
    GlmFamily family_;
    VectorXd beta_star_;
    std::vector<Index> support_star_;
    VectorXd score_;
};

/// One CSV row of per-batch diagnostics. Unset optionals serialize as empty
/// fields (real-data streams have no truth-dependent columns).
struct BatchMetrics {
    long b = 0;
    long n_cumulative = 0;
    std::string method;
    std::optional<std::uint64_t> seed;
    std::optional<double> l2;
    std::optional<double> linf;
    long support_size = 0;
    std::optional<long> false_positives;
    std::optional<long> false_negatives;
    std::optional<double> scaled;
    std::optional<double> alpha_emp;
    std::optional<double> theta_emp;
    std::optional<double> oracle_ratio;
    long iterations = 0;
    double lambda_final = 0.0;
    std::optional<double> wall_ms;
};

}  // namespace streamsparse
