#pragma once

#include <algorithm>
#include <chrono>
#include <optional>
#include <utility>
#include <vector>

#include "streamsparse/summary.hpp"
#include "streamsparse/threshold.hpp"

namespace streamsparse {

enum class LambdaInitRule { FromGradient, UserValue };
enum class StartMode { Cold, Warm };
enum class StreamErrorPolicy { Abort, Skip };

/// Per-batch solver configuration. The learning rate is eta_const / N_b and the
/// threshold floor is lambda_floor_const * sqrt(log(b*p) / N_b); both constants
/// are exposed because their theoretical counterparts are not computable from
/// data. lambda_floor_const left unset means "calibrate from batch-1 residuals"
/// and must be resolved by the stream driver before fitting.
struct IhtConfig {
    double kappa = 0.9;
    double eta_const = 0.5;
    double refine_const = 2.0;
    std::optional<double> lambda_floor_const{};
    LambdaInitRule lambda_init_rule = LambdaInitRule::FromGradient;
    double lambda_init_value = 1.0;  // used only with LambdaInitRule::UserValue
    StartMode start_mode = StartMode::Cold;
    std::optional<long> max_iters_cap{};  // unset: 10x the planned iteration count
    int eta_calibration_dim = 0;          // >0: power-iteration estimate of the curvature scale
    StreamErrorPolicy on_error = StreamErrorPolicy::Abort;
};

inline void validate_iht_config(const IhtConfig& cfg) {
    if (!(cfg.kappa > 0.0 && cfg.kappa < 1.0)) throw DomainError("IhtConfig: kappa must be in (0,1)");
    if (!(cfg.eta_const > 0.0)) throw DomainError("IhtConfig: eta_const must be > 0");
    if (!(cfg.refine_const > 0.0)) throw DomainError("IhtConfig: refine_const must be > 0");
    if (cfg.lambda_floor_const && !(*cfg.lambda_floor_const > 0.0))
        throw DomainError("IhtConfig: lambda_floor_const must be > 0");
    if (cfg.lambda_init_rule == LambdaInitRule::UserValue && !(cfg.lambda_init_value > 0.0))
        throw DomainError("IhtConfig: lambda_init_value must be > 0");
    if (cfg.max_iters_cap && *cfg.max_iters_cap < 1)
        throw DomainError("IhtConfig: max_iters_cap must be >= 1");
    if (cfg.eta_calibration_dim < 0) throw DomainError("IhtConfig: eta_calibration_dim must be >= 0");
}

struct TraceEntry {
    long t;
    double lambda;        // threshold applied at this iteration
    long support_size;    // nonzeros after thresholding
    double step_norm;     // Euclidean norm of the gradient step eta * grad
};

struct FitResult {
    VectorXd beta_hat;
    std::vector<TraceEntry> trace;
    long iterations_run = 0;
    double eta = 0.0;
    double lambda_init = 0.0;
    double lambda_floor = 0.0;
    double lambda_final = 0.0;  // schedule level after the last decay
};

/// Per-batch output emitted by the stream driver.
struct EstimateRecord {
    long batch_index = 0;
    VectorXd beta_hat;
    std::vector<Index> support;
    long iterations_run = 0;
    double lambda_final = 0.0;
    double wall_seconds = 0.0;
    long n_cumulative = 0;
};

namespace detail {

constexpr double kDivergenceCap = 1e12;

inline long resolved_n(const SummaryState& state, const BatchData& batch) {
    return state.n_total + static_cast<long>(batch.n());
}

/// Largest eigenvalue by power iteration with a fixed deterministic start.
inline double power_iteration_max_eigenvalue(const MatrixXd& m, int iters = 50) {
    VectorXd v = VectorXd::Ones(m.rows());
    v.normalize();
    double lambda = 0.0;
    for (int k = 0; k < iters; ++k) {
        VectorXd w = m * v;
        const double norm = w.norm();
        if (norm == 0.0) return 0.0;
        v = w / norm;
        lambda = norm;
    }
    return lambda;
}

inline double resolve_eta(const SummaryState& state, const GlmFamily& family, const BatchData& batch,
                          const IhtConfig& cfg) {
    const long n_cum = resolved_n(state, batch);
    if (cfg.eta_calibration_dim <= 0) return cfg.eta_const / static_cast<double>(n_cum);
    // Estimate the curvature scale on the highest-curvature coordinates: the
    // top-k diagonal entries of the cumulative plus current-batch Hessian at 0.
    const MatrixXd hess0 = batch_hessian(family, batch, VectorXd::Zero(state.p()));
    MatrixXd total = hess0;
    if (state.batches_absorbed > 0) total += state.hess;
    const Index k = std::min<Index>(cfg.eta_calibration_dim, state.p());
    std::vector<Index> order(state.p());
    for (Index j = 0; j < state.p(); ++j) order[j] = j;
    std::partial_sort(order.begin(), order.begin() + k, order.end(),
                      [&](Index a, Index b) { return total(a, a) > total(b, b); });
    MatrixXd sub(k, k);
    for (Index a = 0; a < k; ++a)
        for (Index b = 0; b < k; ++b) sub(a, b) = total(order[a], order[b]);
    const double lam_max = power_iteration_max_eigenvalue(sub) / static_cast<double>(n_cum);
    if (!(lam_max > 0.0)) return cfg.eta_const / static_cast<double>(n_cum);
    // m + M ~ 2 * lam_max; take the middle of [1/(m+M), 2/(m+M)].
    return 1.5 / (2.0 * lam_max) / static_cast<double>(n_cum);
}

inline double resolve_lambda_floor(const SummaryState& state, const BatchData& batch, const IhtConfig& cfg) {
    if (!cfg.lambda_floor_const)
        throw DomainError("fit_batch: lambda_floor_const is unresolved; run the calibration first");
    const long n_cum = resolved_n(state, batch);
    // b*p clamped to 2 so a single-feature first batch keeps a positive floor
    const double bp = std::max(static_cast<double>(batch.batch_index) * static_cast<double>(batch.p()), 2.0);
    return *cfg.lambda_floor_const * std::sqrt(std::log(bp) / static_cast<double>(n_cum));
}

/// Shared inner loop: gradient step, hard threshold at the current level, decay.
/// The initial threshold is applied at the first iteration, so a data-driven
/// lambda_init at or above the first step's sup-norm zeroes the first iterate.
template <class GradFn, class Observer>
FitResult iht_loop(Index p, GradFn&& grad_at, double eta, const ThresholdSchedule& schedule,
                   long iterations, VectorXd beta0, Observer&& observe) {
    FitResult result;
    result.eta = eta;
    result.lambda_init = schedule.lambda_init;
    result.lambda_floor = schedule.lambda_floor;
    result.trace.reserve(static_cast<std::size_t>(iterations));
    VectorXd beta = std::move(beta0);
    double lambda = schedule.lambda_init;
    for (long t = 1; t <= iterations; ++t) {
        const VectorXd step = eta * grad_at(beta);
        beta = hard_threshold(beta - step, lambda);
        if (!beta.allFinite() || beta.lpNorm<Eigen::Infinity>() > kDivergenceCap)
            throw DivergenceError("iterate diverged", t);
        long nnz = 0;
        for (Index j = 0; j < p; ++j) nnz += beta[j] != 0.0;
        result.trace.push_back({t, lambda, nnz, step.norm()});
        observe(t, lambda, beta);
        lambda = next_threshold(lambda, schedule);
    }
    result.beta_hat = std::move(beta);
    result.iterations_run = iterations;
    result.lambda_final = lambda;
    return result;
}

inline void observe_nothing(long, double, const VectorXd&) {}

}  // namespace detail

/// Data-driven initial threshold: 1.05x the sup-norm of the first cold-start
/// gradient step, so the first iterate is exactly zero and the decay starts at
/// the scale of the data. Falls back to the floor when the gradient vanishes.
inline double compute_lambda_init(const SummaryState& state, const GlmFamily& family,
                                  const BatchData& batch, const IhtConfig& cfg) {
    validate_iht_config(cfg);
    if (cfg.lambda_init_rule == LambdaInitRule::UserValue) return cfg.lambda_init_value;
    const double eta = detail::resolve_eta(state, family, batch, cfg);
    const VectorXd g0 = surrogate_gradient(state, family, batch, VectorXd::Zero(state.p()));
    const double scale = eta * g0.lpNorm<Eigen::Infinity>() * 1.05;
    if (scale > 0.0) return scale;
    return detail::resolve_lambda_floor(state, batch, cfg);
}

/// Solve one batch against the current summaries. Runs exactly
/// min(planned_iterations, max_iters_cap) iterations; returns the last iterate
/// and a per-iteration trace. `observe(t, lambda, beta)` is called after each
/// iteration when supplied.
template <class Observer>
FitResult fit_batch(const SummaryState& state, const GlmFamily& family, const BatchData& batch,
                    const IhtConfig& cfg, const VectorXd* warm_init, Observer&& observe) {
    validate_iht_config(cfg);
    if (batch.p() != state.p()) throw ShapeError("fit_batch: batch dimension != state dimension");
    if (cfg.start_mode == StartMode::Warm && warm_init == nullptr)
        throw DomainError("fit_batch: warm start requires warm_init");
    if (warm_init && warm_init->size() != state.p())
        throw ShapeError("fit_batch: warm_init length != state dimension");

    const long n_cum = detail::resolved_n(state, batch);
    const double eta = detail::resolve_eta(state, family, batch, cfg);
    const double lambda_floor = detail::resolve_lambda_floor(state, batch, cfg);
    double lambda_init = compute_lambda_init(state, family, batch, cfg);
    lambda_init = std::max(lambda_init, lambda_floor);
    const ThresholdSchedule schedule{lambda_init, lambda_floor, cfg.kappa, cfg.refine_const};
    const long planned = planned_iterations(schedule, n_cum);
    const long cap = cfg.max_iters_cap.value_or(10 * planned);
    const long iterations = std::min(planned, cap);

    VectorXd beta0 = cfg.start_mode == StartMode::Warm ? *warm_init : VectorXd::Zero(state.p());
    auto grad_at = [&](const VectorXd& beta) { return surrogate_gradient(state, family, batch, beta); };
    try {
        return detail::iht_loop(state.p(), grad_at, eta, schedule, iterations, std::move(beta0),
                                std::forward<Observer>(observe));
    } catch (DivergenceError& e) {
        e.batch_index = batch.batch_index;
        throw;
    }
}

inline FitResult fit_batch(const SummaryState& state, const GlmFamily& family, const BatchData& batch,
                           const IhtConfig& cfg, const VectorXd* warm_init = nullptr) {
    return fit_batch(state, family, batch, cfg, warm_init, detail::observe_nothing);
}

/// Stream driver: fit, emit the record, fold the batch into the summaries, drop
/// it. Holds exactly one batch at a time; the returned state plus the last
/// estimate are everything the stream leaves behind. `after_absorb(state,
/// beta_hat, batch_index)` runs once per absorbed batch (checkpoint hook).
template <class Source, class Sink, class AfterAbsorb>
SummaryState process_stream(SummaryState state, VectorXd previous, Source&& source,
                            const GlmFamily& family, const IhtConfig& cfg, Sink&& sink,
                            AfterAbsorb&& after_absorb) {
    validate_iht_config(cfg);
    while (std::optional<BatchData> next = source()) {
        BatchData batch = std::move(*next);
        const auto started = std::chrono::steady_clock::now();
        FitResult fit;
        try {
            fit = fit_batch(state, family, batch, cfg, &previous);
        } catch (DivergenceError& e) {
            e.batch_index = batch.batch_index;
            if (cfg.on_error == StreamErrorPolicy::Abort) throw;
            continue;  // skip: absorb nothing from the failed batch
        }
        const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - started;
        const long batch_index = batch.batch_index;
        EstimateRecord record{batch_index,        fit.beta_hat,     support_of(fit.beta_hat),
                              fit.iterations_run, fit.lambda_final, elapsed.count(),
                              state.n_total + static_cast<long>(batch.n())};
        sink(std::move(record));
        absorb_batch(state, family, std::move(batch), fit.beta_hat);
        previous = std::move(fit.beta_hat);
        after_absorb(std::as_const(state), std::as_const(previous), batch_index);
    }
    return state;
}

template <class Source, class Sink>
SummaryState process_stream(Index p, Source&& source, const GlmFamily& family, const IhtConfig& cfg,
                            Sink&& sink) {
    return process_stream(init_state(p), VectorXd::Zero(p), std::forward<Source>(source), family, cfg,
                          std::forward<Sink>(sink), [](const SummaryState&, const VectorXd&, long) {});
}

}  // namespace streamsparse
