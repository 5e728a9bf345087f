#pragma once

#include <json.hpp>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "streamsparse/adiht.hpp"
#include "streamsparse/csv.hpp"
#include "streamsparse/metrics.hpp"
#include "streamsparse/oracle.hpp"
#include "streamsparse/renewable.hpp"
#include "streamsparse/simulate.hpp"
#include "streamsparse/svg.hpp"

namespace streamsparse {

enum class MethodKind { AdIht, Renewable };

inline const char* method_string(MethodKind m) { return m == MethodKind::AdIht ? "adiht" : "renewable"; }

struct RenewableParams {
    double lambda_const = 1.0;   // lambda_b = lambda_const * sqrt(log(p) / N_b)
    long inner_iters = 200;      // fixed budget so baseline runtime is predictable
    std::optional<double> step;  // unset: curvature-based step per batch
};

struct CheckpointSpec {
    long at_batch = 0;  // 0 saves the fresh state before any batch
    std::string path;
};

struct ExperimentConfig {
    bool has_stream = false;
    StreamSpec stream;  // seed field is overwritten per task
    bool run_adiht = true;
    bool run_renewable = false;
    IhtConfig adiht;
    RenewableParams renewable;
    std::vector<std::uint64_t> seeds;
    std::string output_dir;
    bool emit_svg = false;
    bool compute_oracle = false;
    bool emit_wall_ms = false;  // off by default: wall time is not reproducible byte-for-byte
    std::optional<CheckpointSpec> checkpoint;
};

// ---------------------------------------------------------------------------
// Config parsing. Every validation failure names the offending key.
// ---------------------------------------------------------------------------

namespace cfgdetail {

using nlohmann::json;

[[noreturn]] inline void fail(const std::string& key, const std::string& msg) { throw ConfigError(key, msg); }

inline void check_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed) ok = ok || it.key() == k;
        if (!ok) fail(path + it.key(), "unknown key");
    }
}

inline double num_at(const json& j, const std::string& path, const char* key, double fallback) {
    auto it = j.find(key);
    if (it == j.end()) return fallback;
    if (!it->is_number()) fail(path + key, "must be a number");
    return it->get<double>();
}

inline long int_at(const json& j, const std::string& path, const char* key, long fallback) {
    auto it = j.find(key);
    if (it == j.end()) return fallback;
    if (!it->is_number_integer()) fail(path + key, "must be an integer");
    return it->get<long>();
}

inline bool bool_at(const json& j, const std::string& path, const char* key, bool fallback) {
    auto it = j.find(key);
    if (it == j.end()) return fallback;
    if (!it->is_boolean()) fail(path + key, "must be a boolean");
    return it->get<bool>();
}

inline std::string str_at(const json& j, const std::string& path, const char* key, const std::string& fallback) {
    auto it = j.find(key);
    if (it == j.end()) return fallback;
    if (!it->is_string()) fail(path + key, "must be a string");
    return it->get<std::string>();
}

inline GlmFamily parse_family(const json& j, const std::string& path) {
    const std::string name = str_at(j, path, "family", "gaussian");
    GlmFamily fam;
    if (name == "gaussian") fam.kind = FamilyKind::Gaussian;
    else if (name == "logistic") fam.kind = FamilyKind::Logistic;
    else if (name == "poisson") fam.kind = FamilyKind::Poisson;
    else fail(path + "family", "must be gaussian, logistic, or poisson");
    fam.dispersion = num_at(j, path, "dispersion", 1.0);
    if (!(fam.dispersion >= 0.0)) fail(path + "dispersion", "must be >= 0");
    return fam;
}

inline DesignSpec parse_design(const json& j, const std::string& path, Index p) {
    DesignSpec d;
    d.p = p;
    check_keys(j, path, {"covariance", "rho", "sigma", "entry_law"});
    const std::string cov = str_at(j, path, "covariance", "identity");
    if (cov == "identity") d.covariance = CovarianceKind::Identity;
    else if (cov == "ar1") d.covariance = CovarianceKind::Ar1;
    else if (cov == "user") d.covariance = CovarianceKind::UserMatrix;
    else fail(path + "covariance", "must be identity, ar1, or user");
    d.rho = num_at(j, path, "rho", 0.0);
    if (d.covariance == CovarianceKind::Ar1 && !(d.rho >= 0.0 && d.rho < 1.0))
        fail(path + "rho", "must be in [0,1)");
    if (d.covariance == CovarianceKind::UserMatrix) {
        auto it = j.find("sigma");
        if (it == j.end() || !it->is_array()) fail(path + "sigma", "user covariance needs a p x p array");
        MatrixXd sigma(p, p);
        if (static_cast<Index>(it->size()) != p) fail(path + "sigma", "must have p rows");
        for (Index r = 0; r < p; ++r) {
            const json& rowj = (*it)[static_cast<std::size_t>(r)];
            if (!rowj.is_array() || static_cast<Index>(rowj.size()) != p)
                fail(path + "sigma", "must have p columns per row");
            for (Index c = 0; c < p; ++c) sigma(r, c) = rowj[static_cast<std::size_t>(c)].get<double>();
        }
        d.user_sigma = std::move(sigma);
    }
    const std::string law = str_at(j, path, "entry_law", "gaussian");
    if (law == "gaussian") d.entry_law = EntryLaw::GaussianStd;
    else if (law == "rademacher") d.entry_law = EntryLaw::RademacherStd;
    else if (law == "heavy_tail_unsupported") d.entry_law = EntryLaw::HeavyTailUnsupported;
    else fail(path + "entry_law", "must be gaussian, rademacher, or heavy_tail_unsupported");
    return d;
}

inline TruthSpec parse_truth(const json& j, const std::string& path, Index p) {
    TruthSpec t;
    t.p = p;
    check_keys(j, path, {"s", "support", "magnitude", "value", "lo", "hi"});
    t.s = int_at(j, path, "s", 1);
    if (t.s < 1 || t.s > p) fail(path + "s", "must satisfy 1 <= s <= p");
    const std::string sup = str_at(j, path, "support", "first");
    if (sup == "first") t.support_rule = SupportRule::FirstS;
    else if (sup == "random") t.support_rule = SupportRule::RandomS;
    else fail(path + "support", "must be first or random");
    const std::string mag = str_at(j, path, "magnitude", "constant");
    if (mag == "constant") t.magnitude_rule = MagnitudeRule::Constant;
    else if (mag == "signed_constant") t.magnitude_rule = MagnitudeRule::SignedConstant;
    else if (mag == "uniform") t.magnitude_rule = MagnitudeRule::UniformRange;
    else fail(path + "magnitude", "must be constant, signed_constant, or uniform");
    t.value = num_at(j, path, "value", 1.0);
    t.lo = num_at(j, path, "lo", 0.5);
    t.hi = num_at(j, path, "hi", 1.5);
    if (t.magnitude_rule != MagnitudeRule::UniformRange && t.value == 0.0)
        fail(path + "value", "must be nonzero");
    if (t.magnitude_rule == MagnitudeRule::UniformRange && !(t.lo > 0.0 && t.hi >= t.lo))
        fail(path + "lo", "need 0 < lo <= hi");
    return t;
}

inline StreamSpec parse_stream(const json& j, const std::string& path) {
    check_keys(j, path,
               {"p", "num_batches", "batch_size", "batch_sizes", "family", "dispersion", "design", "truth"});
    StreamSpec s;
    const long p = int_at(j, path, "p", 0);
    if (p < 1) fail(path + "p", "must be a positive integer");
    s.family = parse_family(j, path);
    auto sched = j.find("batch_sizes");
    if (sched != j.end()) {
        if (!sched->is_array() || sched->empty()) fail(path + "batch_sizes", "must be a nonempty array");
        for (const json& v : *sched) {
            if (!v.is_number_integer() || v.get<long>() < 1)
                fail(path + "batch_sizes", "entries must be positive integers");
            s.batch_schedule.push_back(v.get<long>());
        }
        s.num_batches = static_cast<long>(s.batch_schedule.size());
        const long nb = int_at(j, path, "num_batches", s.num_batches);
        if (nb != s.num_batches) fail(path + "num_batches", "conflicts with batch_sizes");
    } else {
        s.constant_n = int_at(j, path, "batch_size", 0);
        if (s.constant_n < 1) fail(path + "batch_size", "must be a positive integer");
        s.num_batches = int_at(j, path, "num_batches", 0);
        if (s.num_batches < 0) fail(path + "num_batches", "must be >= 0");
    }
    auto design = j.find("design");
    s.design = design != j.end() ? parse_design(*design, path + "design.", p) : DesignSpec{p};
    auto truth = j.find("truth");
    TruthSpec t;
    t.p = p;
    s.truth = truth != j.end() ? parse_truth(*truth, path + "truth.", p) : t;
    return s;
}

inline IhtConfig parse_adiht(const json& j, const std::string& path) {
    check_keys(j, path,
               {"kappa", "eta_const", "refine_const", "lambda_floor_const", "lambda_init", "start",
                "max_iters_cap", "eta_calibration_dim", "on_error"});
    IhtConfig c;
    c.kappa = num_at(j, path, "kappa", c.kappa);
    if (!(c.kappa > 0.0 && c.kappa < 1.0)) fail(path + "kappa", "must be in (0,1)");
    c.eta_const = num_at(j, path, "eta_const", c.eta_const);
    if (!(c.eta_const > 0.0)) fail(path + "eta_const", "must be > 0");
    c.refine_const = num_at(j, path, "refine_const", c.refine_const);
    if (!(c.refine_const > 0.0)) fail(path + "refine_const", "must be > 0");
    auto floor = j.find("lambda_floor_const");
    if (floor != j.end() && !floor->is_null()) {
        if (floor->is_string() && floor->get<std::string>() == "auto") {
            // calibrated from batch-1 residuals
        } else if (floor->is_number() && floor->get<double>() > 0.0) {
            c.lambda_floor_const = floor->get<double>();
        } else {
            fail(path + "lambda_floor_const", "must be a positive number or \"auto\"");
        }
    }
    auto li = j.find("lambda_init");
    if (li != j.end()) {
        if (li->is_string() && li->get<std::string>() == "from_gradient") {
            c.lambda_init_rule = LambdaInitRule::FromGradient;
        } else if (li->is_number() && li->get<double>() > 0.0) {
            c.lambda_init_rule = LambdaInitRule::UserValue;
            c.lambda_init_value = li->get<double>();
        } else {
            fail(path + "lambda_init", "must be a positive number or \"from_gradient\"");
        }
    }
    const std::string start = str_at(j, path, "start", "cold");
    if (start == "cold") c.start_mode = StartMode::Cold;
    else if (start == "warm") c.start_mode = StartMode::Warm;
    else fail(path + "start", "must be cold or warm");
    auto cap = j.find("max_iters_cap");
    if (cap != j.end()) {
        if (!cap->is_number_integer() || cap->get<long>() < 1) fail(path + "max_iters_cap", "must be >= 1");
        c.max_iters_cap = cap->get<long>();
    }
    c.eta_calibration_dim = static_cast<int>(int_at(j, path, "eta_calibration_dim", 0));
    if (c.eta_calibration_dim < 0) fail(path + "eta_calibration_dim", "must be >= 0");
    const std::string on_error = str_at(j, path, "on_error", "abort");
    if (on_error == "abort") c.on_error = StreamErrorPolicy::Abort;
    else if (on_error == "skip") c.on_error = StreamErrorPolicy::Skip;
    else fail(path + "on_error", "must be abort or skip");
    return c;
}

inline RenewableParams parse_renewable(const json& j, const std::string& path) {
    check_keys(j, path, {"lambda_const", "inner_iters", "step"});
    RenewableParams r;
    r.lambda_const = num_at(j, path, "lambda_const", r.lambda_const);
    if (!(r.lambda_const > 0.0)) fail(path + "lambda_const", "must be > 0");
    r.inner_iters = int_at(j, path, "inner_iters", r.inner_iters);
    if (r.inner_iters < 1) fail(path + "inner_iters", "must be >= 1");
    auto step = j.find("step");
    if (step != j.end() && !step->is_null()) {
        if (step->is_string() && step->get<std::string>() == "auto") {
        } else if (step->is_number() && step->get<double>() > 0.0) {
            r.step = step->get<double>();
        } else {
            fail(path + "step", "must be a positive number or \"auto\"");
        }
    }
    return r;
}

}  // namespace cfgdetail

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
    using namespace cfgdetail;
    check_keys(j, "",
               {"stream", "method", "adiht", "renewable", "seeds", "output_dir", "emit_svg",
                "compute_oracle", "emit_wall_ms", "checkpoint"});
    ExperimentConfig cfg;
    auto stream = j.find("stream");
    if (stream != j.end()) {
        if (!stream->is_object()) fail("stream", "must be an object");
        cfg.stream = parse_stream(*stream, "stream.");
        cfg.has_stream = true;
    }
    const std::string method = str_at(j, "", "method", "adiht");
    if (method == "adiht") {
        cfg.run_adiht = true;
        cfg.run_renewable = false;
    } else if (method == "renewable") {
        cfg.run_adiht = false;
        cfg.run_renewable = true;
    } else if (method == "both") {
        cfg.run_adiht = cfg.run_renewable = true;
    } else {
        fail("method", "must be adiht, renewable, or both");
    }
    auto adiht = j.find("adiht");
    if (adiht != j.end()) cfg.adiht = parse_adiht(*adiht, "adiht.");
    auto renewable = j.find("renewable");
    if (renewable != j.end()) cfg.renewable = parse_renewable(*renewable, "renewable.");
    auto seeds = j.find("seeds");
    if (seeds == j.end() || !seeds->is_array() || seeds->empty())
        fail("seeds", "must be a nonempty array of integers");
    for (const nlohmann::json& v : *seeds) {
        if (!v.is_number_integer()) fail("seeds", "entries must be integers");
        cfg.seeds.push_back(v.get<std::uint64_t>());
    }
    cfg.output_dir = str_at(j, "", "output_dir", "");
    if (cfg.output_dir.empty()) fail("output_dir", "missing required key");
    cfg.emit_svg = bool_at(j, "", "emit_svg", false);
    cfg.compute_oracle = bool_at(j, "", "compute_oracle", false);
    cfg.emit_wall_ms = bool_at(j, "", "emit_wall_ms", false);
    auto ckpt = j.find("checkpoint");
    if (ckpt != j.end()) {
        check_keys(*ckpt, "checkpoint.", {"at_batch", "path"});
        CheckpointSpec spec;
        spec.at_batch = int_at(*ckpt, "checkpoint.", "at_batch", -1);
        if (spec.at_batch < 0) fail("checkpoint.at_batch", "must be >= 0");
        spec.path = str_at(*ckpt, "checkpoint.", "path", "");
        if (spec.path.empty()) fail("checkpoint.path", "missing required key");
        cfg.checkpoint = std::move(spec);
        if (cfg.seeds.size() != 1 || (cfg.run_adiht && cfg.run_renewable))
            fail("checkpoint", "checkpointing requires a single seed and a single method");
    }
    return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path, "cannot open config file");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError(path, "config root must be an object");
    return parse_experiment_config(j);
}

// ---------------------------------------------------------------------------
// Task execution
// ---------------------------------------------------------------------------

struct TaskResult {
    MethodKind method = MethodKind::AdIht;
    std::uint64_t seed = 0;
    std::vector<BatchMetrics> rows;
    bool diverged = false;
    std::string message;
};

inline std::string task_csv_path(const ExperimentConfig& cfg, MethodKind method, std::uint64_t seed) {
    return cfg.output_dir + "/" + method_string(method) + "_" + std::to_string(seed) + ".csv";
}

namespace detail {

inline double sample_stddev(const VectorXd& v) {
    if (v.size() < 2) return 1.0;
    const double mean = v.mean();
    const double ss = (v.array() - mean).square().sum();
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace detail

/// Resolve the threshold-floor constant from batch-1 residuals: a provisional
/// fit at 2x the response spread, then 2x the spread of its residuals. Fully
/// deterministic given the batch, so a resumed run re-derives the same value.
inline double calibrate_lambda_floor_const(const GlmFamily& family, const BatchData& batch1,
                                           const IhtConfig& base) {
    IhtConfig provisional = base;
    provisional.lambda_floor_const = std::max(2.0 * detail::sample_stddev(batch1.response), 1e-8);
    const SummaryState fresh = init_state(batch1.p());
    VectorXd beta;
    try {
        beta = fit_batch(fresh, family, batch1, provisional).beta_hat;
    } catch (const DivergenceError&) {
        beta = VectorXd::Zero(batch1.p());
    }
    const VectorXd eta = batch1.design * beta;
    VectorXd resid(eta.size());
    for (Index i = 0; i < eta.size(); ++i) resid[i] = batch1.response[i] - link_deriv(family, eta[i]);
    return std::max(2.0 * detail::sample_stddev(resid), 1e-8);
}

namespace detail {

struct SimTaskInputs {
    const ExperimentConfig& cfg;
    MethodKind method;
    std::uint64_t seed;
    long start_batch = 1;
    const SummaryState* resume_state = nullptr;  // also carries the renewable state
    const VectorXd* resume_beta = nullptr;
};

inline BatchMetrics build_sim_metrics(const ExperimentConfig& cfg, MethodKind method, std::uint64_t seed,
                                      long b, long n_cum, const VectorXd& beta_hat, long iterations,
                                      double lambda_final, double wall_seconds, const BatchStream& stream,
                                      const ScoreAccumulator& score, std::optional<double> oracle_ratio) {
    BatchMetrics m;
    m.b = b;
    m.n_cumulative = n_cum;
    m.method = method_string(method);
    m.seed = seed;
    const double l2 = l2_error(beta_hat, stream.beta_star());
    m.l2 = l2;
    m.linf = linf_error(beta_hat, stream.beta_star());
    m.support_size = static_cast<long>(support_of(beta_hat).size());
    const SupportErrors se = support_errors(beta_hat, stream.support_star());
    m.false_positives = se.false_positives;
    m.false_negatives = se.false_negatives;
    m.scaled = scaled_error(l2, n_cum, stream.spec().truth.s, stream.spec().design.p, b);
    const ScoreAccumulator::Reading reading = score.read();
    m.alpha_emp = reading.alpha;
    m.theta_emp = reading.theta;
    m.oracle_ratio = oracle_ratio;
    m.iterations = iterations;
    m.lambda_final = lambda_final;
    if (cfg.emit_wall_ms) m.wall_ms = wall_seconds * 1000.0;
    return m;
}

inline std::optional<double> oracle_ratio_at(const GlmFamily& family,
                                             const std::vector<BatchData>& retained,
                                             const BatchStream& stream, double l2) {
    try {
        const VectorXd beta_oracle = oracle_support_mle(family, retained, stream.support_star());
        const double l2_oracle = l2_error(beta_oracle, stream.beta_star());
        if (l2_oracle > 0.0) return l2 / l2_oracle;
        return std::nullopt;
    } catch (const std::exception&) {
        return std::nullopt;  // singular or non-converged oracle: leave the column empty
    }
}

inline void save_checkpoint_file(const std::string& path, const SummaryState& state, const VectorXd& beta) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path);
    checkpoint_save(state, beta, out);
}

inline TaskResult run_sim_task(const SimTaskInputs& in) {
    const ExperimentConfig& cfg = in.cfg;
    TaskResult out;
    out.method = in.method;
    out.seed = in.seed;

    StreamSpec sspec = cfg.stream;
    sspec.seed = in.seed;
    BatchStream stream(sspec);
    const Index p = sspec.design.p;
    const long total_batches = stream.num_batches();
    const GlmFamily family = sspec.family;

    std::ofstream csv(task_csv_path(cfg, in.method, in.seed), std::ios::binary);
    if (!csv) throw ConfigError("output_dir", "cannot write into '" + cfg.output_dir + "'");
    csv << kMetricsCsvHeader << '\n';

    IhtConfig iht = cfg.adiht;
    if (in.method == MethodKind::AdIht && !iht.lambda_floor_const && total_batches >= 1)
        iht.lambda_floor_const = calibrate_lambda_floor_const(family, stream.batch(1), iht);

    ScoreAccumulator score(family, stream.beta_star());
    std::vector<BatchData> retained;
    for (long b = 1; b < in.start_batch; ++b) {  // resumed diagnostics replay the early batches
        BatchData batch = stream.batch(b);
        score.absorb(batch);
        if (cfg.compute_oracle) retained.push_back(std::move(batch));
    }

    const bool want_checkpoint = cfg.checkpoint.has_value() && in.start_batch == 1;
    if (want_checkpoint && cfg.checkpoint->at_batch == 0)
        save_checkpoint_file(cfg.checkpoint->path, init_state(p), VectorXd::Zero(p));

    auto emit = [&](const BatchMetrics& m) {
        write_metrics_row(csv, m);
        csv.flush();
        out.rows.push_back(m);
    };

    if (in.method == MethodKind::AdIht) {
        SummaryState state = in.resume_state ? *in.resume_state : init_state(p);
        VectorXd previous = in.resume_beta ? *in.resume_beta : VectorXd::Zero(p);
        long cursor = in.start_batch;
        auto source = [&]() -> std::optional<BatchData> {
            if (cursor > total_batches) return std::nullopt;
            BatchData batch = stream.batch(cursor++);
            score.absorb(batch);
            if (cfg.compute_oracle) retained.push_back(batch);
            return batch;
        };
        auto sink = [&](EstimateRecord&& rec) {
            std::optional<double> ratio;
            if (cfg.compute_oracle)
                ratio = oracle_ratio_at(family, retained, stream, l2_error(rec.beta_hat, stream.beta_star()));
            emit(build_sim_metrics(cfg, in.method, in.seed, rec.batch_index, rec.n_cumulative,
                                   rec.beta_hat, rec.iterations_run, rec.lambda_final, rec.wall_seconds,
                                   stream, score, ratio));
        };
        auto after_absorb = [&](const SummaryState& st, const VectorXd& beta, long b) {
            if (want_checkpoint && cfg.checkpoint->at_batch == b)
                save_checkpoint_file(cfg.checkpoint->path, st, beta);
        };
        try {
            process_stream(std::move(state), std::move(previous), source, family, iht, sink, after_absorb);
        } catch (const DivergenceError& e) {
            out.diverged = true;
            out.message = e.what();
        }
        return out;
    }

    // renewable baseline
    RenewableState state = init_renewable(p);
    if (in.resume_state) {
        state.hess_cum = in.resume_state->hess;
        state.n_total = in.resume_state->n_total;
        state.batches_absorbed = in.resume_state->batches_absorbed;
        if (in.resume_beta) state.beta_prev = *in.resume_beta;
    }
    for (long b = in.start_batch; b <= total_batches; ++b) {
        BatchData batch = stream.batch(b);
        score.absorb(batch);
        if (cfg.compute_oracle) retained.push_back(batch);
        const long n_cum = state.n_total + static_cast<long>(batch.n());
        const double lambda_b =
            cfg.renewable.lambda_const *
            std::sqrt(std::log(static_cast<double>(p)) / static_cast<double>(n_cum));
        const double step =
            cfg.renewable.step ? *cfg.renewable.step : renewable_auto_step(state, family, batch);
        const auto started = std::chrono::steady_clock::now();
        VectorXd beta;
        try {
            beta = fit_batch_renewable(state, family, batch, lambda_b, cfg.renewable.inner_iters, step);
        } catch (const DivergenceError& e) {
            out.diverged = true;
            out.message = e.what();
            break;
        }
        const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - started;
        std::optional<double> ratio;
        if (cfg.compute_oracle)
            ratio = oracle_ratio_at(family, retained, stream, l2_error(beta, stream.beta_star()));
        emit(build_sim_metrics(cfg, in.method, in.seed, b, n_cum, beta, cfg.renewable.inner_iters,
                               lambda_b, elapsed.count(), stream, score, ratio));
        absorb_renewable(state, family, std::move(batch), beta);
        if (want_checkpoint && cfg.checkpoint->at_batch == b) {
            SummaryState as_summary = init_state(p);
            as_summary.hess = state.hess_cum;
            as_summary.n_total = state.n_total;
            as_summary.batches_absorbed = state.batches_absorbed;
            save_checkpoint_file(cfg.checkpoint->path, as_summary, state.beta_prev);
        }
    }
    return out;
}

inline unsigned worker_count(std::size_t tasks) {
    unsigned n = std::thread::hardware_concurrency();
    if (n == 0) n = 1;
    if (const char* env = std::getenv("STREAMSPARSE_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end && *end == '\0' && v >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(v));
    }
    return std::max<unsigned>(1, std::min<unsigned>(n, static_cast<unsigned>(tasks)));
}

template <class Fn>
void run_parallel(std::size_t task_count, Fn&& fn) {
    const unsigned workers = worker_count(task_count);
    if (workers <= 1) {
        for (std::size_t i = 0; i < task_count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(task_count);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            while (true) {
                const std::size_t i = next.fetch_add(1);
                if (i >= task_count) return;
                try {
                    fn(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    for (std::thread& t : pool) t.join();
    for (const std::exception_ptr& e : errors)
        if (e) std::rethrow_exception(e);
}

inline std::vector<double> column_values(const std::vector<const TaskResult*>& tasks, long b,
                                         bool scaled) {
    std::vector<double> vals;
    for (const TaskResult* t : tasks)
        for (const BatchMetrics& m : t->rows)
            if (m.b == b) {
                const std::optional<double>& v = scaled ? m.scaled : m.l2;
                if (v) vals.push_back(*v);
            }
    return vals;
}

inline double median_of(std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline void emit_svg(const ExperimentConfig& cfg, const std::vector<TaskResult>& results, long batches) {
    std::vector<CurveSeries> series;
    const struct {
        MethodKind method;
        const char* color;
    } palette[] = {{MethodKind::AdIht, "#1f77b4"}, {MethodKind::Renewable, "#d62728"}};
    for (const auto& entry : palette) {
        std::vector<const TaskResult*> tasks;
        for (const TaskResult& r : results)
            if (r.method == entry.method) tasks.push_back(&r);
        if (tasks.empty()) continue;
        CurveSeries l2{std::string(method_string(entry.method)) + " median l2", entry.color, false, {}};
        CurveSeries scaled{std::string(method_string(entry.method)) + " median scaled", entry.color, true, {}};
        for (long b = 1; b <= batches; ++b) {
            const double ml2 = median_of(column_values(tasks, b, false));
            const double msc = median_of(column_values(tasks, b, true));
            if (std::isfinite(ml2)) l2.points.emplace_back(b, ml2);
            if (std::isfinite(msc)) scaled.points.emplace_back(b, msc);
        }
        series.push_back(std::move(l2));
        series.push_back(std::move(scaled));
    }
    write_log_curve_svg(cfg.output_dir + "/error_curve.svg", "estimation error vs batch", series);
}

}  // namespace detail

/// Run every (method, seed) pair of the config, one worker per pair, one CSV
/// per pair. Returns 0, or 3 if any stream diverged (rows up to the failure
/// are preserved). The per-task results are appended to `collected` when
/// provided.
inline int run_simulate(const ExperimentConfig& cfg, std::ostream& err,
                        std::vector<TaskResult>* collected = nullptr) {
    if (!cfg.has_stream) throw ConfigError("stream", "missing required key");
    if (cfg.stream.num_batches < 0) throw ConfigError("stream.num_batches", "must be >= 0");
    std::error_code ec;
    std::filesystem::create_directories(cfg.output_dir, ec);
    if (ec) throw ConfigError("output_dir", "cannot create '" + cfg.output_dir + "': " + ec.message());

    std::vector<std::pair<MethodKind, std::uint64_t>> tasks;
    for (std::uint64_t seed : cfg.seeds) {
        if (cfg.run_adiht) tasks.emplace_back(MethodKind::AdIht, seed);
        if (cfg.run_renewable) tasks.emplace_back(MethodKind::Renewable, seed);
    }
    std::vector<TaskResult> results(tasks.size());
    detail::run_parallel(tasks.size(), [&](std::size_t i) {
        results[i] = detail::run_sim_task({cfg, tasks[i].first, tasks[i].second, 1, nullptr, nullptr});
    });

    if (cfg.emit_svg) detail::emit_svg(cfg, results, cfg.stream.num_batches);

    int code = 0;
    for (const TaskResult& r : results)
        if (r.diverged) {
            err << "divergence in " << method_string(r.method) << " seed " << r.seed << ": " << r.message
                << "\n";
            code = 3;
        }
    if (collected)
        for (TaskResult& r : results) collected->push_back(std::move(r));
    return code;
}

/// Continue a stream from a checkpoint: batches 1..k stay untouched (only the
/// cheap truth-side diagnostics are replayed from the generator), the
/// estimator runs on batches k+1.. from the stored summaries alone.
inline int run_resume(const std::string& checkpoint_path, const ExperimentConfig& cfg, std::ostream& err,
                      std::vector<TaskResult>* collected = nullptr) {
    if (!cfg.has_stream) throw ConfigError("stream", "missing required key");
    if (cfg.seeds.size() != 1 || (cfg.run_adiht && cfg.run_renewable))
        throw ConfigError("method", "resume requires a single seed and a single method");
    std::ifstream in(checkpoint_path, std::ios::binary);
    if (!in)
        throw CheckpointError(CheckpointError::Kind::Truncated,
                              "cannot open checkpoint '" + checkpoint_path + "'");
    auto [state, beta_hat] = checkpoint_load(in);
    if (state.p() != cfg.stream.design.p)
        throw CheckpointError(CheckpointError::Kind::DimensionOverflow,
                              "checkpoint dimension p=" + std::to_string(state.p()) +
                                  " does not match configured stream dimension p=" +
                                  std::to_string(cfg.stream.design.p));
    if (state.batches_absorbed > cfg.stream.num_batches)
        throw CheckpointError(CheckpointError::Kind::DimensionOverflow,
                              "checkpoint is ahead of the configured stream");
    std::error_code ec;
    std::filesystem::create_directories(cfg.output_dir, ec);
    if (ec) throw ConfigError("output_dir", "cannot create '" + cfg.output_dir + "': " + ec.message());

    const MethodKind method = cfg.run_adiht ? MethodKind::AdIht : MethodKind::Renewable;
    TaskResult result = detail::run_sim_task(
        {cfg, method, cfg.seeds.front(), state.batches_absorbed + 1, &state, &beta_hat});
    int code = 0;
    if (result.diverged) {
        err << "divergence in resumed " << method_string(method) << ": " << result.message << "\n";
        code = 3;
    }
    if (collected) collected->push_back(std::move(result));
    return code;
}

/// Run both methods with the oracle column filled and join everything into one
/// comparison CSV next to the per-task files.
inline int run_compare(ExperimentConfig cfg, std::ostream& err) {
    cfg.run_adiht = cfg.run_renewable = true;
    cfg.compute_oracle = true;
    std::vector<TaskResult> results;
    const int code = run_simulate(cfg, err, &results);
    std::sort(results.begin(), results.end(), [](const TaskResult& a, const TaskResult& b) {
        if (a.method != b.method) return a.method == MethodKind::AdIht;
        return a.seed < b.seed;
    });
    std::ofstream joined(cfg.output_dir + "/comparison.csv", std::ios::binary);
    joined << kMetricsCsvHeader << '\n';
    for (const TaskResult& r : results)
        for (const BatchMetrics& m : r.rows) write_metrics_row(joined, m);
    return code;
}

// ---------------------------------------------------------------------------
// CSV ingestion (real data streams)
// ---------------------------------------------------------------------------

struct IngestData {
    std::vector<std::string> feature_names;
    MatrixXd features;
    VectorXd response;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    return cells;
}

inline double parse_cell(const std::string& cell, long row, long col) {
    const char* begin = cell.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin || end != begin + cell.size() || !std::isfinite(v))
        throw IngestError(row, col, "non-numeric cell '" + cell + "'");
    return v;
}

}  // namespace detail

inline IngestData read_ingest_csv(const std::string& path, const std::string& response_column) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path, "cannot open data file");
    std::string line;
    if (!std::getline(in, line)) throw ConfigError(path, "empty data file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::vector<std::string> header = detail::split_csv_line(line);
    long response_idx = -1;
    for (std::size_t c = 0; c < header.size(); ++c)
        if (header[c] == response_column) response_idx = static_cast<long>(c);
    if (response_idx < 0)
        throw ConfigError("--response", "column '" + response_column + "' not found in the header");

    std::vector<std::vector<double>> rows;
    long line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::vector<std::string> cells = detail::split_csv_line(line);
        if (cells.size() != header.size())
            throw IngestError(line_no, static_cast<long>(cells.size()),
                              "expected " + std::to_string(header.size()) + " cells");
        std::vector<double> parsed(cells.size());
        for (std::size_t c = 0; c < cells.size(); ++c)
            parsed[c] = detail::parse_cell(cells[c], line_no, static_cast<long>(c) + 1);
        rows.push_back(std::move(parsed));
    }
    if (rows.empty()) throw ConfigError(path, "no data rows");

    IngestData data;
    const Index n = static_cast<Index>(rows.size());
    const Index p = static_cast<Index>(header.size()) - 1;
    if (p < 1) throw ConfigError(path, "need at least one feature column");
    data.features.resize(n, p);
    data.response.resize(n);
    for (std::size_t c = 0; c < header.size(); ++c)
        if (static_cast<long>(c) != response_idx) data.feature_names.push_back(header[c]);
    for (Index i = 0; i < n; ++i) {
        Index f = 0;
        for (std::size_t c = 0; c < header.size(); ++c) {
            if (static_cast<long>(c) == response_idx)
                data.response[i] = rows[static_cast<std::size_t>(i)][c];
            else
                data.features(i, f++) = rows[static_cast<std::size_t>(i)][c];
        }
    }
    return data;
}

/// Chunk an ingested table into batches and run the streaming solver over it.
/// Truth-dependent columns stay empty.
inline int run_ingest(const std::string& csv_path, const std::string& response_column, long batch_size,
                      const ExperimentConfig& cfg, std::ostream& err) {
    if (batch_size < 1) throw ConfigError("--batch-size", "must be >= 1");
    const IngestData data = read_ingest_csv(csv_path, response_column);
    const Index p = data.features.cols();
    const Index n = data.features.rows();
    const long num_batches = static_cast<long>((n + batch_size - 1) / batch_size);

    std::error_code ec;
    std::filesystem::create_directories(cfg.output_dir, ec);
    if (ec) throw ConfigError("output_dir", "cannot create '" + cfg.output_dir + "': " + ec.message());
    std::ofstream csv(cfg.output_dir + "/adiht_ingest.csv", std::ios::binary);
    csv << kMetricsCsvHeader << '\n';

    auto chunk = [&](long b) {
        const Index start = static_cast<Index>((b - 1) * batch_size);
        const Index len = std::min<Index>(batch_size, n - start);
        return BatchData(data.features.middleRows(start, len), data.response.segment(start, len), b);
    };

    const GlmFamily family = cfg.has_stream ? cfg.stream.family : gaussian_family();
    IhtConfig iht = cfg.adiht;
    if (!iht.lambda_floor_const) iht.lambda_floor_const = calibrate_lambda_floor_const(family, chunk(1), iht);

    long cursor = 1;
    auto source = [&]() -> std::optional<BatchData> {
        if (cursor > num_batches) return std::nullopt;
        return chunk(cursor++);
    };
    int code = 0;
    auto sink = [&](EstimateRecord&& rec) {
        BatchMetrics m;
        m.b = rec.batch_index;
        m.n_cumulative = rec.n_cumulative;
        m.method = "adiht";
        m.support_size = static_cast<long>(rec.support.size());
        m.iterations = rec.iterations_run;
        m.lambda_final = rec.lambda_final;
        if (cfg.emit_wall_ms) m.wall_ms = rec.wall_seconds * 1000.0;
        write_metrics_row(csv, m);
        csv.flush();
    };
    try {
        process_stream(p, source, family, iht, sink);
    } catch (const DivergenceError& e) {
        err << "divergence during ingest: " << e.what() << "\n";
        code = 3;
    }
    return code;
}

}  // namespace streamsparse
