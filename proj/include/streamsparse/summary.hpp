#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <utility>

#include "streamsparse/glm.hpp"

namespace streamsparse {

/// Cumulative summary statistics retained across batches: a p-vector `inter`
/// (gradients-at-estimates minus Hessian-times-estimate), the cumulative
/// Hessian, and the cumulative sample count. Storage is Theta(p^2) no matter
/// how many batches have been absorbed.
struct SummaryState {
    VectorXd inter;
    MatrixXd hess;
    long n_total = 0;
    long batches_absorbed = 0;

    Index p() const { return inter.size(); }
};

inline SummaryState init_state(Index p) {
    if (p < 1) throw DomainError("init_state: p must be >= 1");
    return {VectorXd::Zero(p), MatrixXd::Zero(p, p), 0, 0};
}

/// Fold one finished batch into the summaries, evaluated at that batch's final
/// estimate. Takes the batch by value: it is consumed, never retained.
inline void absorb_batch(SummaryState& state, const GlmFamily& family, BatchData batch,
                         const VectorXd& beta_hat) {
    if (batch.p() != state.p()) throw ShapeError("absorb_batch: batch dimension != state dimension");
    if (beta_hat.size() != state.p()) throw ShapeError("absorb_batch: beta_hat length != state dimension");
    if (!beta_hat.allFinite()) throw DomainError("absorb_batch: non-finite beta_hat");
    const VectorXd grad = batch_gradient(family, batch, beta_hat);
    const MatrixXd hess_b = batch_hessian(family, batch, beta_hat);
    state.inter += grad - hess_b * beta_hat;
    state.hess += hess_b;
    state.n_total += batch.n();
    state.batches_absorbed += 1;
}

/// grad f_b(beta) + inter + hess * beta: the streaming approximation of the
/// full cumulative gradient, with each past batch expanded at its own estimate.
inline VectorXd surrogate_gradient(const SummaryState& state, const GlmFamily& family,
                                   const BatchData& current_batch, const VectorXd& beta) {
    if (current_batch.p() != state.p())
        throw ShapeError("surrogate_gradient: batch dimension != state dimension");
    if (beta.size() != state.p())
        throw ShapeError("surrogate_gradient: beta length != state dimension");
    if (state.batches_absorbed == 0)
        return batch_gradient(family, current_batch, beta);
    return batch_gradient(family, current_batch, beta) + state.inter + state.hess * beta;
}

// Checkpoint layout, little-endian, no padding:
//   magic "ADS1" | version u32 = 1 | p u64 | n_total u64 | batches_absorbed u64
//   | beta_hat p*f64 | inter p*f64 | hess p*p*f64 (row-major)
// Total size: 4 + 4 + 24 + 8*(2p + p^2) bytes. Binary rather than text so a
// round trip reproduces every IEEE-754 payload bit.

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<std::uint64_t>(v)); }

inline std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw CheckpointError(CheckpointError::Kind::Truncated, "checkpoint truncated");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

inline std::uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8))
        throw CheckpointError(CheckpointError::Kind::Truncated, "checkpoint truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

inline double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

constexpr char kCheckpointMagic[4] = {'A', 'D', 'S', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;
constexpr std::uint64_t kMaxCheckpointDim = 1u << 24;  // 8 * p^2 stays well under size_t range

}  // namespace detail

inline void checkpoint_save(const SummaryState& state, const VectorXd& beta_hat, std::ostream& sink) {
    if (beta_hat.size() != state.p())
        throw ShapeError("checkpoint_save: beta_hat length != state dimension");
    sink.write(detail::kCheckpointMagic, 4);
    detail::put_u32(sink, detail::kCheckpointVersion);
    detail::put_u64(sink, static_cast<std::uint64_t>(state.p()));
    detail::put_u64(sink, static_cast<std::uint64_t>(state.n_total));
    detail::put_u64(sink, static_cast<std::uint64_t>(state.batches_absorbed));
    for (Index j = 0; j < state.p(); ++j) detail::put_f64(sink, beta_hat[j]);
    for (Index j = 0; j < state.p(); ++j) detail::put_f64(sink, state.inter[j]);
    for (Index i = 0; i < state.p(); ++i)
        for (Index j = 0; j < state.p(); ++j) detail::put_f64(sink, state.hess(i, j));
}

inline std::pair<SummaryState, VectorXd> checkpoint_load(std::istream& source) {
    char magic[4];
    if (!source.read(magic, 4))
        throw CheckpointError(CheckpointError::Kind::Truncated, "checkpoint truncated before magic");
    if (!std::equal(magic, magic + 4, detail::kCheckpointMagic))
        throw CheckpointError(CheckpointError::Kind::BadMagic, "not a checkpoint (bad magic)");
    const std::uint32_t version = detail::get_u32(source);
    if (version != detail::kCheckpointVersion)
        throw CheckpointError(CheckpointError::Kind::BadVersion,
                              "unsupported checkpoint version " + std::to_string(version));
    const std::uint64_t p64 = detail::get_u64(source);
    if (p64 == 0 || p64 > detail::kMaxCheckpointDim)
        throw CheckpointError(CheckpointError::Kind::DimensionOverflow,
                              "checkpoint dimension out of range: " + std::to_string(p64));
    const auto p = static_cast<Index>(p64);
    const std::uint64_t n_total = detail::get_u64(source);
    const std::uint64_t batches = detail::get_u64(source);
    VectorXd beta_hat(p);
    for (Index j = 0; j < p; ++j) beta_hat[j] = detail::get_f64(source);
    SummaryState state = init_state(p);
    for (Index j = 0; j < p; ++j) state.inter[j] = detail::get_f64(source);
    for (Index i = 0; i < p; ++i)
        for (Index j = 0; j < p; ++j) state.hess(i, j) = detail::get_f64(source);
    state.n_total = static_cast<long>(n_total);
    state.batches_absorbed = static_cast<long>(batches);
    return {std::move(state), std::move(beta_hat)};
}

}  // namespace streamsparse
