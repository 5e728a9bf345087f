#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <vector>

#include "streamsparse/errors.hpp"

namespace streamsparse {

/// Entrywise hard threshold: keep z_j iff |z_j| >= lambda, untouched (no shrinkage).
/// Ties are kept.
inline Eigen::VectorXd hard_threshold(const Eigen::VectorXd& z, double lambda) {
    if (!(lambda >= 0.0)) throw DomainError("hard_threshold: lambda must be >= 0");
    Eigen::VectorXd out(z.size());
    for (Eigen::Index j = 0; j < z.size(); ++j)
        out[j] = std::abs(z[j]) >= lambda ? z[j] : 0.0;
    return out;
}

inline std::vector<Eigen::Index> support_of(const Eigen::VectorXd& beta) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index j = 0; j < beta.size(); ++j)
        if (beta[j] != 0.0) idx.push_back(j);
    return idx;
}

/// Geometric threshold decay with a floor, plus a refinement budget once the
/// floor is reached.
struct ThresholdSchedule {
    double lambda_init;
    double lambda_floor;
    double kappa;
    double refine_const;

    ThresholdSchedule(double lambda_init_, double lambda_floor_, double kappa_, double refine_const_)
        : lambda_init(lambda_init_), lambda_floor(lambda_floor_), kappa(kappa_), refine_const(refine_const_) {
        if (!(lambda_floor > 0.0) || !(lambda_floor <= lambda_init))
            throw DomainError("ThresholdSchedule: need 0 < lambda_floor <= lambda_init");
        if (!(kappa > 0.0 && kappa < 1.0))
            throw DomainError("ThresholdSchedule: kappa must be in (0,1)");
        if (!(refine_const > 0.0))
            throw DomainError("ThresholdSchedule: refine_const must be > 0");
    }
};

/// max(kappa * lambda_t, lambda_floor); nonincreasing with fixed point at the floor.
inline double next_threshold(double lambda_t, const ThresholdSchedule& schedule) {
    return std::max(schedule.kappa * lambda_t, schedule.lambda_floor);
}

/// Decay steps to reach the floor plus refine_const * ln(N) refinement steps,
/// both rounded up; at least one iteration in total.
inline long planned_iterations(const ThresholdSchedule& schedule, long n_cumulative) {
    long decay = 0;
    if (schedule.lambda_init != schedule.lambda_floor)
        decay = static_cast<long>(
            std::ceil(std::log(schedule.lambda_floor / schedule.lambda_init) / std::log(schedule.kappa)));
    const long refine = static_cast<long>(
        std::ceil(schedule.refine_const * std::log(static_cast<double>(n_cumulative))));
    return std::max<long>(decay + refine, 1);
}

}  // namespace streamsparse
