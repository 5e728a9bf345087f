#pragma once

#include <cstdio>
#include <ostream>
#include <string>

#include "streamsparse/metrics.hpp"

namespace streamsparse {

/// 17 significant digits: enough for a lossless double round trip.
inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline constexpr const char* kMetricsCsvHeader =
    "b,N_b,method,seed,l2_error,linf_error,support_size,fp,fn,scaled_error,"
    "alpha_emp,theta_emp,oracle_ratio,iters,lambda_final,wall_ms";

namespace detail {
template <class T>
std::string csv_cell(const std::optional<T>& v) {
    if (!v) return "";
    if constexpr (std::is_floating_point_v<T>)
        return format_double(*v);
    else
        return std::to_string(*v);
}
}  // namespace detail

inline void write_metrics_row(std::ostream& os, const BatchMetrics& m) {
    os << m.b << ',' << m.n_cumulative << ',' << m.method << ',' << detail::csv_cell(m.seed) << ','
       << detail::csv_cell(m.l2) << ',' << detail::csv_cell(m.linf) << ',' << m.support_size << ','
       << detail::csv_cell(m.false_positives) << ',' << detail::csv_cell(m.false_negatives) << ','
       << detail::csv_cell(m.scaled) << ',' << detail::csv_cell(m.alpha_emp) << ','
       << detail::csv_cell(m.theta_emp) << ',' << detail::csv_cell(m.oracle_ratio) << ','
       << m.iterations << ',' << format_double(m.lambda_final) << ','
       << detail::csv_cell(m.wall_ms) << '\n';
}

}  // namespace streamsparse
