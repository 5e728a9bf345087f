// Minimal end-to-end run: simulate a sparse Gaussian stream, solve it batch by
// batch, print the error trajectory.

#include <cstdio>

#include "streamsparse/adiht.hpp"
#include "streamsparse/metrics.hpp"
#include "streamsparse/simulate.hpp"

using namespace streamsparse;

int main() {
    StreamSpec spec;
    spec.design.p = 200;
    spec.truth.p = 200;
    spec.truth.s = 5;
    spec.truth.value = 1.0;
    spec.family = gaussian_family(1.0);
    spec.constant_n = 100;
    spec.num_batches = 15;
    spec.seed = 42;

    BatchStream stream(spec);
    IhtConfig cfg;
    cfg.lambda_floor_const = 2.0;

    std::printf("%4s %8s %10s %10s %6s\n", "b", "N_b", "l2", "scaled", "supp");
    process_stream(
        spec.design.p, [&] { return stream.next(); }, spec.family, cfg,
        [&](EstimateRecord&& rec) {
            const double l2 = l2_error(rec.beta_hat, stream.beta_star());
            std::printf("%4ld %8ld %10.5f %10.5f %6zu\n", rec.batch_index, rec.n_cumulative, l2,
                        scaled_error(l2, rec.n_cumulative, spec.truth.s, spec.design.p, rec.batch_index),
                        rec.support.size());
        });
    return 0;
}
