#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Eigenvalues>

#include "streamsparse/simulate.hpp"

using namespace streamsparse;
using Catch::Approx;

TEST_CASE("sub-seeds depend on both the seed and the counter") {
    CHECK(derive_subseed(1, 1) != derive_subseed(1, 2));
    CHECK(derive_subseed(1, 1) != derive_subseed(2, 1));
    CHECK(derive_subseed(7, 3) == derive_subseed(7, 3));
}

TEST_CASE("identity-covariance Gaussian design has near-identity sample covariance") {
    DesignSpec spec;
    spec.p = 4;
    Rng rng(derive_subseed(99, 1));
    const MatrixXd x = make_design(spec, 1000, rng);
    const MatrixXd cov = x.transpose() * x / 1000.0;
    CHECK((cov - MatrixXd::Identity(4, 4)).lpNorm<Eigen::Infinity>() <= 0.2);
}

TEST_CASE("ar1 with rho = 0 degenerates to the identity path bit for bit") {
    DesignSpec identity;
    identity.p = 6;
    DesignSpec ar1 = identity;
    ar1.covariance = CovarianceKind::Ar1;
    ar1.rho = 0.0;
    Rng r1(derive_subseed(5, 1)), r2(derive_subseed(5, 1));
    REQUIRE(make_design(identity, 20, r1) == make_design(ar1, 20, r2));
}

TEST_CASE("rademacher entries are exactly unit magnitude before mixing") {
    DesignSpec spec;
    spec.p = 5;
    spec.entry_law = EntryLaw::RademacherStd;
    Rng rng(derive_subseed(11, 1));
    const MatrixXd x = make_design(spec, 50, rng);
    for (Index i = 0; i < x.rows(); ++i)
        for (Index j = 0; j < x.cols(); ++j) REQUIRE(std::abs(x(i, j)) == 1.0);
}

TEST_CASE("ar1 spectrum lies inside the closed-form bounds") {
    for (double rho : {0.2, 0.5, 0.8}) {
        DesignSpec spec;
        spec.p = 30;
        spec.covariance = CovarianceKind::Ar1;
        spec.rho = rho;
        MatrixXd sigma(spec.p, spec.p);
        for (Index i = 0; i < spec.p; ++i)
            for (Index j = 0; j < spec.p; ++j)
                sigma(i, j) = std::pow(rho, std::abs(static_cast<double>(i - j)));
        Eigen::SelfAdjointEigenSolver<MatrixXd> eig(sigma);
        const auto [lo, hi] = ar1_eigen_bounds(rho);
        REQUIRE(eig.eigenvalues().minCoeff() >= lo - 1e-8);
        REQUIRE(eig.eigenvalues().maxCoeff() <= hi + 1e-8);
    }
}

TEST_CASE("user covariance must be positive definite") {
    DesignSpec spec;
    spec.p = 2;
    spec.covariance = CovarianceKind::UserMatrix;
    spec.user_sigma = MatrixXd(2, 2);
    spec.user_sigma << 1.0, 2.0, 2.0, 1.0;  // indefinite
    Rng rng(1);
    CHECK_THROWS_AS(make_design(spec, 5, rng), DomainError);
}

TEST_CASE("heavy-tail entry law roughly preserves unit variance") {
    DesignSpec spec;
    spec.p = 2;
    spec.entry_law = EntryLaw::HeavyTailUnsupported;
    Rng rng(derive_subseed(23, 1));
    const MatrixXd x = make_design(spec, 4000, rng);
    const double var = x.array().square().mean();
    CHECK(var == Approx(1.0).margin(0.35));
}

TEST_CASE("make_truth") {
    SECTION("first-s support with constant magnitude") {
        TruthSpec spec;
        spec.p = 5;
        spec.s = 2;
        Rng rng(1);
        auto [beta, support] = make_truth(spec, rng);
        REQUIRE(support == std::vector<Index>{0, 1});
        CHECK(beta[0] == 1.0);
        CHECK(beta[1] == 1.0);
        CHECK(beta.tail(3).isZero(0.0));
    }

    SECTION("signed constant puts +/- value on every support entry") {
        TruthSpec spec;
        spec.p = 40;
        spec.s = 40;
        spec.magnitude_rule = MagnitudeRule::SignedConstant;
        spec.value = 2.5;
        Rng rng(derive_subseed(3, 0));
        auto [beta, support] = make_truth(spec, rng);
        bool saw_plus = false, saw_minus = false;
        for (Index j : support) {
            REQUIRE(std::abs(beta[j]) == 2.5);
            saw_plus = saw_plus || beta[j] > 0;
            saw_minus = saw_minus || beta[j] < 0;
        }
        CHECK(saw_plus);
        CHECK(saw_minus);
    }

    SECTION("random support is reproducible and the right size") {
        TruthSpec spec;
        spec.p = 30;
        spec.s = 7;
        spec.support_rule = SupportRule::RandomS;
        Rng r1(derive_subseed(9, 0)), r2(derive_subseed(9, 0));
        auto [b1, s1] = make_truth(spec, r1);
        auto [b2, s2] = make_truth(spec, r2);
        REQUIRE(s1 == s2);
        REQUIRE(b1 == b2);
        REQUIRE(s1.size() == 7);
        for (std::size_t i = 1; i < s1.size(); ++i) REQUIRE(s1[i] > s1[i - 1]);
    }

    SECTION("s out of range") {
        TruthSpec spec;
        spec.p = 3;
        spec.s = 4;
        Rng rng(1);
        CHECK_THROWS_AS(make_truth(spec, rng), DomainError);
    }
}

TEST_CASE("make_responses") {
    DesignSpec dspec;
    dspec.p = 3;
    Rng xr(derive_subseed(17, 1));
    const MatrixXd x = make_design(dspec, 10000, xr);
    VectorXd beta_star = VectorXd::Zero(3);

    SECTION("noiseless Gaussian limit is exact") {
        beta_star << 1.0, -2.0, 0.5;
        Rng rng(derive_subseed(17, 2));
        const ResponseSample resp = make_responses(gaussian_family(0.0), x, beta_star, rng);
        REQUIRE(resp.values == x * beta_star);
        CHECK_FALSE(resp.capped);
    }

    SECTION("logistic at even odds has empirical mean near one half") {
        Rng rng(derive_subseed(17, 3));
        const ResponseSample resp = make_responses(logistic_family(), x, beta_star, rng);
        for (Index i = 0; i < 20; ++i) REQUIRE((resp.values[i] == 0.0 || resp.values[i] == 1.0));
        const double mean = resp.values.mean();
        CHECK(mean >= 0.48);
        CHECK(mean <= 0.52);
    }

    SECTION("unit-rate Poisson has empirical mean near one") {
        Rng rng(derive_subseed(17, 4));
        const ResponseSample resp = make_responses(poisson_family(), x, beta_star, rng);
        const double mean = resp.values.mean();
        CHECK(mean >= 0.97);
        CHECK(mean <= 1.03);
        CHECK_FALSE(resp.capped);
    }

    SECTION("a blown-up Poisson rate is capped and flagged") {
        MatrixXd one(1, 1);
        one << 1.0;
        VectorXd huge(1);
        huge << 800.0;
        Rng rng(derive_subseed(17, 5));
        const ResponseSample resp = make_responses(poisson_family(), one, huge, rng);
        CHECK(resp.capped);
        CHECK(resp.values[0] == 1e9);
    }

    SECTION("large-rate draws use the rejection sampler and stay near the rate") {
        MatrixXd ones = MatrixXd::Ones(4000, 1);
        VectorXd rate_log(1);
        rate_log << std::log(100.0);
        Rng rng(derive_subseed(17, 6));
        const ResponseSample resp = make_responses(poisson_family(), ones, rate_log, rng);
        CHECK(resp.values.mean() == Approx(100.0).margin(1.0));
    }
}

TEST_CASE("BatchStream") {
    StreamSpec spec;
    spec.design.p = 6;
    spec.truth.p = 6;
    spec.truth.s = 2;
    spec.family = gaussian_family(1.0);
    spec.constant_n = 8;
    spec.num_batches = 5;
    spec.seed = 2024;

    SECTION("random access to batch 7 without generating the earlier ones") {
        StreamSpec wide = spec;
        wide.num_batches = 10;
        BatchStream sequential(wide), direct(wide);
        for (long b = 1; b <= 6; ++b) sequential.next();
        const BatchData via_next = *sequential.next();
        const BatchData via_index = direct.batch(7);
        REQUIRE(via_next.design == via_index.design);
        REQUIRE(via_next.response == via_index.response);
        REQUIRE(via_next.batch_index == 7);
    }

    SECTION("equal specs give bit-identical streams") {
        BatchStream a(spec), b(spec);
        REQUIRE(a.beta_star() == b.beta_star());
        for (long k = 1; k <= 5; ++k) {
            const BatchData ba = a.batch(k), bb = b.batch(k);
            REQUIRE(ba.design == bb.design);
            REQUIRE(ba.response == bb.response);
        }
    }

    SECTION("constant batch size accumulates as expected") {
        BatchStream s(spec);
        long total = 0, count = 0;
        while (auto batch = s.next()) {
            total += batch->n();
            ++count;
        }
        CHECK(count == 5);
        CHECK(total == 40);
    }

    SECTION("an explicit schedule yields exactly those sizes") {
        StreamSpec sched = spec;
        sched.batch_schedule = {100, 200};
        sched.num_batches = 0;  // inferred
        BatchStream s(sched);
        CHECK(s.num_batches() == 2);
        CHECK(s.batch(1).n() == 100);
        CHECK(s.batch(2).n() == 200);
        CHECK_THROWS_AS(s.batch(3), DomainError);
    }

    SECTION("truth dimension must match the design") {
        StreamSpec bad = spec;
        bad.truth.p = 5;
        CHECK_THROWS_AS(BatchStream(bad), ShapeError);
    }
}
