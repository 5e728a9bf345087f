#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "streamsparse/glm.hpp"

using namespace streamsparse;
using Catch::Approx;

namespace {

BatchData single_row(std::initializer_list<double> xs, double y) {
    MatrixXd x(1, static_cast<Index>(xs.size()));
    Index j = 0;
    for (double v : xs) x(0, j++) = v;
    VectorXd yy(1);
    yy[0] = y;
    return BatchData(std::move(x), std::move(yy), 1);
}

VectorXd vec(std::initializer_list<double> vs) {
    VectorXd v(static_cast<Index>(vs.size()));
    Index j = 0;
    for (double x : vs) v[j++] = x;
    return v;
}

GlmFamily family_of(int which) {
    switch (which) {
        case 0: return gaussian_family();
        case 1: return logistic_family();
        default: return poisson_family();
    }
}

// Random batch with responses on the family's natural scale.
BatchData random_batch(const GlmFamily& family, Index n, Index p, std::mt19937_64& gen) {
    std::normal_distribution<double> normal(0.0, 1.0);
    MatrixXd x(n, p);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < p; ++j) x(i, j) = normal(gen);
    VectorXd y(n);
    for (Index i = 0; i < n; ++i) {
        switch (family.kind) {
            case FamilyKind::Gaussian: y[i] = normal(gen); break;
            case FamilyKind::Logistic: y[i] = gen() % 2 ? 1.0 : 0.0; break;
            case FamilyKind::Poisson: y[i] = static_cast<double>(gen() % 5); break;
        }
    }
    return BatchData(std::move(x), std::move(y), 1);
}

VectorXd random_beta(Index p, std::mt19937_64& gen) {
    std::normal_distribution<double> normal(0.0, 0.5);
    VectorXd beta(p);
    for (Index j = 0; j < p; ++j) beta[j] = normal(gen);
    return beta;
}

}  // namespace

TEST_CASE("link functions match their closed forms") {
    CHECK(link_value(gaussian_family(), 2.0) == Approx(2.0));
    CHECK(link_value(logistic_family(), 0.0) == Approx(0.6931472).epsilon(1e-6));
    CHECK(link_value(poisson_family(), 1.0) == Approx(2.7182818).epsilon(1e-6));

    CHECK(link_deriv(gaussian_family(), 3.5) == Approx(3.5));
    CHECK(link_deriv(logistic_family(), 0.0) == Approx(0.5));
    CHECK(link_second(logistic_family(), 0.0) == Approx(0.25));
    CHECK(link_second(poisson_family(), 0.0) == Approx(1.0));

    SECTION("logistic evaluation stays finite far in the tails") {
        CHECK(link_value(logistic_family(), 1000.0) == Approx(1000.0));
        CHECK(link_value(logistic_family(), -1000.0) == Approx(0.0).margin(1e-300));
        CHECK(link_deriv(logistic_family(), 800.0) == Approx(1.0));
        CHECK(link_deriv(logistic_family(), -800.0) == Approx(0.0).margin(1e-300));
    }

    SECTION("non-finite input is rejected") {
        CHECK_THROWS_AS(link_value(gaussian_family(), std::nan("")), DomainError);
        CHECK_THROWS_AS(link_deriv(poisson_family(), INFINITY), DomainError);
    }
}

TEST_CASE("batch_loss worked examples") {
    CHECK(batch_loss(gaussian_family(), single_row({1, 0}, 2.0), vec({0, 0})).value == Approx(0.0));
    CHECK(batch_loss(gaussian_family(), single_row({1, 2}, 3.0), vec({1, 1})).value == Approx(-4.5));
    CHECK(batch_loss(logistic_family(), single_row({1}, 1.0), vec({0})).value ==
          Approx(0.6931472).epsilon(1e-6));

    SECTION("Poisson overflow saturates to +inf with the flag set") {
        const LossValue lv = batch_loss(poisson_family(), single_row({1}, 0.0), vec({1000}));
        CHECK(lv.overflowed);
        CHECK(std::isinf(lv.value));
        CHECK(lv.value > 0);
    }

    SECTION("shape mismatch") {
        CHECK_THROWS_AS(batch_loss(gaussian_family(), single_row({1, 2}, 3.0), vec({1})), ShapeError);
    }
}

TEST_CASE("batch_gradient worked examples") {
    const VectorXd g1 = batch_gradient(gaussian_family(), single_row({1, 2}, 3.0), vec({0, 0}));
    CHECK(g1[0] == Approx(-3.0));
    CHECK(g1[1] == Approx(-6.0));

    const VectorXd g2 = batch_gradient(logistic_family(), single_row({1, 0}, 1.0), vec({0, 0}));
    CHECK(g2[0] == Approx(-0.5));
    CHECK(g2[1] == Approx(0.0).margin(0.0));

    SECTION("two stacked rows equal the sum of single-row gradients") {
        MatrixXd x(2, 2);
        x << 1.0, 2.0, -0.5, 0.25;
        VectorXd y(2);
        y << 3.0, 1.0;
        const BatchData both(x, y, 1);
        const VectorXd beta = vec({0.3, -0.7});
        for (int f = 0; f < 3; ++f) {
            const GlmFamily fam = family_of(f);
            const VectorXd sum = batch_gradient(fam, single_row({1, 2}, 3.0), beta) +
                                 batch_gradient(fam, single_row({-0.5, 0.25}, 1.0), beta);
            const VectorXd whole = batch_gradient(fam, both, beta);
            CHECK((whole - sum).lpNorm<Eigen::Infinity>() <=
                  1e-12 * std::max(1.0, sum.lpNorm<Eigen::Infinity>()));
        }
    }
}

TEST_CASE("batch_hessian worked examples") {
    const MatrixXd h1 = batch_hessian(gaussian_family(), single_row({1, 2}, 3.0), vec({7, -1}));
    CHECK(h1(0, 0) == Approx(1.0));
    CHECK(h1(0, 1) == Approx(2.0));
    CHECK(h1(1, 0) == Approx(2.0));
    CHECK(h1(1, 1) == Approx(4.0));

    CHECK(batch_hessian(logistic_family(), single_row({1}, 0.0), vec({0}))(0, 0) == Approx(0.25));
    CHECK(batch_hessian(poisson_family(), single_row({1}, 0.0), vec({0}))(0, 0) == Approx(1.0));
}

TEST_CASE("gradient matches central finite differences of the loss") {
    std::mt19937_64 gen(20240801);
    std::uniform_int_distribution<Index> n_dist(1, 20), p_dist(1, 10);
    const double h = 1e-5;
    for (int draw = 0; draw < 200; ++draw) {
        const GlmFamily family = family_of(draw % 3);
        const Index n = n_dist(gen), p = p_dist(gen);
        const BatchData batch = random_batch(family, n, p, gen);
        VectorXd beta = random_beta(p, gen);
        const VectorXd grad = batch_gradient(family, batch, beta);
        VectorXd fd(p);
        for (Index j = 0; j < p; ++j) {
            VectorXd up = beta, dn = beta;
            up[j] += h;
            dn[j] -= h;
            fd[j] = (batch_loss(family, batch, up).value - batch_loss(family, batch, dn).value) / (2 * h);
        }
        const double scale = std::max(1.0, grad.lpNorm<Eigen::Infinity>());
        REQUIRE((fd - grad).lpNorm<Eigen::Infinity>() <= 1e-6 * scale);
    }
}

TEST_CASE("hessian matches finite differences of the gradient, is symmetric and PSD") {
    std::mt19937_64 gen(20240802);
    std::uniform_int_distribution<Index> n_dist(1, 20), p_dist(1, 10);
    const double h = 1e-5;
    for (int draw = 0; draw < 200; ++draw) {
        const GlmFamily family = family_of(draw % 3);
        const Index n = n_dist(gen), p = p_dist(gen);
        const BatchData batch = random_batch(family, n, p, gen);
        VectorXd beta = random_beta(p, gen);
        const MatrixXd hess = batch_hessian(family, batch, beta);

        REQUIRE(hess == hess.transpose());  // exact, by construction

        MatrixXd fd(p, p);
        for (Index j = 0; j < p; ++j) {
            VectorXd up = beta, dn = beta;
            up[j] += h;
            dn[j] -= h;
            fd.col(j) = (batch_gradient(family, batch, up) - batch_gradient(family, batch, dn)) / (2 * h);
        }
        const double scale = std::max(1.0, hess.lpNorm<Eigen::Infinity>());
        REQUIRE((fd - hess).lpNorm<Eigen::Infinity>() <= 1e-5 * scale);

        Eigen::SelfAdjointEigenSolver<MatrixXd> eig(hess);
        REQUIRE(eig.eigenvalues().minCoeff() >= -1e-10 * hess.operatorNorm());
    }
}

TEST_CASE("loss, gradient and hessian are additive over rows") {
    std::mt19937_64 gen(20240803);
    for (int draw = 0; draw < 30; ++draw) {
        const GlmFamily family = family_of(draw % 3);
        const Index n = 6, p = 4;
        const BatchData batch = random_batch(family, n, p, gen);
        const VectorXd beta = random_beta(p, gen);

        double loss_sum = 0.0;
        VectorXd grad_sum = VectorXd::Zero(p);
        MatrixXd hess_sum = MatrixXd::Zero(p, p);
        for (Index i = 0; i < n; ++i) {
            const BatchData row(batch.design.row(i), batch.response.segment(i, 1), 1);
            loss_sum += batch_loss(family, row, beta).value;
            grad_sum += batch_gradient(family, row, beta);
            hess_sum += batch_hessian(family, row, beta);
        }
        const double whole = batch_loss(family, batch, beta).value;
        CHECK(std::abs(whole - loss_sum) <= 1e-12 * std::max(1.0, std::abs(whole)));
        CHECK((batch_gradient(family, batch, beta) - grad_sum).lpNorm<Eigen::Infinity>() <=
              1e-12 * std::max(1.0, grad_sum.lpNorm<Eigen::Infinity>()));
        CHECK((batch_hessian(family, batch, beta) - hess_sum).lpNorm<Eigen::Infinity>() <=
              1e-12 * std::max(1.0, hess_sum.lpNorm<Eigen::Infinity>()));
    }
}

TEST_CASE("BatchData validates its invariants") {
    MatrixXd x(2, 2);
    x.setOnes();
    VectorXd y(3);
    y.setZero();
    CHECK_THROWS_AS(BatchData(x, y, 1), ShapeError);
    VectorXd y2(2);
    y2.setZero();
    CHECK_THROWS_AS(BatchData(x, y2, 0), DomainError);
    MatrixXd bad = x;
    bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(BatchData(bad, y2, 1), DomainError);
}
