#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"

using namespace cgsam;
using test_helpers::log_at;
using test_helpers::max_abs;
using test_helpers::normal_log_pdf;
using test_helpers::random_spd;
using test_helpers::random_vec;

namespace {
const WorldMode k3d = WorldMode::threed();
const VariableId kX0 = VariableId::feature_var(0, k3d);  // dim 3
const VariableId kX1 = VariableId::feature_var(1, k3d);  // dim 3
const VariableId kP0 = VariableId::pose_var(0, k3d);     // dim 6
}  // namespace

TEST_CASE("from_moments reproduces the closed-form normal density on a grid") {
    std::mt19937_64 rng(21);
    const Vec mu = random_vec(rng, 3);
    const Mat cov = random_spd(rng, 3);
    const GaussianFactor f = GaussianFactor::from_moments({kX0}, mu, cov);
    for (int i = 0; i < 25; ++i) {
        const Vec x = random_vec(rng, 3, 2.0);
        REQUIRE(log_at(f, {{kX0, x}}) ==
                Catch::Approx(normal_log_pdf(x, mu, cov)).margin(1e-9));
    }
    const Moments back = f.to_moments();
    REQUIRE(max_abs(back.mean - mu) < 1e-10);
    REQUIRE(max_abs(back.cov - cov) < 1e-10);
}

TEST_CASE("from_canonical permutes unsorted scopes into canonical order") {
    std::mt19937_64 rng(22);
    // build parameters in (pose, feature) order; canonical order is (feature, pose)
    const int dp = 6, dx = 3, d = dp + dx;
    const Mat k = random_spd(rng, d);
    const Vec h = random_vec(rng, d);
    const GaussianFactor f = GaussianFactor::from_canonical({kP0, kX0}, k, h, 0.5);

    REQUIRE(f.scope().front() == kX0);  // features sort before poses
    const Mat kk = f.precision();
    REQUIRE(max_abs(kk.topLeftCorner(dx, dx) - k.bottomRightCorner(dx, dx)) == 0.0);
    REQUIRE(max_abs(kk.bottomRightCorner(dp, dp) - k.topLeftCorner(dp, dp)) == 0.0);
    REQUIRE(max_abs(kk.topRightCorner(dx, dp) - k.bottomLeftCorner(dx, dp)) == 0.0);
    REQUIRE(max_abs(f.info_vec().head(dx) - h.tail(dx)) == 0.0);
    REQUIRE(f.log_norm() == 0.5);

    REQUIRE_THROWS_AS(GaussianFactor::from_canonical({kX0, kX0}, random_spd(rng, 6),
                                                     random_vec(rng, 6), 0.0),
                      ScopeDimMismatch);
}

TEST_CASE("multiply adds log-densities pointwise (grid oracle)") {
    std::mt19937_64 rng(23);
    const GaussianFactor a =
        GaussianFactor::from_moments({kX0, kP0}, random_vec(rng, 9), random_spd(rng, 9));
    const GaussianFactor b =
        GaussianFactor::from_moments({kP0, kX1}, random_vec(rng, 9), random_spd(rng, 9));
    const GaussianFactor prod = multiply(a, b);
    REQUIRE(prod.dim() == 12);
    REQUIRE(prod.scope().size() == 3);

    for (int i = 0; i < 20; ++i) {
        const std::map<VariableId, Vec> at = {{kX0, random_vec(rng, 3)},
                                              {kX1, random_vec(rng, 3)},
                                              {kP0, random_vec(rng, 6)}};
        REQUIRE(log_at(prod, at) ==
                Catch::Approx(log_at(a, at) + log_at(b, at)).margin(1e-9));
    }
}

TEST_CASE("divide inverts multiply exactly") {
    std::mt19937_64 rng(24);
    const GaussianFactor a =
        GaussianFactor::from_moments({kX0, kP0}, random_vec(rng, 9), random_spd(rng, 9));
    const GaussianFactor b =
        GaussianFactor::from_moments({kX0}, random_vec(rng, 3), random_spd(rng, 3));
    const GaussianFactor back = divide(multiply(a, b), b);
    REQUIRE(max_abs(back.precision() - a.precision()) < 1e-12);
    REQUIRE(max_abs(back.info_vec() - a.info_vec()) < 1e-12);
    REQUIRE(back.log_norm() == Catch::Approx(a.log_norm()).margin(1e-12));

    // divisor scope must be contained in the dividend's
    REQUIRE_THROWS_AS(divide(b, a), ScopeDimMismatch);
}

TEST_CASE("power scales the log-density") {
    std::mt19937_64 rng(25);
    const GaussianFactor f =
        GaussianFactor::from_moments({kX0}, random_vec(rng, 3), random_spd(rng, 3));
    const GaussianFactor half = f.power(0.5);
    for (int i = 0; i < 10; ++i) {
        const std::map<VariableId, Vec> at = {{kX0, random_vec(rng, 3)}};
        REQUIRE(log_at(half, at) == Catch::Approx(0.5 * log_at(f, at)).margin(1e-12));
    }
    // the product of fractional powers restores the factor
    const GaussianFactor restored = multiply(half, half);
    REQUIRE(max_abs(restored.precision() - f.precision()) < 1e-12);
}

TEST_CASE("marginalize matches moment subsetting and keeps normalization") {
    std::mt19937_64 rng(26);
    for (int trial = 0; trial < 10; ++trial) {
        const Vec mu = random_vec(rng, 9);
        const Mat cov = random_spd(rng, 9);
        const GaussianFactor joint = GaussianFactor::from_moments({kX0, kP0}, mu, cov);
        const GaussianFactor marg = joint.marginalize({kX0});

        // oracle: the marginal of a Gaussian is the plain sub-block
        const Moments m = marg.to_moments();
        REQUIRE(max_abs(m.mean - mu.head(3)) < 1e-9);
        REQUIRE(max_abs(m.cov - cov.topLeftCorner(3, 3)) < 1e-9);

        // normalization bookkeeping: the marginal still integrates like a
        // density, so its log-density matches the closed form pointwise
        const Vec x = random_vec(rng, 3);
        REQUIRE(log_at(marg, {{kX0, x}}) ==
                Catch::Approx(normal_log_pdf(x, mu.head(3), cov.topLeftCorner(3, 3)))
                    .margin(1e-8));
    }
}

TEST_CASE("marginalize onto the full scope is the identity") {
    std::mt19937_64 rng(27);
    const GaussianFactor f =
        GaussianFactor::from_moments({kX0, kP0}, random_vec(rng, 9), random_spd(rng, 9));
    const GaussianFactor same = f.marginalize({kP0, kX0});
    REQUIRE(max_abs(same.precision() - f.precision()) == 0.0);
}

TEST_CASE("marginalizing an unconstrained block raises SingularEliminationBlock") {
    const GaussianFactor flat = GaussianFactor::unit({kX0, kP0});
    REQUIRE_THROWS_AS(flat.marginalize({kX0}), SingularEliminationBlock);
}

TEST_CASE("observe matches the closed-form Kalman update (conditioning oracle)") {
    std::mt19937_64 rng(28);
    for (int trial = 0; trial < 10; ++trial) {
        const int da = 3, db = 3;
        const Vec mu = random_vec(rng, da + db);
        const Mat cov = random_spd(rng, da + db);
        const double sigma = 0.1;
        const Vec y = random_vec(rng, db);

        const GaussianFactor joint = GaussianFactor::from_moments({kX0, kX1}, mu, cov);
        const Moments post = joint.observe(kX1, y, sigma).marginalize({kX0}).to_moments();

        // independent route: innovation form of the Gaussian update
        const Mat saa = cov.topLeftCorner(da, da), sab = cov.topRightCorner(da, db),
                  sbb = cov.bottomRightCorner(db, db);
        const Mat s = sbb + sigma * sigma * Mat::Identity(db, db);
        const Mat gain = sab * s.inverse();
        const Vec mu_post = mu.head(da) + gain * (y - mu.tail(db));
        const Mat cov_post = saa - gain * sab.transpose();

        REQUIRE(max_abs(post.mean - mu_post) < 1e-8);
        REQUIRE(max_abs(post.cov - cov_post) < 1e-8);
    }
}

TEST_CASE("observe validates its inputs") {
    std::mt19937_64 rng(29);
    const GaussianFactor f =
        GaussianFactor::from_moments({kX0}, random_vec(rng, 3), random_spd(rng, 3));
    REQUIRE_THROWS_AS(f.observe(kP0, Vec::Zero(6), 1.0), Error);
    REQUIRE_THROWS_AS(f.observe(kX0, Vec::Zero(2), 1.0), ScopeDimMismatch);
    REQUIRE_THROWS_AS(f.observe(kX0, Vec::Zero(3), 0.0), Error);
}

TEST_CASE("uninformative evidence leaves the factor nearly unchanged") {
    std::mt19937_64 rng(30);
    const Vec mu = random_vec(rng, 3);
    const Mat cov = random_spd(rng, 3);
    const GaussianFactor f = GaussianFactor::from_moments({kX0}, mu, cov);
    const Moments after = f.observe(kX0, Vec::Zero(3), 1e6).to_moments();
    REQUIRE(max_abs(after.mean - mu) < 1e-3);
    REQUIRE(max_abs(after.cov - cov) < 1e-3);
}

TEST_CASE("unit factor is the multiplicative identity") {
    std::mt19937_64 rng(31);
    const GaussianFactor f =
        GaussianFactor::from_moments({kX0}, random_vec(rng, 3), random_spd(rng, 3));
    const GaussianFactor same = multiply(f, GaussianFactor::unit({kX0}));
    REQUIRE(max_abs(same.precision() - f.precision()) == 0.0);
    REQUIRE(max_abs(same.info_vec() - f.info_vec()) == 0.0);
    REQUIRE(same.log_norm() == f.log_norm());
    REQUIRE_FALSE(GaussianFactor::unit({kX0}).is_proper());
    REQUIRE(f.is_proper());
}

TEST_CASE("scope dimension mismatches on a shared id are detected") {
    const VariableId x_2d = VariableId::feature_var(0, WorldMode::twod());
    const GaussianFactor a = GaussianFactor::unit({kX0});   // X0 with dim 3
    const GaussianFactor b = GaussianFactor::unit({x_2d});  // X0 with dim 2
    REQUIRE_THROWS_AS(multiply(a, b), ScopeDimMismatch);
}

TEST_CASE("from_moments rejects hopelessly indefinite covariances") {
    Mat bad = Mat::Identity(2, 2);
    bad(1, 1) = -1.0;
    REQUIRE_THROWS_AS(
        GaussianFactor::from_moments({VariableId::feature_var(0, WorldMode::twod())},
                                     Vec::Zero(2), bad),
        NotPositiveDefinite);
}

TEST_CASE("max_param_delta measures moment-space disagreement") {
    std::mt19937_64 rng(32);
    const Vec mu = random_vec(rng, 3);
    const Mat cov = random_spd(rng, 3);
    const GaussianFactor a = GaussianFactor::from_moments({kX0}, mu, cov);
    REQUIRE(max_param_delta(a, a) == 0.0);

    Vec shifted = mu;
    shifted(1) += 0.25;
    const GaussianFactor b = GaussianFactor::from_moments({kX0}, shifted, cov);
    REQUIRE(max_param_delta(a, b) == Catch::Approx(0.25).margin(1e-9));

    const GaussianFactor u = GaussianFactor::unit({kX0});
    REQUIRE(max_param_delta(u, u) == 0.0);
    REQUIRE_THROWS_AS(max_param_delta(a, GaussianFactor::unit({kP0})),
                      ScopeDimMismatch);
}
