#include "doctest.h"

#include "histent/entropy.hpp"

#include <cmath>
#include <random>

using namespace histent;

namespace {
const double LOG2 = std::log(2.0);

WeightedSample bernoulli_cylinder_sample(std::size_t n, double p) {
    WeightedSample s;
    s.points = shift_cylinder_representatives(n);
    s.weights.reserve(s.points.size());
    for (const auto& pt : s.points) {
        const auto& w = std::get<SymbolicWord>(pt);
        double mass = 1.0;
        for (std::size_t i = 0; i < n; ++i) mass *= (w.at(i) == 1 ? p : 1.0 - p);
        s.weights.push_back(mass);
    }
    return s;
}
} // namespace

TEST_CASE("bowen ball membership basics") {
    FullShift shift;
    Point x = SymbolicWord::zeros();
    CHECK(bowen_ball_membership(shift, {x, 5, 0.25}, x));

    Point y = SymbolicWord::ones();
    CHECK_FALSE(bowen_ball_membership(shift, {x, 1, 0.5}, y)); // d = 1 > eps

    CatMap cat;
    TorusPoint base{0.3141, 0.2718};
    Vec2 dev = 1e-6 * cat.spec().stable;
    Point z = reduce_mod1(base.x + dev.x, base.y + dev.y);
    CHECK(bowen_ball_membership(cat, {Point(base), 10, 0.01}, z)); // stable deviation contracts
}

TEST_CASE("bowen distance equals the brute-force maximum") {
    CatMap cat;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        Point a = TorusPoint{u(rng), u(rng)};
        Point b = TorusPoint{u(rng), u(rng)};
        std::size_t n = 7;
        double direct = bowen_distance(cat, a, b, n);
        double brute = 0.0;
        Point x = a, y = b;
        for (std::size_t i = 0; i < n; ++i) {
            brute = std::max(brute, cat.distance(x, y));
            x = cat.apply(x);
            y = cat.apply(y);
        }
        CHECK(direct == brute);
    }
}

TEST_CASE("separated counts on the full shift are exactly 2^n") {
    FullShift shift;
    for (std::size_t n = 1; n <= 12; ++n) {
        auto reps = shift_cylinder_representatives(n);
        auto sep = max_separated(shift, reps, n, 0.5);
        CHECK(sep.count == (1ull << n));
    }
}

TEST_CASE("hashed and pairwise separated sets agree on small shifts") {
    FullShift shift;
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<int> bit(0, 1);
    for (std::size_t n : {2, 4, 6}) {
        std::vector<Point> pts = shift_cylinder_representatives(n);
        // brute force greedy over word distances
        std::vector<std::size_t> kept;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            bool ok = true;
            for (auto k : kept) {
                if (bowen_distance(shift, pts[i], pts[k], n) < 0.5) {
                    ok = false;
                    break;
                }
            }
            if (ok) kept.push_back(i);
        }
        auto sep = max_separated(shift, pts, n, 0.5);
        CHECK(sep.count == kept.size());
    }
}

TEST_CASE("separated count trivia") {
    CatMap cat;
    std::vector<Point> one{TorusPoint{0.5, 0.5}};
    CHECK(max_separated(cat, one, 3, 0.1).count == 1);

    auto grid = torus_grid(32);
    CHECK(max_separated(cat, grid, 1, 2.0).count == 1); // eps above the diameter
}

TEST_CASE("spanning counts on the full shift are exactly 2^n") {
    FullShift shift;
    for (std::size_t n : {4, 8, 12}) {
        auto reps = shift_cylinder_representatives(n);
        auto span = min_spanning(shift, reps, reps, n, 0.5);
        CHECK(span.count == (1ull << n));
    }
}

TEST_CASE("spanning trivia and errors") {
    CatMap cat;
    auto grid = torus_grid(16);
    auto span = min_spanning(cat, grid, grid, 1, 2.0);
    CHECK(span.count == 1); // one huge ball covers the sample

    // a sample point with no candidate ball over it
    std::vector<Point> centers{TorusPoint{0.1, 0.1}};
    std::vector<Point> sample{TorusPoint{0.1, 0.1}, TorusPoint{0.6, 0.6}};
    CHECK_THROWS_AS(min_spanning(cat, centers, sample, 2, 0.01), UncoverableError);
}

TEST_CASE("P >= Q >= N chain on a shared cat-map input") {
    CatMap cat;
    std::mt19937_64 rng(29);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Point> sample;
    for (int i = 0; i < 400; ++i) sample.push_back(TorusPoint{u(rng), u(rng)});
    std::size_t n = 4;
    double eps = 0.2;
    auto P = max_separated(cat, sample, n, eps);
    auto Q = min_spanning(cat, sample, sample, n, eps, {}, 1.0);
    auto N = min_spanning(cat, sample, sample, n, eps, {}, 0.9);
    CHECK(P.count >= Q.count);
    CHECK(Q.count >= N.count);
}

TEST_CASE("katok entropy of a point mass is zero") {
    FullShift shift;
    WeightedSample s;
    for (int i = 0; i < 120; ++i) s.points.push_back(SymbolicWord::zeros());
    auto est = katok_entropy(shift, s, {}, 0.5, 0.1, {2, 4, 6, 8});
    CHECK(est.value == doctest::Approx(0.0));
    for (auto& [n, logc] : est.log_counts) {
        (void)n;
        CHECK(logc == doctest::Approx(0.0)); // N = 1 throughout
    }
}

TEST_CASE("katok entropy of Bernoulli(1/2,1/2) hits log 2 within 1%") {
    FullShift shift;
    std::vector<std::size_t> window{4, 5, 6, 7, 8, 9, 10, 11, 12};
    auto est = katok_entropy(
        shift, [&](std::size_t n) { return bernoulli_cylinder_sample(n, 0.5); },
        [&](std::size_t n) { return shift_cylinder_representatives(n); }, 0.5, 0.1, window);
    CHECK(std::fabs(est.value - LOG2) <= 0.01 * LOG2);
    // the greedy count at each n is the exact oracle value ceil(0.9 * 2^n)
    for (auto& [n, logc] : est.log_counts) {
        double exact = std::ceil(0.9 * std::pow(2.0, static_cast<double>(n)));
        CHECK(logc == doctest::Approx(std::log(exact)).epsilon(1e-12));
    }
}

TEST_CASE("katok entropy requires enough samples for the delta resolution") {
    FullShift shift;
    WeightedSample s;
    for (int i = 0; i < 5; ++i) s.points.push_back(SymbolicWord::zeros());
    CHECK_THROWS_AS(katok_entropy(shift, s, {}, 0.5, 0.1, {2, 4}), SampleTooSmallError);
}

TEST_CASE("toral lattice cover counts bracket and grow at rate log lambda") {
    CatMapSpec spec;
    for (std::size_t n : {6, 10, 14}) {
        auto c = toral_bowen_cover_counts(spec, n, 0.05, 0.1);
        CHECK(c.log_upper >= c.log_lower);
    }
    std::vector<double> xs, up, lo;
    for (std::size_t n = 6; n <= 14; ++n) {
        auto c = toral_bowen_cover_counts(spec, n, 0.05, 0.1);
        xs.push_back(static_cast<double>(n));
        up.push_back(c.log_upper);
        lo.push_back(c.log_lower);
    }
    CHECK(std::fabs(ls_slope(xs, up) - spec.log_lambda) < 0.01);
    CHECK(std::fabs(ls_slope(xs, lo) - spec.log_lambda) < 0.01);
}

TEST_CASE("katok entropy of the cat map via the lattice backend") {
    CatMap cat;
    KatokEntropyOptions opts;
    opts.backend = KatokEntropyOptions::Backend::ToralLattice;
    std::vector<std::size_t> window;
    for (std::size_t n = 6; n <= 14; ++n) window.push_back(n);
    auto est = katok_entropy(
        cat, [](std::size_t) { return WeightedSample{}; }, nullptr, 0.05, 0.1, window, opts);
    double target = cat.spec().log_lambda; // log((3+sqrt 5)/2)
    CHECK(std::fabs(est.value - target) <= 0.10 * target);
    CHECK(est.bias == "two-sided");
    CHECK(std::fabs(est.params.at("slope_lower") - target) <= 0.10 * target);
}

TEST_CASE("bowen set entropy of a fixed finite set decays with N") {
    FullShift shift;
    std::vector<Point> z;
    for (std::size_t n = 0; n < 8; ++n) {
        auto reps = shift_cylinder_representatives(3);
        z = reps; // 8 fixed words
    }
    auto at_n = [&](std::size_t N) {
        BowenSetEntropyOptions opts;
        opts.length_window = 4;
        return bowen_set_entropy(shift, z, 0.5, N, opts).estimate.value;
    };
    double e10 = at_n(10);
    double e40 = at_n(40);
    CHECK(e40 < e10);
    CHECK(e40 < 0.1);
}

TEST_CASE("bowen set entropy of the full shift sample stays near log 2") {
    FullShift shift;
    auto reps = shift_cylinder_representatives(12);
    BowenSetEntropyOptions opts;
    opts.length_window = 4;
    auto res = bowen_set_entropy(shift, reps, 0.5, 8, opts);
    CHECK(res.estimate.value >= LOG2 - 1e-3);
    CHECK(res.estimate.value <= 1.13 * LOG2); // finite-N overshoot is log2/12
    // certificate value reproduces the reported cover value
    CHECK(res.certificate.recompute_log_value() ==
          doctest::Approx(res.certificate.log_value).epsilon(1e-9));
}

TEST_CASE("bowen set entropy is non-increasing in the radius") {
    FullShift shift;
    auto reps = shift_cylinder_representatives(10);
    BowenSetEntropyOptions opts;
    opts.length_window = 4;
    double tight = bowen_set_entropy(shift, reps, 0.26, 6, opts).estimate.value;
    double loose = bowen_set_entropy(shift, reps, 0.9, 6, opts).estimate.value;
    CHECK(loose <= tight + 1e-9);
}

TEST_CASE("bowen set entropy of the whole torus under the cat map") {
    CatMap cat;
    auto res = bowen_set_entropy(cat, {}, 0.05, 8);
    double target = cat.spec().log_lambda;
    CHECK(std::fabs(res.estimate.value - target) <= 0.10 * target);
    CHECK(res.estimate.backend == "toral-lattice");
}

TEST_CASE("explicit greedy bowen covers work on small torus samples") {
    CatMap cat;
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Point> z;
    for (int i = 0; i < 60; ++i) z.push_back(TorusPoint{u(rng), u(rng)});
    BowenSetEntropyOptions opts;
    opts.backend = BowenSetEntropyOptions::Backend::GreedyExplicit;
    opts.length_window = 3;
    auto res = bowen_set_entropy(cat, z, 0.3, 2, opts);
    CHECK(res.estimate.value > 0.0);
    CHECK(res.certificate.explicit_cover);
    CHECK(res.certificate.recompute_log_value() ==
          doctest::Approx(res.certificate.log_value).epsilon(1e-9));
}

TEST_CASE("edp certifier accepts exact cylinder masses at s = log 2") {
    FullShift shift;
    auto alpha = AtomicMeasure::uniform(shift_cylinder_representatives(14), "alpha14");
    auto z = shift_cylinder_representatives(6);
    auto res = edp_certify(shift, {alpha, alpha}, z, 0.5, LOG2, 1.0, 4, 10);
    CHECK(res.certified);
    // ball of length n is the (n+1)-cylinder, mass 2^{-(n+1)}, ratio one half
    CHECK(res.worst_ratio == doctest::Approx(0.5));
}

TEST_CASE("edp certifier rejects a point-mass sequence") {
    FullShift shift;
    auto z = SymbolicWord::zeros();
    auto alpha = AtomicMeasure::dirac(z, "delta");
    auto res = edp_certify(shift, {alpha}, {Point(z)}, 0.5, 0.2, 1.0, 4, 10);
    CHECK_FALSE(res.certified);
    CHECK(res.worst_ratio > 1.0);
}

TEST_CASE("cover counts are upper semicontinuous in the measure") {
    FullShift shift;
    // nu uniform on the four 2-cylinders, nu_k a slightly skewed version
    auto reps = shift_cylinder_representatives(2);
    WeightedSample nu{reps, {0.25, 0.25, 0.25, 0.25}};
    WeightedSample nuk{reps, {0.29, 0.27, 0.23, 0.21}};
    auto count_for = [&](const WeightedSample& w) {
        return min_spanning(shift, reps, w.points, 2, 0.5, w.weights, 0.55).count;
    };
    CHECK(count_for(nu) == 3);
    CHECK(count_for(nuk) == 2);
    CHECK(count_for(nu) >= count_for(nuk));
}
