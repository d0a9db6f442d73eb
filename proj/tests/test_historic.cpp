#include "doctest.h"

#include "histent/historic.hpp"

#include <cmath>

using namespace histent;

namespace {
constexpr double TWO_PI = 6.283185307179586476925286766559;

NamedObservable cos_x1() {
    return {"cos(2 pi x1)", 1.0,
            [](const Point& p) { return std::cos(TWO_PI * std::get<TorusPoint>(p).x); }};
}
} // namespace

TEST_CASE("birkhoff average basics") {
    CatMap cat;
    Point fix = TorusPoint{0.0, 0.0};
    auto constant = [](const Point&) { return 2.5; };
    CHECK(birkhoff_average(cat, fix, constant, 1) == doctest::Approx(2.5));
    CHECK(birkhoff_average(cat, fix, constant, 1000) == doctest::Approx(2.5));

    auto phi = cos_x1();
    CHECK(birkhoff_average(cat, fix, phi.fn, 50) == doctest::Approx(1.0)); // phi at the fixed point

    double generic = birkhoff_average(cat, TorusPoint{0.911, 0.137}, phi.fn, 100000);
    CHECK(std::fabs(generic) < 0.02); // Lebesgue integral of the observable is 0
}

TEST_CASE("running averages stay inside the observable range and drift slowly") {
    CatMap cat;
    Point x = TorusPoint{0.31, 0.77};
    auto phi = cos_x1();
    double prev = 0.0;
    for (std::size_t n = 1; n <= 200; ++n) {
        double avg = birkhoff_average(cat, x, phi.fn, n);
        CHECK(avg <= 1.0 + 1e-12);
        CHECK(avg >= -1.0 - 1e-12);
        if (n > 1)
            CHECK(std::fabs(avg - prev) <= 2.0 * phi.sup_norm / static_cast<double>(n) + 1e-12);
        prev = avg;
    }
}

TEST_CASE("periodic points are not historic") {
    FullShift shift;
    Point per = SymbolicWord::periodic({0, 1, 1});
    NamedObservable phi{"x0=1", 1.0,
                        [](const Point& p) { return std::get<SymbolicWord>(p).at(0) == 1 ? 1.0 : 0.0; }};
    auto rep = detect_historic(shift, per, phi, 30000, {});
    CHECK(rep.gap() < 0.01); // averages settle at 2/3 like O(1/n)
    CHECK_FALSE(rep.historic);
}

TEST_CASE("generic cat-map points are not historic at deskhorizons") {
    CatMap cat;
    auto rep = detect_historic(cat, TorusPoint{0.5912, 0.2468}, cos_x1(), 100000, {});
    CHECK(rep.gap() <= 0.05);
    CHECK_FALSE(rep.historic);
}

TEST_CASE("detect_historic_stream tracks band alternations") {
    // synthetic stream: geometrically growing blocks swing the running
    // average between the bands
    std::vector<double> vals;
    for (int i = 0; i < 100; ++i) vals.push_back(1.0);
    for (int i = 0; i < 900; ++i) vals.push_back(0.0);
    for (int i = 0; i < 8000; ++i) vals.push_back(1.0);
    for (int i = 0; i < 72000; ++i) vals.push_back(0.0);
    for (int i = 0; i < 648000; ++i) vals.push_back(1.0);
    HistoricOptions opts;
    opts.burn_in = 10;
    auto rep = detect_historic_stream([&](std::size_t i) { return vals[i]; }, vals.size(),
                                      "synthetic", opts);
    CHECK(rep.historic);
    CHECK(rep.gap() > 0.8);
    CHECK(rep.high_visits >= 2);
    CHECK(rep.low_visits >= 2);
}

TEST_CASE("limit set of a fixed point is a single dirac cluster") {
    CatMap cat;
    auto basis = TestBasis::torus_trig(16);
    auto est = estimate_limit_set(cat, TorusPoint{0.0, 0.0}, basis, {10, 100, 1000}, 0.05);
    REQUIRE(est.candidates.size() == 1);
    CHECK(est.candidates[0].measure.size() == 1);
    CHECK(est.candidates[0].members == 3);
}

TEST_CASE("limit set of a generic cat orbit is a single Lebesgue-like cluster") {
    CatMap cat;
    auto basis = TestBasis::torus_trig(16);
    auto est = estimate_limit_set(cat, TorusPoint{0.3141, 0.5926}, basis,
                                  {20000, 40000, 80000}, 0.05);
    CHECK(est.candidates.size() == 1);
    // all basis integrals of the cluster representative are near their
    // Lebesgue values (0 except the constant)
    CHECK(std::fabs(est.candidates[0].integrals[0] - 1.0) < 1e-12);
    for (std::size_t i = 1; i < est.candidates[0].integrals.size(); ++i)
        CHECK(std::fabs(est.candidates[0].integrals[i]) < 0.03);
}

TEST_CASE("limit set separates distinct periodic targets") {
    FullShift shift;
    auto basis = TestBasis::shift_cylinders(16);
    // empirical measures of this orbit alternate between long 0-runs and
    // long 1-runs at geometric checkpoints
    std::vector<std::uint8_t> prefix;
    std::size_t len = 1;
    bool ones = false;
    while (prefix.size() < 200000) {
        for (std::size_t i = 0; i < 9 * len && prefix.size() < 200000; ++i)
            prefix.push_back(ones ? 1 : 0);
        len *= 10;
        ones = !ones;
    }
    Point z = SymbolicWord::from_prefix(prefix, TailKind::Zeros);
    auto est = estimate_limit_set(shift, z, basis, {9, 99, 999, 9999, 99999}, 0.05);
    CHECK(est.candidates.size() == 2);
}

TEST_CASE("membership diagnostic against block samples") {
    CatMap cat;
    auto basis = TestBasis::torus_trig(8);
    auto fixed = estimate_limit_set(cat, TorusPoint{0.0, 0.0}, basis, {5, 50}, 0.05);

    std::vector<Point> block{TorusPoint{0.0, 0.0}, TorusPoint{0.5, 0.5}};
    CHECK(n_membership_diagnostic(cat, fixed, block, 1e-6, 0.05));

    std::vector<Point> far{TorusPoint{0.4, 0.4}};
    CHECK_FALSE(n_membership_diagnostic(cat, fixed, far, 1e-3, 0.05));

    // a Lebesgue-like candidate against a block sample covering the torus
    auto generic = estimate_limit_set(cat, TorusPoint{0.123, 0.456}, basis, {30000}, 0.05);
    std::vector<Point> grid;
    for (int i = 0; i < 24; ++i)
        for (int j = 0; j < 24; ++j)
            grid.push_back(TorusPoint{(i + 0.5) / 24.0, (j + 0.5) / 24.0});
    CHECK(n_membership_diagnostic(cat, generic, grid, 0.05, 0.05));
}
