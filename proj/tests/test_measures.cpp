#include "doctest.h"

#include "histent/measures.hpp"

#include <cmath>
#include <random>

using namespace histent;

namespace {
constexpr double TWO_PI = 6.283185307179586476925286766559;

AtomicMeasure random_measure(std::mt19937_64& rng, int max_atoms = 6) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> count(1, max_atoms);
    int n = count(rng);
    std::vector<Atom> atoms;
    double total = 0.0;
    std::vector<double> raw;
    for (int i = 0; i < n; ++i) {
        raw.push_back(u(rng) + 1e-3);
        total += raw.back();
    }
    for (int i = 0; i < n; ++i)
        atoms.push_back({TorusPoint{u(rng), u(rng)}, raw[static_cast<std::size_t>(i)] / total});
    // renormalize exactly
    double mass = 0.0;
    for (auto& a : atoms) mass += a.weight;
    atoms.back().weight += 1.0 - mass;
    return AtomicMeasure(atoms, "random");
}
} // namespace

TEST_CASE("empirical measure of a fixed point is a dirac") {
    CatMap cat;
    auto m = empirical_measure(cat, TorusPoint{0.0, 0.0}, 17);
    REQUIRE(m.size() == 1);
    CHECK(m.atoms()[0].weight == doctest::Approx(1.0));
}

TEST_CASE("empirical measure of a period-2 orbit splits evenly") {
    FullShift shift;
    SymbolicWord w = SymbolicWord::periodic({0, 1});
    auto m = empirical_measure(shift, w, 4);
    REQUIRE(m.size() == 2);
    CHECK(m.atoms()[0].weight == doctest::Approx(0.5));
    CHECK(m.atoms()[1].weight == doctest::Approx(0.5));
}

TEST_CASE("empirical averages of a generic cat orbit reach the Lebesgue value") {
    CatMap cat;
    auto m = empirical_measure(cat, TorusPoint{0.1234567, 0.7654321}, 100000);
    double v = integrate(m, [](const Point& p) {
        return std::cos(TWO_PI * std::get<TorusPoint>(p).x);
    });
    CHECK(std::fabs(v) < 0.02); // integral of cos(2 pi x1) against Lebesgue is 0
}

TEST_CASE("integrate basics") {
    auto da = AtomicMeasure::dirac(TorusPoint{0.2, 0.4});
    CHECK(integrate(da, [](const Point&) { return 3.25; }) == doctest::Approx(3.25));
    CHECK(integrate(da, [](const Point& p) { return std::get<TorusPoint>(p).x; }) ==
          doctest::Approx(0.2));

    auto db = AtomicMeasure::dirac(TorusPoint{0.9, 0.9});
    auto mix = AtomicMeasure::convex({{da, 0.5}, {db, 0.5}}, "mix");
    auto phi = [](const Point& p) { return std::get<TorusPoint>(p).x > 0.5 ? 1.0 : 0.0; };
    CHECK(integrate(mix, phi) == doctest::Approx(0.5));
}

TEST_CASE("integrate is affine in the measure") {
    auto rng = std::mt19937_64(5);
    for (int trial = 0; trial < 50; ++trial) {
        auto mu = random_measure(rng);
        auto nu = random_measure(rng);
        double t = 0.375; // exactly representable
        auto mix = AtomicMeasure::convex({{mu, t}, {nu, 1.0 - t}}, "mix");
        auto phi = [](const Point& p) { return std::get<TorusPoint>(p).y; };
        CHECK(integrate(mix, phi) ==
              doctest::Approx(t * integrate(mu, phi) + (1.0 - t) * integrate(nu, phi))
                  .epsilon(1e-14));
    }
}

TEST_CASE("torus basis starts with the documented functions") {
    auto basis = TestBasis::torus_trig(8);
    Point p = TorusPoint{0.2, 0.7};
    double x1 = 0.2, x2 = 0.7;
    CHECK(basis.evaluate(1, p) == doctest::Approx(1.0));
    CHECK(basis.evaluate(2, p) == doctest::Approx(std::cos(TWO_PI * x1)));
    CHECK(basis.evaluate(3, p) == doctest::Approx(std::sin(TWO_PI * x1)));
    CHECK(basis.evaluate(4, p) == doctest::Approx(std::cos(TWO_PI * x2)));
    CHECK(basis.evaluate(5, p) == doctest::Approx(std::sin(TWO_PI * x2)));
    CHECK(basis.evaluate(6, p) == doctest::Approx(std::cos(TWO_PI * (x1 + x2))));
    CHECK(basis.evaluate(7, p) == doctest::Approx(std::sin(TWO_PI * (x1 + x2))));
}

TEST_CASE("shift basis enumerates cylinders by depth then lexicographically") {
    auto basis = TestBasis::shift_cylinders(6);
    SymbolicWord w = SymbolicWord::from_prefix({0, 1}, TailKind::Zeros); // 0100...
    Point p = w;
    CHECK(basis.evaluate(1, p) == 1.0); // [0]
    CHECK(basis.evaluate(2, p) == 0.0); // [1]
    CHECK(basis.evaluate(3, p) == 0.0); // [00]
    CHECK(basis.evaluate(4, p) == 1.0); // [01]
    CHECK(basis.evaluate(5, p) == 0.0); // [10]
    CHECK(basis.evaluate(6, p) == 0.0); // [11]
}

TEST_CASE("metric D: identity, bound, and a brute-force cross-check") {
    auto basis = TestBasis::torus_trig(8);
    auto mu = AtomicMeasure::dirac(TorusPoint{0.0, 0.0});
    auto nu = AtomicMeasure::dirac(TorusPoint{0.5, 0.0});

    CHECK(metric_D(mu, mu, basis).value == 0.0);

    // independent evaluation of each |phi_i(a) - phi_i(b)| / 2^{i+1}
    double expected = 0.0;
    Point a = TorusPoint{0.0, 0.0}, b = TorusPoint{0.5, 0.0};
    for (int i = 1; i <= 8; ++i)
        expected += std::fabs(basis.evaluate(i, a) - basis.evaluate(i, b)) *
                    std::ldexp(1.0, -(i + 1));
    auto d = metric_D(mu, nu, basis);
    CHECK(d.value == doctest::Approx(expected).epsilon(1e-14));
    CHECK(d.tail_bound == doctest::Approx(std::ldexp(1.0, -8)));

    auto rng = std::mt19937_64(9);
    for (int trial = 0; trial < 200; ++trial) {
        auto m1 = random_measure(rng);
        auto m2 = random_measure(rng);
        CHECK(metric_D(m1, m2, basis).value <= 1.0);
    }
}

TEST_CASE("metric D axioms on sampled triples") {
    auto basis = TestBasis::torus_trig(16);
    auto rng = std::mt19937_64(13);
    for (int trial = 0; trial < 1000; ++trial) {
        auto a = random_measure(rng, 3);
        auto b = random_measure(rng, 3);
        auto c = random_measure(rng, 3);
        double dab = metric_D(a, b, basis).value;
        double dba = metric_D(b, a, basis).value;
        CHECK(dab == dba); // symmetry is exact
        double dac = metric_D(a, c, basis).value;
        double dcb = metric_D(c, b, basis).value;
        CHECK(dab <= dac + dcb + 1e-12);
    }
}

TEST_CASE("metric D zero forces equal basis integrals") {
    auto basis = TestBasis::torus_trig(16);
    auto mu = AtomicMeasure::uniform({Point(TorusPoint{0.1, 0.2}), Point(TorusPoint{0.3, 0.4})},
                                     "two-atoms");
    auto nu = AtomicMeasure::uniform({Point(TorusPoint{0.3, 0.4}), Point(TorusPoint{0.1, 0.2})},
                                     "two-atoms-again");
    CHECK(metric_D(mu, nu, basis).value == 0.0);
    auto ia = basis_integrals(mu, basis);
    auto ib = basis_integrals(nu, basis);
    for (std::size_t i = 0; i < ia.size(); ++i) CHECK(ia[i] == ib[i]);
}

TEST_CASE("truncation control: doubling I moves D by at most the tail bound") {
    auto basis = TestBasis::torus_trig(8);
    auto wide = basis.with_truncation(16);
    auto rng = std::mt19937_64(17);
    for (int trial = 0; trial < 100; ++trial) {
        auto a = random_measure(rng);
        auto b = random_measure(rng);
        double d8 = metric_D(a, b, basis).value;
        double d16 = metric_D(a, b, wide).value;
        CHECK(std::fabs(d16 - d8) <= basis.tail_bound() + 1e-15);
        CHECK(d16 + 1e-15 >= d8); // extra terms only add
    }
}

TEST_CASE("pushforward moves the empirical measure by at most 2/n") {
    CatMap cat;
    auto basis = TestBasis::torus_trig(16);
    Point x = TorusPoint{0.377, 0.612};
    for (std::size_t n : {10, 100, 1000}) {
        auto en_x = empirical_measure(cat, x, n);
        auto en_fx = empirical_measure(cat, cat.apply(x), n);
        CHECK(metric_D(en_x, en_fx, basis).value <= 2.0 / static_cast<double>(n) + 1e-12);
    }
}

TEST_CASE("rational approximation: rational input is reproduced") {
    auto basis = TestBasis::torus_trig(16);
    auto m1 = AtomicMeasure::dirac(TorusPoint{0.1, 0.1});
    auto m2 = AtomicMeasure::dirac(TorusPoint{0.6, 0.6});
    auto out = rational_approximation({{m1, 0.5}, {m2, 0.5}}, 10, basis);
    CHECK(out.components[0].second == Rational(1, 2));
    CHECK(out.components[1].second == Rational(1, 2));
    CHECK(out.certified.value == 0.0);
}

TEST_CASE("rational approximation: irrational weights at order 10") {
    auto basis = TestBasis::torus_trig(16);
    auto m1 = AtomicMeasure::dirac(TorusPoint{0.1, 0.1});
    auto m2 = AtomicMeasure::dirac(TorusPoint{0.6, 0.6});
    double w = 1.0 / std::sqrt(2.0);
    auto out = rational_approximation({{m1, w}, {m2, 1.0 - w}}, 10, basis);
    CHECK(std::fabs(out.components[0].second.value() - w) < 1.0 / 30.0);
    CHECK(std::fabs(out.components[1].second.value() - (1.0 - w)) < 1.0 / 30.0);
    CHECK(out.certified.value <= 0.1);
    Rational sum(0, 1);
    for (const auto& [m, a] : out.components) {
        (void)m;
        sum = sum + a;
    }
    CHECK(sum == Rational(1, 1));
}

TEST_CASE("rational approximation: k = 1 always feasible, too-fine k errors out") {
    auto basis = TestBasis::torus_trig(16);
    auto m1 = AtomicMeasure::dirac(TorusPoint{0.2, 0.9});
    auto m2 = AtomicMeasure::dirac(TorusPoint{0.8, 0.3});
    auto out = rational_approximation({{m1, 0.31830988618}, {m2, 0.68169011382}}, 1, basis);
    CHECK(out.certified.value <= 1.0);

    CHECK_THROWS_AS(rational_approximation({{m1, 0.5}, {m2, 0.5}}, 1000000, basis),
                    ApproximationError);
    try {
        rational_approximation({{m1, 0.5}, {m2, 0.5}}, 1000000, basis);
    } catch (const ApproximationError& e) {
        CHECK(e.required_truncation >= 20);
    }
}

TEST_CASE("rational approximation meets the 1/k certificate up to k = 50") {
    auto basis = TestBasis::torus_trig(16);
    auto rng = std::mt19937_64(21);
    std::uniform_real_distribution<double> u(0.05, 0.95);
    for (int k : {2, 5, 10, 25, 50}) {
        for (int trial = 0; trial < 10; ++trial) {
            auto m1 = random_measure(rng, 3);
            auto m2 = random_measure(rng, 3);
            double w = u(rng);
            auto out = rational_approximation({{m1, w}, {m2, 1.0 - w}}, k, basis);
            CHECK(out.certified.value <= 1.0 / k);
        }
    }
}

TEST_CASE("atoms deduplicate under the resolution") {
    auto m = AtomicMeasure({{TorusPoint{0.5, 0.5}, 0.25},
                            {TorusPoint{0.5, 0.5 + 1e-14}, 0.25},
                            {TorusPoint{0.25, 0.25}, 0.5}},
                           "dedup");
    CHECK(m.size() == 2);
}

TEST_CASE("invalid measures are rejected") {
    CHECK_THROWS(AtomicMeasure({{TorusPoint{0.1, 0.1}, 0.5}}, "under"));
    CHECK_THROWS(AtomicMeasure({{TorusPoint{0.1, 0.1}, -0.5}, {TorusPoint{0.2, 0.2}, 1.5}}, "neg"));
    CHECK_THROWS(AtomicMeasure({}, "empty"));
}
