#ifndef HISTENT_MEASURES_HPP
#define HISTENT_MEASURES_HPP

#include "histent/systems.hpp"
#include "histent/util.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace histent {

// ---------------------------------------------------------------------------
// Finitely supported probability measures
// ---------------------------------------------------------------------------

struct Atom {
    Point point;
    double weight = 0.0;
};

class AtomicMeasure {
  public:
    AtomicMeasure() = default;
    // Atoms are deduplicated at the given resolution and the weights checked
    // to sum to one.
    AtomicMeasure(std::vector<Atom> atoms, std::string label,
                  double resolution = 1e-12);

    static AtomicMeasure dirac(Point p, std::string label = "dirac");
    // Uniform measure on a finite orbit or point cloud.
    static AtomicMeasure uniform(std::vector<Point> pts, std::string label,
                                 double resolution = 1e-12);
    static AtomicMeasure convex(const std::vector<std::pair<AtomicMeasure, double>>& parts,
                                std::string label, double resolution = 1e-12);

    const std::vector<Atom>& atoms() const { return atoms_; }
    const std::string& label() const { return label_; }
    double total_mass() const;
    std::size_t size() const { return atoms_.size(); }

  private:
    std::vector<Atom> atoms_;
    std::string label_;
};

// Uniform atomic measure on the first n orbit points of x.
AtomicMeasure empirical_measure(const DynamicalSystem& sys, const Point& x, std::size_t n);

double integrate(const AtomicMeasure& mu, const std::function<double(const Point&)>& phi);

// ---------------------------------------------------------------------------
// Test basis and the compatible metric D
// ---------------------------------------------------------------------------

// Dense family of continuous test functions; the order is fixed and carried
// in the id, since D values depend on it.
class TestBasis {
  public:
    enum class Kind { TorusTrig, ShiftCylinder };

    static TestBasis torus_trig(int truncation = 16);
    static TestBasis shift_cylinders(int truncation = 16);
    static TestBasis for_system(const DynamicalSystem& sys, int truncation = 16);

    Kind basis_kind() const { return kind_; }
    int truncation() const { return truncation_; }
    const std::string& id() const { return id_; }

    // i is 1-based, 1 <= i <= truncation().
    double evaluate(int i, const Point& p) const;
    double sup_norm(int) const { return 1.0; }
    // Cylinder identity of the i-th function (shift basis only).
    struct CylinderSpec {
        int depth;
        std::uint32_t bits;
    };
    std::optional<CylinderSpec> cylinder_spec(int i) const;
    // Weight 2^{-(i+1)} / sup_norm of the i-th term of D.
    double weight(int i) const;
    // Everything D can still see past the truncation.
    double tail_bound() const;

    TestBasis with_truncation(int truncation) const;

  private:
    TestBasis(Kind kind, int truncation);
    Kind kind_;
    int truncation_;
    std::string id_;
    // torus: frequency vectors + cos/sin flag; shift: (depth, bits)
    struct TorusFn { int k1, k2; bool sine; };
    struct CylFn { int depth; std::uint32_t bits; };
    std::vector<TorusFn> torus_fns_;
    std::vector<CylFn> cyl_fns_;
};

std::vector<double> basis_integrals(const AtomicMeasure& mu, const TestBasis& basis);

struct MetricDValue {
    double value = 0.0;
    double tail_bound = 0.0; // 2^{-I}, bound on the omitted terms
};

MetricDValue metric_D(const AtomicMeasure& mu, const AtomicMeasure& nu, const TestBasis& basis);
MetricDValue metric_D_from_integrals(const std::vector<double>& a,
                                     const std::vector<double>& b, const TestBasis& basis);

// ---------------------------------------------------------------------------
// Rational convex approximation
// ---------------------------------------------------------------------------

struct RationalCombination {
    std::vector<std::pair<AtomicMeasure, Rational>> components;
    int order = 0;              // the k of the 1/k guarantee
    MetricDValue certified;     // D(input, combination), evaluated directly

    AtomicMeasure flatten(std::string label = "rational-combination") const;
};

struct ApproximationError : std::runtime_error {
    int required_truncation;
    ApproximationError(const std::string& msg, int required)
        : std::runtime_error(msg), required_truncation(required) {}
};

// Exact rational weights summing to one with |a_j - w_j| < 1/(3 k s).
std::vector<Rational> rational_weights(const std::vector<double>& weights, int k);

// Replace the real weights of a finite convex combination by exact rationals
// with |a_j - w_j| < 1/(3 k s) and certified D(input, output) <= 1/k.
RationalCombination rational_approximation(
    const std::vector<std::pair<AtomicMeasure, double>>& components, int k,
    const TestBasis& basis);

} // namespace histent

#endif
