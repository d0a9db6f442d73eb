#ifndef HISTENT_ENTROPY_HPP
#define HISTENT_ENTROPY_HPP

#include "histent/measures.hpp"
#include "histent/systems.hpp"

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace histent {

// ---------------------------------------------------------------------------
// Bowen balls and the dynamic metric
// ---------------------------------------------------------------------------

struct BowenBallSpec {
    Point center;
    std::size_t length = 1;
    double radius = 0.0;
};

// d_n(x, y) = max of iterate distances over 0 <= i < n.
double bowen_distance(const DynamicalSystem& sys, const Point& x, const Point& y,
                      std::size_t n);

bool bowen_ball_membership(const DynamicalSystem& sys, const BowenBallSpec& ball,
                           const Point& y);

// Points of the uniform grid on the torus, row-major, resolution^2 of them.
std::vector<Point> torus_grid(int resolution);

// All 2^n cylinder representatives (n-word followed by zeros).
std::vector<Point> shift_cylinder_representatives(std::size_t n);

// ---------------------------------------------------------------------------
// Separated and spanning sets (greedy surrogates, bias recorded)
// ---------------------------------------------------------------------------

struct SeparatedResult {
    std::vector<std::size_t> kept; // indices into the input points
    std::size_t count = 0;         // lower bound for the true maximum
};

SeparatedResult max_separated(const DynamicalSystem& sys, const std::vector<Point>& points,
                              std::size_t n, double eps);

struct SpanningResult {
    std::vector<std::size_t> centers; // indices into the candidate centers
    std::size_t count = 0;
    double covered_mass = 0.0;
};

struct UncoverableError : std::runtime_error {
    std::size_t sample_index;
    UncoverableError(const std::string& msg, std::size_t idx)
        : std::runtime_error(msg), sample_index(idx) {}
};

// Greedy cover of the sample by Bowen balls centered at candidate points;
// stops once covered mass reaches mass_goal (1.0 = full cover).
SpanningResult min_spanning(const DynamicalSystem& sys, const std::vector<Point>& centers,
                            const std::vector<Point>& sample, std::size_t n, double eps,
                            const std::vector<double>& sample_weights = {},
                            double mass_goal = 1.0);

// ---------------------------------------------------------------------------
// Entropy estimates
// ---------------------------------------------------------------------------

struct EntropyEstimate {
    double value = 0.0; // nats per iterate
    std::string method; // separated-count | katok | bowen-cover
    std::string backend; // greedy-sample | toral-lattice | cylinder-trie
    std::string bias;   // upper | lower | two-sided
    std::map<std::string, double> params;
    // per length n: log of the cover/separated count (upper bound flavor),
    // and the certified lower bound when the backend provides one
    std::vector<std::pair<std::size_t, double>> log_counts;
    std::vector<std::pair<std::size_t, double>> log_counts_lower;
};

struct WeightedSample {
    std::vector<Point> points;
    std::vector<double> weights; // empty means uniform
    double mass() const;
};

using SampleProvider = std::function<WeightedSample(std::size_t n)>;
using CenterProvider = std::function<std::vector<Point>(std::size_t n)>;

struct KatokEntropyOptions {
    enum class Backend { GreedySample, ToralLattice };
    Backend backend = Backend::GreedySample;
    bool add_sample_as_centers = true;
    // when true and inputs are small, also run the P >= Q >= N chain check
    bool verify_chain = true;
};

struct SampleTooSmallError : std::runtime_error {
    std::size_t required;
    SampleTooSmallError(const std::string& msg, std::size_t req)
        : std::runtime_error(msg), required(req) {}
};

// Certified two-sided cover counts for linear toral automorphisms: an
// explicit eigenframe lattice of inscribed tiles gives the upper bound, the
// outer-rectangle area bound gives the lower one. Returned in logs.
struct ToralCoverCounts {
    double log_upper = 0.0;
    double log_lower = 0.0;
};
ToralCoverCounts toral_bowen_cover_counts(const CatMapSpec& spec, std::size_t n, double eps,
                                          double delta);

// Katok entropy at fixed epsilon: least-squares slope of log N(n, eps, delta)
// over the n window (the liminf is unobservable at finite n).
EntropyEstimate katok_entropy(const DynamicalSystem& sys, const SampleProvider& sample,
                              const CenterProvider& centers, double eps, double delta,
                              const std::vector<std::size_t>& n_list,
                              const KatokEntropyOptions& opts = {});

// Convenience wrapper for a fixed sample and fixed candidate centers.
EntropyEstimate katok_entropy(const DynamicalSystem& sys, const WeightedSample& sample,
                              const std::vector<Point>& centers, double eps, double delta,
                              const std::vector<std::size_t>& n_list,
                              const KatokEntropyOptions& opts = {});

// ---------------------------------------------------------------------------
// Bowen entropy of a set via cover values m(Z, s, N, eps)
// ---------------------------------------------------------------------------

struct CoverCertificate {
    struct Entry {
        std::size_t length = 0;
        double log_count = 0.0; // number of balls of this length, in logs
        std::optional<Point> witness; // a representative center, when explicit
    };
    std::vector<Entry> entries;
    double s = 0.0;
    double log_value = 0.0; // log sum over the cover of e^{-ns}
    bool explicit_cover = false;

    double recompute_log_value() const;
};

struct BowenSetEntropyOptions {
    enum class Backend { Auto, GreedyExplicit, CylinderTrie, ToralLattice };
    Backend backend = Backend::Auto;
    std::size_t length_window = 8;     // explicit covers: n in [N, N + window]
    std::size_t lattice_max_length = 400; // formula-backed covers may go long
    std::vector<Point> extra_centers;
    double bisect_tol = 1e-4;
};

struct BowenSetEntropyResult {
    EntropyEstimate estimate;
    CoverCertificate certificate;
};

BowenSetEntropyResult bowen_set_entropy(const DynamicalSystem& sys,
                                        const std::vector<Point>& z_sample, double eps,
                                        std::size_t N,
                                        const BowenSetEntropyOptions& opts = {});

// ---------------------------------------------------------------------------
// Entropy distribution principle certifier
// ---------------------------------------------------------------------------

struct EdpResult {
    bool certified = false;
    double worst_ratio = 0.0; // max over tested balls of mass / (K e^{-ns})
    std::size_t balls_tested = 0;
    std::size_t n_min = 0, n_max = 0;
};

// Checks max over the provided alpha tail of alpha_k(B_n(x, eps)) <= K e^{-ns}
// for every ball with n in [N, n_max] meeting the sample. A true verdict
// certifies s as a lower bound for h_top at scale eps.
EdpResult edp_certify(const DynamicalSystem& sys, const std::vector<AtomicMeasure>& alphas,
                      const std::vector<Point>& z_sample, double eps, double s, double K,
                      std::size_t N, std::size_t n_max);

} // namespace histent

#endif
