#ifndef HISTENT_GLUING_HPP
#define HISTENT_GLUING_HPP

#include "histent/historic.hpp"
#include "histent/measures.hpp"
#include "histent/systems.hpp"
#include "histent/util.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace histent {

// ---------------------------------------------------------------------------
// Targets
// ---------------------------------------------------------------------------

// Ergodic building blocks the library can realize by orbit segments. A target
// measure is a finite convex combination of these (the stand-in for ergodic
// decomposition).
struct TargetComponent {
    enum class Kind { PeriodicWord, PeriodicOrbit, Bernoulli };
    Kind kind = Kind::PeriodicWord;
    std::vector<std::uint8_t> word; // PeriodicWord
    TorusPoint orbit_point{};       // PeriodicOrbit (period detected, <= 64)
    double bernoulli_p = 0.5;       // Bernoulli (shift only)
    double weight = 1.0;

    std::string describe() const;
};

using TargetMeasure = std::vector<TargetComponent>;

// Basis integrals of a target component (closed form for Bernoulli).
std::vector<double> target_integrals(const DynamicalSystem& sys, const TargetComponent& t,
                                     const TestBasis& basis);
std::vector<double> target_integrals(const DynamicalSystem& sys, const TargetMeasure& t,
                                     const TestBasis& basis);
double target_integral(const DynamicalSystem& sys, const TargetMeasure& t,
                       const std::function<double(const Point&)>& phi);

// ---------------------------------------------------------------------------
// Segment library
// ---------------------------------------------------------------------------

struct LibraryOptions {
    double eps_prime = 0.5;
    double gamma = 0.05;
    double delta = 0.1;
    std::size_t base_length = 8;   // smallest segment length
    std::size_t max_segments = 4096;
    std::size_t cell_depth = 4;    // shift partition cells are cylinders
    double cell_size = 0.0;        // torus cell diameter; 0 = eps'/27
    std::uint64_t seed = 1;
    std::size_t search_attempts = 200000;
    std::size_t connector_horizon = 40;
    bool all_pair_connectors = false; // needed for the strict-mode certificate
    bool force_generic_search = false; // torus: search starts instead of exact orbits
};

struct LibraryComponent {
    TargetComponent target;
    Rational weight;                // a_{k,j}
    std::size_t length = 0;         // n(k,j)
    std::vector<Point> segments;    // W_{n(k,j)}: start points, pairwise separated
    std::vector<double> target_ints; // basis integrals of m_{k,j}
    double worst_empirical_D = 0.0; // certified max D(E_n(x), m_{k,j})
    double separation = 0.0;        // certified by max_separated
    // partition cell of the W starts
    std::vector<std::uint8_t> cell_prefix; // shift
    TorusPoint cell_center{};              // torus
    double cell_diameter = 0.0;
    // torus systems: materialized segment orbits and the orbit period
    std::vector<std::vector<TorusPoint>> torus_orbits;
    std::size_t orbit_period = 0;
};

struct Connector {
    Point start;
    std::size_t length = 0; // the transition time s(.)
    Point exit_point{};     // f^length(start)
    double entry_error = 0.0;
    double exit_error = 0.0;
    std::vector<Point> orbit; // materialized orbit, length points
};

struct SegmentLibrary {
    std::vector<std::vector<LibraryComponent>> levels; // levels[k-1][j]
    // within-level connectors per level: j -> j+1 (wrapping); cross-level at j = s_k
    std::map<std::array<std::int64_t, 4>, Connector> connectors;
    LibraryOptions options;
    TestBasis basis = TestBasis::shift_cylinders(16);
    SystemKind system = SystemKind::FullShift2;

    int k_max() const { return static_cast<int>(levels.size()); }
    const Connector& connector(int k1, int j1, int k2, int j2) const;
    double delta_bound(int level) const; // allowed pseudo-orbit jump at this level
};

struct LibraryError : std::runtime_error {
    int k, j;
    double best_distance;
    LibraryError(const std::string& msg, int k_, int j_, double best)
        : std::runtime_error(msg), k(k_), j(j_), best_distance(best) {}
};

// Builds W sets and connectors for levels 1..k_max; level k realizes the
// target mu_{rho(k)} with tolerance 1/k, rho alternating between the two.
SegmentLibrary build_segment_library(const DynamicalSystem& sys, const TargetMeasure& mu1,
                                     const TargetMeasure& mu2, int k_max,
                                     const LibraryOptions& options);

// rho(k) = (k+1) mod 2 + 1: odd levels take mu_1, even levels mu_2.
int rho_alternator(int k);

// Return-window scan: smallest q in [n, (1+gamma) n] maximizing the number of
// points whose q-th iterate returns to their partition cell.
std::pair<std::size_t, std::size_t> best_return_window(
    const DynamicalSystem& sys, const std::vector<Point>& points,
    const std::function<bool(const Point&, const Point&)>& same_cell, std::size_t n,
    double gamma);

// ---------------------------------------------------------------------------
// Schedule
// ---------------------------------------------------------------------------

enum class ScheduleMode { Desk, PaperStrict };

struct ScheduleCheck {
    std::string name;
    bool holds = false;
};

struct LevelSchedule {
    int k = 0;
    std::vector<Rational> weights;       // a_{k,j}
    std::vector<std::size_t> lengths;    // n(k,j)
    std::vector<std::int64_t> copies;    // N_k C_{k,j}, exact integers
    std::int64_t N = 0, X = 0, Y = 0, T = 0;
    std::vector<std::size_t> within_connector_lengths; // s(k,j,k,j+1), last wraps to 1
    std::size_t cross_connector_length = 0;            // s(k,1,k+1,1); 0 at the top level
};

struct GluingSchedule {
    std::vector<LevelSchedule> levels;
    ScheduleMode mode = ScheduleMode::Desk;
    double growth_factor = 12.0;
    std::vector<std::int64_t> M; // M_1..M_{k_max+1}; M[q-1] = M_q
    std::vector<ScheduleCheck> certificate;

    int k_max() const { return static_cast<int>(levels.size()); }
    std::int64_t total_length() const { return M.back(); }
    std::int64_t M_q(int q) const { return M[static_cast<std::size_t>(q - 1)]; }
    std::int64_t offset(int q, std::int64_t i, int j, std::int64_t t) const;
    bool certificate_holds() const;
};

struct ScheduleOptions {
    ScheduleMode mode = ScheduleMode::Desk;
    double growth_factor = 12.0;
    std::int64_t max_total_length = std::int64_t(4) * 1000 * 1000 * 1000;
};

GluingSchedule build_schedule(const SegmentLibrary& library, int k_max,
                              const ScheduleOptions& options = {});

// ---------------------------------------------------------------------------
// Pseudo-orbit
// ---------------------------------------------------------------------------

// The slot choice function: which W element occupies position (q, j, i, t).
using SlotChoice = std::function<std::size_t(int q, int j, std::int64_t i, std::int64_t t)>;

struct PseudoOrbitAnnotation {
    int q = 0, j = 0;
    std::int64_t sweep = 0, copy = 0;
    std::size_t phase = 0;
    bool connector = false;
    bool cross_connector = false;
};

class PseudoOrbit {
  public:
    PseudoOrbit(std::shared_ptr<const SegmentLibrary> library,
                std::shared_ptr<const GluingSchedule> schedule, int k, SlotChoice choice);

    std::int64_t length() const { return schedule_->M_q(k_ + 1); }
    int top_level() const { return k_; }
    const SegmentLibrary& library() const { return *library_; }
    const GluingSchedule& schedule() const { return *schedule_; }

    PseudoOrbitAnnotation annotate(std::int64_t idx) const;
    Point point_at(std::int64_t idx) const;
    // First symbol of the idx-th point; shift systems only.
    std::uint8_t symbol_at(std::int64_t idx) const;

    // Sequential pass over [from, to); amortized O(1) per index.
    void stream_points(std::int64_t from, std::int64_t to,
                       const std::function<void(std::int64_t, const Point&)>& fn) const;
    void stream_symbols(std::int64_t from, std::int64_t to,
                        const std::function<void(std::int64_t, std::uint8_t)>& fn) const;

    struct Jump {
        std::int64_t index = 0; // error between index and index + 1
        double error = 0.0;
        Vec2 vector{}; // torus systems: f(x_i) - x_{i+1}, lifted
    };
    // All block-boundary jumps with nonzero error (interior steps are exact
    // orbit steps by construction).
    std::vector<Jump> nonzero_jumps() const;
    double allowed_jump_bound() const;

    // Small instances only: explicit points for serialization and tests.
    std::vector<Point> materialize(std::int64_t cap = 1 << 22) const;

  private:
    std::shared_ptr<const SegmentLibrary> library_;
    std::shared_ptr<const GluingSchedule> schedule_;
    int k_;
    SlotChoice choice_;

    struct Locator; // walking cursor
    friend struct Locator;
};

PseudoOrbit assemble_pseudo_orbit(std::shared_ptr<const SegmentLibrary> library,
                                  std::shared_ptr<const GluingSchedule> schedule, int k,
                                  SlotChoice choice = {});

// ---------------------------------------------------------------------------
// Shadowing
// ---------------------------------------------------------------------------

struct ShadowResult {
    Point point;                 // the shadowing point z
    double max_distance = 0.0;   // certified sup over indices of d(f^n z, x_n)
    double jump_sum = 0.0;       // sum of jump magnitudes
    std::string method;          // exact-linear | symbolic-concatenation
    // per-index distances, subsampled for audit
    std::vector<std::pair<std::int64_t, double>> distances;
    // exact-linear: correction components at the jump anchors
    std::vector<std::int64_t> jump_positions;
    std::vector<double> wu_at_jump;    // unstable correction at the jump index
    std::vector<double> ws_after_jump; // stable correction at index pos + 1
};

struct ShadowOptions {
    std::int64_t materialize_cap = 1 << 22; // symbols kept for the returned word
};

ShadowResult shadow(const PseudoOrbit& orbit, const DynamicalSystem& sys,
                    const ShadowOptions& opts = {});

// Streams the true orbit of the shadowing point: x_i plus the exact-linear
// correction (torus), or the concatenated symbols (shift).
void stream_shadowed_points(const PseudoOrbit& orbit, const ShadowResult& shadow_result,
                            std::int64_t from, std::int64_t to,
                            const std::function<void(std::int64_t, const Point&)>& fn);

// ---------------------------------------------------------------------------
// Historic point and ensembles
// ---------------------------------------------------------------------------

struct CheckpointRecord {
    int q = 0;               // checkpoint M_q
    std::int64_t M = 0;
    int target = 0;          // 1 or 2: which measure the empirical state approaches
    double D = 0.0;          // metric D distance at the checkpoint
};

struct HistoricPointResult {
    Point z;
    ShadowResult shadow;
    HistoricReport report;
    std::vector<CheckpointRecord> checkpoints;
    double phi_mu1 = 0.0, phi_mu2 = 0.0; // target integrals of the observable
    std::shared_ptr<const SegmentLibrary> library;
    std::shared_ptr<const GluingSchedule> schedule;
    bool checkpoints_converge = false;
};

struct HistoricPointOptions {
    LibraryOptions library;
    ScheduleOptions schedule;
    std::size_t trace_horizon = 1 << 20;
    double checkpoint_tolerance = 0.05;
    int checkpoint_from = 4; // require D <= tol for checkpoints M_q with q >= this
    HistoricOptions detector;
};

HistoricPointResult construct_historic_point(const DynamicalSystem& sys,
                                             const TargetMeasure& mu1,
                                             const TargetMeasure& mu2, int k_max,
                                             const NamedObservable& phi,
                                             const HistoricPointOptions& options);

// Exact per-basis-function integrals of E_{M_q}(z) for the fixed-choice shift
// construction, computed from the block structure without iterating the
// orbit; the streamed evaluation must agree (asserted in tests).
std::vector<std::vector<double>> shift_checkpoint_integrals(const PseudoOrbit& orbit,
                                                            const TestBasis& basis);

struct EnsembleResult {
    std::vector<Point> points;   // sampled (or fully enumerated) L_k shadows
    AtomicMeasure alpha;         // uniform measure on the ensemble
    double log_Lk = 0.0;         // exact log of the product formula count
    bool enumerated = false;
    std::uint64_t seed = 0;
};

EnsembleResult ensemble_and_alpha(std::shared_ptr<const SegmentLibrary> library,
                                  std::shared_ptr<const GluingSchedule> schedule, int k,
                                  std::size_t sample_size, std::uint64_t seed,
                                  std::size_t word_cap = 96,
                                  std::size_t enumerate_limit = 1 << 20);

// ---------------------------------------------------------------------------
// Return-time diagnostic
// ---------------------------------------------------------------------------

std::optional<std::size_t> return_time_check(const DynamicalSystem& sys, const Point& x,
                                             const std::function<bool(const Point&)>& in_gamma,
                                             std::size_t n, double gamma, double t);

} // namespace histent

#endif
