#ifndef HISTENT_SYSTEMS_HPP
#define HISTENT_SYSTEMS_HPP

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace histent {

// ---------------------------------------------------------------------------
// Small 2d linear algebra
// ---------------------------------------------------------------------------

struct Vec2 {
    double x = 0.0, y = 0.0;
    friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
    friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
    friend Vec2 operator*(double s, Vec2 v) { return {s * v.x, s * v.y}; }
    double dot(Vec2 o) const { return x * o.x + y * o.y; }
    double norm() const;
};

struct Mat2 {
    // row major: [a b; c d]
    double a = 1.0, b = 0.0, c = 0.0, d = 1.0;
    static Mat2 identity() { return {}; }
    Vec2 apply(Vec2 v) const { return {a * v.x + b * v.y, c * v.x + d * v.y}; }
    friend Mat2 operator*(const Mat2& m, const Mat2& n) {
        return {m.a * n.a + m.b * n.c, m.a * n.b + m.b * n.d,
                m.c * n.a + m.d * n.c, m.c * n.b + m.d * n.d};
    }
    double det() const { return a * d - b * c; }
    double norm() const; // spectral norm
};

// ---------------------------------------------------------------------------
// Points
// ---------------------------------------------------------------------------

// Point on the 2-torus, coordinates always reduced into [0,1).
struct TorusPoint {
    double x = 0.0, y = 0.0;
};

TorusPoint reduce_mod1(double x, double y);
inline TorusPoint reduce_mod1(Vec2 v) { return reduce_mod1(v.x, v.y); }

// Representative of p nearest the origin, componentwise in [-0.5, 0.5).
Vec2 centered_lift(TorusPoint p);

double torus_distance(TorusPoint a, TorusPoint b);

// One-sided binary sequence with an explicit finite prefix and a recorded
// tail rule, so equality and the shift stay decidable. The prefix lives in
// shared immutable storage: shifting is O(1) and orbits of long words do not
// copy.
enum class TailKind : std::uint8_t { Zeros, Ones, Periodic };

class SymbolicWord {
  public:
    SymbolicWord() = default;

    static SymbolicWord zeros() { return {}; }
    static SymbolicWord ones();
    // Finite word repeated forever.
    static SymbolicWord periodic(std::vector<std::uint8_t> block);
    // Finite word followed by a constant tail.
    static SymbolicWord from_prefix(std::vector<std::uint8_t> p,
                                    TailKind t = TailKind::Zeros);

    std::uint8_t at(std::size_t i) const;
    std::size_t prefix_size() const { return data_ ? data_->size() - offset_ : 0; }
    TailKind tail_kind() const { return tail_; }
    std::size_t tail_period() const {
        return tail_ == TailKind::Periodic ? tail_block_->size() : 1;
    }
    // Word with the first symbol dropped; prefix storage is shared.
    SymbolicWord shifted() const;
    // Word with one symbol prepended (copies the prefix).
    SymbolicWord with_prepended(std::uint8_t sym) const;
    std::string to_string(std::size_t show = 24) const;

  private:
    std::shared_ptr<const std::vector<std::uint8_t>> data_; // may be null
    std::size_t offset_ = 0;
    TailKind tail_ = TailKind::Zeros;
    std::shared_ptr<const std::vector<std::uint8_t>> tail_block_; // Periodic only
    std::size_t tail_offset_ = 0;
};

bool word_equal(const SymbolicWord& a, const SymbolicWord& b);
double word_distance(const SymbolicWord& a, const SymbolicWord& b);

using Point = std::variant<TorusPoint, SymbolicWord>;

double point_distance(const Point& a, const Point& b);
bool point_equal(const Point& a, const Point& b, double resolution = 1e-12);
// Distance-below-resolution test that never scans past the resolution depth
// on words; this is what measure deduplication uses.
bool point_close(const Point& a, const Point& b, double resolution);

// ---------------------------------------------------------------------------
// Systems
// ---------------------------------------------------------------------------

enum class SystemKind { CatMap, KatokMap, FullShift2 };

class DynamicalSystem {
  public:
    virtual ~DynamicalSystem() = default;

    virtual SystemKind kind() const = 0;
    virtual const std::string& name() const = 0;
    virtual bool smooth() const = 0;

    virtual Point apply(const Point& p) const = 0;
    virtual Point apply_inverse(const Point& p) const = 0;
    virtual double distance(const Point& a, const Point& b) const = 0;

    // Tangent map at a point; smooth systems only.
    virtual Mat2 derivative(const Point& p) const;
    virtual Mat2 derivative_inverse(const Point& p) const;

    std::vector<Point> orbit(const Point& start, std::size_t length) const;
};

// Hyperbolic toral automorphism with the fixed matrix A = [2 1; 1 1].
struct CatMapSpec {
    Mat2 matrix{2.0, 1.0, 1.0, 1.0};
    Mat2 inverse{1.0, -1.0, -1.0, 2.0};
    double lambda;        // dominant eigenvalue (3+sqrt(5))/2
    double log_lambda;
    Vec2 unstable;        // unit eigenvector, positive first coordinate
    Vec2 stable;          // unit eigenvector orthogonal to unstable
    CatMapSpec();
};

TorusPoint cat_apply(TorusPoint p);
TorusPoint cat_apply_inverse(TorusPoint p);

class CatMap final : public DynamicalSystem {
  public:
    CatMap() = default;
    SystemKind kind() const override { return SystemKind::CatMap; }
    const std::string& name() const override { return name_; }
    bool smooth() const override { return true; }
    Point apply(const Point& p) const override;
    Point apply_inverse(const Point& p) const override;
    double distance(const Point& a, const Point& b) const override;
    Mat2 derivative(const Point&) const override { return spec_.matrix; }
    Mat2 derivative_inverse(const Point&) const override { return spec_.inverse; }
    const CatMapSpec& spec() const { return spec_; }

  private:
    CatMapSpec spec_;
    std::string name_ = "cat-map";
};

// Slowdown profile and integration control for the Katok map. r0 is the
// radius of the slowdown disk (psi(u) = 1 for u >= r0^2, u the squared
// radius), r1 the radius of the disk on which the time-1 flow replaces A.
struct KatokMapSpec {
    double r0 = 0.03;
    double r1 = 0.1;
    double alpha = 0.5;
    double ode_tolerance = 1e-10; // per unit time
    double ode_max_step = 0.05;

    double psi(double u) const;
    double psi_prime(double u) const;
    void validate() const;
};

class KatokMap final : public DynamicalSystem {
  public:
    explicit KatokMap(KatokMapSpec spec = {});
    SystemKind kind() const override { return SystemKind::KatokMap; }
    const std::string& name() const override { return name_; }
    bool smooth() const override { return true; }
    Point apply(const Point& p) const override;
    Point apply_inverse(const Point& p) const override;
    double distance(const Point& a, const Point& b) const override;
    Mat2 derivative(const Point& p) const override;
    Mat2 derivative_inverse(const Point& p) const override;
    const KatokMapSpec& spec() const { return spec_; }

    // Forward step together with the tangent map along it.
    std::pair<TorusPoint, Mat2> apply_with_derivative(TorusPoint p) const;

  private:
    KatokMapSpec spec_;
    CatMapSpec cat_;
    std::string name_ = "katok-map";
};

SymbolicWord shift_apply(const SymbolicWord& w);

class FullShift final : public DynamicalSystem {
  public:
    FullShift() = default;
    SystemKind kind() const override { return SystemKind::FullShift2; }
    const std::string& name() const override { return name_; }
    bool smooth() const override { return false; }
    Point apply(const Point& p) const override;
    Point apply_inverse(const Point& p) const override;
    double distance(const Point& a, const Point& b) const override;

  private:
    std::string name_ = "full-2-shift";
};

// Df^n along the orbit of x (product of step derivatives, latest leftmost).
Mat2 tangent_cocycle(const DynamicalSystem& sys, const Point& x, std::size_t n);

std::unique_ptr<DynamicalSystem> make_system(SystemKind kind);

struct IntegratorError : std::runtime_error {
    TorusPoint where;
    IntegratorError(const std::string& msg, TorusPoint p)
        : std::runtime_error(msg), where(p) {}
};

} // namespace histent

#endif
