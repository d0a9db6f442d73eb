#ifndef HISTENT_CONFIG_HPP
#define HISTENT_CONFIG_HPP

#include "histent/gluing.hpp"
#include "histent/historic.hpp"
#include "histent/systems.hpp"

#include "json.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace histent {

using json = nlohmann::json;

// Config rejection carries every violated field, not just the first.
struct ValidationError : std::runtime_error {
    std::vector<std::string> violations;
    explicit ValidationError(std::vector<std::string> v)
        : std::runtime_error(join(v)), violations(std::move(v)) {}
    static std::string join(const std::vector<std::string>& v);
};

struct SystemConfig {
    SystemKind kind = SystemKind::CatMap;
    KatokMapSpec katok;
};

SystemConfig parse_system(const json& cfg, std::vector<std::string>& violations);
std::unique_ptr<DynamicalSystem> build_system(const SystemConfig& cfg);

// Points arrive either as [x, y] or {"word": "0101", "tail": "zeros|ones|periodic"}.
Point parse_point(const json& p, SystemKind kind);
TargetMeasure parse_target(const json& t, SystemKind kind);
NamedObservable parse_observable(const json& phi, SystemKind kind);

// ---------------------------------------------------------------------------
// Result records
// ---------------------------------------------------------------------------

struct MetricValue {
    std::string name;
    double value = 0.0;
    std::optional<double> tolerance; // |value - target| bound or explicit bound
    std::optional<bool> pass;
};

struct ResultRecord {
    std::string experiment_id;
    std::string config_hash;
    std::vector<MetricValue> metrics;
    double runtime_ms = 0.0; // excluded from the canonical (hashable) form
    json artifacts = json::object();

    void add(std::string name, double value) { metrics.push_back({std::move(name), value, {}, {}}); }
    void add(std::string name, double value, double tolerance, bool pass) {
        metrics.push_back({std::move(name), value, tolerance, pass});
    }
    bool all_pass() const;
    json to_json(bool include_runtime = true) const;
};

// FNV-1a over the canonical (sorted-key) dump.
std::string canonical_hash(const json& j);

// Structured serialization for the file emitters.
json measure_to_json(const AtomicMeasure& m);
json point_to_json(const Point& p);

void write_text_file(const std::string& path, const std::string& content);

} // namespace histent

#endif
