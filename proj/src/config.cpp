#include "histent/config.hpp"

#include <cmath>
#include <fstream>

namespace histent {

std::string ValidationError::join(const std::vector<std::string>& v) {
    std::string out = "config validation failed:";
    for (const auto& s : v) out += "\n  - " + s;
    return out;
}

SystemConfig parse_system(const json& cfg, std::vector<std::string>& violations) {
    SystemConfig out;
    if (!cfg.contains("system") || !cfg["system"].is_object()) {
        violations.push_back("system: required object with a \"type\" field");
        return out;
    }
    const json& sys = cfg["system"];
    std::string type = sys.value("type", "");
    if (type == "cat-map") {
        out.kind = SystemKind::CatMap;
    } else if (type == "katok-map") {
        out.kind = SystemKind::KatokMap;
    } else if (type == "full-shift") {
        out.kind = SystemKind::FullShift2;
    } else {
        violations.push_back("system.type: one of cat-map | katok-map | full-shift");
    }
    if (sys.contains("katok")) {
        const json& k = sys["katok"];
        out.katok.r0 = k.value("r0", out.katok.r0);
        out.katok.r1 = k.value("r1", out.katok.r1);
        out.katok.alpha = k.value("alpha", out.katok.alpha);
        out.katok.ode_tolerance = k.value("ode_tolerance", out.katok.ode_tolerance);
        out.katok.ode_max_step = k.value("ode_max_step", out.katok.ode_max_step);
        try {
            out.katok.validate();
        } catch (const std::exception& e) {
            violations.push_back(std::string("system.katok: ") + e.what());
        }
    }
    return out;
}

std::unique_ptr<DynamicalSystem> build_system(const SystemConfig& cfg) {
    if (cfg.kind == SystemKind::KatokMap) return std::make_unique<KatokMap>(cfg.katok);
    return make_system(cfg.kind);
}

namespace {
std::vector<std::uint8_t> parse_bits(const std::string& s) {
    std::vector<std::uint8_t> bits;
    for (char c : s) {
        if (c == '0')
            bits.push_back(0);
        else if (c == '1')
            bits.push_back(1);
        else
            throw std::invalid_argument("symbol strings may contain only 0 and 1");
    }
    if (bits.empty()) throw std::invalid_argument("symbol strings must be non-empty");
    return bits;
}
} // namespace

Point parse_point(const json& p, SystemKind kind) {
    if (kind == SystemKind::FullShift2) {
        if (!p.is_object() || !p.contains("word"))
            throw std::invalid_argument("shift points need {\"word\": \"01...\"}");
        auto bits = parse_bits(p["word"].get<std::string>());
        std::string tail = p.value("tail", "zeros");
        if (tail == "zeros") return SymbolicWord::from_prefix(bits, TailKind::Zeros);
        if (tail == "ones") return SymbolicWord::from_prefix(bits, TailKind::Ones);
        if (tail == "periodic") return SymbolicWord::periodic(bits);
        throw std::invalid_argument("point.tail: one of zeros | ones | periodic");
    }
    if (!p.is_array() || p.size() != 2)
        throw std::invalid_argument("torus points are [x, y] arrays");
    return reduce_mod1(p[0].get<double>(), p[1].get<double>());
}

TargetMeasure parse_target(const json& t, SystemKind kind) {
    if (!t.is_array() || t.empty())
        throw std::invalid_argument("targets are non-empty arrays of components");
    TargetMeasure out;
    for (const auto& c : t) {
        TargetComponent comp;
        std::string type = c.value("kind", "");
        comp.weight = c.value("weight", 1.0);
        if (type == "periodic-word") {
            comp.kind = TargetComponent::Kind::PeriodicWord;
            comp.word = parse_bits(c.at("word").get<std::string>());
        } else if (type == "bernoulli") {
            comp.kind = TargetComponent::Kind::Bernoulli;
            comp.bernoulli_p = c.at("p").get<double>();
        } else if (type == "periodic-orbit") {
            comp.kind = TargetComponent::Kind::PeriodicOrbit;
            auto pt = c.at("point");
            comp.orbit_point = reduce_mod1(pt[0].get<double>(), pt[1].get<double>());
        } else {
            throw std::invalid_argument(
                "target.kind: one of periodic-word | bernoulli | periodic-orbit");
        }
        (void)kind;
        out.push_back(std::move(comp));
    }
    return out;
}

NamedObservable parse_observable(const json& phi, SystemKind kind) {
    std::string name = phi.is_string() ? phi.get<std::string>() : phi.value("name", "");
    if (name == "cos2pix1") {
        if (kind == SystemKind::FullShift2)
            throw std::invalid_argument("cos2pix1 needs a torus system");
        return {"cos(2 pi x1)", 1.0, [](const Point& p) {
                    return std::cos(2.0 * M_PI * std::get<TorusPoint>(p).x);
                }};
    }
    if (name == "sin2pix2") {
        if (kind == SystemKind::FullShift2)
            throw std::invalid_argument("sin2pix2 needs a torus system");
        return {"sin(2 pi x2)", 1.0, [](const Point& p) {
                    return std::sin(2.0 * M_PI * std::get<TorusPoint>(p).y);
                }};
    }
    if (name == "indicator-x0") {
        if (kind != SystemKind::FullShift2)
            throw std::invalid_argument("indicator-x0 needs the shift");
        return {"indicator(x0 = 1)", 1.0, [](const Point& p) {
                    return std::get<SymbolicWord>(p).at(0) == 1 ? 1.0 : 0.0;
                }};
    }
    throw std::invalid_argument("observable: one of cos2pix1 | sin2pix2 | indicator-x0");
}

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

bool ResultRecord::all_pass() const {
    for (const auto& m : metrics)
        if (m.pass.has_value() && !*m.pass) return false;
    return true;
}

json ResultRecord::to_json(bool include_runtime) const {
    json j;
    j["experiment"] = experiment_id;
    j["config_hash"] = config_hash;
    json ms = json::array();
    for (const auto& m : metrics) {
        json e;
        e["name"] = m.name;
        e["value"] = format_double(m.value);
        if (m.tolerance) e["tolerance"] = format_double(*m.tolerance);
        if (m.pass) e["pass"] = *m.pass;
        ms.push_back(e);
    }
    j["metrics"] = ms;
    j["pass"] = all_pass();
    if (!artifacts.empty()) j["artifacts"] = artifacts;
    if (include_runtime) j["runtime_ms"] = runtime_ms;
    return j;
}

std::string canonical_hash(const json& j) {
    std::string dump = j.dump(); // object keys already sorted
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : dump) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

json point_to_json(const Point& p) {
    if (std::holds_alternative<TorusPoint>(p)) {
        const auto& t = std::get<TorusPoint>(p);
        return json::array({format_double(t.x), format_double(t.y)});
    }
    const auto& w = std::get<SymbolicWord>(p);
    std::string s;
    std::size_t show = std::min<std::size_t>(w.prefix_size() + w.tail_period(), 64);
    for (std::size_t i = 0; i < show; ++i) s += w.at(i) ? '1' : '0';
    json j;
    j["word"] = s;
    switch (w.tail_kind()) {
        case TailKind::Zeros: j["tail"] = "zeros"; break;
        case TailKind::Ones: j["tail"] = "ones"; break;
        case TailKind::Periodic: j["tail"] = "periodic"; break;
    }
    return j;
}

json measure_to_json(const AtomicMeasure& m) {
    json j;
    j["label"] = m.label();
    json atoms = json::array();
    for (const auto& a : m.atoms()) {
        json e;
        e["point"] = point_to_json(a.point);
        e["weight"] = format_double(a.weight); // bit-exact decimal string
        atoms.push_back(e);
    }
    j["atoms"] = atoms;
    return j;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << content;
    if (!out) throw std::runtime_error("write failed: " + path);
}

} // namespace histent
