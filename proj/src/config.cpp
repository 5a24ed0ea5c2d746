#include "gradepreview/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include <fmt/format.h>
#include <yaml-cpp/yaml.h>

namespace gradepreview {

namespace {

std::string num(double v) { return fmt::format("{}", v); }

std::string quoted(const std::string& s) {
    std::string out = "'";
    for (char c : s) out += c == '\'' ? std::string("''") : std::string(1, c);
    return out + "'";
}

std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (const std::string& s : items) {
        if (!out.empty()) out += ", ";
        out += s;
    }
    return out;
}

template <typename T>
T scalar(const YAML::Node& node, const std::string& key) {
    if (!node.IsScalar()) throw ConfigError(key, "expected a single value");
    try {
        return node.as<T>();
    } catch (const YAML::Exception&) {
        throw ConfigError(key, fmt::format("cannot read '{}'", node.Scalar()));
    }
}

double number(const YAML::Node& node, const std::string& key) {
    const double v = scalar<double>(node, key);
    if (!std::isfinite(v)) throw ConfigError(key, "must be finite");
    return v;
}

std::uint64_t unsigned_int(const YAML::Node& node, const std::string& key) {
    const std::string text = scalar<std::string>(node, key);
    if (text.empty() || text.find_first_not_of("0123456789") != std::string::npos) {
        throw ConfigError(key, fmt::format("expected a non-negative integer, got '{}'", text));
    }
    try {
        return std::stoull(text);
    } catch (const std::exception&) {
        throw ConfigError(key, fmt::format("'{}' is out of range", text));
    }
}

/// Map entries keyed by name; rejects keys outside `allowed`.
std::map<std::string, YAML::Node> entries(const YAML::Node& node, const std::vector<std::string>& allowed,
                                          const std::string& where) {
    std::map<std::string, YAML::Node> out;
    if (!node || node.IsNull()) return out;
    if (!node.IsMap()) throw ConfigError(where, "expected key: value pairs");
    std::vector<std::string> unknown;
    for (const auto& kv : node) {
        const std::string key = kv.first.as<std::string>();
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            unknown.push_back(key);
        } else {
            out[key] = kv.second;
        }
    }
    if (!unknown.empty()) {
        throw ConfigError(where, fmt::format("unknown key{} {} (accepted: {})", unknown.size() > 1 ? "s" : "",
                                             join(unknown), join(allowed)));
    }
    return out;
}

std::string prefixed(const std::string& where, const std::string& key) {
    return where.empty() ? key : where + "." + key;
}

YAML::Node load_yaml(const std::string& text, const std::string& source) {
    try {
        return YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw IoError(source, e.mark.line + 1, e.msg);
    }
}

std::string read_text(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw IoError(file.string(), 0, "cannot open for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

// -----------------------------------------------------------------------------
// Run configuration
// -----------------------------------------------------------------------------

void RunConfig::validate() const {
    estimator.validate();
    if (mode == RunMode::Simulate) {
        if (data_dir) throw ConfigError("data_dir", "only valid with mode: replay");
    } else {
        if (!data_dir) throw ConfigError("data_dir", "replay needs a data directory");
        if (scenario) throw ConfigError("scenario", "only valid with mode: simulate");
        if (seed) throw ConfigError("seed", "only valid with mode: simulate");
    }
    if (output_dir.empty()) throw ConfigError("output_dir", "must not be empty");
    if (!(range_bin_width > 0.0) || !std::isfinite(range_bin_width)) {
        throw ConfigError("range_bin_width", "must be > 0");
    }
}

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = {
        "mode",          "scenario",          "data_dir",          "output_dir",
        "seed",          "filter_mode",       "range_bin_width",   "preview_distance",
        "wheelbase",     "patch_length",      "track_width",       "waypoint_spacing",
        "process_noise", "measurement_variance", "bias_front_slope", "bias_front_offset",
        "bias_rear_slope", "bias_rear_offset", "min_height_band",  "prior_grade_variance",
        "prior_rate_scale"};
    return keys;
}

namespace {

RunConfig config_from_node(YAML::Node root, const ConfigOverrides& overrides) {
    if (root && !root.IsNull() && !root.IsMap()) throw ConfigError("", "config must be a map of key: value pairs");
    if (!root || root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
    for (const auto& [raw_key, value] : overrides) {
        std::string key = raw_key;
        std::replace(key.begin(), key.end(), '-', '_');
        root[key] = value;
    }
    const auto e = entries(root, config_keys(), "");
    auto get = [&](const char* key) -> const YAML::Node* {
        auto it = e.find(key);
        return it == e.end() || it->second.IsNull() ? nullptr : &it->second;
    };

    RunConfig c;
    if (auto n = get("mode")) {
        const auto v = scalar<std::string>(*n, "mode");
        if (v == "simulate") {
            c.mode = RunMode::Simulate;
        } else if (v == "replay") {
            c.mode = RunMode::Replay;
        } else {
            throw ConfigError("mode", fmt::format("expected simulate or replay, got '{}'", v));
        }
    }
    if (auto n = get("scenario")) c.scenario = scalar<std::string>(*n, "scenario");
    if (auto n = get("data_dir")) c.data_dir = scalar<std::string>(*n, "data_dir");
    if (auto n = get("output_dir")) c.output_dir = scalar<std::string>(*n, "output_dir");
    if (auto n = get("seed")) c.seed = unsigned_int(*n, "seed");
    if (auto n = get("filter_mode")) {
        const auto v = scalar<std::string>(*n, "filter_mode");
        if (v == "full") {
            c.filter_mode = GradeFilterTrack::Mode::Full;
        } else if (v == "incremental") {
            c.filter_mode = GradeFilterTrack::Mode::Incremental;
        } else {
            throw ConfigError("filter_mode", fmt::format("expected full or incremental, got '{}'", v));
        }
    }
    if (auto n = get("range_bin_width")) c.range_bin_width = number(*n, "range_bin_width");

    EstimatorConfig& est = c.estimator;
    const std::pair<const char*, double*> fields[] = {
        {"preview_distance", &est.preview_distance},
        {"wheelbase", &est.wheelbase},
        {"patch_length", &est.patch_length},
        {"track_width", &est.track_width},
        {"waypoint_spacing", &est.waypoint_spacing},
        {"process_noise", &est.process_noise},
        {"measurement_variance", &est.measurement_variance},
        {"bias_front_slope", &est.bias_front_slope},
        {"bias_front_offset", &est.bias_front_offset},
        {"bias_rear_slope", &est.bias_rear_slope},
        {"bias_rear_offset", &est.bias_rear_offset},
        {"prior_rate_scale", &est.prior_rate_scale},
    };
    for (const auto& [key, target] : fields) {
        if (auto n = get(key)) *target = number(*n, key);
    }
    if (auto n = get("min_height_band")) est.min_height_band = number(*n, "min_height_band");
    if (auto n = get("prior_grade_variance")) est.prior_grade_variance = number(*n, "prior_grade_variance");

    if (c.mode == RunMode::Simulate && !c.scenario) c.scenario = "flat";
    c.validate();
    return c;
}

} // namespace

RunConfig parse_config_text(const std::string& text, const ConfigOverrides& overrides) {
    return config_from_node(load_yaml(text, "<config>"), overrides);
}

RunConfig parse_config(const std::optional<std::filesystem::path>& file, const ConfigOverrides& overrides) {
    if (!file) return config_from_node(YAML::Node(), overrides);
    return config_from_node(load_yaml(read_text(*file), file->string()), overrides);
}

std::string serialize_config(const RunConfig& c) {
    fmt::memory_buffer buf;
    auto out = std::back_inserter(buf);
    fmt::format_to(out, "mode: {}\n", c.mode == RunMode::Simulate ? "simulate" : "replay");
    if (c.scenario) fmt::format_to(out, "scenario: {}\n", quoted(*c.scenario));
    if (c.data_dir) fmt::format_to(out, "data_dir: {}\n", quoted(c.data_dir->string()));
    fmt::format_to(out, "output_dir: {}\n", quoted(c.output_dir.string()));
    if (c.seed) fmt::format_to(out, "seed: {}\n", *c.seed);
    fmt::format_to(out, "filter_mode: {}\n", c.filter_mode == GradeFilterTrack::Mode::Full ? "full" : "incremental");
    fmt::format_to(out, "range_bin_width: {}\n", num(c.range_bin_width));
    const EstimatorConfig& e = c.estimator;
    fmt::format_to(out, "preview_distance: {}\n", num(e.preview_distance));
    fmt::format_to(out, "wheelbase: {}\n", num(e.wheelbase));
    fmt::format_to(out, "patch_length: {}\n", num(e.patch_length));
    fmt::format_to(out, "track_width: {}\n", num(e.track_width));
    fmt::format_to(out, "waypoint_spacing: {}\n", num(e.waypoint_spacing));
    fmt::format_to(out, "process_noise: {}\n", num(e.process_noise));
    fmt::format_to(out, "measurement_variance: {}\n", num(e.measurement_variance));
    fmt::format_to(out, "bias_front_slope: {}\n", num(e.bias_front_slope));
    fmt::format_to(out, "bias_front_offset: {}\n", num(e.bias_front_offset));
    fmt::format_to(out, "bias_rear_slope: {}\n", num(e.bias_rear_slope));
    fmt::format_to(out, "bias_rear_offset: {}\n", num(e.bias_rear_offset));
    if (e.min_height_band) fmt::format_to(out, "min_height_band: {}\n", num(*e.min_height_band));
    if (e.prior_grade_variance) fmt::format_to(out, "prior_grade_variance: {}\n", num(*e.prior_grade_variance));
    fmt::format_to(out, "prior_rate_scale: {}\n", num(e.prior_rate_scale));
    return fmt::to_string(buf);
}

// -----------------------------------------------------------------------------
// Scenario files
// -----------------------------------------------------------------------------

namespace {

Eigen::Vector3d vector3(const YAML::Node& node, const std::string& key) {
    if (!node.IsSequence() || node.size() != 3) throw ConfigError(key, "expected [x, y, z]");
    return {number(node[0], key), number(node[1], key), number(node[2], key)};
}

/// Reads `<base>_rad` or `<base>_deg` (not both) into radians.
template <typename Read>
auto angle_pair(const std::map<std::string, YAML::Node>& e, const std::string& base, const std::string& where,
                Read read) -> std::optional<decltype(read(YAML::Node(), std::string()))> {
    const auto rad = e.find(base + "_rad");
    const auto deg = e.find(base + "_deg");
    if (rad != e.end() && deg != e.end()) {
        throw ConfigError(prefixed(where, base), "give either _rad or _deg, not both");
    }
    if (rad != e.end()) return read(rad->second, prefixed(where, rad->first));
    if (deg != e.end()) {
        auto v = read(deg->second, prefixed(where, deg->first));
        return v * (std::numbers::pi / 180.0);
    }
    return std::nullopt;
}

sim::TerrainSegment segment_from(const YAML::Node& node, const std::string& where) {
    static const std::vector<std::string> keys = {"kind", "length", "slope", "grade_deg", "amplitude",
                                                  "wavelength", "peak_grade_deg"};
    const auto e = entries(node, keys, where);
    auto need = [&](const std::string& key) -> const YAML::Node& {
        auto it = e.find(key);
        if (it == e.end()) throw ConfigError(prefixed(where, key), "missing");
        return it->second;
    };
    auto forbid = [&](std::initializer_list<const char*> extra, const std::string& kind) {
        for (const char* k : extra) {
            if (e.count(k)) throw ConfigError(prefixed(where, k), fmt::format("not used by {} segments", kind));
        }
    };
    const std::string kind = scalar<std::string>(need("kind"), prefixed(where, "kind"));
    const double length = number(need("length"), prefixed(where, "length"));
    if (kind == "flat") {
        forbid({"slope", "grade_deg", "amplitude", "wavelength", "peak_grade_deg"}, kind);
        return sim::TerrainSegment::flat(length);
    }
    if (kind == "ramp") {
        forbid({"amplitude", "wavelength", "peak_grade_deg"}, kind);
        if (e.count("slope") && e.count("grade_deg")) {
            throw ConfigError(prefixed(where, "slope"), "give either slope or grade_deg, not both");
        }
        if (e.count("grade_deg")) {
            const double g = number(e.at("grade_deg"), prefixed(where, "grade_deg"));
            return sim::TerrainSegment::ramp(length, std::sin(deg2rad(g)));
        }
        return sim::TerrainSegment::ramp(length, number(need("slope"), prefixed(where, "slope")));
    }
    if (kind == "sinusoid") {
        forbid({"slope", "grade_deg", "peak_grade_deg"}, kind);
        return sim::TerrainSegment::sinusoid(length, number(need("amplitude"), prefixed(where, "amplitude")),
                                             number(need("wavelength"), prefixed(where, "wavelength")));
    }
    if (kind == "hills") {
        forbid({"slope", "grade_deg", "amplitude"}, kind);
        return sim::TerrainSegment::hills(length, number(need("peak_grade_deg"), prefixed(where, "peak_grade_deg")),
                                          number(need("wavelength"), prefixed(where, "wavelength")));
    }
    throw ConfigError(prefixed(where, "kind"), fmt::format("expected flat, ramp, sinusoid or hills, got '{}'", kind));
}

} // namespace

sim::ScenarioSpec parse_scenario_text(const std::string& text) {
    const YAML::Node root = load_yaml(text, "<scenario>");
    static const std::vector<std::string> top = {"name",  "seed",    "length", "waypoint_spacing", "speed",
                                                 "road",  "terrain", "lidar",  "odometry"};
    const auto e = entries(root, top, "");
    sim::ScenarioSpec s;
    s.terrain.segments.clear();
    if (e.count("name")) s.name = scalar<std::string>(e.at("name"), "name");
    if (e.count("seed")) s.seed = unsigned_int(e.at("seed"), "seed");
    if (e.count("length")) s.length = number(e.at("length"), "length");
    if (e.count("waypoint_spacing")) s.waypoint_spacing = number(e.at("waypoint_spacing"), "waypoint_spacing");
    if (e.count("speed")) s.speed = number(e.at("speed"), "speed");

    if (e.count("road")) {
        const auto r = entries(e.at("road"), {"origin", "heading_rad", "heading_deg"}, "road");
        if (r.count("origin")) {
            const YAML::Node& o = r.at("origin");
            if (!o.IsSequence() || o.size() != 2) throw ConfigError("road.origin", "expected [x, y]");
            s.layout.origin = {number(o[0], "road.origin"), number(o[1], "road.origin")};
        }
        if (auto h = angle_pair(r, "heading", "road", number)) s.layout.heading = *h;
    }

    if (!e.count("terrain")) throw ConfigError("terrain", "missing");
    const auto t = entries(e.at("terrain"), {"max_grade_deg", "segments"}, "terrain");
    if (t.count("max_grade_deg")) s.terrain.max_grade_deg = number(t.at("max_grade_deg"), "terrain.max_grade_deg");
    if (!t.count("segments") || !t.at("segments").IsSequence() || t.at("segments").size() == 0) {
        throw ConfigError("terrain.segments", "expected a non-empty list");
    }
    const YAML::Node& segs = t.at("segments");
    for (std::size_t i = 0; i < segs.size(); ++i) {
        s.terrain.segments.push_back(segment_from(segs[i], fmt::format("terrain.segments[{}]", i)));
    }

    if (e.count("lidar")) {
        static const std::vector<std::string> keys = {"preset",        "rings_deg",   "azimuth_step_deg",
                                                      "azimuth_fov_deg", "max_range", "range_noise",
                                                      "frame_rate",    "mount_height", "mount_forward"};
        const auto l = entries(e.at("lidar"), keys, "lidar");
        if (l.count("preset")) {
            const auto preset = scalar<std::string>(l.at("preset"), "lidar.preset");
            if (preset != "vlp32") throw ConfigError("lidar.preset", fmt::format("unknown preset '{}'", preset));
        }
        if (l.count("rings_deg")) {
            const YAML::Node& rings = l.at("rings_deg");
            if (!rings.IsSequence()) throw ConfigError("lidar.rings_deg", "expected a list");
            s.lidar.ring_elevations_deg.clear();
            for (const auto& r : rings) s.lidar.ring_elevations_deg.push_back(number(r, "lidar.rings_deg"));
        }
        const std::pair<const char*, double*> fields[] = {
            {"azimuth_step_deg", &s.lidar.azimuth_step_deg}, {"azimuth_fov_deg", &s.lidar.azimuth_fov_deg},
            {"max_range", &s.lidar.max_range},               {"range_noise", &s.lidar.range_noise},
            {"frame_rate", &s.lidar.frame_rate},             {"mount_height", &s.lidar.mount_height},
            {"mount_forward", &s.lidar.mount_forward}};
        for (const auto& [key, target] : fields) {
            if (l.count(key)) *target = number(l.at(key), std::string("lidar.") + key);
        }
    }

    if (e.count("odometry")) {
        static const std::vector<std::string> keys = {
            "translation_walk",  "translation_drift", "translation_white", "rotation_walk_rad", "rotation_walk_deg",
            "rotation_drift_rad", "rotation_drift_deg", "rotation_white_rad", "rotation_white_deg"};
        const auto o = entries(e.at("odometry"), keys, "odometry");
        if (o.count("translation_walk")) s.odometry.translation_walk = vector3(o.at("translation_walk"), "odometry.translation_walk");
        if (o.count("translation_drift")) s.odometry.translation_drift = vector3(o.at("translation_drift"), "odometry.translation_drift");
        if (o.count("translation_white")) s.odometry.translation_white = vector3(o.at("translation_white"), "odometry.translation_white");
        if (auto v = angle_pair(o, "rotation_walk", "odometry", vector3)) s.odometry.rotation_walk = *v;
        if (auto v = angle_pair(o, "rotation_drift", "odometry", vector3)) s.odometry.rotation_drift = *v;
        if (auto v = angle_pair(o, "rotation_white", "odometry", vector3)) s.odometry.rotation_white = *v;
    }

    try {
        s.lidar.validate();
        s.odometry.validate();
        sim::Terrain check(s.terrain);
    } catch (const ScenarioError& err) {
        throw ConfigError("scenario", err.what());
    }
    return s;
}

sim::ScenarioSpec load_scenario_file(const std::filesystem::path& file) {
    const std::string text = read_text(file);
    try {
        return parse_scenario_text(text);
    } catch (const IoError& e) {
        throw IoError(file.string(), e.line(), e.what());
    } catch (const ConfigError& e) {
        throw ConfigError(e.field(), fmt::format("{} (in {})", e.what(), file.string()));
    }
}

std::string serialize_scenario(const sim::ScenarioSpec& s) {
    fmt::memory_buffer buf;
    auto out = std::back_inserter(buf);
    auto vec = [](const Eigen::Vector3d& v) { return fmt::format("[{}, {}, {}]", num(v.x()), num(v.y()), num(v.z())); };
    fmt::format_to(out, "name: {}\nseed: {}\nlength: {}\nwaypoint_spacing: {}\nspeed: {}\n", quoted(s.name), s.seed,
                   num(s.length), num(s.waypoint_spacing), num(s.speed));
    fmt::format_to(out, "road:\n  origin: [{}, {}]\n  heading_rad: {}\n", num(s.layout.origin.x()),
                   num(s.layout.origin.y()), num(s.layout.heading));
    fmt::format_to(out, "terrain:\n  max_grade_deg: {}\n  segments:\n", num(s.terrain.max_grade_deg));
    for (const sim::TerrainSegment& seg : s.terrain.segments) {
        switch (seg.kind) {
        case sim::SegmentKind::Flat:
            fmt::format_to(out, "    - {{kind: flat, length: {}}}\n", num(seg.length));
            break;
        case sim::SegmentKind::Ramp:
            fmt::format_to(out, "    - {{kind: ramp, length: {}, slope: {}}}\n", num(seg.length), num(seg.slope));
            break;
        case sim::SegmentKind::Sinusoid:
            fmt::format_to(out, "    - {{kind: sinusoid, length: {}, amplitude: {}, wavelength: {}}}\n",
                           num(seg.length), num(seg.amplitude), num(seg.wavelength));
            break;
        }
    }
    fmt::format_to(out, "lidar:\n  rings_deg: [");
    for (std::size_t i = 0; i < s.lidar.ring_elevations_deg.size(); ++i) {
        fmt::format_to(out, "{}{}", i ? ", " : "", num(s.lidar.ring_elevations_deg[i]));
    }
    fmt::format_to(out, "]\n  azimuth_step_deg: {}\n  azimuth_fov_deg: {}\n  max_range: {}\n  range_noise: {}\n"
                        "  frame_rate: {}\n  mount_height: {}\n  mount_forward: {}\n",
                   num(s.lidar.azimuth_step_deg), num(s.lidar.azimuth_fov_deg), num(s.lidar.max_range),
                   num(s.lidar.range_noise), num(s.lidar.frame_rate), num(s.lidar.mount_height),
                   num(s.lidar.mount_forward));
    const sim::OdometryModel& o = s.odometry;
    fmt::format_to(out, "odometry:\n  translation_walk: {}\n  translation_drift: {}\n  translation_white: {}\n",
                   vec(o.translation_walk), vec(o.translation_drift), vec(o.translation_white));
    fmt::format_to(out, "  rotation_walk_rad: {}\n  rotation_drift_rad: {}\n  rotation_white_rad: {}\n",
                   vec(o.rotation_walk), vec(o.rotation_drift), vec(o.rotation_white));
    return fmt::to_string(buf);
}

const std::vector<std::string>& builtin_scenarios() {
    static const std::vector<std::string> names = {"flat", "ramp", "rolling_hills", "noisy_hills", "odometry_stress"};
    return names;
}

sim::ScenarioSpec resolve_scenario(const std::string& name_or_file, std::optional<std::uint64_t> seed) {
    sim::ScenarioSpec spec;
    if (name_or_file == "flat") {
        spec = sim::flat_scenario();
    } else if (name_or_file == "ramp") {
        spec = sim::ramp_scenario();
    } else if (name_or_file == "rolling_hills") {
        spec = sim::rolling_hills_scenario();
    } else if (name_or_file == "noisy_hills") {
        spec = sim::noisy_hills_scenario(seed.value_or(1));
    } else if (name_or_file == "odometry_stress") {
        spec = sim::odometry_stress_scenario(seed.value_or(1));
    } else if (std::filesystem::exists(name_or_file)) {
        spec = load_scenario_file(name_or_file);
    } else {
        throw ConfigError("scenario", fmt::format("'{}' is neither a built-in scenario ({}) nor a file", name_or_file,
                                                  join(builtin_scenarios())));
    }
    if (seed) spec.seed = *seed;
    return spec;
}

} // namespace gradepreview
