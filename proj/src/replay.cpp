#include "gradepreview/replay.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <future>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "textio.hpp"

namespace gradepreview {

namespace fs = std::filesystem;

namespace {

constexpr std::array<char, 4> kMagic = {'G', 'P', 'C', 'F'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put_le(std::ostream& out, T value) {
    std::array<char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    out.write(bytes.data(), sizeof(T));
}

template <typename T>
T get_le(std::istream& in, const std::string& file, const char* what) {
    std::array<char, sizeof(T)> bytes;
    if (!in.read(bytes.data(), sizeof(T))) throw IoError(file, 0, fmt::format("truncated while reading {}", what));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    T value;
    std::memcpy(&value, bytes.data(), sizeof(T));
    return value;
}

std::string frame_file_name(std::int64_t index, FrameEncoding encoding) {
    return fmt::format("{:08d}.{}", index, encoding == FrameEncoding::Text ? "csv" : "bin");
}

PointCloudFrame read_text_frame(const fs::path& file) {
    auto in = textio::open_input(file);
    const std::string name = file.string();
    std::string line;
    if (!std::getline(in, line)) throw IoError(name, 1, "missing frame header");
    const auto head = textio::split(line);
    if (head.size() != 3) throw IoError(name, 1, "header must be frame_index,timestamp,tag");
    PointCloudFrame frame;
    frame.frame_index = textio::parse<std::int64_t>(head[0], name, 1, "frame index");
    frame.timestamp = textio::parse<double>(head[1], name, 1, "timestamp");
    const std::string_view tag = textio::trim(head[2]);
    if (tag.size() != 1) throw IoError(name, 1, fmt::format("bad frame tag '{}'", tag));
    try {
        frame.frame = parse_frame_tag(tag[0]);
    } catch (const GradeError& e) {
        throw IoError(name, 1, e.what());
    }
    long lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (textio::trim(line).empty()) continue;
        const auto f = textio::split(line);
        if (f.size() != 3) throw IoError(name, lineno, fmt::format("expected x,y,z, found {} fields", f.size()));
        Point p(textio::parse<double>(f[0], name, lineno, "x"), textio::parse<double>(f[1], name, lineno, "y"),
                textio::parse<double>(f[2], name, lineno, "z"));
        if (!p.allFinite()) throw IoError(name, lineno, "non-finite coordinate");
        frame.points.push_back(p);
    }
    return frame;
}

PointCloudFrame read_binary_frame(const fs::path& file) {
    auto in = textio::open_input(file, std::ios::in | std::ios::binary);
    const std::string name = file.string();
    std::array<char, 4> magic{};
    if (!in.read(magic.data(), 4) || magic != kMagic) throw IoError(name, 0, "not a binary frame file (bad magic)");
    const auto version = get_le<std::uint32_t>(in, name, "version");
    if (version != kVersion) throw IoError(name, 0, fmt::format("unsupported version {}", version));
    PointCloudFrame frame;
    frame.frame_index = get_le<std::int64_t>(in, name, "frame index");
    frame.timestamp = get_le<double>(in, name, "timestamp");
    const auto tag = get_le<std::uint8_t>(in, name, "tag");
    for (int i = 0; i < 3; ++i) get_le<std::uint8_t>(in, name, "padding");
    try {
        frame.frame = parse_frame_tag(static_cast<char>(tag));
    } catch (const GradeError& e) {
        throw IoError(name, 0, e.what());
    }
    const auto count = get_le<std::uint64_t>(in, name, "point count");
    in.seekg(0, std::ios::end);
    const auto size = static_cast<std::uint64_t>(in.tellg());
    constexpr std::uint64_t header = 4 + 4 + 8 + 8 + 1 + 3 + 8;
    if (size != header + count * 12) {
        throw IoError(name, 0, fmt::format("{} points declared but the file holds {} bytes of data", count,
                                           size - std::min(size, header)));
    }
    in.seekg(static_cast<std::streamoff>(header));
    frame.points.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        const float x = get_le<float>(in, name, "point");
        const float y = get_le<float>(in, name, "point");
        const float z = get_le<float>(in, name, "point");
        Point p(x, y, z);
        if (!p.allFinite()) throw IoError(name, 0, fmt::format("point {} is not finite", i));
        frame.points.push_back(p);
    }
    return frame;
}

} // namespace

void write_path_csv(const fs::path& file, const Path& path) {
    auto out = textio::open_output(file);
    out << "index,x,y,z,roll,pitch,yaw\n";
    for (std::size_t i = 0; i < path.size(); ++i) {
        const Pose& p = path[i];
        out << fmt::format("{},{},{},{},{},{},{}\n", i, p.x, p.y, p.z, rad2deg(p.roll), rad2deg(p.pitch),
                           rad2deg(p.yaw));
    }
    textio::finish(out, file);
}

Path read_path_csv(const fs::path& file, std::optional<double> spacing) {
    auto in = textio::open_input(file);
    const std::string name = file.string();
    std::string line;
    if (!std::getline(in, line) || textio::trim(line) != "index,x,y,z,roll,pitch,yaw") {
        throw IoError(name, 1, "header must be index,x,y,z,roll,pitch,yaw");
    }
    std::vector<Pose> poses;
    long lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (textio::trim(line).empty()) continue;
        const auto f = textio::split(line);
        if (f.size() != 7) throw IoError(name, lineno, fmt::format("expected 7 fields, found {}", f.size()));
        const auto index = textio::parse<std::size_t>(f[0], name, lineno, "index");
        if (index != poses.size()) {
            throw IoError(name, lineno, fmt::format("expected waypoint {}, found {}", poses.size(), index));
        }
        double v[6];
        static constexpr const char* labels[] = {"x", "y", "z", "roll", "pitch", "yaw"};
        for (int k = 0; k < 6; ++k) v[k] = textio::parse<double>(f[k + 1], name, lineno, labels[k]);
        try {
            poses.push_back(Pose::make(v[0], v[1], v[2], deg2rad(v[3]), deg2rad(v[4]), deg2rad(v[5])));
        } catch (const GradeError& e) {
            throw IoError(name, lineno, e.what());
        }
    }
    if (poses.size() < 2) throw IoError(name, 0, "a path needs at least two waypoints");
    if (!spacing) {
        double total = 0.0;
        for (std::size_t i = 1; i < poses.size(); ++i) total += (poses[i].horizontal() - poses[i - 1].horizontal()).norm();
        spacing = total / static_cast<double>(poses.size() - 1);
    }
    try {
        return Path(std::move(poses), *spacing);
    } catch (const PathError& e) {
        throw IoError(name, 0, e.what());
    }
}

void write_frame_file(const fs::path& file, const PointCloudFrame& frame, FrameEncoding encoding) {
    if (encoding == FrameEncoding::Text) {
        auto out = textio::open_output(file);
        std::string text = fmt::format("{},{},{}\n", frame.frame_index, frame.timestamp, frame_tag(frame.frame));
        for (const Point& p : frame.points) text += fmt::format("{},{},{}\n", p.x(), p.y(), p.z());
        out << text;
        textio::finish(out, file);
        return;
    }
    auto out = textio::open_output(file, std::ios::out | std::ios::binary);
    out.write(kMagic.data(), 4);
    put_le<std::uint32_t>(out, kVersion);
    put_le<std::int64_t>(out, frame.frame_index);
    put_le<double>(out, frame.timestamp);
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(frame_tag(frame.frame)));
    for (int i = 0; i < 3; ++i) put_le<std::uint8_t>(out, 0);
    put_le<std::uint64_t>(out, frame.points.size());
    for (const Point& p : frame.points) {
        put_le<float>(out, static_cast<float>(p.x()));
        put_le<float>(out, static_cast<float>(p.y()));
        put_le<float>(out, static_cast<float>(p.z()));
    }
    textio::finish(out, file);
}

PointCloudFrame read_frame_file(const fs::path& file) {
    return file.extension() == ".bin" ? read_binary_frame(file) : read_text_frame(file);
}

// -----------------------------------------------------------------------------

ReplayWriter::ReplayWriter(fs::path dir, const Path& path, std::span<const double> truth_grade_deg,
                           FrameEncoding encoding)
    : dir_(std::move(dir)), encoding_(encoding) {
    std::error_code ec;
    fs::create_directories(dir_ / "frames", ec);
    if (ec) throw IoError(dir_.string(), 0, fmt::format("cannot create directory: {}", ec.message()));
    write_path_csv(dir_ / "path.csv", path);
    if (!truth_grade_deg.empty()) {
        auto out = textio::open_output(dir_ / "truth.csv");
        out << "index,truth_deg\n";
        for (std::size_t i = 0; i < truth_grade_deg.size(); ++i) out << fmt::format("{},{}\n", i, truth_grade_deg[i]);
        textio::finish(out, dir_ / "truth.csv");
    }
    transforms_ = textio::open_output(dir_ / "transforms.csv");
    transforms_ << "frame,timestamp,r00,r01,r02,tx,r10,r11,r12,ty,r20,r21,r22,tz,closest_waypoint\n";
}

void ReplayWriter::write(const PointCloudFrame& frame, const RigidTransform& lidar_to_world,
                         std::optional<std::size_t> closest_waypoint) {
    write_frame_file(dir_ / "frames" / frame_file_name(frame.frame_index, encoding_), frame, encoding_);
    const Eigen::Matrix3d& r = lidar_to_world.rotation();
    const Eigen::Vector3d& t = lidar_to_world.translation();
    transforms_ << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", frame.frame_index, frame.timestamp,
                               r(0, 0), r(0, 1), r(0, 2), t.x(), r(1, 0), r(1, 1), r(1, 2), t.y(), r(2, 0), r(2, 1),
                               r(2, 2), t.z(), closest_waypoint ? fmt::format("{}", *closest_waypoint) : "");
}

void ReplayWriter::close() { textio::finish(transforms_, dir_ / "transforms.csv"); }

// -----------------------------------------------------------------------------

ReplayReader ReplayReader::open(const fs::path& dir, std::optional<double> spacing) {
    if (!fs::is_directory(dir)) throw IoError(dir.string(), 0, "not a directory");
    for (const char* required : {"path.csv", "transforms.csv"}) {
        if (!fs::exists(dir / required)) throw IoError((dir / required).string(), 0, "missing");
    }
    ReplayReader reader(read_path_csv(dir / "path.csv", spacing), dir);

    const fs::path tfile = dir / "transforms.csv";
    const std::string tname = tfile.string();
    auto in = textio::open_input(tfile);
    std::string line;
    if (!std::getline(in, line) || textio::split(line).size() != 15) {
        throw IoError(tname, 1, "header must list frame, timestamp, 12 matrix entries and closest_waypoint");
    }
    long lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (textio::trim(line).empty()) continue;
        const auto f = textio::split(line);
        if (f.size() != 15) throw IoError(tname, lineno, fmt::format("expected 15 fields, found {}", f.size()));
        const auto frame = textio::parse<std::int64_t>(f[0], tname, lineno, "frame");
        const double ts = textio::parse<double>(f[1], tname, lineno, "timestamp");
        Eigen::Matrix3d r;
        Eigen::Vector3d t;
        for (int row = 0; row < 3; ++row) {
            for (int col = 0; col < 3; ++col) {
                r(row, col) = textio::parse<double>(f[2 + row * 4 + col], tname, lineno, "rotation entry");
            }
            t[row] = textio::parse<double>(f[2 + row * 4 + 3], tname, lineno, "translation entry");
        }
        const auto closest = textio::parse_optional<std::size_t>(f[14], tname, lineno, "closest_waypoint");
        if (reader.transforms_.count(frame)) throw IoError(tname, lineno, fmt::format("frame {} listed twice", frame));
        try {
            reader.transforms_.emplace(frame, TransformRow{ts, RigidTransform(r, t), closest});
        } catch (const TransformError& e) {
            throw IoError(tname, lineno, e.what());
        }
    }

    if (fs::exists(dir / "truth.csv")) {
        const fs::path file = dir / "truth.csv";
        const std::string name = file.string();
        auto tin = textio::open_input(file);
        if (!std::getline(tin, line) || textio::trim(line) != "index,truth_deg") {
            throw IoError(name, 1, "header must be index,truth_deg");
        }
        std::vector<double> truth;
        lineno = 1;
        while (std::getline(tin, line)) {
            ++lineno;
            if (textio::trim(line).empty()) continue;
            const auto f = textio::split(line);
            if (f.size() != 2) throw IoError(name, lineno, "expected index,truth_deg");
            const auto index = textio::parse<std::size_t>(f[0], name, lineno, "index");
            if (index != truth.size()) throw IoError(name, lineno, fmt::format("expected index {}", truth.size()));
            truth.push_back(textio::parse<double>(f[1], name, lineno, "truth_deg"));
        }
        reader.truth_ = std::move(truth);
    }

    const fs::path frames = dir / "frames";
    if (fs::is_directory(frames)) {
        for (const auto& entry : fs::directory_iterator(frames)) {
            const auto ext = entry.path().extension();
            if (entry.is_regular_file() && (ext == ".csv" || ext == ".bin")) reader.files_.push_back(entry.path());
        }
    }
    std::sort(reader.files_.begin(), reader.files_.end());
    if (reader.files_.empty()) throw IoError(frames.string(), 0, "no frame files");
    return reader;
}

std::optional<ReplayFrame> ReplayReader::next() {
    if (cursor_ >= files_.size()) return std::nullopt;
    const fs::path& file = files_[cursor_++];
    PointCloudFrame cloud = read_frame_file(file);
    if (last_index_ && cloud.frame_index <= *last_index_) {
        throw StreamError(fmt::format("{}: frame index {} does not follow {}", file.string(), cloud.frame_index,
                                      *last_index_));
    }
    last_index_ = cloud.frame_index;
    const auto it = transforms_.find(cloud.frame_index);
    if (it == transforms_.end()) {
        throw IoError((dir_ / "transforms.csv").string(), 0,
                      fmt::format("no transform for frame {}", cloud.frame_index));
    }
    return ReplayFrame{std::move(cloud), it->second.transform, it->second.closest};
}

EndToEndResult run_replay(ReplayReader& reader, const EstimatorConfig& cfg, GradeFilterTrack::Mode mode) {
    GradePipeline pipeline(reader.path(), cfg, mode);
    EndToEndResult result;
    result.timings.reserve(reader.frame_count());

    auto fetch = [&reader] { return reader.next(); };
    std::future<std::optional<ReplayFrame>> pending = std::async(std::launch::async, fetch);
    while (true) {
        std::optional<ReplayFrame> frame = pending.get();
        if (!frame) break;
        pending = std::async(std::launch::async, fetch);
        const std::size_t closest =
            frame->closest_waypoint.value_or(reader.path().closest_waypoint(frame->lidar_to_world.translation().head<2>()));
        result.timings.push_back(pipeline.process(frame->cloud, frame->lidar_to_world, closest));
    }
    result.track = pipeline.track();
    if (reader.truth()) result.truth_grade_deg = *reader.truth();
    spdlog::info("replay: {} frames, {} suppressed", result.timings.size(), result.track.failed.size());
    return result;
}

} // namespace gradepreview
