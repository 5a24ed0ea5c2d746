#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <vector>

#include "gradepreview/pipeline.hpp"
#include "gradepreview/types.hpp"

namespace gradepreview {

/*
 * Replay directory layout
 *
 *   path.csv         index,x,y,z,roll,pitch,yaw      (angles in degrees)
 *   transforms.csv   frame,timestamp,r00,r01,r02,tx,r10,r11,r12,ty,r20,r21,r22,tz,closest_waypoint
 *                    (lidar-to-world, row-major 3x4; closest_waypoint may be empty)
 *   truth.csv        index,truth_deg                  (optional)
 *   frames/NNNNNNNN.csv
 *                    first line  frame_index,timestamp,tag   (tag L or W)
 *                    then        x,y,z per point
 *   frames/NNNNNNNN.bin
 *                    "GPCF" magic, u32 version (1), i64 frame_index, f64 timestamp,
 *                    u8 tag ('L'/'W'), 3 pad bytes, u64 count, then count * 3 f32
 *                    (x, y, z); all little-endian
 */

enum class FrameEncoding { Text, Binary };

void write_path_csv(const std::filesystem::path& file, const Path& path);
/// Throws IoError naming file and line. `spacing` defaults to the mean step.
Path read_path_csv(const std::filesystem::path& file, std::optional<double> spacing = std::nullopt);

void write_frame_file(const std::filesystem::path& file, const PointCloudFrame& frame, FrameEncoding encoding);
PointCloudFrame read_frame_file(const std::filesystem::path& file);

struct ReplayFrame {
    PointCloudFrame cloud;
    RigidTransform lidar_to_world;
    std::optional<std::size_t> closest_waypoint;
};

/// Streams a simulated run to disk as it is produced.
class ReplayWriter {
  public:
    ReplayWriter(std::filesystem::path dir, const Path& path, std::span<const double> truth_grade_deg = {},
                 FrameEncoding encoding = FrameEncoding::Text);

    void write(const PointCloudFrame& frame, const RigidTransform& lidar_to_world,
               std::optional<std::size_t> closest_waypoint);
    /// Flushes transforms.csv; throws IoError on a failed write.
    void close();

  private:
    std::filesystem::path dir_;
    FrameEncoding encoding_;
    std::ofstream transforms_;
};

/// Lazily reads a replay directory. Frames come back in file-name order and
/// must have strictly increasing indices.
class ReplayReader {
  public:
    /// Reads the path, transforms and truth eagerly and lists the frame files.
    /// Throws IoError for missing or malformed files.
    static ReplayReader open(const std::filesystem::path& dir, std::optional<double> spacing = std::nullopt);

    const Path& path() const noexcept { return path_; }
    const std::optional<std::vector<double>>& truth() const noexcept { return truth_; }
    std::size_t frame_count() const noexcept { return files_.size(); }

    /// Next frame or nullopt at the end. Throws StreamError when a frame index
    /// does not increase and IoError when its transform is missing.
    std::optional<ReplayFrame> next();

  private:
    struct TransformRow {
        double timestamp;
        RigidTransform transform;
        std::optional<std::size_t> closest;
    };
    ReplayReader(Path path, std::filesystem::path dir) : path_(std::move(path)), dir_(std::move(dir)) {}

    Path path_;
    std::filesystem::path dir_;
    std::optional<std::vector<double>> truth_;
    std::map<std::int64_t, TransformRow> transforms_;
    std::vector<std::filesystem::path> files_;
    std::size_t cursor_ = 0;
    std::optional<std::int64_t> last_index_;
};

/// Runs the estimator and filter over a replay, reading the next frame on a
/// worker thread while the current one is processed. Frames without a stored
/// closest waypoint use the nearest path waypoint to the sensor position.
EndToEndResult run_replay(ReplayReader& reader, const EstimatorConfig& cfg,
                          GradeFilterTrack::Mode mode = GradeFilterTrack::Mode::Full);

} // namespace gradepreview
