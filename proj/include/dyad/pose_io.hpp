#pragma once

#include "dyad/dataset.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace dyad::io {

enum class Split { Train, Validation, Test };

std::string_view split_name(Split s);
Split parse_split(std::string_view name);

// One line per sequence: id,couple,frames,frame_rate,cameras,split[,role1,role2]
struct SequenceManifest {
  std::string id;
  std::string couple;
  int frames = 0;
  double frame_rate = 30.0;
  int cameras = 0;
  Split split = Split::Train;
  Role role1 = Role::Unlabeled;
  Role role2 = Role::Unlabeled;
};

// Throws DataError on malformed lines or duplicate ids.
std::vector<SequenceManifest> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<SequenceManifest>& records);

// CSV: header frame,j0x,j0y,j0z,...; one row per frame.
MotionSequence read_pose_csv(const std::filesystem::path& path, double frame_rate = 30.0);
void write_pose_csv(const std::filesystem::path& path, const MotionSequence& seq);

// Binary: "DYPS", uint32 version, uint32 T, uint32 K, then T*K float32,
// row-major, little-endian.
inline constexpr std::uint32_t kPoseBinaryVersion = 1;
MotionSequence read_pose_binary(const std::filesystem::path& path, double frame_rate = 30.0);
void write_pose_binary(const std::filesystem::path& path, const MotionSequence& seq);

enum class PoseFormat { Csv, Binary };

// Dispatches on the extension (.csv or .bin).
MotionSequence read_poses(const std::filesystem::path& path, double frame_rate = 30.0);

struct Dataset {
  std::vector<SequenceManifest> manifest;
  std::vector<data::DyadSequence> sequences;  // parallel to manifest

  std::vector<data::DyadSequence> select(Split split) const;
};

// A dataset directory holds manifest.csv plus <id>.s1.{csv,bin} and
// <id>.s2.{csv,bin} per sequence.
Dataset load_dataset(const std::filesystem::path& dir);
void write_dataset(const std::filesystem::path& dir, const std::vector<SequenceManifest>& manifest,
                   const std::vector<data::DyadSequence>& sequences, PoseFormat format = PoseFormat::Csv);

}  // namespace dyad::io
