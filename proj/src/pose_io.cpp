#include "dyad/pose_io.hpp"

#include "dyad/error.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace dyad::io {
namespace fs = std::filesystem;
namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) {
    while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
    while (!field.empty() && field.front() == ' ') field.erase(field.begin());
    out.push_back(field);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const fs::path& path, int line) {
  double v = 0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end)
    throw DataError(path.string() + ":" + std::to_string(line) + ": bad number '" + s + "'");
  return v;
}

int parse_int(const std::string& s, const fs::path& path, int line) {
  int v = 0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end)
    throw DataError(path.string() + ":" + std::to_string(line) + ": bad integer '" + s + "'");
  return v;
}

Role parse_role(const std::string& s) {
  if (s == "leader") return Role::Leader;
  if (s == "follower") return Role::Follower;
  if (s.empty() || s == "unlabeled") return Role::Unlabeled;
  throw DataError("unknown role '" + s + "'");
}

void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(const unsigned char* b) {
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
}

fs::path pose_path(const fs::path& dir, const std::string& id, int subject) {
  for (const char* ext : {".csv", ".bin"}) {
    fs::path p = dir / (id + ".s" + std::to_string(subject) + ext);
    if (fs::exists(p)) return p;
  }
  throw DataError("no pose file for sequence " + id + " subject " + std::to_string(subject) + " in " + dir.string());
}

}  // namespace

std::string_view split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "unknown";
}

Split parse_split(std::string_view name) {
  for (Split s : {Split::Train, Split::Validation, Split::Test})
    if (split_name(s) == name) return s;
  throw DataError("unknown split '" + std::string(name) + "'");
}

std::vector<SequenceManifest> read_manifest(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open manifest " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw DataError("manifest " + path.string() + " is empty");
  const auto header = split_fields(line);
  if (header.size() < 6 || header[0] != "id") throw DataError("manifest " + path.string() + " has no header");

  std::vector<SequenceManifest> out;
  std::set<std::string> ids;
  int n = 1;
  while (std::getline(is, line)) {
    ++n;
    if (line.empty() || line == "\r") continue;
    const auto f = split_fields(line);
    if (f.size() != header.size())
      throw DataError(path.string() + ":" + std::to_string(n) + ": expected " + std::to_string(header.size()) +
                      " fields");
    SequenceManifest m;
    m.id = f[0];
    m.couple = f[1];
    m.frames = parse_int(f[2], path, n);
    m.frame_rate = parse_double(f[3], path, n);
    m.cameras = parse_int(f[4], path, n);
    m.split = parse_split(f[5]);
    if (f.size() >= 8) {
      m.role1 = parse_role(f[6]);
      m.role2 = parse_role(f[7]);
    }
    if (m.id.empty() || !ids.insert(m.id).second)
      throw DataError(path.string() + ":" + std::to_string(n) + ": duplicate or empty id '" + m.id + "'");
    if (m.frames < 0 || !(m.frame_rate > 0))
      throw DataError(path.string() + ":" + std::to_string(n) + ": invalid frame count or rate");
    out.push_back(std::move(m));
  }
  return out;
}

void write_manifest(const fs::path& path, const std::vector<SequenceManifest>& records) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  os << "id,couple,frames,frame_rate,cameras,split,role1,role2\n";
  for (const auto& m : records)
    os << m.id << ',' << m.couple << ',' << m.frames << ',' << m.frame_rate << ',' << m.cameras << ','
       << split_name(m.split) << ',' << role_name(m.role1) << ',' << role_name(m.role2) << '\n';
}

MotionSequence read_pose_csv(const fs::path& path, double frame_rate) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw DataError(path.string() + " is empty");
  const auto header = split_fields(line);
  if (header.empty() || header[0] != "frame" || (header.size() - 1) % 3 != 0)
    throw DataError(path.string() + ": header must be frame followed by x,y,z triples");
  const std::size_t k = header.size() - 1;

  std::vector<double> values;
  int rows = 0, n = 1;
  while (std::getline(is, line)) {
    ++n;
    if (line.empty() || line == "\r") continue;
    const auto f = split_fields(line);
    if (f.size() != header.size())
      throw DataError(path.string() + ":" + std::to_string(n) + ": expected " + std::to_string(header.size()) +
                      " fields, got " + std::to_string(f.size()));
    for (std::size_t c = 1; c < f.size(); ++c) values.push_back(parse_double(f[c], path, n));
    ++rows;
  }
  MotionSequence seq;
  seq.frame_rate = frame_rate;
  seq.poses = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), rows, static_cast<Eigen::Index>(k));
  return seq;
}

void write_pose_csv(const fs::path& path, const MotionSequence& seq) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  os << "frame";
  for (Eigen::Index j = 0; j < seq.poses.cols() / 3; ++j) os << ",j" << j << "x,j" << j << "y,j" << j << "z";
  os << '\n' << std::setprecision(17);
  for (Eigen::Index t = 0; t < seq.poses.rows(); ++t) {
    os << t;
    for (Eigen::Index c = 0; c < seq.poses.cols(); ++c) os << ',' << seq.poses(t, c);
    os << '\n';
  }
}

MotionSequence read_pose_binary(const fs::path& path, double frame_rate) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  unsigned char head[16];
  if (!is.read(reinterpret_cast<char*>(head), 16)) throw DataError(path.string() + ": truncated header");
  if (std::memcmp(head, "DYPS", 4) != 0) throw DataError(path.string() + ": not a pose file");
  if (get_u32(head + 4) != kPoseBinaryVersion) throw DataError(path.string() + ": unsupported version");
  const std::uint32_t t = get_u32(head + 8), k = get_u32(head + 12);
  std::vector<unsigned char> raw(std::size_t(t) * k * 4);
  if (!raw.empty() && !is.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size())))
    throw DataError(path.string() + ": truncated data");
  MotionSequence seq;
  seq.frame_rate = frame_rate;
  seq.poses.resize(t, k);
  for (std::uint32_t r = 0; r < t; ++r)
    for (std::uint32_t c = 0; c < k; ++c)
      seq.poses(r, c) = std::bit_cast<float>(get_u32(raw.data() + 4 * (std::size_t(r) * k + c)));
  return seq;
}

void write_pose_binary(const fs::path& path, const MotionSequence& seq) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  os.write("DYPS", 4);
  put_u32(os, kPoseBinaryVersion);
  put_u32(os, static_cast<std::uint32_t>(seq.poses.rows()));
  put_u32(os, static_cast<std::uint32_t>(seq.poses.cols()));
  for (Eigen::Index r = 0; r < seq.poses.rows(); ++r)
    for (Eigen::Index c = 0; c < seq.poses.cols(); ++c)
      put_u32(os, std::bit_cast<std::uint32_t>(static_cast<float>(seq.poses(r, c))));
}

MotionSequence read_poses(const fs::path& path, double frame_rate) {
  const auto ext = path.extension();
  if (ext == ".csv") return read_pose_csv(path, frame_rate);
  if (ext == ".bin") return read_pose_binary(path, frame_rate);
  throw DataError("unknown pose file extension: " + path.string());
}

std::vector<data::DyadSequence> Dataset::select(Split split) const {
  std::vector<data::DyadSequence> out;
  for (std::size_t i = 0; i < manifest.size(); ++i)
    if (manifest[i].split == split) out.push_back(sequences[i]);
  return out;
}

Dataset load_dataset(const fs::path& dir) {
  Dataset ds;
  ds.manifest = read_manifest(dir / "manifest.csv");
  for (const auto& m : ds.manifest) {
    data::DyadSequence seq;
    seq.id = m.id;
    seq.subject1 = read_poses(pose_path(dir, m.id, 1), m.frame_rate);
    seq.subject2 = read_poses(pose_path(dir, m.id, 2), m.frame_rate);
    seq.role1 = m.role1;
    seq.role2 = m.role2;
    if (seq.subject1.frames() != m.frames || seq.subject2.frames() != m.frames)
      throw DataError("sequence " + m.id + ": manifest lists " + std::to_string(m.frames) + " frames, files hold " +
                      std::to_string(seq.subject1.frames()) + " and " + std::to_string(seq.subject2.frames()));
    if (seq.subject1.poses.cols() != seq.subject2.poses.cols())
      throw DataError("sequence " + m.id + ": subjects differ in joint count");
    ds.sequences.push_back(std::move(seq));
  }
  return ds;
}

void write_dataset(const fs::path& dir, const std::vector<SequenceManifest>& manifest,
                   const std::vector<data::DyadSequence>& sequences, PoseFormat format) {
  if (manifest.size() != sequences.size()) throw ShapeError("manifest and sequences differ in length");
  fs::create_directories(dir);
  write_manifest(dir / "manifest.csv", manifest);
  const char* ext = format == PoseFormat::Csv ? ".csv" : ".bin";
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    for (int s : {1, 2}) {
      const auto& seq = s == 1 ? sequences[i].subject1 : sequences[i].subject2;
      const fs::path p = dir / (manifest[i].id + ".s" + std::to_string(s) + ext);
      if (format == PoseFormat::Csv)
        write_pose_csv(p, seq);
      else
        write_pose_binary(p, seq);
    }
  }
}

}  // namespace dyad::io
