#pragma once

// PDET trajectory container (little-endian):
//
//   bytes 0-3   magic "PDET"
//   u32         format version (1)
//   u64         header length in bytes
//   header      UTF-8 JSON manifest
//   payload     per trajectory, float32 frames ordered [t][channel][space]
//
// Trajectory offsets in the manifest are relative to the start of the
// payload, so the header never depends on its own length.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "pdet/io/types.hpp"

namespace pdet {

inline constexpr std::uint32_t kPdetVersion = 1;

struct TrajectoryRecord {
  std::vector<double> params;
  std::uint64_t seed = 0;
  std::uint64_t offset = 0;
};

struct DatasetManifest {
  System system = System::kAdvection;
  GridSpec grid;
  std::vector<std::string> channels;
  std::vector<std::string> param_names;
  std::vector<TrajectoryRecord> trajectories;

  std::size_t frame_values() const;         // T * C * cells
  std::uint64_t trajectory_bytes() const;   // frame_values() * 4
  // Offsets strictly increasing, non-overlapping and packed.
  void validate() const;

  nlohmann::json to_json() const;
  static DatasetManifest from_json(const nlohmann::json& j);
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<Trajectory> trajectories;
};

// Manifest describing `trajectories` with freshly computed offsets.
DatasetManifest make_manifest(System system, const GridSpec& grid,
                              const std::vector<Trajectory>& trajectories);

std::string serialize_dataset(const Dataset& ds);
void write_dataset(const std::filesystem::path& path, const Dataset& ds);

// Validates magic, version, header and total length at open; frames are read
// per trajectory on demand.
class DatasetReader {
 public:
  explicit DatasetReader(const std::filesystem::path& path);

  const DatasetManifest& manifest() const { return manifest_; }
  std::size_t size() const { return manifest_.trajectories.size(); }
  Trajectory load(std::size_t index);
  std::uint64_t payload_offset() const { return payload_offset_; }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  DatasetManifest manifest_;
  std::uint64_t payload_offset_ = 0;
};

Dataset read_dataset(const std::filesystem::path& path);

// FNV-1a over the file bytes, as 16 hex digits.
std::string file_hash(const std::filesystem::path& path);
std::string bytes_hash(const std::string& bytes);

}  // namespace pdet
