#include "pdet/io/dataset.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <iterator>
#include <sstream>

#include "pdet/core/error.hpp"
#include "pdet/core/rng.hpp"

namespace pdet {
namespace {

static_assert(std::endian::native == std::endian::little,
              "PDET/PDTC writers assume a little-endian host");

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <class T>
T get(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

}  // namespace

std::size_t DatasetManifest::frame_values() const {
  return grid.n_timesteps * channels.size() * grid.cells();
}

std::uint64_t DatasetManifest::trajectory_bytes() const {
  return static_cast<std::uint64_t>(frame_values()) * sizeof(float);
}

void DatasetManifest::validate() const {
  grid.validate();
  if (grid.spatial_extents.size() != spatial_rank(system)) {
    throw FormatError(FormatErrorKind::kCorruptHeader, "grid rank does not match system");
  }
  const std::uint64_t stride = trajectory_bytes();
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const auto& r = trajectories[i];
    if (r.offset != i * stride) {
      throw FormatError(FormatErrorKind::kCorruptHeader,
                        "trajectory " + std::to_string(i) + " offset " +
                            std::to_string(r.offset) + " breaks the packed layout");
    }
    if (r.params.size() != param_names.size()) {
      throw FormatError(FormatErrorKind::kCorruptHeader,
                        "trajectory " + std::to_string(i) + " has wrong parameter arity");
    }
  }
}

nlohmann::json DatasetManifest::to_json() const {
  nlohmann::json j;
  j["system"] = std::string(system_name(system));
  j["grid"] = {{"spatial_extents", grid.spatial_extents},
               {"n_timesteps", grid.n_timesteps},
               {"t_final", grid.t_final},
               {"domain", spatial_rank(system) == 1 ? "unit-interval" : "unit-square"}};
  j["channels"] = channels;
  j["param_names"] = param_names;
  j["dtype"] = "float32";
  j["layout"] = "t,channel,space";
  auto arr = nlohmann::json::array();
  for (const auto& r : trajectories) {
    arr.push_back({{"params", r.params}, {"seed", r.seed}, {"offset", r.offset}});
  }
  j["trajectories"] = std::move(arr);
  return j;
}

DatasetManifest DatasetManifest::from_json(const nlohmann::json& j) {
  DatasetManifest m;
  try {
    m.system = parse_system(j.at("system").get<std::string>());
    const auto& g = j.at("grid");
    m.grid.spatial_extents = g.at("spatial_extents").get<std::vector<std::size_t>>();
    m.grid.n_timesteps = g.at("n_timesteps").get<std::size_t>();
    m.grid.t_final = g.at("t_final").get<double>();
    m.channels = j.at("channels").get<std::vector<std::string>>();
    m.param_names = j.at("param_names").get<std::vector<std::string>>();
    for (const auto& r : j.at("trajectories")) {
      m.trajectories.push_back({r.at("params").get<std::vector<double>>(),
                                r.at("seed").get<std::uint64_t>(),
                                r.at("offset").get<std::uint64_t>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatErrorKind::kCorruptHeader,
                      std::string("malformed PDET manifest: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(FormatErrorKind::kCorruptHeader, e.what());
  }
  return m;
}

DatasetManifest make_manifest(System system, const GridSpec& grid,
                              const std::vector<Trajectory>& trajectories) {
  DatasetManifest m;
  m.system = system;
  m.grid = grid;
  m.channels = channel_names(system);
  m.param_names = param_names(system);
  const std::uint64_t stride = m.trajectory_bytes();
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    m.trajectories.push_back({trajectories[i].params.values, trajectories[i].seed, i * stride});
  }
  return m;
}

std::string serialize_dataset(const Dataset& ds) {
  ds.manifest.validate();
  if (ds.manifest.trajectories.size() != ds.trajectories.size()) {
    throw DataError("manifest lists " + std::to_string(ds.manifest.trajectories.size()) +
                    " trajectories, dataset holds " + std::to_string(ds.trajectories.size()));
  }
  const std::string header = ds.manifest.to_json().dump();
  std::string out;
  out.reserve(16 + header.size() + ds.trajectories.size() * ds.manifest.trajectory_bytes());
  out.append("PDET", 4);
  put<std::uint32_t>(out, kPdetVersion);
  put<std::uint64_t>(out, header.size());
  out += header;
  const std::size_t nvals = ds.manifest.frame_values();
  for (const auto& t : ds.trajectories) {
    if (t.frames.size() != nvals) {
      throw DataError("trajectory holds " + std::to_string(t.frames.size()) +
                      " values, manifest expects " + std::to_string(nvals));
    }
    for (double v : t.frames) {
      const auto f = static_cast<float>(v);
      if (!std::isfinite(f)) {
        throw FormatError(FormatErrorKind::kNonFinite, "refusing to write a non-finite value");
      }
      put<float>(out, f);
    }
  }
  return out;
}

void write_dataset(const std::filesystem::path& path, const Dataset& ds) {
  const std::string bytes = serialize_dataset(ds);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

DatasetReader::DatasetReader(const std::filesystem::path& path)
    : path_(path), in_(path, std::ios::binary) {
  if (!in_) throw DataError("cannot open dataset " + path.string());
  in_.seekg(0, std::ios::end);
  const auto file_size = static_cast<std::uint64_t>(in_.tellg());
  in_.seekg(0);
  char fixed[16];
  if (file_size < 16 || !in_.read(fixed, 16)) {
    throw FormatError(FormatErrorKind::kTruncated, path.string() + ": truncated PDET preamble");
  }
  if (std::memcmp(fixed, "PDET", 4) != 0) {
    throw FormatError(FormatErrorKind::kBadMagic, path.string() + ": not a PDET file (bad magic)");
  }
  const auto version = get<std::uint32_t>(fixed + 4);
  if (version != kPdetVersion) {
    throw FormatError(FormatErrorKind::kVersionMismatch,
                      path.string() + ": unsupported PDET version " + std::to_string(version));
  }
  const auto header_len = get<std::uint64_t>(fixed + 8);
  if (header_len > file_size - 16) {
    throw FormatError(FormatErrorKind::kTruncated, path.string() + ": truncated PDET header");
  }
  std::string header(header_len, '\0');
  in_.read(header.data(), static_cast<std::streamsize>(header_len));
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatErrorKind::kCorruptHeader,
                      path.string() + ": manifest is not valid JSON: " + e.what());
  }
  manifest_ = DatasetManifest::from_json(j);
  manifest_.validate();
  payload_offset_ = 16 + header_len;
  const std::uint64_t expected =
      payload_offset_ + manifest_.trajectories.size() * manifest_.trajectory_bytes();
  if (file_size < expected) {
    throw FormatError(FormatErrorKind::kTruncated,
                      path.string() + ": payload truncated (" + std::to_string(file_size) +
                          " bytes, manifest needs " + std::to_string(expected) + ")");
  }
  if (file_size > expected) {
    throw FormatError(FormatErrorKind::kCorruptHeader,
                      path.string() + ": " + std::to_string(file_size - expected) +
                          " trailing bytes after payload");
  }
}

Trajectory DatasetReader::load(std::size_t index) {
  if (index >= manifest_.trajectories.size()) {
    throw DataError("trajectory index " + std::to_string(index) + " out of range");
  }
  const auto& rec = manifest_.trajectories[index];
  const std::size_t nvals = manifest_.frame_values();
  std::vector<float> raw(nvals);
  in_.clear();
  in_.seekg(static_cast<std::streamoff>(payload_offset_ + rec.offset));
  if (!in_.read(reinterpret_cast<char*>(raw.data()),
                static_cast<std::streamsize>(nvals * sizeof(float)))) {
    throw FormatError(FormatErrorKind::kTruncated,
                      path_.string() + ": short read for trajectory " + std::to_string(index));
  }
  Trajectory t;
  t.params = {manifest_.system, rec.params};
  t.seed = rec.seed;
  t.n_frames = manifest_.grid.n_timesteps;
  t.n_channels = manifest_.channels.size();
  t.spatial = manifest_.grid.spatial_extents;
  t.frames.resize(nvals);
  for (std::size_t i = 0; i < nvals; ++i) {
    if (!std::isfinite(raw[i])) {
      throw FormatError(FormatErrorKind::kNonFinite,
                        path_.string() + ": non-finite value in trajectory " +
                            std::to_string(index));
    }
    t.frames[i] = raw[i];
  }
  return t;
}

Dataset read_dataset(const std::filesystem::path& path) {
  DatasetReader reader(path);
  Dataset ds;
  ds.manifest = reader.manifest();
  ds.trajectories.reserve(reader.size());
  for (std::size_t i = 0; i < reader.size(); ++i) ds.trajectories.push_back(reader.load(i));
  return ds;
}

std::string bytes_hash(const std::string& bytes) {
  const std::uint64_t h = fnv1a(bytes);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes_hash(bytes);
}

}  // namespace pdet
