#include "pdet/model/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "pdet/core/error.hpp"

namespace pdet {
namespace {

static_assert(std::endian::native == std::endian::little);

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

}  // namespace

nlohmann::json Provenance::to_json() const {
  return {{"dataset_hash", dataset_hash},
          {"seed", seed},
          {"epochs", epochs},
          {"lineage", lineage},
          {"extra", extra}};
}

Provenance Provenance::from_json(const nlohmann::json& j) {
  Provenance p;
  p.dataset_hash = j.value("dataset_hash", "");
  p.seed = j.value("seed", std::uint64_t{0});
  p.epochs = j.value("epochs", std::size_t{0});
  p.lineage = j.value("lineage", "");
  p.extra = j.value("extra", nlohmann::json::object());
  return p;
}

std::string serialize_checkpoint(const Model& model, const NormStats& norm,
                                 const Provenance& provenance) {
  nlohmann::json h;
  h["arch"] = model.arch();
  h["config"] = model.config_json();
  h["norm"] = norm.to_json();
  h["provenance"] = provenance.to_json();
  auto table = nlohmann::json::array();
  for (const auto& w : model.weights()) {
    table.push_back({{"name", w.name}, {"shape", w.tensor.shape()}});
  }
  h["buffers"] = std::move(table);
  const std::string header = h.dump();

  std::string out;
  out.append("PDTC", 4);
  put<std::uint32_t>(out, kPdtcVersion);
  put<std::uint64_t>(out, header.size());
  out += header;
  for (const auto& w : model.weights()) {
    for (double v : w.tensor.data()) {
      if (!std::isfinite(v)) throw DivergenceError("weight buffer " + w.name + " is not finite");
      put<double>(out, v);
    }
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const NormStats& norm, const Provenance& provenance) {
  const auto bytes = serialize_checkpoint(model, norm, provenance);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

Checkpoint parse_checkpoint(const std::string& bytes, const std::string& origin) {
  if (bytes.size() < 16) {
    throw FormatError(FormatErrorKind::kTruncated, origin + ": truncated checkpoint");
  }
  if (bytes.compare(0, 4, "PDTC") != 0) {
    throw FormatError(FormatErrorKind::kBadMagic, origin + ": not a PDTC checkpoint");
  }
  std::uint32_t version;
  std::uint64_t hlen;
  std::memcpy(&version, bytes.data() + 4, 4);
  std::memcpy(&hlen, bytes.data() + 8, 8);
  if (version != kPdtcVersion) {
    throw FormatError(FormatErrorKind::kVersionMismatch,
                      origin + ": unsupported checkpoint version " + std::to_string(version));
  }
  if (hlen > bytes.size() - 16) {
    throw FormatError(FormatErrorKind::kTruncated, origin + ": truncated checkpoint header");
  }
  nlohmann::json h;
  Checkpoint ck;
  try {
    h = nlohmann::json::parse(bytes.substr(16, hlen));
    ck.model = make_model(h.at("arch").get<std::string>(), h.at("config"), 0);
    ck.norm = NormStats::from_json(h.at("norm"));
    ck.provenance = Provenance::from_json(h.at("provenance"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatErrorKind::kCorruptHeader, origin + ": bad checkpoint header: " +
                                                           e.what());
  } catch (const ConfigError& e) {
    throw FormatError(FormatErrorKind::kCorruptHeader, origin + ": " + e.what());
  }
  const auto& table = h["buffers"];
  auto& weights = ck.model->weights();
  if (!table.is_array() || table.size() != weights.size()) {
    throw FormatError(FormatErrorKind::kCorruptHeader, origin + ": buffer table mismatch");
  }
  std::size_t pos = 16 + hlen;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    auto& w = weights[i];
    if (table[i].value("name", "") != w.name ||
        table[i].value("shape", ad::Shape{}) != w.tensor.shape()) {
      throw FormatError(FormatErrorKind::kCorruptHeader,
                        origin + ": buffer " + std::to_string(i) + " does not match " + w.name);
    }
    const std::size_t nbytes = w.tensor.numel() * sizeof(double);
    if (pos + nbytes > bytes.size()) {
      throw FormatError(FormatErrorKind::kTruncated, origin + ": truncated weight payload");
    }
    auto d = w.tensor.mutable_data();
    std::memcpy(d.data(), bytes.data() + pos, nbytes);
    for (double v : d) {
      if (!std::isfinite(v)) {
        throw FormatError(FormatErrorKind::kNonFinite, origin + ": non-finite weight in " + w.name);
      }
    }
    pos += nbytes;
  }
  if (pos != bytes.size()) {
    throw FormatError(FormatErrorKind::kCorruptHeader, origin + ": trailing bytes after weights");
  }
  return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes, path.string());
}

}  // namespace pdet
