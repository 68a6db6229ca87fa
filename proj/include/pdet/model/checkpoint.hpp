#pragma once

// PDTC checkpoint container (little-endian):
//
//   bytes 0-3   magic "PDTC"
//   u32         version (1)
//   u64         header length
//   header      JSON: arch, config, norm, provenance, buffer table
//   payload     every weight buffer as float64, in declared order

#include <filesystem>
#include <memory>
#include <string>

#include "json.hpp"
#include "pdet/io/norm.hpp"
#include "pdet/model/model.hpp"

namespace pdet {

inline constexpr std::uint32_t kPdtcVersion = 1;

struct Provenance {
  std::string dataset_hash;
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
  std::string lineage;  // hash of the base checkpoint when finetuned
  nlohmann::json extra = nlohmann::json::object();

  nlohmann::json to_json() const;
  static Provenance from_json(const nlohmann::json& j);
};

struct Checkpoint {
  std::unique_ptr<Model> model;
  NormStats norm;
  Provenance provenance;
};

std::string serialize_checkpoint(const Model& model, const NormStats& norm,
                                 const Provenance& provenance);
void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const NormStats& norm, const Provenance& provenance);
Checkpoint parse_checkpoint(const std::string& bytes, const std::string& origin = "<memory>");
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace pdet
