#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "s2v/models.hpp"
#include "s2v/optim.hpp"

namespace s2v::ckpt {

inline constexpr std::uint32_t kFormatVersion = 1;

struct ArrayRecord {
  std::string name;
  std::string dtype;  // "f32" or "f64"
  ad::Shape shape;
  std::vector<unsigned char> bytes;  // little-endian payload
};

// File layout: "S2VF", u32 version, u32 header length, UTF-8 JSON header,
// then raw payloads in manifest order. Optimizer moments are stored as f64
// arrays named "adam.m:<param>" / "adam.v:<param>".
struct Checkpoint {
  nlohmann::json spec;
  std::string spec_hash;
  std::vector<ArrayRecord> arrays;
  std::string optimizer = "adam";
  std::uint64_t optimizer_steps = 0;
  std::map<std::string, train::Optimizer::Moments> moments;
  std::uint64_t seed = 0;
  double best_val_loss = std::numeric_limits<double>::quiet_NaN();
  nlohmann::json metadata = nlohmann::json::object();

  ModelSpec model_spec() const { return spec_from_json(spec); }
  const ArrayRecord* find(const std::string& name) const;
};

template <class T>
Checkpoint make_checkpoint(const nn::ForecastModel<T>& model, const train::Optimizer* opt, std::uint64_t seed,
                           double best_val_loss, nlohmann::json metadata);

std::vector<unsigned char> serialize(const Checkpoint& c);
// IntegrityError on truncation or corrupt framing, LoadError on a bad magic
// or unsupported version.
Checkpoint deserialize(const std::vector<unsigned char>& bytes, const std::string& source = "<memory>");

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies every stored parameter and buffer into `model`. LoadError when the
// checkpoint was written for a different ModelSpec.
template <class T>
void restore_model(nn::ForecastModel<T>& model, const Checkpoint& c);

template <class T>
nn::ForecastModel<T> model_from_checkpoint(const Checkpoint& c);

// Copies arrays whose names start with one of `prefixes` into the matching
// parameters of `model` (used to seed hybrids from pretrained models).
// ProtocolError if a prefix matches nothing, SchemaError on a shape mismatch.
// Returns the number of arrays copied.
template <class T>
std::size_t transfer(nn::ForecastModel<T>& model, const Checkpoint& src, const std::vector<std::string>& prefixes);

// Reads the values of one array as doubles.
std::vector<double> array_values(const ArrayRecord& rec);

}  // namespace s2v::ckpt
