#include "s2v/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "s2v/errors.hpp"

namespace s2v::ckpt {

static_assert(std::endian::native == std::endian::little, "checkpoint payloads assume a little-endian host");

namespace {

constexpr char kMagic[4] = {'S', '2', 'V', 'F'};

template <class T>
const char* dtype_of() {
  return sizeof(T) == 4 ? "f32" : "f64";
}

std::size_t dtype_size(const std::string& dtype) {
  if (dtype == "f32") return 4;
  if (dtype == "f64") return 8;
  throw LoadError("unsupported dtype '" + dtype + "'");
}

template <class T>
ArrayRecord record_of(const std::string& name, const ad::Shape& shape, std::span<const T> values) {
  ArrayRecord r{name, dtype_of<T>(), shape, std::vector<unsigned char>(values.size_bytes())};
  if (!values.empty()) std::memcpy(r.bytes.data(), values.data(), values.size_bytes());
  return r;
}

template <class T>
std::vector<T> decode(const ArrayRecord& rec) {
  const std::size_t n = ad::shape_numel(rec.shape);
  std::vector<T> out(n);
  if (rec.dtype == "f32") {
    std::vector<float> tmp(n);
    if (n) std::memcpy(tmp.data(), rec.bytes.data(), n * 4);
    for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<T>(tmp[i]);
  } else if (rec.dtype == "f64") {
    std::vector<double> tmp(n);
    if (n) std::memcpy(tmp.data(), rec.bytes.data(), n * 8);
    for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<T>(tmp[i]);
  } else {
    throw LoadError("unsupported dtype '" + rec.dtype + "' for '" + rec.name + "'");
  }
  return out;
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

const std::string kMomentM = "adam.m:";
const std::string kMomentV = "adam.v:";

}  // namespace

const ArrayRecord* Checkpoint::find(const std::string& name) const {
  for (const auto& a : arrays)
    if (a.name == name) return &a;
  return nullptr;
}

std::vector<double> array_values(const ArrayRecord& rec) { return decode<double>(rec); }

template <class T>
Checkpoint make_checkpoint(const nn::ForecastModel<T>& model, const train::Optimizer* opt, std::uint64_t seed,
                           double best_val_loss, nlohmann::json metadata) {
  Checkpoint c;
  c.spec = to_json(model.spec());
  c.spec_hash = spec_hash(model.spec());
  for (const auto& p : model.parameters())
    c.arrays.push_back(record_of<T>(p.name, p.tensor.shape(), std::span<const T>(p.tensor.data())));
  if (opt) {
    c.optimizer = train::to_string(opt->kind());
    c.optimizer_steps = opt->steps();
    c.moments = opt->moments();
  }
  c.seed = seed;
  c.best_val_loss = best_val_loss;
  c.metadata = std::move(metadata);
  return c;
}

std::vector<unsigned char> serialize(const Checkpoint& c) {
  std::vector<ArrayRecord> moment_arrays;
  for (const auto& [name, m] : c.moments) {
    moment_arrays.push_back(record_of<double>(kMomentM + name, {m.m.size()}, std::span<const double>(m.m)));
    moment_arrays.push_back(record_of<double>(kMomentV + name, {m.v.size()}, std::span<const double>(m.v)));
  }
  nlohmann::json manifest = nlohmann::json::array();
  std::uint64_t offset = 0;
  auto add = [&](const ArrayRecord& a) {
    manifest.push_back({{"name", a.name}, {"dtype", a.dtype}, {"shape", a.shape}, {"offset", offset},
                        {"bytes", a.bytes.size()}});
    offset += a.bytes.size();
  };
  for (const auto& a : c.arrays) add(a);
  for (const auto& a : moment_arrays) add(a);

  nlohmann::json header = {
      {"format", "s2v-checkpoint"},
      {"spec_hash", c.spec_hash},
      {"spec", c.spec},
      {"arrays", manifest},
      {"parameter_arrays", c.arrays.size()},
      {"optimizer", {{"kind", c.optimizer}, {"steps", c.optimizer_steps}}},
      {"seed", c.seed},
      {"best_val_loss", std::isfinite(c.best_val_loss) ? nlohmann::json(c.best_val_loss) : nlohmann::json()},
      {"metadata", c.metadata},
  };
  const std::string text = header.dump();
  std::vector<unsigned char> out(kMagic, kMagic + 4);
  put_u32(out, kFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& a : c.arrays) out.insert(out.end(), a.bytes.begin(), a.bytes.end());
  for (const auto& a : moment_arrays) out.insert(out.end(), a.bytes.begin(), a.bytes.end());
  return out;
}

Checkpoint deserialize(const std::vector<unsigned char>& bytes, const std::string& source) {
  if (bytes.size() < 12) throw IntegrityError(source + ": truncated checkpoint (no header)");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw LoadError(source + ": not a checkpoint (bad magic)");
  const std::uint32_t version = get_u32(bytes.data() + 4);
  if (version != kFormatVersion) {
    throw LoadError(source + ": unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t hlen = get_u32(bytes.data() + 8);
  if (bytes.size() < 12 + static_cast<std::size_t>(hlen)) throw IntegrityError(source + ": truncated checkpoint header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + hlen);
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(source + ": corrupt checkpoint header: " + e.what());
  }
  const std::size_t base = 12 + hlen;
  Checkpoint c;
  try {
    c.spec_hash = header.at("spec_hash").get<std::string>();
    c.spec = header.at("spec");
    c.optimizer = header.at("optimizer").at("kind").get<std::string>();
    c.optimizer_steps = header.at("optimizer").at("steps").get<std::uint64_t>();
    c.seed = header.at("seed").get<std::uint64_t>();
    if (!header.at("best_val_loss").is_null()) c.best_val_loss = header.at("best_val_loss").get<double>();
    c.metadata = header.at("metadata");
    const std::size_t n_params = header.at("parameter_arrays").get<std::size_t>();
    std::size_t expected_offset = 0;
    std::size_t index = 0;
    for (const auto& m : header.at("arrays")) {
      ArrayRecord a;
      a.name = m.at("name").get<std::string>();
      a.dtype = m.at("dtype").get<std::string>();
      a.shape = m.at("shape").get<ad::Shape>();
      const auto offset = m.at("offset").get<std::uint64_t>();
      const auto nbytes = m.at("bytes").get<std::uint64_t>();
      if (offset != expected_offset || nbytes != ad::shape_numel(a.shape) * dtype_size(a.dtype)) {
        throw IntegrityError(source + ": inconsistent manifest entry for '" + a.name + "'");
      }
      if (base + offset + nbytes > bytes.size()) {
        throw IntegrityError(source + ": truncated checkpoint payload at '" + a.name + "'");
      }
      a.bytes.assign(bytes.begin() + static_cast<std::ptrdiff_t>(base + offset),
                     bytes.begin() + static_cast<std::ptrdiff_t>(base + offset + nbytes));
      expected_offset += nbytes;
      if (index++ < n_params) {
        c.arrays.push_back(std::move(a));
      } else if (a.name.starts_with(kMomentM)) {
        c.moments[a.name.substr(kMomentM.size())].m = decode<double>(a);
      } else if (a.name.starts_with(kMomentV)) {
        c.moments[a.name.substr(kMomentV.size())].v = decode<double>(a);
      } else {
        throw IntegrityError(source + ": unexpected array '" + a.name + "'");
      }
    }
    if (base + expected_offset != bytes.size()) {
      throw IntegrityError(source + ": " + std::to_string(bytes.size() - base - expected_offset) +
                           " trailing bytes after payload");
    }
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(source + ": malformed checkpoint header: " + e.what());
  }
  return c;
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  const auto bytes = serialize(c);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes, path.string());
}

template <class T>
void restore_model(nn::ForecastModel<T>& model, const Checkpoint& c) {
  const std::string want = spec_hash(model.spec());
  if (c.spec_hash != want) {
    throw LoadError("spec hash mismatch: checkpoint " + c.spec_hash + ", model " + want);
  }
  for (auto& p : model.parameters()) {
    const ArrayRecord* rec = c.find(p.name);
    if (!rec) throw LoadError("checkpoint lacks array '" + p.name + "'");
    if (rec->shape != p.tensor.shape()) {
      throw LoadError("shape mismatch for '" + p.name + "': " + ad::shape_str(rec->shape) + " vs " +
                      ad::shape_str(p.tensor.shape()));
    }
    const auto values = decode<T>(*rec);
    auto dst = p.tensor.mutable_data();
    std::copy(values.begin(), values.end(), dst.begin());
  }
}

template <class T>
nn::ForecastModel<T> model_from_checkpoint(const Checkpoint& c) {
  ModelSpec spec;
  try {
    spec = c.model_spec();
  } catch (const SchemaError& e) {
    throw LoadError(std::string("checkpoint spec unreadable: ") + e.what());
  }
  nn::ForecastModel<T> model(spec, 0);
  restore_model(model, c);
  return model;
}

template <class T>
std::size_t transfer(nn::ForecastModel<T>& model, const Checkpoint& src, const std::vector<std::string>& prefixes) {
  auto params = model.parameters();
  std::size_t copied = 0;
  for (const auto& prefix : prefixes) {
    std::size_t hits = 0;
    for (const auto& rec : src.arrays) {
      if (!rec.name.starts_with(prefix)) continue;
      auto it = std::find_if(params.begin(), params.end(), [&](const auto& p) { return p.name == rec.name; });
      if (it == params.end()) continue;
      if (rec.shape != it->tensor.shape()) {
        throw SchemaError("cannot transfer '" + rec.name + "': shape " + ad::shape_str(rec.shape) + " vs " +
                          ad::shape_str(it->tensor.shape()));
      }
      const auto values = decode<T>(rec);
      auto dst = it->tensor.mutable_data();
      std::copy(values.begin(), values.end(), dst.begin());
      ++hits;
    }
    if (hits == 0) throw ProtocolError("pretrained checkpoint has no arrays under '" + prefix + "'");
    copied += hits;
  }
  return copied;
}

#define S2V_CKPT_INSTANTIATE(T)                                                                              \
  template Checkpoint make_checkpoint<T>(const nn::ForecastModel<T>&, const train::Optimizer*, std::uint64_t, \
                                         double, nlohmann::json);                                            \
  template void restore_model<T>(nn::ForecastModel<T>&, const Checkpoint&);                                  \
  template nn::ForecastModel<T> model_from_checkpoint<T>(const Checkpoint&);                                 \
  template std::size_t transfer<T>(nn::ForecastModel<T>&, const Checkpoint&, const std::vector<std::string>&);

S2V_CKPT_INSTANTIATE(float)
S2V_CKPT_INSTANTIATE(double)

}  // namespace s2v::ckpt
