#include "mmft/checkpoint.hpp"

#include "mmft/config.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace mmft {

using nlohmann::json;

namespace {

constexpr const char* kFormat = "mmft-checkpoint";
constexpr int kFormatVersion = 1;

std::filesystem::path stem_of(const std::filesystem::path& path) {
  auto ext = path.extension();
  if (ext == ".json" || ext == ".bin") return path.parent_path() / path.stem();
  return path;
}

std::filesystem::path with_ext(const std::filesystem::path& stem, const char* ext) {
  return stem.parent_path() / (stem.filename().string() + ext);
}

std::uint64_t to_little_endian(std::uint64_t bits) {
  if constexpr (std::endian::native == std::endian::little) return bits;
  std::uint64_t out = 0;
  for (int i = 0; i < 8; ++i) out |= ((bits >> (8 * i)) & 0xffu) << (8 * (7 - i));
  return out;
}

void write_doubles(std::ostream& out, const Matrix& m) {
  for (Index i = 0; i < m.size(); ++i) {
    const auto bits = to_little_endian(std::bit_cast<std::uint64_t>(m.data()[i]));
    char buf[8];
    std::memcpy(buf, &bits, 8);
    out.write(buf, 8);
  }
}

}  // namespace

std::filesystem::path checkpoint_manifest_path(const std::filesystem::path& path) {
  return with_ext(stem_of(path), ".json");
}

void save_checkpoint(const std::filesystem::path& path, const MmftBert& model, const CheckpointMeta& meta) {
  const auto stem = stem_of(path);
  if (!stem.parent_path().empty()) std::filesystem::create_directories(stem.parent_path());
  const auto bin_path = with_ext(stem, ".bin");

  json table = json::array();
  std::uint64_t offset = 0;
  {
    std::ofstream bin(bin_path, std::ios::binary);
    if (!bin) throw IoError("cannot write checkpoint blob: " + bin_path.string());
    for (const auto& p : model.params()) {
      const auto bytes = static_cast<std::uint64_t>(p->value.size()) * 8;
      table.push_back({{"name", p->name()},
                       {"shape", {p->value.rows(), p->value.cols()}},
                       {"offset", offset},
                       {"bytes", bytes}});
      write_doubles(bin, p->value);
      offset += bytes;
    }
    if (!bin) throw IoError("failed writing checkpoint blob: " + bin_path.string());
  }

  json manifest{{"format", kFormat},
                {"version", kFormatVersion},
                {"config", to_json(model.config())},
                {"vocab", model.vocab().tokens()},
                {"seed", model.seed()},
                {"step", meta.step},
                {"epoch", meta.epoch},
                {"dtype", "float64-le"},
                {"blob", bin_path.filename().string()},
                {"blob_bytes", offset},
                {"parameters", table},
                {"extra", meta.extra}};
  std::ofstream out(with_ext(stem, ".json"));
  if (!out) throw IoError("cannot write checkpoint manifest: " + with_ext(stem, ".json").string());
  out << manifest.dump(2) << '\n';
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  const auto stem = stem_of(path);
  const auto manifest_path = with_ext(stem, ".json");
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open checkpoint manifest: " + manifest_path.string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("checkpoint manifest " + manifest_path.string() + " is not valid JSON: " + e.what());
  }
  if (manifest.value("format", "") != kFormat || manifest.value("version", 0) != kFormatVersion) {
    throw FormatError(manifest_path.string() + " is not a version-1 mmft checkpoint");
  }

  LoadedCheckpoint out;
  out.manifest = manifest;
  out.meta.step = manifest.at("step").get<std::uint64_t>();
  out.meta.epoch = manifest.value("epoch", 0);
  out.meta.extra = manifest.value("extra", json::object());
  ModelConfig cfg = model_config_from_json(manifest.at("config"));
  Vocabulary vocab = Vocabulary::from_tokens(manifest.at("vocab").get<std::vector<std::string>>());
  out.model = std::make_unique<MmftBert>(cfg, vocab, manifest.at("seed").get<std::uint64_t>());

  const auto bin_path = stem.parent_path() / manifest.at("blob").get<std::string>();
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw IoError("cannot open checkpoint blob: " + bin_path.string());
  bin.seekg(0, std::ios::end);
  const auto size = static_cast<std::uint64_t>(bin.tellg());
  if (size != manifest.at("blob_bytes").get<std::uint64_t>()) {
    throw FormatError("checkpoint blob " + bin_path.string() + " has " + std::to_string(size) + " bytes, manifest says " +
                      manifest.at("blob_bytes").dump());
  }

  auto& params = out.model->params();
  const auto& table = manifest.at("parameters");
  if (table.size() != params.size()) {
    throw FormatError("checkpoint holds " + std::to_string(table.size()) + " parameters, model expects " +
                      std::to_string(params.size()));
  }
  for (const auto& entry : table) {
    const auto name = entry.at("name").get<std::string>();
    const Parameter* known = params.find(name);
    if (known == nullptr) throw FormatError("checkpoint parameter '" + name + "' is unknown to the model");
    Parameter& p = params.at(name);
    const auto rows = entry.at("shape").at(0).get<Index>(), cols = entry.at("shape").at(1).get<Index>();
    if (rows != p.value.rows() || cols != p.value.cols()) {
      throw FormatError("checkpoint parameter '" + name + "' has shape " + Shape{rows, cols}.str() + ", model expects " +
                        p.shape().str());
    }
    const auto offset = entry.at("offset").get<std::uint64_t>();
    const auto bytes = entry.at("bytes").get<std::uint64_t>();
    if (bytes != static_cast<std::uint64_t>(rows * cols) * 8 || offset + bytes > size) {
      throw FormatError("checkpoint parameter '" + name + "' has an inconsistent byte range");
    }
    bin.seekg(static_cast<std::streamoff>(offset));
    for (Index i = 0; i < p.value.size(); ++i) {
      char buf[8];
      bin.read(buf, 8);
      std::uint64_t bits;
      std::memcpy(&bits, buf, 8);
      p.value.data()[i] = std::bit_cast<double>(to_little_endian(bits));
    }
    if (!bin) throw FormatError("short read in checkpoint blob for '" + name + "'");
  }
  return out;
}

}  // namespace mmft
