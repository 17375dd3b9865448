#include "acrm/checkpoint.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>

namespace acrm {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are written as little-endian floats");

namespace {

constexpr char kMagic[8] = {'A', 'C', 'R', 'M', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t read_u32(std::istream& in, const std::string& path, const char* what) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  if (!in) throw DataError(cat("checkpoint: ", path, ": truncated ", what));
  return v;
}

void write_blob(std::ostream& out, const Mat& m) {
  const Mat32 raw = m.cast<float>();
  out.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(sizeof(float) * raw.size()));
}

struct TensorEntry {
  std::string name;
  Index rows = 0, cols = 0;
  std::uint64_t offset = 0;  // bytes into the blob section
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, AcrmModel& model,
                     const AdamState* optimizer) {
  std::vector<std::pair<std::string, Mat*>> tensors = model.named_params();
  tensors.emplace_back("embeddings.table", &model.embeddings.table);

  std::vector<Mat> adam_blobs;
  if (optimizer) {
    const auto params = model.named_params();
    if (optimizer->m.size() != params.size())
      throw std::invalid_argument(cat("checkpoint: optimizer tracks ",
                                      optimizer->m.size(), " tensors, model has ",
                                      params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
      adam_blobs.push_back(optimizer->m[i]);
      adam_blobs.push_back(optimizer->v[i]);
    }
  }

  json dir = json::array();
  std::uint64_t offset = 0;
  auto add_entry = [&](const std::string& name, const Mat& m) {
    json e;
    e["name"] = name;
    e["rows"] = m.rows();
    e["cols"] = m.cols();
    e["offset"] = offset;
    dir.push_back(e);
    offset += sizeof(float) * static_cast<std::uint64_t>(m.size());
  };
  for (auto& [name, mat] : tensors) add_entry(name, *mat);
  if (optimizer) {
    const auto params = model.named_params();
    for (std::size_t i = 0; i < params.size(); ++i) {
      add_entry("adam.m." + params[i].first, adam_blobs[2 * i]);
      add_entry("adam.v." + params[i].first, adam_blobs[2 * i + 1]);
    }
  }

  json manifest;
  manifest["config"] = model.cfg.to_json();
  manifest["vocabulary"] = model.embeddings.vocab;
  manifest["tensors"] = dir;
  manifest["optimizer"] = optimizer ? json{{"t", optimizer->t}} : json(nullptr);
  const std::string manifest_text = manifest.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(cat("checkpoint: cannot write ", path.string()));
  out.write(kMagic, 8);
  write_u32(out, kVersion);
  write_u32(out, static_cast<std::uint32_t>(manifest_text.size()));
  out.write(manifest_text.data(), static_cast<std::streamsize>(manifest_text.size()));
  for (auto& [name, mat] : tensors) write_blob(out, *mat);
  for (const Mat& m : adam_blobs) write_blob(out, m);
  if (!out) throw DataError(cat("checkpoint: write failed for ", path.string()));
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(cat("checkpoint: cannot open ", path.string()));
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw DataError(cat("checkpoint: ", path.string(), ": bad magic"));
  const std::uint32_t version = read_u32(in, path.string(), "version");
  if (version != kVersion)
    throw DataError(cat("checkpoint: ", path.string(), ": unsupported version ", version));
  const std::uint32_t manifest_len = read_u32(in, path.string(), "manifest length");
  std::string manifest_text(manifest_len, '\0');
  in.read(manifest_text.data(), manifest_len);
  if (!in) throw DataError(cat("checkpoint: ", path.string(), ": truncated manifest"));

  json manifest;
  try {
    manifest = json::parse(manifest_text);
  } catch (const json::exception& e) {
    throw DataError(cat("checkpoint: ", path.string(), ": manifest: ", e.what()));
  }
  ModelConfig cfg = ModelConfig::from_json(manifest.at("config"));
  const std::vector<std::string> vocab =
      manifest.at("vocabulary").get<std::vector<std::string>>();

  std::vector<TensorEntry> entries;
  for (const json& e : manifest.at("tensors"))
    entries.push_back({e.at("name").get<std::string>(), e.at("rows").get<Index>(),
                       e.at("cols").get<Index>(), e.at("offset").get<std::uint64_t>()});

  const std::streampos blob_start = in.tellg();
  auto read_tensor = [&](const TensorEntry& e) {
    Mat32 raw(e.rows, e.cols);
    in.seekg(blob_start + static_cast<std::streamoff>(e.offset));
    in.read(reinterpret_cast<char*>(raw.data()),
            static_cast<std::streamsize>(sizeof(float) * raw.size()));
    if (!in)
      throw DataError(cat("checkpoint: ", path.string(), ": truncated tensor ", e.name));
    return Mat(raw.cast<Real>());
  };
  auto find_entry = [&](const std::string& name) -> const TensorEntry& {
    for (const TensorEntry& e : entries)
      if (e.name == name) return e;
    throw DataError(cat("checkpoint: ", path.string(), ": missing tensor ", name));
  };

  // Rebuild the embedding table, then overwrite every registered parameter.
  EmbeddingTable table;
  table.vocab = vocab;
  for (std::size_t i = 0; i < vocab.size(); ++i)
    table.index.emplace(vocab[i], static_cast<int>(i));
  table.table = read_tensor(find_entry("embeddings.table"));
  if (table.table.rows() != static_cast<Index>(vocab.size()) + 1)
    throw DataError(cat("checkpoint: ", path.string(), ": embedding table has ",
                        table.table.rows(), " rows for ", vocab.size(), " words"));

  LoadedCheckpoint lc{AcrmModel::init(cfg, std::move(table)), std::nullopt};
  for (auto& [name, mat] : lc.model.named_params()) {
    const TensorEntry& e = find_entry(name);
    if (e.rows != mat->rows() || e.cols != mat->cols())
      throw DataError(cat("checkpoint: ", path.string(), ": tensor ", name, " is ",
                          shape_str(e.rows, e.cols), ", expected ", shape_str(*mat)));
    *mat = read_tensor(e);
  }

  if (!manifest.at("optimizer").is_null()) {
    AdamState st;
    st.t = manifest.at("optimizer").at("t").get<long>();
    for (auto& [name, mat] : lc.model.named_params()) {
      st.m.push_back(read_tensor(find_entry("adam.m." + name)));
      st.v.push_back(read_tensor(find_entry("adam.v." + name)));
      (void)mat;
    }
    lc.optimizer = std::move(st);
  }
  return lc;
}

}  // namespace acrm
