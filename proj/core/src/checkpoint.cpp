#include "epireader/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

namespace epi {

namespace {

constexpr char kMagic[4] = {'E', 'P', 'I', 'R'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const char* what) {
  T value;
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) {
    throw CheckpointError(std::string("checkpoint truncated while reading ") +
                          what);
  }
  return value;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const TrainConfig& config, std::uint64_t vocab_hash) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint to " + path);
  out.write(kMagic, 4);
  write_pod(out, kVersion);
  const std::string config_json = config_to_json(config);
  write_pod(out, static_cast<std::uint32_t>(config_json.size()));
  out.write(config_json.data(),
            static_cast<std::streamsize>(config_json.size()));

  const auto named = params.named_tensors();
  write_pod(out, static_cast<std::uint32_t>(named.size()));
  for (const auto& [name, tensor] : named) {
    write_pod(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod(out, static_cast<std::uint32_t>(tensor.rank()));
    for (std::size_t d = 0; d < tensor.rank(); ++d) {
      write_pod(out, static_cast<std::uint64_t>(tensor.dim(d)));
    }
    for (std::size_t i = 0; i < tensor.size(); ++i) {
      write_pod(out, static_cast<float>(tensor.at(i)));
    }
  }
  write_pod(out, vocab_hash);
  if (!out) throw CheckpointError("write failure on " + path);
}

LoadedCheckpoint load_checkpoint(
    const std::string& path,
    std::optional<std::uint64_t> expected_vocab_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read checkpoint from " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw CheckpointError("bad magic bytes in " + path);
  }
  const auto version = read_pod<std::uint32_t>(in, "format version");
  if (version != kVersion) {
    throw CheckpointError("unsupported checkpoint version " +
                          std::to_string(version));
  }
  const auto config_len = read_pod<std::uint32_t>(in, "config length");
  std::string config_json(config_len, '\0');
  in.read(config_json.data(), config_len);
  if (!in) throw CheckpointError("checkpoint truncated in the config block");
  const TrainConfig config = config_from_json(config_json);

  const auto tensor_count = read_pod<std::uint32_t>(in, "tensor count");
  std::map<std::string, std::pair<Shape, std::vector<Scalar>>> blocks;
  for (std::uint32_t k = 0; k < tensor_count; ++k) {
    const auto name_len = read_pod<std::uint32_t>(in, "tensor name length");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw CheckpointError("checkpoint truncated in a tensor name");
    const auto rank = read_pod<std::uint32_t>(in, "tensor rank");
    Shape shape;
    std::size_t total = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const auto dim = read_pod<std::uint64_t>(in, "tensor dimension");
      shape.push_back(static_cast<std::size_t>(dim));
      total *= static_cast<std::size_t>(dim);
    }
    std::vector<Scalar> values(total);
    for (std::size_t i = 0; i < total; ++i) {
      values[i] = static_cast<Scalar>(read_pod<float>(in, "tensor payload"));
    }
    blocks.emplace(std::move(name),
                   std::make_pair(std::move(shape), std::move(values)));
  }

  const auto vocab_hash = read_pod<std::uint64_t>(in, "vocabulary hash");
  if (expected_vocab_hash && vocab_hash != *expected_vocab_hash) {
    throw CheckpointError(
        "vocabulary hash mismatch: checkpoint was trained with a different "
        "vocabulary");
  }

  auto embedding_it = blocks.find("embedding.weights");
  if (embedding_it == blocks.end()) {
    throw CheckpointError("checkpoint is missing tensor 'embedding.weights'");
  }
  const int vocab_size =
      static_cast<int>(embedding_it->second.first.at(1));

  LoadedCheckpoint loaded;
  loaded.config = config;
  loaded.vocab_hash = vocab_hash;
  Rng rng(0);
  loaded.params = ModelParams::init(config, vocab_size, rng);
  auto named = loaded.params.named_tensors();
  if (named.size() != blocks.size()) {
    throw CheckpointError("checkpoint holds " +
                          std::to_string(blocks.size()) +
                          " tensors, expected " + std::to_string(named.size()));
  }
  for (auto& [name, tensor] : named) {
    auto it = blocks.find(name);
    if (it == blocks.end()) {
      throw CheckpointError("checkpoint is missing tensor '" + name + "'");
    }
    const auto& [shape, values] = it->second;
    if (shape != tensor.shape()) {
      throw CheckpointError("tensor '" + name + "' has shape " +
                            shape_string(shape) + ", expected " +
                            shape_string(tensor.shape()));
    }
    for (std::size_t i = 0; i < values.size(); ++i) tensor.at(i) = values[i];
  }
  return loaded;
}

}  // namespace epi
