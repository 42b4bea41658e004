#include <zlib.h>

#include <bit>
#include <cstring>

#include "json.hpp"
#include "qqse/model.h"

namespace qqse {

using nlohmann::json;

namespace {

constexpr std::string_view kMagic = "QQSEMDL1";

static_assert(std::endian::native == std::endian::little,
              "model serialization assumes a little-endian host");

json hp_to_json(const HyperParams& hp) {
  return {{"max_len_query", hp.max_len_query},
          {"max_len_cq", hp.max_len_cq},
          {"max_len_ans", hp.max_len_ans},
          {"cnn_filter_widths", hp.cnn_filter_widths},
          {"cnn_filters_per_width", hp.cnn_filters_per_width},
          {"cnn_fc_out", hp.cnn_fc_out},
          {"lstm_hidden", hp.lstm_hidden},
          {"head_hidden", hp.head_hidden},
          {"learning_rate", hp.learning_rate},
          {"adam_beta1", hp.adam_beta1},
          {"adam_beta2", hp.adam_beta2},
          {"adam_eps", hp.adam_eps},
          {"batch_size", hp.batch_size},
          {"max_epochs", hp.max_epochs},
          {"early_stop_patience", hp.early_stop_patience},
          {"seed", hp.seed},
          {"probability_clamp_eps", hp.probability_clamp_eps},
          {"validation_fraction", hp.validation_fraction},
          {"query_only", hp.query_only}};
}

template <typename T>
void read_key(const json& obj, const char* key, T& out) {
  if (auto it = obj.find(key); it != obj.end()) out = it->get<T>();
}

HyperParams hp_from_json(const json& obj) {
  if (!obj.is_object()) throw Error("hyperparams: expected a JSON object");
  static const json defaults = hp_to_json(HyperParams{});
  for (const auto& [key, value] : obj.items()) {
    if (!defaults.contains(key)) throw Error("hyperparams: unknown key \"" + key + "\"");
  }
  HyperParams hp;
  read_key(obj, "max_len_query", hp.max_len_query);
  read_key(obj, "max_len_cq", hp.max_len_cq);
  read_key(obj, "max_len_ans", hp.max_len_ans);
  read_key(obj, "cnn_filter_widths", hp.cnn_filter_widths);
  read_key(obj, "cnn_filters_per_width", hp.cnn_filters_per_width);
  read_key(obj, "cnn_fc_out", hp.cnn_fc_out);
  read_key(obj, "lstm_hidden", hp.lstm_hidden);
  read_key(obj, "head_hidden", hp.head_hidden);
  read_key(obj, "learning_rate", hp.learning_rate);
  read_key(obj, "adam_beta1", hp.adam_beta1);
  read_key(obj, "adam_beta2", hp.adam_beta2);
  read_key(obj, "adam_eps", hp.adam_eps);
  read_key(obj, "batch_size", hp.batch_size);
  read_key(obj, "max_epochs", hp.max_epochs);
  read_key(obj, "early_stop_patience", hp.early_stop_patience);
  read_key(obj, "seed", hp.seed);
  read_key(obj, "probability_clamp_eps", hp.probability_clamp_eps);
  read_key(obj, "validation_fraction", hp.validation_fraction);
  read_key(obj, "query_only", hp.query_only);
  hp.validate();
  return hp;
}

std::uint32_t crc32_of(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - pos, 1u << 30);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + pos), static_cast<uInt>(n));
    pos += n;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::string hyperparams_to_json(const HyperParams& hp) { return hp_to_json(hp).dump(2); }

HyperParams hyperparams_from_json(std::string_view json_text) {
  try {
    return hp_from_json(json::parse(json_text));
  } catch (const json::exception& e) {
    throw ParseError(std::string("hyperparams: ") + e.what());
  }
}

std::string serialize_model(const ModelWeights& weights) {
  auto values = weights.values();
  std::string payload(values.size() * sizeof(float), '\0');
  std::memcpy(payload.data(), values.data(), payload.size());

  json blocks = json::array();
  for (const auto& b : weights.layout().blocks) {
    blocks.push_back({{"name", b.name}, {"shape", b.shape}});
  }
  json header = {{"format_version", kModelFormatVersion},
                 {"dtype", "float32-le"},
                 {"hyperparams", hp_to_json(weights.hyperparams())},
                 {"embedding_dim", weights.embedding_dim()},
                 {"embedding_fingerprint", weights.fingerprint()},
                 {"blocks", blocks},
                 {"payload_bytes", payload.size()},
                 {"payload_crc32", crc32_of(payload)}};

  std::string out(kMagic);
  out += header.dump();
  out += '\n';
  out += payload;
  return out;
}

ModelWeights deserialize_model(std::string_view bytes) {
  if (bytes.substr(0, kMagic.size()) != kMagic) {
    throw ModelFormatError("model: bad magic, not a model file");
  }
  bytes.remove_prefix(kMagic.size());
  const std::size_t newline = bytes.find('\n');
  if (newline == std::string_view::npos) throw ModelFormatError("model: truncated header");

  json header;
  try {
    header = json::parse(bytes.substr(0, newline));
  } catch (const json::exception& e) {
    throw ModelFormatError(std::string("model: corrupt header: ") + e.what());
  }
  bytes.remove_prefix(newline + 1);

  try {
    const int version = header.at("format_version").get<int>();
    if (version != kModelFormatVersion) {
      throw ModelFormatError("model: format version " + std::to_string(version) +
                             " is not supported (expected " +
                             std::to_string(kModelFormatVersion) + ")");
    }
    if (header.at("dtype").get<std::string>() != "float32-le") {
      throw ModelFormatError("model: unsupported dtype");
    }
    const auto payload_bytes = header.at("payload_bytes").get<std::size_t>();
    const auto expected_crc = header.at("payload_crc32").get<std::uint32_t>();
    if (bytes.size() != payload_bytes || crc32_of(bytes) != expected_crc) {
      throw ModelFormatError("model: payload checksum mismatch (file truncated or corrupted)");
    }

    ModelWeights weights(hp_from_json(header.at("hyperparams")),
                         header.at("embedding_dim").get<std::size_t>(),
                         header.at("embedding_fingerprint").get<std::string>());
    const auto& blocks = header.at("blocks");
    const auto& layout = weights.layout().blocks;
    if (blocks.size() != layout.size()) throw ModelFormatError("model: block count mismatch");
    for (std::size_t i = 0; i < layout.size(); ++i) {
      if (blocks[i].at("name").get<std::string>() != layout[i].name ||
          blocks[i].at("shape").get<std::vector<std::size_t>>() != layout[i].shape) {
        throw ModelFormatError("model: block " + layout[i].name + " does not match hyperparams");
      }
    }
    if (payload_bytes != weights.values().size() * sizeof(float)) {
      throw ModelFormatError("model: payload size does not match the parameter layout");
    }
    std::memcpy(weights.values().data(), bytes.data(), payload_bytes);
    return weights;
  } catch (const json::exception& e) {
    throw ModelFormatError(std::string("model: invalid header: ") + e.what());
  }
}

void save_model(const ModelWeights& weights, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_model(weights));
}

ModelWeights load_model(const std::filesystem::path& path) {
  return deserialize_model(read_file(path));
}

}  // namespace qqse
