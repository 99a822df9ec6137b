#include "cameo/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "cameo/errors.hpp"
#include "cameo/util.hpp"

namespace cameo {

namespace {

constexpr std::string_view kMagic = "CAMEOCKP";
static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model, const Vocabulary& vocab,
                     const nlohmann::json& metadata) {
  const auto params = model.parameters();
  std::string payload(params.size() * sizeof(float), '\0');
  std::memcpy(payload.data(), params.data(), payload.size());

  nlohmann::json header;
  header["schema_version"] = kCheckpointSchemaVersion;
  header["model_config"] = model.config();
  header["vocab_hash"] = vocab.hash();
  header["vocab_size"] = vocab.size();
  auto& tensors = header["tensors"] = nlohmann::json::array();
  for (const auto& t : model.layout().tensors()) tensors.push_back({{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}});
  header["payload_bytes"] = payload.size();
  header["payload_crc32"] = util::crc32(payload);
  header["metadata"] = metadata;
  const std::string head = header.dump();

  std::string out(kMagic);
  const auto len = static_cast<std::uint32_t>(head.size());
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((len >> (8 * b)) & 0xff));
  out += head;
  out += payload;
  util::write_file(path, out);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const Vocabulary* expected_vocab) {
  const std::string buf = util::read_file(path);
  const std::string where = path.string();
  if (buf.size() < kMagic.size() + 4 || std::string_view(buf).substr(0, kMagic.size()) != kMagic) {
    throw CheckpointFormatError(where + ": not a checkpoint file");
  }
  std::uint32_t len = 0;
  for (int b = 0; b < 4; ++b) len |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[kMagic.size() + b])) << (8 * b);
  const std::size_t head_begin = kMagic.size() + 4;
  if (head_begin + len > buf.size()) throw CheckpointFormatError(where + ": truncated header");

  nlohmann::json header;
  ModelConfig config;
  std::size_t payload_bytes = 0;
  std::uint32_t payload_crc = 0;
  try {
    header = nlohmann::json::parse(buf.substr(head_begin, len));
    if (header.at("schema_version").get<int>() != kCheckpointSchemaVersion) {
      throw CheckpointFormatError(where + ": schema version " + header.at("schema_version").dump() +
                                  ", expected " + std::to_string(kCheckpointSchemaVersion));
    }
    config = header.at("model_config").get<ModelConfig>();
    payload_bytes = header.at("payload_bytes").get<std::size_t>();
    payload_crc = header.at("payload_crc32").get<std::uint32_t>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointFormatError(where + ": bad header: " + e.what());
  }

  const std::string_view payload = std::string_view(buf).substr(head_begin + len);
  if (payload.size() != payload_bytes) throw CheckpointFormatError(where + ": payload size mismatch");
  if (util::crc32(payload) != payload_crc) throw CheckpointFormatError(where + ": payload checksum mismatch");

  const auto vocab_hash = header.at("vocab_hash").get<std::uint32_t>();
  if (expected_vocab != nullptr) {
    if (expected_vocab->hash() != vocab_hash ||
        static_cast<int>(expected_vocab->size()) != config.vocab_size) {
      throw CheckpointMismatch(where + ": checkpoint was trained with a different vocabulary");
    }
  }

  auto model = Model::zeros(config);
  const auto& tensors = model.layout().tensors();
  const auto& stored = header.at("tensors");
  if (stored.size() != tensors.size()) throw CheckpointMismatch(where + ": tensor table does not match the model layout");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (stored[i].at("name").get<std::string>() != tensors[i].name || stored[i].at("rows").get<int>() != tensors[i].rows ||
        stored[i].at("cols").get<int>() != tensors[i].cols) {
      throw CheckpointMismatch(where + ": tensor " + tensors[i].name + " does not match the stored layout");
    }
  }
  auto params = model.parameters();
  if (payload.size() != params.size() * sizeof(float)) throw CheckpointMismatch(where + ": parameter count mismatch");
  std::memcpy(params.data(), payload.data(), payload.size());

  return {std::move(model), vocab_hash, header.value("metadata", nlohmann::json::object())};
}

}  // namespace cameo
