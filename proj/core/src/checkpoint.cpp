#include <json.hpp>

#include "mvgmn/data.hpp"
#include "mvgmn/errors.hpp"
#include "mvgmn/model.hpp"

namespace mvgmn {

using nlohmann::json;

namespace {

constexpr char kCheckpointMagic[4] = {'M', 'V', 'G', 'C'};
constexpr std::uint16_t kCheckpointVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(std::string_view bytes, std::size_t pos) {
  if (bytes.size() < pos + 4) throw FormatError("truncated checkpoint", bytes.size());
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + static_cast<std::size_t>(i)])) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model) {
  const ParamStore& store = model.params();
  json names = json::array();
  for (ParamId id = 0; id < store.size(); ++id) names.push_back(store.name(id));
  const std::string header = json{{"version", kCheckpointVersion},
                                  {"seed", model.seed()},
                                  {"config", json::parse(model.config().to_json())},
                                  {"params", names}}
                                 .dump();
  std::string out(kCheckpointMagic, 4);
  out.push_back(static_cast<char>(kCheckpointVersion & 0xff));
  out.push_back(static_cast<char>(kCheckpointVersion >> 8));
  put_u32(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  put_u32(out, static_cast<std::uint32_t>(store.size()));
  for (ParamId id = 0; id < store.size(); ++id) {
    put_u32(out, static_cast<std::uint32_t>(store.name(id).size()));
    out += store.name(id);
    out += encode_tensor(store.value(id), DType::F64);
  }
  write_file_bytes(path, out);
}

Model load_checkpoint(const std::string& path) {
  const std::string bytes = read_file_bytes(path);
  if (bytes.size() < 10 || bytes.compare(0, 4, kCheckpointMagic, 4) != 0) {
    throw FormatError("not a checkpoint file (bad magic)", 0);
  }
  const auto version = static_cast<std::uint16_t>(static_cast<unsigned char>(bytes[4]) |
                                                  (static_cast<unsigned char>(bytes[5]) << 8));
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version), 4);
  }
  const std::uint32_t header_len = get_u32(bytes, 6);
  if (bytes.size() < 10 + header_len) throw FormatError("truncated checkpoint header", bytes.size());
  const json header = json::parse(bytes.substr(10, header_len));
  const ModelConfig config = ModelConfig::from_json(header.at("config").dump());
  Model model(config, header.at("seed").get<std::uint64_t>());

  std::size_t pos = 10 + header_len;
  const std::uint32_t count = get_u32(bytes, pos);
  pos += 4;
  ParamStore& store = model.params();
  if (count != store.size()) {
    throw FormatError("checkpoint holds " + std::to_string(count) + " tensors, model has " +
                          std::to_string(store.size()),
                      pos - 4);
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = get_u32(bytes, pos);
    pos += 4;
    if (bytes.size() < pos + name_len) throw FormatError("truncated parameter name", bytes.size());
    const std::string name = bytes.substr(pos, name_len);
    pos += name_len;
    std::size_t consumed = 0;
    Tensor value = decode_tensor(std::string_view(bytes).substr(pos), pos, consumed);
    const auto id = store.find(name);
    if (!id) throw FormatError("unknown parameter '" + name + "'", pos);
    if (store.value(*id).shape() != value.shape()) {
      throw FormatError("parameter '" + name + "' has shape " + shape_string(value.shape()) +
                            ", model expects " + shape_string(store.value(*id).shape()),
                        pos);
    }
    store.value(*id) = std::move(value);
    pos += consumed;
  }
  if (pos != bytes.size()) throw FormatError("trailing bytes in checkpoint", pos);
  return model;
}

}  // namespace mvgmn
