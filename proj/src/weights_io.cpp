#include "lwnd/weights_io.hpp"

#include <fstream>
#include <vector>

#include "byte_io.hpp"
#include "json.hpp"
#include "lwnd/checksum.hpp"

namespace lwnd {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'N', 'D', 'W', '1'};
constexpr int kVersion = 1;

json config_json(const ModelConfig& cfg) {
  return {{"group_size", cfg.group_size},
          {"channels", cfg.channels},
          {"residual_blocks", cfg.residual_blocks},
          {"dense_sizes", cfg.dense_sizes},
          {"decision_threshold", cfg.decision_threshold},
          {"head_batchnorm", cfg.head_batchnorm},
          {"head_activation", cfg.head_activation == HiddenActivation::Sigmoid ? "sigmoid" : "relu"}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig cfg;
  cfg.group_size = j.at("group_size").get<int>();
  cfg.channels = j.at("channels").get<int>();
  cfg.residual_blocks = j.at("residual_blocks").get<int>();
  cfg.dense_sizes = j.at("dense_sizes").get<std::vector<int>>();
  cfg.decision_threshold = j.at("decision_threshold").get<double>();
  cfg.head_batchnorm = j.at("head_batchnorm").get<bool>();
  cfg.head_activation = j.at("head_activation").get<std::string>() == "sigmoid" ? HiddenActivation::Sigmoid
                                                                                 : HiddenActivation::Relu;
  return cfg;
}

std::vector<int> tensor_shape(const ModelF& model, const ParamRef<float>& t) {
  // Conv weights are stored [out, in*k*k]; report them as [out, in, k, k].
  auto conv_shape = [&](const ConvUnit<float>& u) {
    return std::vector<int>{u.conv.out_channels, u.conv.in_channels, u.conv.kernel, u.conv.kernel};
  };
  if (t.name == "stem.weight") return conv_shape(model.stem);
  for (std::size_t b = 0; b < model.blocks.size(); ++b) {
    const std::string p = "block" + std::to_string(b);
    if (t.name == p + ".conv1.weight") return conv_shape(model.blocks[b][0]);
    if (t.name == p + ".conv2.weight") return conv_shape(model.blocks[b][1]);
  }
  if (t.cols == 1) return {static_cast<int>(t.rows)};
  return {static_cast<int>(t.rows), static_cast<int>(t.cols)};
}

bool is_delta(const ParamRef<float>& t) { return t.name.ends_with(".delta"); }

}  // namespace

std::string config_to_json(const ModelConfig& cfg) { return config_json(cfg).dump(); }

void save_checkpoint(const std::filesystem::path& path, const ModelF& model_in) {
  ModelF model = model_in;
  std::vector<unsigned char> payload;
  json tensors = json::array();
  json steps = json::object();
  for (const auto& t : model.tensors()) {
    if (is_delta(t)) {
      steps[t.name.substr(0, t.name.size() - 6)] = static_cast<double>(*t.data);
      continue;
    }
    tensors.push_back({{"name", t.name}, {"shape", tensor_shape(model, t)}});
    const auto* bytes = reinterpret_cast<const unsigned char*>(t.data);
    payload.insert(payload.end(), bytes, bytes + sizeof(float) * static_cast<std::size_t>(t.rows * t.cols));
  }
  json header = {{"format", "NDW"},
                 {"version", kVersion},
                 {"stage", lsq::to_string(model.stage)},
                 {"config", config_json(model.config)},
                 {"bn_eps", static_cast<double>(model.stem.bn.eps)},
                 {"tensors", tensors},
                 {"quant", {{"bit_width", 1}, {"step_sizes", steps}}},
                 {"payload_bytes", payload.size()},
                 {"payload_sha256", sha256_hex(payload)}};
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
  out.write(kMagic, 4);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

ModelF load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kMagic)) throw IoError("not an NDW1 checkpoint: " + path.string());
  const auto header_len = detail::get_le<std::uint32_t>(in, "header length");
  std::string text(header_len, '\0');
  if (!in.read(text.data(), header_len)) throw IoError("truncated checkpoint header: " + path.string());

  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw IoError(std::string("corrupt checkpoint header: ") + e.what());
  }
  if (header.value("version", 0) != kVersion) throw IoError("unsupported checkpoint version");

  ModelF model;
  try {
    model = ModelF::build(config_from_json(header.at("config")), 0);
  } catch (const json::exception& e) {
    throw IoError(std::string("corrupt checkpoint config: ") + e.what());
  }
  const std::size_t payload_bytes = header.at("payload_bytes").get<std::size_t>();
  std::vector<unsigned char> payload(payload_bytes);
  if (!in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload_bytes)))
    throw IoError("truncated checkpoint payload: " + path.string());
  if (sha256_hex(payload) != header.at("payload_sha256").get<std::string>())
    throw IoError("checkpoint payload checksum mismatch: " + path.string());

  const float eps = static_cast<float>(header.value("bn_eps", 1e-5));
  std::size_t offset = 0;
  std::size_t tensor_index = 0;
  const json& tensors = header.at("tensors");
  const json& steps = header.at("quant").at("step_sizes");
  for (auto& t : model.tensors()) {
    if (is_delta(t)) {
      const std::string layer = t.name.substr(0, t.name.size() - 6);
      *t.data = steps.contains(layer) ? static_cast<float>(steps.at(layer).get<double>()) : 0.0f;
      continue;
    }
    if (tensor_index >= tensors.size() || tensors[tensor_index].at("name").get<std::string>() != t.name)
      throw IoError("checkpoint tensor list does not match its config at " + t.name);
    if (tensors[tensor_index].at("shape").get<std::vector<int>>() != tensor_shape(model, t))
      throw IoError("checkpoint tensor shape mismatch for " + t.name);
    const std::size_t n = sizeof(float) * static_cast<std::size_t>(t.rows * t.cols);
    if (offset + n > payload.size()) throw IoError("checkpoint payload too short");
    std::memcpy(t.data, payload.data() + offset, n);
    offset += n;
    ++tensor_index;
  }
  if (offset != payload.size() || tensor_index != tensors.size()) throw IoError("checkpoint payload has trailing data");
  model.stem.bn.eps = eps;
  for (auto& b : model.blocks)
    for (auto& u : b) u.bn.eps = eps;
  for (auto& h : model.head) h.bn.eps = eps;
  model.stage = lsq::parse_stage(header.at("stage").get<std::string>());
  return model;
}

}  // namespace lwnd
