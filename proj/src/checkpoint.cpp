#include "sacloc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "sacloc/error.hpp"

namespace sacloc {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

void write_blob(std::ofstream& out, const ad::Tensor& t) {
  out.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(double)));
}

void read_blob(std::ifstream& in, ad::Tensor& t, const std::filesystem::path& path) {
  in.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  if (!in) throw Error(ErrorCode::kBadCheckpoint, "truncated payload in " + path.string());
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const GtModel& model = ckpt.model;
  nlohmann::json header;
  header["model"] = {{"ap_count", model.config.ap_count},
                     {"hidden", model.config.hidden},
                     {"heads", model.config.heads},
                     {"head_dim", model.config.resolved_head_dim()},
                     {"layers", model.config.layers}};
  header["frame"] = {{"origin", {model.frame.origin.x, model.frame.origin.y}},
                     {"span", {model.frame.span.x, model.frame.span.y}}};
  nlohmann::json params = nlohmann::json::array();
  for (const auto* p : model.parameters()) params.push_back({{"name", p->name}, {"shape", {p->value.rows, p->value.cols}}});
  header["parameters"] = params;
  const bool has_moments = !ckpt.adam.first_moment.empty();
  header["adam"] = {{"beta1", ckpt.adam.beta1},
                    {"beta2", ckpt.adam.beta2},
                    {"epsilon", ckpt.adam.epsilon},
                    {"weight_decay", ckpt.adam.weight_decay},
                    {"step", ckpt.adam.step},
                    {"has_moments", has_moments}};
  header["epochs_completed"] = ckpt.epochs_completed;
  header["metadata"] = ckpt.metadata.is_null() ? nlohmann::json::object() : ckpt.metadata;
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  const std::uint32_t version = kCheckpointVersion;
  const std::uint64_t length = text.size();
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  out.write(reinterpret_cast<const char*>(&length), sizeof(length));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto* p : model.parameters()) write_blob(out, p->value);
  if (has_moments) {
    for (const auto& t : ckpt.adam.first_moment) write_blob(out, t);
    for (const auto& t : ckpt.adam.second_moment) write_blob(out, t);
  }
  if (!out) throw Error(ErrorCode::kIoError, "write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::kMissingArtifact, "checkpoint not found: " + path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t length = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&length), sizeof(length));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw Error(ErrorCode::kBadCheckpoint, path.string() + " is not a checkpoint");
  }
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::kBadCheckpoint, "unsupported checkpoint version " + std::to_string(version));
  }
  if (length > (1ULL << 32)) throw Error(ErrorCode::kBadCheckpoint, "implausible header length");
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  if (!in) throw Error(ErrorCode::kBadCheckpoint, "truncated header in " + path.string());

  Checkpoint ckpt;
  try {
    const auto header = nlohmann::json::parse(text);
    ModelConfig config;
    config.ap_count = header.at("model").at("ap_count").get<std::size_t>();
    config.hidden = header.at("model").at("hidden").get<std::size_t>();
    config.heads = header.at("model").at("heads").get<std::size_t>();
    config.head_dim = header.at("model").at("head_dim").get<std::size_t>();
    config.layers = header.at("model").at("layers").get<std::size_t>();
    CoordinateFrame frame;
    frame.origin = {header.at("frame").at("origin")[0].get<double>(), header.at("frame").at("origin")[1].get<double>()};
    frame.span = {header.at("frame").at("span")[0].get<double>(), header.at("frame").at("span")[1].get<double>()};
    ckpt.model = GtModel::create(config, frame, 0);

    const auto& names = header.at("parameters");
    auto params = ckpt.model.parameters();
    if (names.size() != params.size()) throw Error(ErrorCode::kBadCheckpoint, "parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto rows = names[i].at("shape")[0].get<std::size_t>();
      const auto cols = names[i].at("shape")[1].get<std::size_t>();
      if (names[i].at("name").get<std::string>() != params[i]->name || rows != params[i]->value.rows ||
          cols != params[i]->value.cols) {
        throw Error(ErrorCode::kBadCheckpoint, "parameter layout mismatch at " + params[i]->name);
      }
      read_blob(in, params[i]->value, path);
    }
    const auto& adam = header.at("adam");
    ckpt.adam.beta1 = adam.at("beta1").get<double>();
    ckpt.adam.beta2 = adam.at("beta2").get<double>();
    ckpt.adam.epsilon = adam.at("epsilon").get<double>();
    ckpt.adam.weight_decay = adam.at("weight_decay").get<double>();
    ckpt.adam.step = adam.at("step").get<std::uint64_t>();
    if (adam.at("has_moments").get<bool>()) {
      for (auto* p : params) ckpt.adam.first_moment.emplace_back(p->value.rows, p->value.cols);
      for (auto* p : params) ckpt.adam.second_moment.emplace_back(p->value.rows, p->value.cols);
      for (auto& t : ckpt.adam.first_moment) read_blob(in, t, path);
      for (auto& t : ckpt.adam.second_moment) read_blob(in, t, path);
    }
    ckpt.epochs_completed = header.at("epochs_completed").get<std::size_t>();
    ckpt.metadata = header.at("metadata");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kBadCheckpoint, std::string("malformed header: ") + e.what());
  }
  return ckpt;
}

}  // namespace sacloc
