#include "adx/models/checkpoint.hpp"

#include <fstream>
#include <set>

#include "adx/core/binary_io.hpp"
#include "adx/core/errors.hpp"
#include "adx/core/tensor_io.hpp"

namespace adx::models {

namespace {

constexpr std::uint64_t kMaxMetaBytes = 16u << 20;

std::vector<nn::NamedTensor> all_tensors(nn::Model& model) {
  auto t = model.parameters();
  auto b = model.buffers();
  t.insert(t.end(), b.begin(), b.end());
  return t;
}

}  // namespace

void write_checkpoint(std::ostream& os, nn::Model& model, const CheckpointMeta& meta) {
  nlohmann::json j = {
      {"architecture", to_string(meta.spec.architecture)},
      {"spec", to_json(meta.spec)},
      {"class_names", meta.class_names},
      {"seed", meta.seed},
      {"rho_parameterization", "sigma = softplus(rho)"},
      {"extra", meta.extra},
  };
  const std::string text = j.dump(2);
  binio::write_magic(os, "BNNM");
  binio::write_u32(os, kCheckpointVersion);
  binio::write_u64(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  const auto tensors = all_tensors(model);
  binio::write_u32(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    binio::write_string(os, t.name);
    write_tensor(os, t.tensor);
  }
  if (!os) throw std::runtime_error("checkpoint: write failed");
}

LoadedModel read_checkpoint(std::istream& is) {
  binio::expect_magic(is, "BNNM", "checkpoint");
  const auto version = binio::read_u32(is);
  if (version != kCheckpointVersion) throw DataError("checkpoint: unsupported version " + std::to_string(version));
  const auto len = binio::read_u64(is);
  if (len > kMaxMetaBytes) throw DataError("checkpoint: metadata too large");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(binio::read_bytes(is, len));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: bad metadata: ") + e.what());
  }
  LoadedModel out;
  try {
    out.meta.spec = spec_from_json(j.at("spec"));
    out.meta.class_names = j.at("class_names").get<std::vector<std::string>>();
    out.meta.seed = j.at("seed").get<std::uint64_t>();
    out.meta.extra = j.value("extra", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: incomplete metadata: ") + e.what());
  }
  out.model = build_model(out.meta.spec, out.meta.seed);

  nn::ModelState state;
  const auto count = binio::read_u32(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = binio::read_string(is, 4096);
    Tensor t = read_tensor(is);
    if (state.count(name)) throw DataError("checkpoint: duplicate tensor '" + name + "'");
    state[name].assign(t.values().begin(), t.values().end());
  }
  try {
    out.model->restore(state);
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, nn::Model& model, const CheckpointMeta& meta) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  write_checkpoint(f, model, meta);
}

LoadedModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint '" + path.string() + "'");
  return read_checkpoint(f);
}

}  // namespace adx::models
