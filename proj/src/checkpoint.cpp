#include "nevae/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "nevae/error.h"

namespace nevae {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

namespace {

constexpr char kMagic[8] = {'N', 'E', 'V', 'A', 'E', 'C', 'K', 'P'};

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in, const char* what) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T)))
    throw InputError(std::string("checkpoint truncated while reading ") + what);
  return value;
}

std::string get_bytes(std::istream& in, std::uint64_t n, const char* what) {
  if (n > (1ULL << 32)) throw InputError(std::string("checkpoint: implausible ") + what + " length");
  std::string s(n, '\0');
  if (n && !in.read(s.data(), static_cast<std::streamsize>(n)))
    throw InputError(std::string("checkpoint truncated while reading ") + what);
  return s;
}

nlohmann::json metadata(const Checkpoint& c) {
  const Hyperparams& h = c.hyper;
  return {
      {"latent", c.params.dims.latent},
      {"hops", c.params.dims.hops},
      {"hidden", c.params.dims.hidden},
      {"lambda_n", c.params.lambda_n},
      {"iteration", c.iteration},
      {"hyperparams",
       {{"negatives", h.negatives},
        {"exact_partition", h.exact_partition},
        {"learning_rate", h.learning_rate},
        {"source_samples", h.source_samples},
        {"batch_size", h.batch_size},
        {"iterations", h.iterations},
        {"seed", h.seed},
        {"mask", mask_config_name(h.mask)},
        {"source", std::string(source_kind_name(h.source))}}},
  };
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  const std::string meta = metadata(ckpt).dump();
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, meta.size());
  out.write(meta.data(), static_cast<std::streamsize>(meta.size()));

  const auto tensors = ckpt.params.tensors();
  const auto names = ckpt.params.tensor_names();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(names[i].size()));
    out.write(names[i].data(), static_cast<std::streamsize>(names[i].size()));
    const Shape& shape = tensors[i]->shape();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(shape.size()));
    for (std::size_t d : shape) put<std::uint64_t>(out, d);
    const auto data = tensors[i]->data();
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(double)));
  }
  if (!out) throw Error("checkpoint: write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw InputError("not a nevae checkpoint (bad magic)");
  const auto version = get<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion)
    throw InputError("unsupported checkpoint version " + std::to_string(version));
  const std::string meta_text = get_bytes(in, get<std::uint64_t>(in, "metadata length"), "metadata");

  Checkpoint ckpt;
  try {
    const auto meta = nlohmann::json::parse(meta_text);
    ckpt.params.dims = {meta.at("latent").get<std::size_t>(), meta.at("hops").get<std::size_t>(),
                        meta.at("hidden").get<std::size_t>()};
    ckpt.params.lambda_n = meta.at("lambda_n").get<double>();
    ckpt.iteration = meta.at("iteration").get<std::size_t>();
    const auto& h = meta.at("hyperparams");
    ckpt.hyper.dims = ckpt.params.dims;
    ckpt.hyper.negatives = h.at("negatives").get<std::size_t>();
    ckpt.hyper.exact_partition = h.at("exact_partition").get<bool>();
    ckpt.hyper.learning_rate = h.at("learning_rate").get<double>();
    ckpt.hyper.source_samples = h.at("source_samples").get<std::size_t>();
    ckpt.hyper.batch_size = h.at("batch_size").get<std::size_t>();
    ckpt.hyper.iterations = h.at("iterations").get<std::size_t>();
    ckpt.hyper.seed = h.at("seed").get<std::uint64_t>();
    ckpt.hyper.mask = parse_mask_config(h.at("mask").get<std::string>());
    ckpt.hyper.source = parse_source_kind(h.at("source").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("checkpoint metadata: ") + e.what());
  }

  // Shapes come from the stored headers; init() only provides the layout.
  ModelParams layout = ModelParams::init(ckpt.params.dims, 0);
  layout.lambda_n = ckpt.params.lambda_n;
  ckpt.params = std::move(layout);
  auto tensors = ckpt.params.tensors();
  const auto names = ckpt.params.tensor_names();
  const auto count = get<std::uint32_t>(in, "tensor count");
  if (count != tensors.size())
    throw InputError("checkpoint holds " + std::to_string(count) + " tensors, expected " +
                     std::to_string(tensors.size()));
  for (std::size_t i = 0; i < count; ++i) {
    const std::string name = get_bytes(in, get<std::uint32_t>(in, "name length"), "tensor name");
    if (name != names[i])
      throw InputError("checkpoint tensor " + std::to_string(i) + " is \"" + name +
                       "\", expected \"" + names[i] + "\"");
    const auto rank = get<std::uint32_t>(in, "rank");
    Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(get<std::uint64_t>(in, "dims"));
    if (shape != tensors[i]->shape())
      throw InputError("checkpoint tensor \"" + name + "\" has shape " + shape_string(shape) +
                       ", expected " + shape_string(tensors[i]->shape()));
    auto data = tensors[i]->data();
    if (!in.read(reinterpret_cast<char*>(data.data()),
                 static_cast<std::streamsize>(data.size() * sizeof(double))))
      throw InputError("checkpoint truncated in tensor \"" + name + "\"");
  }
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint " + path);
  return read_checkpoint(in);
}

}  // namespace nevae
