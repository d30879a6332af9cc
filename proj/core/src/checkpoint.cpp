#include "rebarnet/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rebarnet/errors.hpp"

namespace rebarnet {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'R', 'B', 'S', 'C'};
constexpr std::uint32_t kVersion = 1;
// A parsed header larger than this is corruption, not a real network.
constexpr std::uint64_t kMaxHeaderBytes = 1ull << 30;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

json layer_to_json(const LayerSpec& l) {
  json j;
  j["kind"] = layer_kind_name(l.kind);
  j["name"] = l.name;
  switch (l.kind) {
    case LayerKind::Conv:
      j["out_channels"] = l.conv.out_channels;
      j["kernel_h"] = l.conv.kernel_h;
      j["kernel_w"] = l.conv.kernel_w;
      j["stride"] = l.conv.stride;
      j["padding"] = l.conv.padding;
      break;
    case LayerKind::MaxPool:
    case LayerKind::AvgPool:
      j["pool_h"] = l.pool_h;
      j["pool_w"] = l.pool_w;
      j["pool_stride"] = l.pool_stride;
      break;
    case LayerKind::Lrn:
      j["depth"] = l.lrn.depth;
      j["k"] = l.lrn.k;
      j["alpha"] = l.lrn.alpha;
      j["beta"] = l.lrn.beta;
      break;
    case LayerKind::BatchNorm:
      j["eps"] = l.bn_eps;
      j["momentum"] = l.bn_momentum;
      break;
    case LayerKind::Dropout:
      j["rate"] = l.dropout_rate;
      break;
    case LayerKind::Dense:
      j["out"] = l.dense_out;
      break;
    default:
      break;
  }
  return j;
}

LayerSpec layer_from_json(const json& j) {
  LayerSpec l;
  l.kind = layer_kind_from_name(j.at("kind").get<std::string>());
  l.name = j.at("name").get<std::string>();
  switch (l.kind) {
    case LayerKind::Conv:
      l.conv.out_channels = j.at("out_channels").get<int>();
      l.conv.kernel_h = j.at("kernel_h").get<int>();
      l.conv.kernel_w = j.at("kernel_w").get<int>();
      l.conv.stride = j.at("stride").get<int>();
      l.conv.padding = j.at("padding").get<int>();
      break;
    case LayerKind::MaxPool:
    case LayerKind::AvgPool:
      l.pool_h = j.at("pool_h").get<int>();
      l.pool_w = j.at("pool_w").get<int>();
      l.pool_stride = j.at("pool_stride").get<int>();
      break;
    case LayerKind::Lrn:
      l.lrn.depth = j.at("depth").get<int>();
      l.lrn.k = j.at("k").get<double>();
      l.lrn.alpha = j.at("alpha").get<double>();
      l.lrn.beta = j.at("beta").get<double>();
      break;
    case LayerKind::BatchNorm:
      l.bn_eps = j.at("eps").get<double>();
      l.bn_momentum = j.at("momentum").get<double>();
      break;
    case LayerKind::Dropout:
      l.dropout_rate = j.at("rate").get<double>();
      break;
    case LayerKind::Dense:
      l.dense_out = j.at("out").get<int>();
      break;
    default:
      break;
  }
  return l;
}

json spec_to_json(const NetworkSpec& spec) {
  json j;
  j["name"] = spec.name;
  j["in_channels"] = spec.in_channels;
  j["in_h"] = spec.in_h;
  j["in_w"] = spec.in_w;
  j["num_classes"] = spec.num_classes;
  json layers = json::array();
  for (const LayerSpec& l : spec.layers) layers.push_back(layer_to_json(l));
  j["layers"] = std::move(layers);
  return j;
}

NetworkSpec spec_from_json(const json& j) {
  NetworkSpec spec;
  spec.name = j.at("name").get<std::string>();
  spec.in_channels = j.at("in_channels").get<int>();
  spec.in_h = j.at("in_h").get<int>();
  spec.in_w = j.at("in_w").get<int>();
  spec.num_classes = j.at("num_classes").get<int>();
  for (const json& lj : j.at("layers")) {
    spec.layers.push_back(layer_from_json(lj));
  }
  return spec;
}

}  // namespace

void save_checkpoint(const Network& net, const std::string& path) {
  // Enumeration never mutates; tensor_refs is non-const only because the
  // loader writes through the same refs.
  std::vector<TensorRef> refs = tensor_refs(const_cast<Network&>(net));

  json manifest = json::array();
  std::uint64_t offset = 0;
  for (const TensorRef& ref : refs) {
    json entry;
    entry["name"] = ref.name;
    entry["role"] = ref.trainable ? "param" : "buffer";
    entry["shape"] = ref.tensor->shape();
    entry["offset"] = offset;
    manifest.push_back(std::move(entry));
    offset += ref.tensor->size() * sizeof(double);
  }

  json header;
  header["dtype"] = "f64";
  header["spec"] = spec_to_json(net.spec);
  header["tensors"] = std::move(manifest);
  const std::string header_bytes = header.dump();

  std::string prefix;
  prefix.append(kMagic, 4);
  put_u32(prefix, kVersion);
  put_u64(prefix, header_bytes.size());

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  out.write(prefix.data(), static_cast<std::streamsize>(prefix.size()));
  out.write(header_bytes.data(),
            static_cast<std::streamsize>(header_bytes.size()));
  for (const TensorRef& ref : refs) {
    out.write(reinterpret_cast<const char*>(ref.tensor->data()),
              static_cast<std::streamsize>(ref.tensor->size() * sizeof(double)));
  }
  out.flush();
  if (!out) throw IoError("write failed for checkpoint: " + path);
}

Network load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);

  unsigned char fixed[16];
  in.read(reinterpret_cast<char*>(fixed), sizeof(fixed));
  if (in.gcount() != sizeof(fixed)) {
    throw FormatError("truncated checkpoint (shorter than the fixed header): " +
                      path);
  }
  if (std::memcmp(fixed, kMagic, 4) != 0) {
    throw FormatError(
        "bad magic bytes — not an RBSC checkpoint (or a corrupt/unsupported "
        "version): " + path);
  }
  const std::uint32_t version = get_u32(fixed + 4);
  if (version != kVersion) {
    throw FormatError("unsupported checkpoint version " +
                      std::to_string(version) + "; this build reads version " +
                      std::to_string(kVersion));
  }
  const std::uint64_t header_len = get_u64(fixed + 8);
  if (header_len == 0 || header_len > kMaxHeaderBytes) {
    throw FormatError("implausible header length " +
                      std::to_string(header_len) + " in checkpoint: " + path);
  }

  std::string header_bytes(header_len, '\0');
  in.read(header_bytes.data(), static_cast<std::streamsize>(header_len));
  if (static_cast<std::uint64_t>(in.gcount()) != header_len) {
    throw FormatError("truncated checkpoint (incomplete JSON header): " + path);
  }

  json header;
  NetworkSpec spec;
  try {
    header = json::parse(header_bytes);
    if (header.at("dtype").get<std::string>() != "f64") {
      throw FormatError("unsupported dtype '" +
                        header.at("dtype").get<std::string>() +
                        "' (expected f64)");
    }
    spec = spec_from_json(header.at("spec"));
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed checkpoint header: ") + e.what());
  }

  Network net = allocate_params(spec);  // validates the spec composes
  std::vector<TensorRef> refs = tensor_refs(net);

  const json& manifest = header.at("tensors");
  if (manifest.size() != refs.size()) {
    throw FormatError("checkpoint manifest lists " +
                      std::to_string(manifest.size()) + " tensors; the spec "
                      "implies " + std::to_string(refs.size()));
  }
  std::uint64_t expected_offset = 0;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const json& entry = manifest[i];
    std::string name, role;
    std::vector<int> shape;
    std::uint64_t offset = 0;
    try {
      name = entry.at("name").get<std::string>();
      role = entry.at("role").get<std::string>();
      shape = entry.at("shape").get<std::vector<int>>();
      offset = entry.at("offset").get<std::uint64_t>();
    } catch (const json::exception& e) {
      throw FormatError(std::string("malformed manifest entry: ") + e.what());
    }
    if (name != refs[i].name) {
      throw FormatError("manifest entry " + std::to_string(i) + " is '" +
                        name + "', the spec implies '" + refs[i].name + "'");
    }
    if (shape != refs[i].tensor->shape()) {
      throw ShapeError("checkpoint tensor '" + name + "' has shape " +
                       Tensor::shape_str(shape) +
                       " but the spec derives " + refs[i].tensor->shape_str());
    }
    if (role != (refs[i].trainable ? "param" : "buffer")) {
      throw FormatError("checkpoint tensor '" + name + "' has role '" + role +
                        "', expected '" +
                        (refs[i].trainable ? "param" : "buffer") + "'");
    }
    if (offset != expected_offset) {
      throw FormatError("checkpoint tensor '" + name + "' at offset " +
                        std::to_string(offset) + ", expected " +
                        std::to_string(expected_offset));
    }
    expected_offset += refs[i].tensor->size() * sizeof(double);
  }

  for (TensorRef& ref : refs) {
    const std::streamsize bytes =
        static_cast<std::streamsize>(ref.tensor->size() * sizeof(double));
    in.read(reinterpret_cast<char*>(ref.tensor->data()), bytes);
    if (in.gcount() != bytes) {
      throw FormatError("truncated checkpoint payload at tensor '" + ref.name +
                        "': " + path);
    }
  }
  in.peek();
  if (!in.eof()) {
    throw FormatError("checkpoint has trailing bytes after the last tensor: " +
                      path);
  }
  return net;
}

}  // namespace rebarnet
