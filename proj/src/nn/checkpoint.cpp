#include "msfcn/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "msfcn/error.hpp"

namespace msfcn::nn {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

void write_u64(std::ostream& os, std::uint64_t v) {
  char buf[8];
  std::memcpy(buf, &v, 8);
  os.write(buf, 8);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, nlohmann::json header,
                     NetworkGraph<float>& graph) {
  auto params = graph.parameters();
  nlohmann::json table = nlohmann::json::array();
  for (const auto* p : params) {
    const Shape& s = p->value.shape();
    table.push_back({{"name", p->name}, {"shape", {s.n, s.c, s.h, s.w}}});
  }
  header["params"] = std::move(table);
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(Errc::io, "cannot write checkpoint " + path.string());
  os.write(kCheckpointMagic.data(), static_cast<std::streamsize>(kCheckpointMagic.size()));
  write_u64(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto* p : params) {
    os.write(reinterpret_cast<const char*>(p->value.data()),
             static_cast<std::streamsize>(p->value.size() * sizeof(float)));
  }
  if (!os) throw Error(Errc::io, "short write on checkpoint " + path.string());
}

CheckpointData load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::io, "cannot open checkpoint " + path.string());
  char magic[6];
  is.read(magic, 6);
  if (!is || std::string_view(magic, 6) != kCheckpointMagic) {
    throw Error(Errc::checkpoint_mismatch, "bad checkpoint magic in " + path.string());
  }
  std::uint64_t len = 0;
  is.read(reinterpret_cast<char*>(&len), 8);
  if (!is || len > (1ull << 30)) throw Error(Errc::decode, "bad checkpoint header length");
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  if (!is) throw Error(Errc::decode, "truncated checkpoint header");

  CheckpointData data;
  try {
    data.header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::decode, std::string("checkpoint header: ") + e.what());
  }
  for (const auto& entry : data.header.at("params")) {
    const auto shape = entry.at("shape").get<std::vector<int>>();
    if (shape.size() != 4) throw Error(Errc::decode, "checkpoint shape rank");
    Tensor t({shape[0], shape[1], shape[2], shape[3]});
    is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
    if (!is) throw Error(Errc::decode, "truncated checkpoint blob " + entry.at("name").get<std::string>());
    data.params.emplace(entry.at("name").get<std::string>(), std::move(t));
  }
  return data;
}

void apply_checkpoint(const CheckpointData& data, NetworkGraph<float>& graph) {
  for (auto* p : graph.parameters()) {
    const auto it = data.params.find(p->name);
    if (it == data.params.end()) throw Error(Errc::checkpoint_mismatch, "checkpoint lacks " + p->name);
    if (it->second.shape() != p->value.shape()) {
      throw Error(Errc::checkpoint_mismatch, "shape mismatch for " + p->name + ": " +
                                                 to_string(it->second.shape()) + " vs " +
                                                 to_string(p->value.shape()));
    }
    p->value = it->second;
  }
}

}  // namespace msfcn::nn
