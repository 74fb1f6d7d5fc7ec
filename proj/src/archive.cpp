#include "dsgd/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "dsgd/error.hpp"

namespace dsgd {

namespace {

constexpr char kMagic[8] = {'D', 'S', 'G', 'D', 'A', 'R', 'C', '1'};
static_assert(std::endian::native == std::endian::little, "archive I/O assumes little-endian");

}  // namespace

const Tensor* Archive::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

void write_archive(const std::filesystem::path& path, const Archive& a) {
  nlohmann::ordered_json header;
  header["meta"] = a.meta;
  header["tensors"] = nlohmann::ordered_json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : a.tensors) {
    header["tensors"].push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += t.size() * sizeof(float);
  }
  const std::string text = header.dump();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write " + tmp.string());
    const std::uint64_t len = text.size();
    out.write(kMagic, sizeof kMagic);
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : a.tensors)
      out.write(reinterpret_cast<const char*>(t.data()),
                static_cast<std::streamsize>(t.size() * sizeof(float)));
    if (!out) throw Error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Archive read_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  char magic[8];
  std::uint64_t len = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw Error(path.string() + ": not a dsgd archive");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw Error(path.string() + ": truncated header");
  Archive a;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + ": bad header: " + e.what());
  }
  a.meta = header.value("meta", nlohmann::json::object());
  const auto data_start = in.tellg();
  for (const auto& e : header.at("tensors")) {
    Tensor t(e.at("shape").get<std::vector<int>>());
    in.seekg(data_start + static_cast<std::streamoff>(e.at("offset").get<std::uint64_t>()));
    in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
    if (!in) throw Error(path.string() + ": truncated tensor " + e.at("name").get<std::string>());
    a.tensors.emplace_back(e.at("name").get<std::string>(), std::move(t));
  }
  return a;
}

}  // namespace dsgd
