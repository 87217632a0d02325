#include "ghyena/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace ghyena {

namespace {

constexpr char kMagic[4] = {'G', 'H', 'K', '1'};
constexpr uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& store, const KvMap& config) {
  std::ofstream blob(path, std::ios::binary | std::ios::trunc);
  if (!blob) fail_io("cannot write checkpoint: " + path);
  blob.write(kMagic, 4);
  uint32_t version = kVersion;
  blob.write(reinterpret_cast<const char*>(&version), 4);

  std::ostringstream manifest;
  manifest << "# ghk manifest v1\n";
  for (const auto& [k, v] : config) manifest << "config " << k << '=' << v << '\n';

  uint64_t offset = 0;
  for (const auto& e : store.entries()) {
    manifest << "tensor " << e.name << ' ' << dtype_name(e.value->dtype()) << ' ';
    const auto& shape = e.value->shape();
    if (shape.empty()) {
      manifest << "scalar";
    } else {
      for (size_t i = 0; i < shape.size(); ++i) {
        if (i) manifest << 'x';
        manifest << shape[i];
      }
    }
    manifest << ' ' << offset << '\n';
    for (int64_t i = 0; i < e.value->numel(); ++i) {
      double v = e.value->at(i);
      blob.write(reinterpret_cast<const char*>(&v), 8);
    }
    offset += static_cast<uint64_t>(e.value->numel()) * 8;
  }
  if (!blob) fail_io("checkpoint write failed: " + path);
  blob.close();
  write_text_file(path + ".manifest", manifest.str());
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream blob(path, std::ios::binary);
  if (!blob) fail_io("cannot open checkpoint: " + path);
  char magic[4];
  blob.read(magic, 4);
  if (!blob || std::memcmp(magic, kMagic, 4) != 0) fail_io("checkpoint: bad magic in " + path);
  uint32_t version = 0;
  blob.read(reinterpret_cast<char*>(&version), 4);
  if (!blob || version != kVersion) fail_io("checkpoint: unsupported version");

  LoadedCheckpoint out;
  std::istringstream manifest(read_text_file(path + ".manifest"));
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "config") {
      std::string rest;
      std::getline(ls, rest);
      size_t b = rest.find_first_not_of(' ');
      if (b == std::string::npos) fail_io("checkpoint: malformed config line");
      rest = rest.substr(b);
      size_t eq = rest.find('=');
      if (eq == std::string::npos) fail_io("checkpoint: malformed config line");
      out.config[rest.substr(0, eq)] = rest.substr(eq + 1);
    } else if (kind == "tensor") {
      std::string name, dtype, shape_s;
      uint64_t offset = 0;
      ls >> name >> dtype >> shape_s >> offset;
      if (!ls) fail_io("checkpoint: malformed tensor line: " + line);
      std::vector<int64_t> shape;
      if (shape_s != "scalar") {
        int64_t cur = 0;
        bool has = false;
        for (char c : shape_s) {
          if (c == 'x') {
            shape.push_back(cur);
            cur = 0;
            has = false;
          } else if (c >= '0' && c <= '9') {
            cur = cur * 10 + (c - '0');
            has = true;
          } else {
            fail_io("checkpoint: bad shape '" + shape_s + "'");
          }
        }
        if (has || shape_s.back() == 'x') shape.push_back(cur);
      }
      Tensor t(shape, Dtype::F64);
      blob.seekg(static_cast<std::streamoff>(8 + offset));
      for (int64_t i = 0; i < t.numel(); ++i) {
        double v = 0;
        blob.read(reinterpret_cast<char*>(&v), 8);
        t.set(i, v);
      }
      if (!blob) fail_io("checkpoint: truncated payload for tensor " + name);
      out.tensors.emplace_back(name, std::move(t));
    } else {
      fail_io("checkpoint: unknown manifest entry '" + kind + "'");
    }
  }
  return out;
}

}  // namespace ghyena
