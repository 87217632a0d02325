#pragma once

#include <map>
#include <string>
#include <vector>

#include "ghyena/kv.hpp"
#include "ghyena/params.hpp"

namespace ghyena {

// Checkpoint = binary blob (magic "GHK1", u32 version, little-endian f64
// payload) plus a text manifest "<path>.manifest" listing config pairs and
// per-tensor (name, dtype, shape, byte offset into the payload).
void save_checkpoint(const std::string& path, const ParamStore& store, const KvMap& config);

struct LoadedCheckpoint {
  KvMap config;
  std::vector<std::pair<std::string, Tensor>> tensors;  // manifest order, f64
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace ghyena
