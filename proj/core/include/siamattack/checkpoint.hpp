#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "siamattack/nn.hpp"
#include "siamattack/tensor.hpp"

namespace siam {

// Binary tensor archive: fixed magic, a JSON header describing the payload,
// then raw float32 data. Header keys are emitted sorted and floats are written
// verbatim, so identical state produces identical bytes; the determinism
// checks compare files by hash.
struct Checkpoint {
    std::string kind;                // "tracker", "generator", ...
    std::string config_json = "{}";  // architecture / training config echo
    std::vector<std::pair<std::string, Tensor>> tensors;

    const Tensor& get(const std::string& name) const;
    bool has(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

// Snapshot / restore of a module's parameter list by name. restore_params
// requires an exact match of names and shapes.
Checkpoint snapshot_params(const std::string& kind, const std::string& config_json,
                           const std::vector<nn::Param>& params);
void restore_params(const Checkpoint& ck, const std::vector<nn::Param>& params);

// FNV-1a over a file's bytes.
uint64_t hash_file(const std::string& path);

// FNV-1a over a tensor's raw float storage.
uint64_t hash_tensor(const Tensor& t);

}  // namespace siam
