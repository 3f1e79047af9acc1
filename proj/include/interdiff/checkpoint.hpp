#pragma once

#include <deque>
#include <string>
#include <vector>

#include "interdiff/autodiff.hpp"

namespace interdiff {

// Owns a model's named parameter tensors at stable addresses.
class ParamStore {
public:
    ad::Param& add(const std::string& name, MatX init);
    ad::Param& at(const std::string& name);
    const ad::Param& at(const std::string& name) const;
    bool has(const std::string& name) const;

    std::vector<ad::Param*> all();
    int total_size() const;
    void zero_grads();

    const std::deque<ad::Param>& tensors() const { return store_; }
    std::deque<ad::Param>& tensors() { return store_; }

private:
    std::deque<ad::Param> store_;
};

// Versioned binary blob: magic + JSON header + named tensors (native-endian
// doubles). The header carries a "kind" tag and an arbitrary JSON payload.
inline constexpr char kCheckpointMagic[8] = {'I', 'D', 'C', 'K', 'P', 'T', '0', '1'};

void save_checkpoint(const std::string& path, const std::string& kind,
                     const std::string& header_json, const ParamStore& params);

struct LoadedCheckpoint {
    std::string kind;
    std::string header_json;
    std::vector<std::pair<std::string, MatX>> tensors;
};

// Throws VersionError on a foreign magic/version, ParseError on truncation.
LoadedCheckpoint load_checkpoint(const std::string& path);

// Copies loaded tensors into an existing store; every name must match in
// both directions with identical shapes.
void restore_params(const LoadedCheckpoint& ckpt, ParamStore& params);

}  // namespace interdiff
