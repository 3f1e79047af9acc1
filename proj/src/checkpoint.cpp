#include "interdiff/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace interdiff {

ad::Param& ParamStore::add(const std::string& name, MatX init) {
    if (has(name)) throw ConfigError("duplicate parameter name: " + name);
    store_.emplace_back(name, std::move(init));
    return store_.back();
}

ad::Param& ParamStore::at(const std::string& name) {
    for (auto& p : store_) {
        if (p.name == name) return p;
    }
    throw ConfigError("unknown parameter: " + name);
}

const ad::Param& ParamStore::at(const std::string& name) const {
    for (const auto& p : store_) {
        if (p.name == name) return p;
    }
    throw ConfigError("unknown parameter: " + name);
}

bool ParamStore::has(const std::string& name) const {
    for (const auto& p : store_) {
        if (p.name == name) return true;
    }
    return false;
}

std::vector<ad::Param*> ParamStore::all() {
    std::vector<ad::Param*> out;
    out.reserve(store_.size());
    for (auto& p : store_) out.push_back(&p);
    return out;
}

int ParamStore::total_size() const {
    int n = 0;
    for (const auto& p : store_) n += p.size();
    return n;
}

void ParamStore::zero_grads() {
    for (auto& p : store_) p.zero_grad();
}

namespace {

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::ifstream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw ParseError("checkpoint truncated");
}

void write_string(std::ofstream& out, const std::string& s) {
    write_pod(out, static_cast<std::uint64_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::ifstream& in) {
    std::uint64_t n = 0;
    read_pod(in, n);
    if (n > (1ull << 32)) throw ParseError("checkpoint string length is implausible");
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    if (!in) throw ParseError("checkpoint truncated inside a string");
    return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::string& kind,
                     const std::string& header_json, const ParamStore& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open checkpoint for writing: " + path);
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    write_string(out, kind);
    write_string(out, header_json);
    write_pod(out, static_cast<std::uint64_t>(params.tensors().size()));
    for (const auto& p : params.tensors()) {
        write_string(out, p.name);
        write_pod(out, static_cast<std::uint64_t>(p.value.rows()));
        write_pod(out, static_cast<std::uint64_t>(p.value.cols()));
        out.write(reinterpret_cast<const char*>(p.value.data()),
                  static_cast<std::streamsize>(sizeof(double) * p.value.size()));
    }
    if (!out) throw ParseError("checkpoint write failed: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open checkpoint: " + path);
    char magic[sizeof(kCheckpointMagic)];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
        throw VersionError("not an interdiff checkpoint (bad magic): " + path);
    }
    LoadedCheckpoint ckpt;
    ckpt.kind = read_string(in);
    ckpt.header_json = read_string(in);
    std::uint64_t count = 0;
    read_pod(in, count);
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::string name = read_string(in);
        std::uint64_t rows = 0, cols = 0;
        read_pod(in, rows);
        read_pod(in, cols);
        MatX m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        in.read(reinterpret_cast<char*>(m.data()),
                static_cast<std::streamsize>(sizeof(double) * m.size()));
        if (!in) throw ParseError("checkpoint truncated inside tensor " + name);
        ckpt.tensors.emplace_back(name, std::move(m));
    }
    return ckpt;
}

void restore_params(const LoadedCheckpoint& ckpt, ParamStore& params) {
    if (ckpt.tensors.size() != params.tensors().size()) {
        throw VersionError("checkpoint tensor count mismatch: file has " +
                           std::to_string(ckpt.tensors.size()) + ", model has " +
                           std::to_string(params.tensors().size()));
    }
    for (const auto& [name, value] : ckpt.tensors) {
        ad::Param& p = params.at(name);
        if (p.value.rows() != value.rows() || p.value.cols() != value.cols()) {
            throw VersionError("checkpoint tensor shape mismatch for " + name);
        }
        p.value = value;
        p.adam_m.setZero();
        p.adam_v.setZero();
        p.grad.setZero();
    }
}

}  // namespace interdiff
