#include "leafseg/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace leafseg {

namespace {

constexpr char kMagic[4] = {'V', 'R', 'D', 'T'};
constexpr uint32_t kVersion = 1;

// This code targets little-endian hosts; the raw-byte writes below are the
// on-disk format on such machines.
template <typename T>
void write_pod(std::ofstream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& is, const std::string& path) {
    T v;
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("checkpoint: truncated file " + path);
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const NamedTensors& tensors) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    os.write(kMagic, 4);
    write_pod(os, kVersion);
    for (const auto& [name, t] : tensors) {
        write_pod(os, static_cast<uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod(os, static_cast<uint32_t>(t.rank()));
        for (int i = 0; i < t.rank(); ++i) write_pod(os, static_cast<uint64_t>(t.dim(i)));
        os.write(reinterpret_cast<const char*>(t.data()),
                 static_cast<std::streamsize>(t.size() * sizeof(float)));
    }
    if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

NamedTensors load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    uint32_t version = read_pod<uint32_t>(is, path);
    if (version != kVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version) +
                                 " in " + path);
    NamedTensors out;
    while (true) {
        uint32_t name_len;
        is.read(reinterpret_cast<char*>(&name_len), sizeof(name_len));
        if (is.eof()) break;
        if (!is) throw std::runtime_error("checkpoint: truncated file " + path);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        if (!is) throw std::runtime_error("checkpoint: truncated file " + path);
        uint32_t rank = read_pod<uint32_t>(is, path);
        ad::Shape shape;
        size_t n = 1;
        for (uint32_t i = 0; i < rank; ++i) {
            uint64_t d = read_pod<uint64_t>(is, path);
            shape.push_back(static_cast<int>(d));
            n *= static_cast<size_t>(d);
        }
        std::vector<float> data(n);
        is.read(reinterpret_cast<char*>(data.data()),
                static_cast<std::streamsize>(n * sizeof(float)));
        if (!is) throw std::runtime_error("checkpoint: truncated file " + path);
        out.emplace_back(std::move(name), ad::Tensor(std::move(shape), std::move(data)));
    }
    return out;
}

}  // namespace leafseg
