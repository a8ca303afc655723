#include "mffa/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace mffa {

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");
static_assert(sizeof(real) == 8, "checkpoint format stores 8-byte IEEE-754 values");

namespace {

constexpr char kMagic[4] = {'M', 'F', 'F', 'A'};
constexpr uint32_t kVersion = 1;

template <typename T>
void write_raw(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& in, const std::string& path) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw ValidationError(path + ": truncated checkpoint");
    return v;
}

}  // namespace

void save_tensors(const std::string& path, const std::vector<NamedTensor>& tensors) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RuntimeFailure(path + ": cannot write checkpoint");
    out.write(kMagic, 4);
    write_raw(out, kVersion);
    write_raw(out, static_cast<uint32_t>(tensors.size()));
    for (const NamedTensor& nt : tensors) {
        write_raw(out, static_cast<uint32_t>(nt.name.size()));
        out.write(nt.name.data(), static_cast<std::streamsize>(nt.name.size()));
        write_raw(out, static_cast<uint32_t>(nt.value.rank()));
        for (int i = 0; i < nt.value.rank(); ++i) {
            write_raw(out, static_cast<uint64_t>(nt.value.dim(i)));
        }
        out.write(reinterpret_cast<const char*>(nt.value.data()),
                  static_cast<std::streamsize>(nt.value.size() * sizeof(real)));
    }
    if (!out) throw RuntimeFailure(path + ": checkpoint write failed");
}

std::vector<NamedTensor> load_tensors(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError(path + ": cannot open checkpoint");
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) {
        throw ValidationError(path + ": not an MFFA checkpoint");
    }
    uint32_t version = read_raw<uint32_t>(in, path);
    if (version != kVersion) {
        throw ValidationError(path + ": unsupported checkpoint version " + std::to_string(version));
    }
    uint32_t count = read_raw<uint32_t>(in, path);
    std::vector<NamedTensor> tensors;
    tensors.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        uint32_t name_len = read_raw<uint32_t>(in, path);
        if (name_len > 4096) throw ValidationError(path + ": implausible tensor name length");
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        uint32_t rank = read_raw<uint32_t>(in, path);
        if (rank > 8) throw ValidationError(path + ": implausible tensor rank");
        Shape shape;
        int64_t numel = 1;
        for (uint32_t r = 0; r < rank; ++r) {
            uint64_t d = read_raw<uint64_t>(in, path);
            if (d > (1ull << 32)) throw ValidationError(path + ": implausible extent");
            shape.push_back(static_cast<int>(d));
            numel *= static_cast<int64_t>(d);
        }
        std::vector<real> values(static_cast<size_t>(numel));
        in.read(reinterpret_cast<char*>(values.data()),
                static_cast<std::streamsize>(values.size() * sizeof(real)));
        if (!in) throw ValidationError(path + ": truncated tensor data");
        tensors.push_back({std::move(name), Tensor::from(shape, std::move(values))});
    }
    return tensors;
}

Tensor string_to_tensor(const std::string& s) {
    Tensor t = Tensor::zeros({static_cast<int>(s.size())});
    for (size_t i = 0; i < s.size(); ++i) {
        t.data()[i] = static_cast<real>(static_cast<unsigned char>(s[i]));
    }
    return t;
}

std::string tensor_to_string(const Tensor& t) {
    std::string s;
    s.reserve(static_cast<size_t>(t.size()));
    for (int64_t i = 0; i < t.size(); ++i) {
        s.push_back(static_cast<char>(static_cast<unsigned char>(t.data()[i])));
    }
    return s;
}

}  // namespace mffa
