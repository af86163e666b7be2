#include "hydra/tensor/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "hydra/io.hpp"

namespace hydra::ad {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

template <class T>
void put(std::ostream& os, T value) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    os.write(buf, sizeof(T));
}

template <class T>
T get(std::istream& is) {
    char buf[sizeof(T)];
    if (!is.read(buf, sizeof(T))) throw FormatError("checkpoint: truncated input");
    T value;
    std::memcpy(&value, buf, sizeof(T));
    return value;
}

void expect_magic(std::istream& is, const char (&magic)[5]) {
    char buf[4];
    if (!is.read(buf, 4) || std::memcmp(buf, magic, 4) != 0) {
        throw FormatError(std::string("checkpoint: missing magic ") + magic);
    }
}

}  // namespace

void write_tensor(std::ostream& os, const Tensor& t) {
    os.write("HYDT", 4);
    put<std::uint32_t>(os, kTensorFormatVersion);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) put<std::uint64_t>(os, e);
    const auto d = t.data();
    os.write(reinterpret_cast<const char*>(d.data()), static_cast<std::streamsize>(d.size_bytes()));
}

Tensor read_tensor(std::istream& is) {
    expect_magic(is, "HYDT");
    const auto version = get<std::uint32_t>(is);
    if (version != kTensorFormatVersion) {
        throw FormatError("checkpoint: unsupported tensor version " + std::to_string(version));
    }
    const auto rank = get<std::uint32_t>(is);
    if (rank > 16) throw FormatError("checkpoint: implausible rank");
    Shape shape(rank);
    for (auto& e : shape) e = get<std::uint64_t>(is);
    std::vector<double> values(numel(shape));
    if (!is.read(reinterpret_cast<char*>(values.data()),
                 static_cast<std::streamsize>(values.size() * sizeof(double)))) {
        throw FormatError("checkpoint: truncated payload");
    }
    return Tensor::from(std::move(shape), std::move(values));
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
    std::ostringstream os;
    write_tensor(os, t);
    io::atomic_write(path, os.str());
}

Tensor load_tensor(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("checkpoint: cannot open " + path.string());
    return read_tensor(is);
}

void write_bundle(std::ostream& os, const TensorMap& tensors) {
    os.write("HYDB", 4);
    put<std::uint32_t>(os, kTensorFormatVersion);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_tensor(os, t);
    }
}

TensorMap read_bundle(std::istream& is) {
    expect_magic(is, "HYDB");
    if (get<std::uint32_t>(is) != kTensorFormatVersion) throw FormatError("checkpoint: bundle version");
    const auto count = get<std::uint32_t>(is);
    TensorMap out;
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto len = get<std::uint32_t>(is);
        if (len > 4096) throw FormatError("checkpoint: implausible name length");
        std::string name(len, '\0');
        if (!is.read(name.data(), len)) throw FormatError("checkpoint: truncated name");
        out.emplace(std::move(name), read_tensor(is));
    }
    return out;
}

void save_bundle(const std::filesystem::path& path, const TensorMap& tensors) {
    std::ostringstream os;
    write_bundle(os, tensors);
    io::atomic_write(path, os.str());
}

TensorMap load_bundle(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("checkpoint: cannot open " + path.string());
    return read_bundle(is);
}

}  // namespace hydra::ad
