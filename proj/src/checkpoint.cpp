#include "sf/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <limits>

#include "sf/errors.hpp"

namespace sf {

namespace {

template <typename T>
void write_le(std::ostream& os, T v) {
    // Host is little-endian on every supported target; serialize raw.
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& is, const std::string& what) {
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(T)))
        fail("diffcore", "checkpoint: truncated file while reading " + what);
    return v;
}

}  // namespace

void save_named_arrays(const std::string& path, const NamedArrays& arrays, const char magic[5]) {
    std::ofstream os(path, std::ios::binary);
    if (!os) fail("diffcore", "checkpoint: cannot open " + path + " for writing");
    os.write(magic, 4);
    write_le<std::uint32_t>(os, kCheckpointVersion);
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(arrays.size()));
    for (const auto& [name, arr] : arrays) {
        if (name.size() > std::numeric_limits<std::uint16_t>::max())
            fail("diffcore", "checkpoint: array name too long: " + name);
        write_le<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_le<std::uint8_t>(os, static_cast<std::uint8_t>(arr.rank()));
        for (std::size_t e : arr.shape()) write_le<std::uint64_t>(os, e);
        os.write(reinterpret_cast<const char*>(arr.data()),
                 static_cast<std::streamsize>(arr.size() * sizeof(double)));
    }
    if (!os) fail("diffcore", "checkpoint: write failed for " + path);
}

NamedArrays load_named_arrays(const std::string& path, const char magic[5]) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail("diffcore", "checkpoint: cannot open " + path);
    char m[4];
    if (!is.read(m, 4)) fail("diffcore", "checkpoint: truncated header in " + path);
    if (std::memcmp(m, magic, 4) != 0)
        fail("diffcore", "checkpoint: bad magic in " + path + " (want " +
                             std::string(magic, 4) + ")");
    const auto version = read_le<std::uint32_t>(is, "version");
    if (version != kCheckpointVersion)
        fail("diffcore", "checkpoint: unsupported version " + std::to_string(version));
    const auto count = read_le<std::uint32_t>(is, "count");
    NamedArrays out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = read_le<std::uint16_t>(is, "name length");
        std::string name(name_len, '\0');
        if (!is.read(name.data(), name_len)) fail("diffcore", "checkpoint: truncated name");
        const auto rank = read_le<std::uint8_t>(is, "rank");
        Shape shape(rank);
        std::size_t numel = 1;
        for (std::uint8_t r = 0; r < rank; ++r) {
            shape[r] = read_le<std::uint64_t>(is, "extent");
            numel *= shape[r];
        }
        std::vector<double> data(numel);
        if (!is.read(reinterpret_cast<char*>(data.data()),
                     static_cast<std::streamsize>(numel * sizeof(double))))
            fail("diffcore", "checkpoint: truncated data for array " + name);
        out.emplace_back(std::move(name), Array(std::move(shape), std::move(data)));
    }
    return out;
}

std::uint64_t hash_arrays(const NamedArrays& arrays) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& [name, arr] : arrays) {
        mix(name.data(), name.size());
        mix(arr.data(), arr.size() * sizeof(double));
    }
    return h;
}

}  // namespace sf
