#include "mambaest/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mambaest {

namespace {

constexpr char kMagic[8] = {'M', 'B', 'N', 'C', 'K', 'P', 'T', '1'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <class T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw std::runtime_error("checkpoint: truncated file");
    return v;
}

std::string get_string(std::istream& is, std::size_t n) {
    std::string s(n, '\0');
    if (n && !is.read(s.data(), static_cast<std::streamsize>(n))) throw std::runtime_error("checkpoint: truncated file");
    return s;
}

}  // namespace

std::map<std::string, std::string> parse_header_text(const std::string& text) {
    std::map<std::string, std::string> out;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        out[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return out;
}

std::string format_header_text(const std::map<std::string, std::string>& header) {
    std::string out;
    for (const auto& [k, v] : header) out += k + "=" + v + "\n";
    return out;
}

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params,
                     const std::map<std::string, std::string>& header) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("checkpoint: cannot write " + path.string());
    os.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(os, kCheckpointFormatVersion);
    const std::string text = format_header_text(header);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(text.size()));
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params.items()) {
        put<std::uint32_t>(os, static_cast<std::uint32_t>(p.name.size()));
        os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        put<std::uint32_t>(os, static_cast<std::uint32_t>(p.tensor.rank()));
        for (auto e : p.tensor.shape()) put<std::uint64_t>(os, e);
        const auto data = p.tensor.data();
        os.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size_bytes()));
    }
    if (!os) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path.string());
    char magic[sizeof(kMagic)];
    if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw std::runtime_error("checkpoint: bad magic in " + path.string());
    }
    const auto version = get<std::uint32_t>(is);
    if (version != kCheckpointFormatVersion) {
        throw std::runtime_error("checkpoint: unsupported format version " + std::to_string(version));
    }
    Checkpoint ck;
    ck.header = parse_header_text(get_string(is, get<std::uint32_t>(is)));
    const auto count = get<std::uint32_t>(is);
    for (std::uint32_t r = 0; r < count; ++r) {
        std::string name = get_string(is, get<std::uint32_t>(is));
        const auto rank = get<std::uint32_t>(is);
        Shape shape(rank);
        for (auto& e : shape) e = static_cast<std::size_t>(get<std::uint64_t>(is));
        std::vector<double> values(shape_numel(shape));
        if (!is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)))) {
            throw std::runtime_error("checkpoint: truncated values for '" + name + "'");
        }
        ck.params.add(std::move(name), Tensor::from(std::move(shape), std::move(values)));
    }
    return ck;
}

}  // namespace mambaest
