#include "ltsmdiff/archive.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace ltsm {

namespace {

constexpr char kMagic[4] = {'L', 'T', 'S', 'A'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kDtypeF64 = 0;

template <typename T>
void write_le(std::ostream& os, T v) {
    // Host is little-endian on every supported target; write raw.
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("archive: truncated file");
    return v;
}

}  // namespace

void TensorArchive::add(const std::string& name, const Mat& tensor) {
    if (has(name)) throw std::invalid_argument("archive: duplicate tensor name '" + name + "'");
    index_[name] = entries_.size();
    entries_.emplace_back(name, tensor);
}

void TensorArchive::set(const std::string& name, const Mat& tensor) {
    auto it = index_.find(name);
    if (it == index_.end())
        add(name, tensor);
    else
        entries_[it->second].second = tensor;
}

bool TensorArchive::has(const std::string& name) const { return index_.count(name) > 0; }

const Mat& TensorArchive::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("archive: no tensor named '" + name + "'");
    return entries_[it->second].second;
}

std::vector<std::string> TensorArchive::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [n, _] : entries_) out.push_back(n);
    return out;
}

void TensorArchive::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("archive: cannot open for writing: " + path);
    os.write(kMagic, 4);
    write_le<std::uint32_t>(os, kVersion);
    write_le<std::uint64_t>(os, entries_.size());
    for (const auto& [name, mat] : entries_) {
        write_le<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_le<std::uint8_t>(os, kDtypeF64);
        write_le<std::uint8_t>(os, 2);
        write_le<std::uint64_t>(os, static_cast<std::uint64_t>(mat.rows()));
        write_le<std::uint64_t>(os, static_cast<std::uint64_t>(mat.cols()));
        os.write(reinterpret_cast<const char*>(mat.data()),
                 static_cast<std::streamsize>(mat.size() * sizeof(double)));
    }
    const std::string meta = meta_.dump();
    write_le<std::uint64_t>(os, meta.size());
    os.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    if (!os) throw std::runtime_error("archive: write failed: " + path);
}

TensorArchive TensorArchive::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("archive: cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("archive: bad magic in " + path);
    const auto version = read_le<std::uint32_t>(is);
    if (version != kVersion)
        throw std::runtime_error("archive: unsupported version " + std::to_string(version));
    TensorArchive out;
    const auto count = read_le<std::uint64_t>(is);
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto name_len = read_le<std::uint32_t>(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        const auto dtype = read_le<std::uint8_t>(is);
        if (dtype != kDtypeF64)
            throw std::runtime_error("archive: unsupported dtype tag for '" + name + "'");
        const auto rank = read_le<std::uint8_t>(is);
        std::uint64_t rows = 1, cols = 1;
        if (rank == 1) {
            cols = read_le<std::uint64_t>(is);
        } else if (rank == 2) {
            rows = read_le<std::uint64_t>(is);
            cols = read_le<std::uint64_t>(is);
        } else {
            throw std::runtime_error("archive: unsupported rank for '" + name + "'");
        }
        Mat m(static_cast<int>(rows), static_cast<int>(cols));
        is.read(reinterpret_cast<char*>(m.data()),
                static_cast<std::streamsize>(m.size() * sizeof(double)));
        if (!is) throw std::runtime_error("archive: truncated payload for '" + name + "'");
        out.add(name, m);
    }
    const auto meta_len = read_le<std::uint64_t>(is);
    std::string meta(meta_len, '\0');
    is.read(meta.data(), static_cast<std::streamsize>(meta_len));
    if (!is) throw std::runtime_error("archive: truncated metadata");
    out.meta_ = nlohmann::json::parse(meta);
    return out;
}

}  // namespace ltsm
