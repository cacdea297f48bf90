#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "ltsmdiff/mat.hpp"

namespace ltsm {

/// Binary container of named tensors plus a JSON metadata section.
///
/// File layout (all integers little-endian):
///   magic "LTSA", u32 version
///   u64 tensor count
///   per tensor: u32 name length, name bytes (UTF-8), u8 dtype tag
///               (0 = float64), u8 rank, u64 dims[rank], payload
///               (row-major, raw 8-byte doubles)
///   u64 metadata length, metadata bytes (JSON, UTF-8)
///
/// Payload bytes are written and read verbatim, so save/load round trips
/// are bit-exact.
class TensorArchive {
public:
    void add(const std::string& name, const Mat& tensor);
    /// Replaces the tensor if the name already exists.
    void set(const std::string& name, const Mat& tensor);
    bool has(const std::string& name) const;
    const Mat& get(const std::string& name) const;
    std::vector<std::string> names() const;
    std::size_t tensor_count() const { return entries_.size(); }

    nlohmann::json& metadata() { return meta_; }
    const nlohmann::json& metadata() const { return meta_; }

    void save(const std::string& path) const;
    static TensorArchive load(const std::string& path);

private:
    std::vector<std::pair<std::string, Mat>> entries_;
    std::unordered_map<std::string, std::size_t> index_;
    nlohmann::json meta_ = nlohmann::json::object();
};

}  // namespace ltsm
