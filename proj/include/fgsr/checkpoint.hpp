#pragma once

#include <map>
#include <string>

#include <json.hpp>

#include "fgsr/tensor.hpp"

namespace fgsr {

// Single-file archive: magic, JSON manifest (metadata + tensor index), raw
// little-endian doubles, trailing FNV-1a checksum over the payload. Writes go
// to a temp file renamed into place, so a crash never leaves a partial
// archive under the target name.
class ArchiveWriter {
public:
    nlohmann::json& meta() { return meta_; }
    void add_tensor(const std::string& name, const Tensor& t);
    void save(const std::string& path) const;

private:
    nlohmann::json meta_ = nlohmann::json::object();
    std::vector<std::pair<std::string, Tensor>> tensors_;
};

class Archive {
public:
    static Archive load(const std::string& path);

    const nlohmann::json& meta() const { return meta_; }
    bool has(const std::string& name) const { return tensors_.count(name) > 0; }
    const Tensor& tensor(const std::string& name) const;
    const std::map<std::string, Tensor>& tensors() const { return tensors_; }

private:
    nlohmann::json meta_;
    std::map<std::string, Tensor> tensors_;
};

}  // namespace fgsr
