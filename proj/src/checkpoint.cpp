#include "fgsr/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "fgsr/losses.hpp"

namespace fgsr {

namespace {

constexpr char kMagic[] = "FGSRARC1";
constexpr std::size_t kMagicLen = 8;

std::uint64_t fnv1a(const char* data, std::size_t len, std::uint64_t h = 1469598103934665603ull) {
    for (std::size_t i = 0; i < len; ++i) {
        h ^= static_cast<unsigned char>(data[i]);
        h *= 1099511628211ull;
    }
    return h;
}

void write_u64(std::ostream& os, std::uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint64_t read_u64(std::istream& is) {
    std::uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!is) throw std::runtime_error("archive: truncated file");
    return v;
}

}  // namespace

void ArchiveWriter::add_tensor(const std::string& name, const Tensor& t) {
    tensors_.emplace_back(name, t);
}

void ArchiveWriter::save(const std::string& path) const {
    nlohmann::json manifest;
    manifest["meta"] = meta_;
    nlohmann::json index = nlohmann::json::array();
    for (const auto& [name, t] : tensors_)
        index.push_back({{"name", name}, {"shape", t.shape()}});
    manifest["tensors"] = index;
    const std::string mstr = manifest.dump();

    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("archive: cannot write " + tmp);
        os.write(kMagic, kMagicLen);
        write_u64(os, mstr.size());
        os.write(mstr.data(), static_cast<std::streamsize>(mstr.size()));
        std::uint64_t checksum = fnv1a(mstr.data(), mstr.size());
        for (const auto& [name, t] : tensors_) {
            const char* bytes = reinterpret_cast<const char*>(t.data());
            const std::size_t len = static_cast<std::size_t>(t.numel()) * sizeof(double);
            os.write(bytes, static_cast<std::streamsize>(len));
            checksum = fnv1a(bytes, len, checksum);
        }
        write_u64(os, checksum);
        if (!os) throw std::runtime_error("archive: write failed for " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

Archive Archive::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("archive: cannot open " + path);
    char magic[kMagicLen];
    is.read(magic, kMagicLen);
    if (!is || std::memcmp(magic, kMagic, kMagicLen) != 0)
        throw std::runtime_error("archive: bad magic in " + path);
    const std::uint64_t mlen = read_u64(is);
    if (mlen > (1ull << 30)) throw std::runtime_error("archive: implausible manifest size");
    std::string mstr(mlen, '\0');
    is.read(mstr.data(), static_cast<std::streamsize>(mlen));
    if (!is) throw std::runtime_error("archive: truncated manifest in " + path);
    std::uint64_t checksum = fnv1a(mstr.data(), mstr.size());

    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(mstr);
    } catch (const nlohmann::json::exception&) {
        throw std::runtime_error("archive: corrupt manifest in " + path);
    }

    Archive a;
    a.meta_ = manifest.value("meta", nlohmann::json::object());
    for (const auto& entry : manifest.at("tensors")) {
        const std::string name = entry.at("name").get<std::string>();
        const std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
        Tensor t(shape);
        const std::size_t len = static_cast<std::size_t>(t.numel()) * sizeof(double);
        is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(len));
        if (!is) throw std::runtime_error("archive: truncated tensor data in " + path);
        checksum = fnv1a(reinterpret_cast<const char*>(t.data()), len, checksum);
        a.tensors_.emplace(name, std::move(t));
    }
    const std::uint64_t stored = read_u64(is);
    if (stored != checksum)
        throw std::runtime_error("archive: checksum mismatch in " + path);
    return a;
}

const Tensor& Archive::tensor(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end())
        throw std::runtime_error("archive: missing tensor " + name);
    return it->second;
}

std::unique_ptr<LoadedFeatureNet> LoadedFeatureNet::load(const std::string& path) {
    const Archive a = Archive::load(path);
    const auto& meta = a.meta();
    if (!meta.contains("feature_layers"))
        throw std::runtime_error("feature net: archive has no feature_layers manifest");
    std::vector<Layer> layers;
    for (const auto& l : meta.at("feature_layers")) {
        const std::string name = l.at("name").get<std::string>();
        Layer layer;
        layer.pool_before = l.value("pool_before", false);
        layer.activate = l.value("activate", true);
        layer.w = make_constant(a.tensor(name + ".weight"));
        layer.b = make_constant(a.tensor(name + ".bias"));
        layers.push_back(std::move(layer));
    }
    return std::make_unique<LoadedFeatureNet>(std::move(layers),
                                              meta.value("label", std::string("loaded")));
}

}  // namespace fgsr
