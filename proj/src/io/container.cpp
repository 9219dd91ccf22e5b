#include "mde/io/container.hpp"

#include <cstring>
#include <fstream>

#include "mde/core/errors.hpp"

namespace mde {

namespace {
constexpr char kMagic[8] = {'M', 'D', 'E', 'C', 'O', 'N', 'T', '1'};
}

void Container::save(const std::string& path) const {
    nlohmann::json header = meta;
    nlohmann::json list = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, t] : tensors) {
        list.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset},
                        {"count", t.numel()}});
        offset += t.numel();
    }
    header["tensors"] = list;
    const std::string head = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot write container: " + path);
    out.write(kMagic, sizeof(kMagic));
    const std::uint32_t len = static_cast<std::uint32_t>(head.size());
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(head.data(), static_cast<std::streamsize>(head.size()));
    std::vector<float> buf;
    for (const auto& [name, t] : tensors) {
        buf.resize(t.numel());
        for (std::size_t i = 0; i < t.numel(); ++i)
            buf[i] = static_cast<float>(t[i]);
        out.write(reinterpret_cast<const char*>(buf.data()),
                  static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    if (!out)
        throw IoError("short write: " + path);
}

Container Container::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open container: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw IoError("not a tensor container: " + path);
    std::uint32_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string head(len, '\0');
    in.read(head.data(), len);
    if (!in)
        throw IoError("truncated header: " + path);

    Container c;
    c.meta = nlohmann::json::parse(head);
    const auto list = c.meta.at("tensors");
    c.meta.erase("tensors");
    std::vector<float> buf;
    for (const auto& item : list) {
        const std::string name = item.at("name").get<std::string>();
        const std::vector<int> shape = item.at("shape").get<std::vector<int>>();
        const std::size_t count = item.at("count").get<std::size_t>();
        buf.resize(count);
        in.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(count * sizeof(float)));
        if (!in)
            throw IoError("truncated blob '" + name + "': " + path);
        Tensor t(shape);
        if (t.numel() != count)
            throw IoError("blob count mismatch for '" + name + "'");
        for (std::size_t i = 0; i < count; ++i)
            t[i] = static_cast<double>(buf[i]);
        c.tensors.emplace_back(name, std::move(t));
    }
    return c;
}

const Tensor* Container::find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name)
            return &t;
    return nullptr;
}

std::uint64_t fnv1a_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot hash file: " + path);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[4096];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        const std::streamsize got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
        if (got < static_cast<std::streamsize>(sizeof(buf)))
            break;
    }
    return h;
}

}  // namespace mde
