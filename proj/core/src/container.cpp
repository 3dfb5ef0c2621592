#include "rulkit/container.hpp"

#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "rulkit/errors.hpp"
#include "rulkit/version.hpp"

namespace rulkit {

namespace {
constexpr char kMagic[4] = {'R', 'K', 'C', '1'};
using json = nlohmann::json;

template <typename T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::istream& is, const char* what) {
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw ParseError(std::string("container truncated in ") + what);
    return v;
}
}  // namespace

std::uint64_t fnv1a64(std::span<const std::byte> bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::byte b : bytes) {
        h ^= static_cast<std::uint64_t>(b);
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t fnv1a64_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (f.read(buf, sizeof(buf)) || f.gcount() > 0) {
        for (std::streamsize i = 0; i < f.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
        if (!f) break;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xF];
    return s;
}

const Tensor& Container::array(const std::string& name) const {
    for (const auto& [n, t] : arrays)
        if (n == name) return t;
    throw RuntimeError("container has no array named " + name);
}

bool Container::has_array(const std::string& name) const {
    for (const auto& [n, t] : arrays)
        if (n == name) return true;
    return false;
}

void save_container(const std::filesystem::path& path, const Container& c) {
    if (!c.meta.empty()) {
        try {
            (void)json::parse(c.meta);
        } catch (const json::parse_error& e) {
            throw RuntimeError("container meta is not valid JSON: " + std::string(e.what()));
        }
    }
    json header;
    header["meta"] = c.meta;  // kept verbatim so saved bytes round-trip exactly
    header["arrays"] = json::array();
    std::size_t payload_scalars = 0;
    for (const auto& [name, t] : c.arrays) {
        header["arrays"].push_back({{"name", name}, {"shape", t.shape()}});
        payload_scalars += static_cast<std::size_t>(t.size());
    }

    std::vector<double> payload;
    payload.reserve(payload_scalars);
    for (const auto& [name, t] : c.arrays) payload.insert(payload.end(), t.values().begin(), t.values().end());
    const auto* pbytes = reinterpret_cast<const std::byte*>(payload.data());
    header["payload_fnv1a"] = hex64(fnv1a64({pbytes, payload.size() * sizeof(double)}));

    const std::string htext = header.dump();
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + path.string());
    f.write(kMagic, 4);
    put<std::uint32_t>(f, kContainerVersion);
    put<std::uint64_t>(f, htext.size());
    f.write(htext.data(), static_cast<std::streamsize>(htext.size()));
    f.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(double)));
    if (!f) throw IoError("short write to " + path.string());
}

Container load_container(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    char magic[4];
    if (!f.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw ParseError(path.string() + ": not a container file (bad magic)");
    const auto version = take<std::uint32_t>(f, "version");
    if (version != kContainerVersion)
        throw ParseError(path.string() + ": container version " + std::to_string(version) +
                         " unsupported (expected " + std::to_string(kContainerVersion) + ")");
    const auto hlen = take<std::uint64_t>(f, "header length");
    if (hlen > (1ULL << 30)) throw ParseError(path.string() + ": absurd header length");
    std::string htext(hlen, '\0');
    if (!f.read(htext.data(), static_cast<std::streamsize>(hlen)))
        throw ParseError(path.string() + ": container truncated in header");

    json header;
    try {
        header = json::parse(htext);
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": corrupt container header: " + e.what());
    }

    Container c;
    std::size_t payload_scalars = 0;
    std::vector<std::pair<std::string, std::vector<std::int64_t>>> specs;
    try {
        c.meta = header.at("meta").get<std::string>();
        for (const auto& a : header.at("arrays")) {
            std::vector<std::int64_t> shape = a.at("shape").get<std::vector<std::int64_t>>();
            std::int64_t n = 1;
            for (auto dv : shape) {
                if (dv <= 0) throw ParseError(path.string() + ": non-positive dim in header");
                n *= dv;
            }
            payload_scalars += static_cast<std::size_t>(n);
            specs.emplace_back(a.at("name").get<std::string>(), std::move(shape));
        }
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": malformed container header: " + e.what());
    }

    std::vector<double> payload(payload_scalars);
    if (!f.read(reinterpret_cast<char*>(payload.data()),
                static_cast<std::streamsize>(payload_scalars * sizeof(double))))
        throw ParseError(path.string() + ": container truncated in payload");
    f.peek();
    if (!f.eof()) throw ParseError(path.string() + ": trailing bytes after payload");

    const auto* pbytes = reinterpret_cast<const std::byte*>(payload.data());
    std::string want;
    try {
        want = header.at("payload_fnv1a").get<std::string>();
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": malformed container header: " + e.what());
    }
    const std::string got = hex64(fnv1a64({pbytes, payload.size() * sizeof(double)}));
    if (want != got) throw ParseError(path.string() + ": payload checksum mismatch (corrupt file)");

    std::size_t off = 0;
    for (auto& [name, shape] : specs) {
        std::int64_t n = 1;
        for (auto dv : shape) n *= dv;
        dvec vals(payload.begin() + static_cast<std::ptrdiff_t>(off),
                  payload.begin() + static_cast<std::ptrdiff_t>(off + n));
        off += static_cast<std::size_t>(n);
        c.arrays.emplace_back(std::move(name), Tensor(std::move(shape), std::move(vals)));
    }
    return c;
}

}  // namespace rulkit
