#include "rdv2/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "rdv2/errors.hpp"

namespace rdv2::ckpt {

std::uint32_t crc32(const std::uint8_t* data, std::size_t size) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    while (size > 0) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
        crc = ::crc32(crc, data, chunk);
        data += chunk;
        size -= chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

namespace {

class Writer {
public:
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u16(std::uint16_t v) { le(v, 2); }
    void u32(std::uint32_t v) { le(v, 4); }
    void u64(std::uint64_t v) { le(v, 8); }
    void bytes(const std::string& s) { out_.insert(out_.end(), s.begin(), s.end()); }
    std::vector<std::uint8_t> take() { return std::move(out_); }
    const std::vector<std::uint8_t>& data() const { return out_; }

private:
    void le(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    std::vector<std::uint8_t> out_;
};

class Reader {
public:
    Reader(const std::uint8_t* data, std::size_t size) : p_(data), end_(data + size) {}
    std::uint8_t u8(const char* what) { return static_cast<std::uint8_t>(le(1, what)); }
    std::uint16_t u16(const char* what) { return static_cast<std::uint16_t>(le(2, what)); }
    std::uint32_t u32(const char* what) { return static_cast<std::uint32_t>(le(4, what)); }
    std::uint64_t u64(const char* what) { return le(8, what); }
    std::string bytes(std::size_t n, const char* what) {
        need(n, what);
        std::string s(reinterpret_cast<const char*>(p_), n);
        p_ += n;
        return s;
    }
    std::size_t remaining() const { return static_cast<std::size_t>(end_ - p_); }

private:
    void need(std::size_t n, const char* what) {
        if (remaining() < n) throw CorruptFileError(std::string("checkpoint truncated while reading ") + what);
    }
    std::uint64_t le(int n, const char* what) {
        need(static_cast<std::size_t>(n), what);
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(p_[i]) << (8 * i);
        p_ += n;
        return v;
    }
    const std::uint8_t* p_;
    const std::uint8_t* end_;
};

}  // namespace

std::vector<std::uint8_t> encode(const NamedTensors& tensors) {
    Writer w;
    w.bytes("RDV2");
    w.u32(kVersion);
    w.u32(static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        if (name.empty() || name.size() > 0xFFFF) throw ContractError("checkpoint tensor names must be 1..65535 bytes");
        if (t.ndim() > 255) throw ContractError("checkpoint tensors support at most 255 dimensions");
        w.u16(static_cast<std::uint16_t>(name.size()));
        w.bytes(name);
        w.u8(t.dtype() == DType::f32 ? 0 : 1);
        w.u8(static_cast<std::uint8_t>(t.ndim()));
        for (auto d : t.shape()) {
            if (d > 0xFFFFFFFFull) throw ContractError("checkpoint dimension exceeds 32 bits");
            w.u32(static_cast<std::uint32_t>(d));
        }
        for (double v : t.data()) {
            if (t.dtype() == DType::f32)
                w.u32(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
            else
                w.u64(std::bit_cast<std::uint64_t>(v));
        }
    }
    auto out = w.take();
    const std::uint32_t crc = crc32(out.data(), out.size());
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(crc >> (8 * i)));
    return out;
}

NamedTensors decode(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 16) throw CorruptFileError("checkpoint truncated: " + std::to_string(bytes.size()) + " bytes");
    if (std::memcmp(bytes.data(), "RDV2", 4) != 0) throw CorruptFileError("checkpoint magic mismatch (expected RDV2)");
    const std::size_t body = bytes.size() - 4;
    std::uint32_t stored = 0;
    for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(bytes[body + static_cast<std::size_t>(i)]) << (8 * i);

    Reader r(bytes.data() + 4, body - 4);
    const std::uint32_t version = r.u32("version");
    if (version != kVersion)
        throw CorruptFileError("checkpoint version mismatch: file has " + std::to_string(version) + ", expected " +
                               std::to_string(kVersion));
    if (crc32(bytes.data(), body) != stored) throw CorruptFileError("checkpoint crc mismatch");
    const std::uint32_t count = r.u32("tensor count");
    NamedTensors out;
    for (std::uint32_t k = 0; k < count; ++k) {
        const std::uint16_t len = r.u16("name length");
        if (len == 0) throw CorruptFileError("checkpoint tensor name is empty");
        std::string name = r.bytes(len, "name");
        const std::uint8_t code = r.u8("dtype");
        if (code > 1) throw CorruptFileError("checkpoint dtype code " + std::to_string(code) + " is not 0 or 1");
        const std::uint8_t ndim = r.u8("ndim");
        Shape shape;
        std::size_t numel = 1;
        for (std::uint8_t d = 0; d < ndim; ++d) {
            shape.push_back(r.u32("dims"));
            numel *= shape.back();
        }
        const std::size_t width = code == 0 ? 4 : 8;
        if (numel > r.remaining() / width)
            throw CorruptFileError("checkpoint truncated while reading data of '" + name + "'");
        Tensor t(shape, 0.0, code == 0 ? DType::f32 : DType::f64);
        for (std::size_t i = 0; i < numel; ++i)
            t[i] = code == 0 ? static_cast<double>(std::bit_cast<float>(r.u32("data")))
                             : std::bit_cast<double>(r.u64("data"));
        out.emplace_back(std::move(name), std::move(t));
    }
    if (r.remaining() != 0) throw CorruptFileError("checkpoint has " + std::to_string(r.remaining()) + " trailing bytes");
    return out;
}

void write_file(const std::filesystem::path& path, const NamedTensors& tensors) {
    const auto bytes = encode(tensors);
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!f) throw std::runtime_error("failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

NamedTensors read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode(bytes);
}

}  // namespace rdv2::ckpt
