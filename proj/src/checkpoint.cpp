#include "eenas/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace eenas {

namespace {

constexpr char kMagic[5] = {'N', 'C', 'H', 'W', '1'};

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    put_u64(out, bits);
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    [[noreturn]] void fail(const std::string& what) const {
        throw ParseError("checkpoint: " + what + " at byte offset " + std::to_string(pos));
    }
    void need(std::size_t n, const char* what) const {
        if (pos + n > buf.size()) fail(std::string("truncated ") + what);
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    double f64(const char* what) {
        const std::uint64_t bits = u64(what);
        double d;
        std::memcpy(&d, &bits, 8);
        return d;
    }
};

}  // namespace

void save_checkpoint(const std::string& path, const NamedParams& params) {
    std::string out;
    out.append(kMagic, sizeof(kMagic));
    for (const auto& [name, tensor] : params) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.append(name);
        put_u32(out, static_cast<std::uint32_t>(tensor.rank()));
        for (int i = 0; i < tensor.rank(); ++i)
            put_u64(out, static_cast<std::uint64_t>(tensor.dim(i)));
        for (double v : tensor.data()) put_f64(out, v);
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw ParseError("checkpoint: cannot open for writing: " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw ParseError("checkpoint: write failed: " + path);
}

NamedParams load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ParseError("checkpoint: cannot open: " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    Reader r{buf};
    r.need(sizeof(kMagic), "magic");
    if (std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0)
        throw ParseError("checkpoint: bad magic at byte offset 0");
    r.pos = sizeof(kMagic);

    NamedParams out;
    while (r.pos < buf.size()) {
        const std::uint32_t name_len = r.u32("name length");
        r.need(name_len, "name");
        std::string name = buf.substr(r.pos, name_len);
        r.pos += name_len;
        const std::uint32_t rank = r.u32("rank");
        if (rank == 0 || rank > 8) r.fail("implausible rank " + std::to_string(rank));
        std::vector<int> shape(rank);
        std::size_t numel = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            const std::uint64_t e = r.u64("extent");
            if (e == 0 || e > (1u << 28)) r.fail("implausible extent " + std::to_string(e));
            shape[i] = static_cast<int>(e);
            numel *= e;
        }
        std::vector<double> data(numel);
        for (std::size_t i = 0; i < numel; ++i) data[i] = r.f64("values");
        out.emplace_back(std::move(name), Tensor::from_data(std::move(shape), std::move(data)));
    }
    return out;
}

}  // namespace eenas
