// io.hpp
// Binary snapshot ("CHNL") and checkpoint ("CHKP") files. All numbers are
// little-endian regardless of host byte order.

#pragma once

#include "nlch/grid.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

namespace nlch {

struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

class ByteWriter {
public:
    void raw(const char* s, std::size_t n) { buf_.append(s, n); }

    template <class T>
    void le(T v)
    {
        std::uint64_t bits = 0;
        static_assert(sizeof(T) <= 8);
        std::memcpy(&bits, &v, sizeof(T));
        for (std::size_t i = 0; i < sizeof(T); ++i)
            buf_.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
    }

    const std::string& bytes() const { return buf_; }

private:
    std::string buf_;
};

class ByteReader {
public:
    ByteReader(std::string bytes, std::string what) : buf_(std::move(bytes)), what_(std::move(what)) {}

    void expect_magic(const char* magic)
    {
        need(4);
        if (std::memcmp(buf_.data() + pos_, magic, 4) != 0)
            throw FormatError(what_ + ": bad magic, expected \"" + std::string(magic, 4) + "\"");
        pos_ += 4;
    }

    template <class T>
    T le()
    {
        need(sizeof(T));
        std::uint64_t bits = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i)
            bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
        pos_ += sizeof(T);
        T v;
        std::memcpy(&v, &bits, sizeof(T));
        return v;
    }

    bool at_end() const { return pos_ == buf_.size(); }

private:
    void need(std::size_t n) const
    {
        if (pos_ + n > buf_.size())
            throw FormatError(what_ + ": truncated file");
    }

    std::string buf_;
    std::string what_;
    std::size_t pos_ = 0;
};

inline void write_domain(ByteWriter& w, const Domain& dom)
{
    w.le<std::uint32_t>(static_cast<std::uint32_t>(dom.dim()));
    for (int d = 0; d < dom.dim(); ++d)
        w.le<std::uint32_t>(static_cast<std::uint32_t>(dom.cells(d)));
    for (int d = 0; d < dom.dim(); ++d)
        w.le<double>(dom.length(d));
    w.le<std::uint8_t>(dom.bc() == Boundary::NoFlux ? 0 : 1);
}

inline Domain read_domain(ByteReader& r, const std::string& what)
{
    const auto dim = r.le<std::uint32_t>();
    if (dim < 1 || dim > 3)
        throw FormatError(what + ": invalid dimension " + std::to_string(dim));
    std::array<int, 3> cells{1, 1, 1};
    std::array<double, 3> lengths{1.0, 1.0, 1.0};
    for (std::uint32_t d = 0; d < dim; ++d) {
        const auto c = r.le<std::uint32_t>();
        if (c < 4 || c > (1u << 24))
            throw FormatError(what + ": invalid cell count");
        cells[d] = static_cast<int>(c);
    }
    for (std::uint32_t d = 0; d < dim; ++d)
        lengths[d] = r.le<double>();
    const auto bc = r.le<std::uint8_t>();
    if (bc > 1)
        throw FormatError(what + ": invalid boundary code " + std::to_string(bc));
    try {
        return Domain(static_cast<int>(dim), cells, lengths, bc == 0 ? Boundary::NoFlux : Boundary::Periodic);
    } catch (const std::invalid_argument& e) {
        throw FormatError(what + ": " + e.what());
    }
}

inline std::string slurp(const std::string& path, const std::string& what)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw FormatError(what + ": cannot open " + path);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void dump(const std::string& path, const std::string& bytes, const std::string& what)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw std::runtime_error(what + ": cannot write " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw std::runtime_error(what + ": write failed for " + path);
}

} // namespace detail

inline constexpr std::uint32_t snapshot_version = 1;
inline constexpr std::uint32_t checkpoint_version = 1;

struct Snapshot {
    Field field;
    double t = 0.0;
};

inline std::string encode_snapshot(const Field& f, double t)
{
    detail::ByteWriter w;
    w.raw("CHNL", 4);
    w.le<std::uint32_t>(snapshot_version);
    detail::write_domain(w, f.domain());
    w.le<double>(t);
    for (double v : f.values())
        w.le<double>(v);
    return w.bytes();
}

inline Snapshot decode_snapshot(std::string bytes)
{
    const std::string what = "snapshot";
    detail::ByteReader r(std::move(bytes), what);
    r.expect_magic("CHNL");
    const auto version = r.le<std::uint32_t>();
    if (version != snapshot_version)
        throw FormatError("snapshot: unsupported version " + std::to_string(version) + " (supported: 1)");
    const Domain dom = detail::read_domain(r, what);
    Snapshot s;
    s.t = r.le<double>();
    std::vector<double> values(dom.size());
    for (double& v : values)
        v = r.le<double>();
    if (!r.at_end())
        throw FormatError("snapshot: trailing bytes");
    s.field = Field(dom, std::move(values));
    return s;
}

inline void write_snapshot(const Field& f, const std::string& path, double t = 0.0)
{
    detail::dump(path, encode_snapshot(f, t), "write_snapshot");
}

inline Snapshot read_snapshot(const std::string& path)
{
    return decode_snapshot(detail::slurp(path, "snapshot"));
}

struct Checkpoint {
    double t = 0.0;
    double tau = 0.0;
    Field u;
    Field w;
};

inline std::string encode_checkpoint(const Checkpoint& c)
{
    if (c.u.domain() != c.w.domain())
        throw std::invalid_argument("checkpoint: u and w live on different domains");
    detail::ByteWriter w;
    w.raw("CHKP", 4);
    w.le<std::uint32_t>(checkpoint_version);
    detail::write_domain(w, c.u.domain());
    w.le<double>(c.t);
    w.le<double>(c.tau);
    for (double v : c.u.values())
        w.le<double>(v);
    for (double v : c.w.values())
        w.le<double>(v);
    return w.bytes();
}

inline Checkpoint decode_checkpoint(std::string bytes)
{
    const std::string what = "checkpoint";
    detail::ByteReader r(std::move(bytes), what);
    r.expect_magic("CHKP");
    const auto version = r.le<std::uint32_t>();
    if (version != checkpoint_version)
        throw FormatError("checkpoint: unsupported version " + std::to_string(version) + " (supported: 1)");
    const Domain dom = detail::read_domain(r, what);
    Checkpoint c;
    c.t = r.le<double>();
    c.tau = r.le<double>();
    std::vector<double> u(dom.size()), w(dom.size());
    for (double& v : u)
        v = r.le<double>();
    for (double& v : w)
        v = r.le<double>();
    if (!r.at_end())
        throw FormatError("checkpoint: trailing bytes");
    c.u = Field(dom, std::move(u));
    c.w = Field(dom, std::move(w));
    return c;
}

inline void write_checkpoint(const Checkpoint& c, const std::string& path)
{
    detail::dump(path, encode_checkpoint(c), "write_checkpoint");
}

inline Checkpoint read_checkpoint(const std::string& path)
{
    return decode_checkpoint(detail::slurp(path, "checkpoint"));
}

} // namespace nlch
