#pragma once

// Binary checkpoint: "QNAV", u16 version, architecture descriptor, one record
// per parameter (name, shape, float32 payload), trailing CRC-32. All integers
// and floats are little-endian regardless of host byte order.

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <vector>

#include "qnav/agent.hpp"
#include "qnav/sensor.hpp"

namespace qnav {

inline constexpr char kCheckpointMagic[4] = {'Q', 'N', 'A', 'V'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct Checkpoint {
    AgentVariant variant = AgentVariant::D3RQN;
    NetworkArch arch;
    CameraModel camera = CameraModel::desk();
    ParamSet params;
};

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

class ByteWriter {
public:
    void u8(std::uint8_t v) { bytes.push_back(v); }
    void u16(std::uint16_t v) { put(v, 2); }
    void u32(std::uint32_t v) { put(v, 4); }
    void f32(float v) { put(std::bit_cast<std::uint32_t>(v), 4); }
    void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
    void raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        bytes.insert(bytes.end(), b, b + n);
    }

    std::vector<std::uint8_t> bytes;

private:
    void put(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
};

class ByteReader {
public:
    ByteReader(const std::vector<std::uint8_t>& b, std::size_t end) : b_(b), end_(end) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
    std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    float f32() { return std::bit_cast<float>(static_cast<std::uint32_t>(get(4))); }
    double f64() { return std::bit_cast<double>(get(8)); }
    std::string str(std::size_t n) {
        need(n);
        std::string s(b_.begin() + static_cast<long>(pos_), b_.begin() + static_cast<long>(pos_ + n));
        pos_ += n;
        return s;
    }
    std::size_t pos() const { return pos_; }

private:
    void need(std::size_t n) const {
        if (pos_ + n > end_) throw CheckpointError("checkpoint truncated at byte " + std::to_string(pos_));
    }
    std::uint64_t get(int n) {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(b_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }

    const std::vector<std::uint8_t>& b_;
    std::size_t end_;
    std::size_t pos_ = 0;
};

inline std::uint32_t crc32_of(const std::uint8_t* p, std::size_t n) {
    uLong c = ::crc32(0L, Z_NULL, 0);
    while (n > 0) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
        c = ::crc32(c, p, chunk);
        p += chunk;
        n -= chunk;
    }
    return static_cast<std::uint32_t>(c);
}

}  // namespace detail

/// Serialized bytes; parameter values are rounded to float32.
inline std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
    detail::ByteWriter w;
    w.raw(kCheckpointMagic, 4);
    w.u16(kCheckpointVersion);

    const auto& a = ck.arch;
    w.u8(static_cast<std::uint8_t>(ck.variant));
    w.u32(static_cast<std::uint32_t>(a.in_h));
    w.u32(static_cast<std::uint32_t>(a.in_w));
    w.u8(static_cast<std::uint8_t>(a.convs.size()));
    for (const auto& c : a.convs)
        for (auto v : {c.kh, c.kw, c.c_out, c.stride}) w.u32(static_cast<std::uint32_t>(v));
    w.u32(static_cast<std::uint32_t>(a.trunk_width()));
    w.u8(static_cast<std::uint8_t>(a.n_actions));
    w.u8(a.recurrent);
    w.u8(a.dueling);
    for (double v : {ck.camera.fx, ck.camera.fy, ck.camera.cx, ck.camera.cy, ck.camera.max_range}) w.f64(v);
    w.u32(static_cast<std::uint32_t>(ck.camera.width));
    w.u32(static_cast<std::uint32_t>(ck.camera.height));

    w.u32(static_cast<std::uint32_t>(ck.params.count()));
    for (const auto& p : ck.params.params()) {
        w.u16(static_cast<std::uint16_t>(p.name.size()));
        w.raw(p.name.data(), p.name.size());
        w.u8(static_cast<std::uint8_t>(p.value.rank()));
        for (auto d : p.value.shape()) w.u32(static_cast<std::uint32_t>(d));
        for (double v : p.value.values()) w.f32(static_cast<float>(v));
    }
    w.u32(detail::crc32_of(w.bytes.data(), w.bytes.size()));
    return std::move(w.bytes);
}

inline Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 10) throw CheckpointError("checkpoint too short");
    const std::size_t body = bytes.size() - 4;
    detail::ByteReader tail(bytes, bytes.size());
    (void)tail.str(body);
    const std::uint32_t stored = tail.u32();
    if (stored != detail::crc32_of(bytes.data(), body)) throw CheckpointError("checkpoint checksum mismatch");

    detail::ByteReader r(bytes, body);
    if (r.str(4) != std::string(kCheckpointMagic, 4)) throw CheckpointError("not a checkpoint (bad magic)");
    if (const auto v = r.u16(); v != kCheckpointVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(v));

    Checkpoint ck;
    const auto variant = r.u8();
    if (variant >= kAllVariants.size() || !is_learned(static_cast<AgentVariant>(variant)))
        throw CheckpointError("checkpoint names an unknown variant");
    ck.variant = static_cast<AgentVariant>(variant);
    NetworkArch& a = ck.arch;
    a.in_h = r.u32();
    a.in_w = r.u32();
    a.convs.resize(r.u8());
    for (auto& c : a.convs) {
        c.kh = r.u32();
        c.kw = r.u32();
        c.c_out = r.u32();
        c.stride = r.u32();
    }
    const std::size_t width = r.u32();
    a.n_actions = r.u8();
    a.recurrent = r.u8() != 0;
    a.dueling = r.u8() != 0;
    ck.camera.fx = r.f64();
    ck.camera.fy = r.f64();
    ck.camera.cx = r.f64();
    ck.camera.cy = r.f64();
    ck.camera.max_range = r.f64();
    ck.camera.width = r.u32();
    ck.camera.height = r.u32();

    if (a.recurrent != is_recurrent(ck.variant) || a.dueling != is_dueling(ck.variant) ||
        a.n_actions != static_cast<std::size_t>(kNumActions))
        throw CheckpointError("checkpoint architecture disagrees with its variant");
    if (ck.camera.width != a.in_w || ck.camera.height != a.in_h)
        throw CheckpointError("checkpoint camera does not match network input");
    try {
        ck.camera.validate();
        if (a.trunk_width() != width) throw CheckpointError("checkpoint trunk width mismatch");
    } catch (const std::invalid_argument& e) {
        throw CheckpointError(std::string("checkpoint descriptor invalid: ") + e.what());
    }

    const std::uint32_t n = r.u32();
    for (std::uint32_t i = 0; i < n; ++i) {
        const std::string name = r.str(r.u16());
        Shape shape(r.u8());
        for (auto& d : shape) d = r.u32();
        Tensor t(shape);
        for (auto& v : t.values()) v = static_cast<double>(r.f32());
        ck.params.add(name, std::move(t));
    }
    if (r.pos() != body) throw CheckpointError("trailing bytes after parameter records");
    try {
        QNetwork(a).check_params(ck.params);
    } catch (const std::invalid_argument& e) {
        throw CheckpointError(std::string("checkpoint parameters: ") + e.what());
    }
    return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    const auto bytes = encode_checkpoint(ck);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path);
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw std::runtime_error("write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    try {
        return decode_checkpoint(bytes);
    } catch (const CheckpointError& e) {
        throw CheckpointError(path + ": " + e.what());
    }
}

}  // namespace qnav
