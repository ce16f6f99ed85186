#pragma once

#include <cstdint>
#include <cstring>
#include <sstream>
#include <string>
#include <vector>

#include "nlf/common.hpp"
#include "nlf/net.hpp"

namespace nlf {

// Little-endian binary writer/reader over in-memory buffers. Checkpoints are
// assembled in memory so a trailing CRC32 covers the whole payload.
class BinWriter {
public:
    void u32(std::uint32_t v) { raw(&v, 4); }
    void u64(std::uint64_t v) { raw(&v, 8); }
    void i64(std::int64_t v) { raw(&v, 8); }
    void f64(double v) { raw(&v, 8); }
    void f32(float v) { raw(&v, 4); }
    void str(const std::string& s) {
        u32(std::uint32_t(s.size()));
        raw(s.data(), s.size());
    }
    void floats(const float* p, std::size_t n) { raw(p, n * 4); }
    void raw(const void* p, std::size_t n) {
        const char* c = static_cast<const char*>(p);
        buf_.insert(buf_.end(), c, c + n);
    }
    const std::vector<char>& buffer() const { return buf_; }

private:
    std::vector<char> buf_;
};

class BinReader {
public:
    BinReader(const char* data, std::size_t size) : data_(data), size_(size) {}

    std::uint32_t u32() { return get<std::uint32_t>(); }
    std::uint64_t u64() { return get<std::uint64_t>(); }
    std::int64_t i64() { return get<std::int64_t>(); }
    double f64() { return get<double>(); }
    float f32() { return get<float>(); }
    std::string str() {
        const auto n = u32();
        need(n);
        std::string s(data_ + pos_, n);
        pos_ += n;
        return s;
    }
    void floats(float* p, std::size_t n) {
        need(n * 4);
        std::memcpy(p, data_ + pos_, n * 4);
        pos_ += n * 4;
    }
    void raw(void* p, std::size_t n) {
        need(n);
        std::memcpy(p, data_ + pos_, n);
        pos_ += n;
    }
    std::size_t remaining() const { return size_ - pos_; }

private:
    template <typename T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, data_ + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    void need(std::size_t n) {
        if (pos_ + n > size_) throw CorruptCheckpoint("truncated data");
    }
    const char* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

inline void write_mlp(BinWriter& w, const Mlp<float>& m) {
    w.u32(std::uint32_t(m.input_dim));
    w.u32(std::uint32_t(m.output_dim));
    w.u32(std::uint32_t(m.width));
    w.u32(std::uint32_t(m.depth));
    w.u32(std::uint32_t(m.skip_layer));
    for (int l = 0; l < m.num_layers(); ++l) {
        w.floats(m.weights[l].data(), std::size_t(m.weights[l].size()));
        w.floats(m.biases[l].data(), std::size_t(m.biases[l].size()));
    }
}

inline Mlp<float> read_mlp(BinReader& r) {
    Mlp<float> m;
    m.input_dim = int(r.u32());
    m.output_dim = int(r.u32());
    m.width = int(r.u32());
    m.depth = int(r.u32());
    m.skip_layer = int(r.u32());
    if (m.input_dim <= 0 || m.output_dim <= 0 || m.width <= 0 || m.depth < 0 ||
        m.depth > 1024)
        throw CorruptCheckpoint("implausible mlp shape");
    m.weights.resize(m.num_layers());
    m.biases.resize(m.num_layers());
    for (int l = 0; l < m.num_layers(); ++l) {
        m.weights[l].resize(m.layer_input_dim(l), m.layer_output_dim(l));
        m.biases[l].resize(m.layer_output_dim(l));
        r.floats(m.weights[l].data(), std::size_t(m.weights[l].size()));
        r.floats(m.biases[l].data(), std::size_t(m.biases[l].size()));
    }
    return m;
}

inline void write_adam(BinWriter& w, const AdamState<float>& s) {
    w.i64(s.step_count);
    w.f64(s.lr);
    w.f64(s.beta1);
    w.f64(s.beta2);
    w.f64(s.eps);
    w.u32(std::uint32_t(s.m_w.size()));
    for (std::size_t l = 0; l < s.m_w.size(); ++l) {
        w.u32(std::uint32_t(s.m_w[l].rows()));
        w.u32(std::uint32_t(s.m_w[l].cols()));
        w.floats(s.m_w[l].data(), std::size_t(s.m_w[l].size()));
        w.floats(s.v_w[l].data(), std::size_t(s.v_w[l].size()));
        w.floats(s.m_b[l].data(), std::size_t(s.m_b[l].size()));
        w.floats(s.v_b[l].data(), std::size_t(s.v_b[l].size()));
    }
}

inline AdamState<float> read_adam(BinReader& r) {
    AdamState<float> s;
    s.step_count = r.i64();
    s.lr = r.f64();
    s.beta1 = r.f64();
    s.beta2 = r.f64();
    s.eps = r.f64();
    const auto layers = r.u32();
    s.m_w.resize(layers);
    s.v_w.resize(layers);
    s.m_b.resize(layers);
    s.v_b.resize(layers);
    for (std::uint32_t l = 0; l < layers; ++l) {
        const int rows = int(r.u32()), cols = int(r.u32());
        if (rows <= 0 || cols <= 0) throw CorruptCheckpoint("implausible adam shape");
        s.m_w[l].resize(rows, cols);
        s.v_w[l].resize(rows, cols);
        s.m_b[l].resize(cols);
        s.v_b[l].resize(cols);
        r.floats(s.m_w[l].data(), std::size_t(s.m_w[l].size()));
        r.floats(s.v_w[l].data(), std::size_t(s.v_w[l].size()));
        r.floats(s.m_b[l].data(), std::size_t(s.m_b[l].size()));
        r.floats(s.v_b[l].data(), std::size_t(s.v_b[l].size()));
    }
    return s;
}

}  // namespace nlf
