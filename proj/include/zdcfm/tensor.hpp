#pragma once

// Dense row-major N-d tensor. Templated on the scalar so the test suite can
// instantiate the whole numeric stack in double for finite-difference
// oracles; production code uses float (see Real alias).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace zdcfm {

enum class DType { f32, f16 };  // f16 is emulated: values rounded to binary16, stored widened

inline const char* dtype_name(DType d) { return d == DType::f32 ? "f32" : "f16"; }

inline DType dtype_from_name(const std::string& s) {
    if (s == "f32") return DType::f32;
    if (s == "f16") return DType::f16;
    throw std::runtime_error("unknown dtype: " + s);
}

// ---- binary16 conversion (round to nearest even) ----

inline uint16_t f32_to_f16_bits(float f) {
    uint32_t x;
    std::memcpy(&x, &f, 4);
    uint32_t sign = (x >> 16) & 0x8000u;
    uint32_t mant = x & 0x007fffffu;
    int32_t exp = static_cast<int32_t>((x >> 23) & 0xffu);

    if (exp == 0xff) {  // inf / nan
        return static_cast<uint16_t>(sign | 0x7c00u | (mant ? 0x0200u | (mant >> 13) : 0u));
    }
    int32_t e = exp - 127 + 15;
    if (e >= 0x1f) return static_cast<uint16_t>(sign | 0x7c00u);  // overflow -> inf
    if (e <= 0) {
        if (e < -10) return static_cast<uint16_t>(sign);  // underflow -> signed zero
        // subnormal half: shift in the implicit bit, round to nearest even
        mant |= 0x00800000u;
        uint32_t shift = static_cast<uint32_t>(14 - e);
        uint32_t half = mant >> shift;
        uint32_t rem = mant & ((1u << shift) - 1u);
        uint32_t mid = 1u << (shift - 1);
        if (rem > mid || (rem == mid && (half & 1u))) ++half;
        return static_cast<uint16_t>(sign | half);
    }
    uint32_t half = (static_cast<uint32_t>(e) << 10) | (mant >> 13);
    uint32_t rem = mant & 0x1fffu;
    if (rem > 0x1000u || (rem == 0x1000u && (half & 1u))) ++half;  // may carry into exponent; that is correct
    return static_cast<uint16_t>(sign | half);
}

inline float f16_bits_to_f32(uint16_t h) {
    uint32_t sign = static_cast<uint32_t>(h & 0x8000u) << 16;
    uint32_t exp = (h >> 10) & 0x1fu;
    uint32_t mant = h & 0x3ffu;
    uint32_t x;
    if (exp == 0x1f) {
        x = sign | 0x7f800000u | (mant << 13);
    } else if (exp == 0) {
        if (mant == 0) {
            x = sign;
        } else {  // subnormal: normalize
            int e = -1;
            do {
                mant <<= 1;
                --e;
            } while (!(mant & 0x400u));
            mant &= 0x3ffu;
            x = sign | (static_cast<uint32_t>(127 - 15 + e + 1) << 23) | (mant << 13);
        }
    } else {
        x = sign | ((exp - 15 + 127) << 23) | (mant << 13);
    }
    float f;
    std::memcpy(&f, &x, 4);
    return f;
}

inline float round_f16(float v) { return f16_bits_to_f32(f32_to_f16_bits(v)); }

// ---- tensor ----

template <class T>
struct TensorT {
    std::vector<int> shape;
    std::vector<T> data;
    DType dtype = DType::f32;

    TensorT() = default;
    explicit TensorT(std::vector<int> s) : shape(std::move(s)) {
        data.assign(static_cast<size_t>(numel_of(shape)), T(0));
    }
    TensorT(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        if (static_cast<int64_t>(data.size()) != numel_of(shape))
            throw std::runtime_error("tensor: data length does not match shape");
    }

    static int64_t numel_of(const std::vector<int>& s) {
        int64_t n = 1;
        for (int d : s) {
            if (d <= 0) throw std::runtime_error("tensor: nonpositive dim");
            n *= d;
        }
        return n;
    }

    static TensorT zeros(std::vector<int> s) { return TensorT(std::move(s)); }

    static TensorT full(std::vector<int> s, T v) {
        TensorT t(std::move(s));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    int ndim() const { return static_cast<int>(shape.size()); }

    T& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
    const T& operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

    bool same_shape(const TensorT& o) const { return shape == o.shape; }

    TensorT reshaped(std::vector<int> s) const {
        if (numel_of(s) != numel()) throw std::runtime_error("reshape: element count mismatch");
        TensorT t = *this;
        t.shape = std::move(s);
        return t;
    }

    bool all_finite() const {
        for (const T& v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << "(";
        for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
        os << ")";
        return os.str();
    }
};

using Tensor = TensorT<float>;

// Round every value through binary16. Deterministic (pure bit math).
template <class T>
TensorT<T> cast_precision(const TensorT<T>& t, DType target) {
    TensorT<T> out = t;
    out.dtype = target;
    if (target == DType::f16) {
        for (auto& v : out.data) v = static_cast<T>(round_f16(static_cast<float>(v)));
    }
    return out;
}

}  // namespace zdcfm
