#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "roadlstm/errors.hpp"
#include "roadlstm/rng.hpp"

namespace roadlstm {

// Dense 3-D extents: width x height x channels.
struct Shape3 {
    int w = 0;
    int h = 0;
    int d = 0;

    std::int64_t elem_count() const {
        return static_cast<std::int64_t>(w) * h * d;
    }
    bool valid() const { return w >= 1 && h >= 1 && d >= 1; }
    bool operator==(const Shape3&) const = default;

    std::string str() const {
        return std::to_string(w) + "x" + std::to_string(h) + "x" + std::to_string(d);
    }
};

inline void check_shape(const Shape3& s, const char* what) {
    if (!s.valid()) {
        throw ShapeError(std::string(what) + ": invalid shape " + s.str() +
                         " (all dimensions must be >= 1)");
    }
}

// Lightweight view of one feature-map row: an ordered left-to-right sequence
// of `w` channel vectors of length `d`, contiguous in memory.
struct RowView {
    const double* data;  // w*d doubles
    int w;
    int d;
    const double* vec(int x) const { return data + static_cast<std::int64_t>(x) * d; }
};

struct MutRowView {
    double* data;
    int w;
    int d;
    double* vec(int x) { return data + static_cast<std::int64_t>(x) * d; }
};

// Dense tensor of doubles in row-major order: h outer, w middle, d inner.
// Flat index of (x, y, c) is ((y*w)+x)*d + c, so a row is one contiguous scan.
class Tensor3 {
public:
    Tensor3() = default;
    explicit Tensor3(const Shape3& s) : shape_(s) {
        check_shape(s, "Tensor3");
        data_.assign(static_cast<std::size_t>(s.elem_count()), 0.0);
    }

    static Tensor3 zeros(const Shape3& s) { return Tensor3(s); }

    static Tensor3 constant(const Shape3& s, double c) {
        Tensor3 t(s);
        for (double& v : t.data_) v = c;
        return t;
    }

    static Tensor3 uniform(const Shape3& s, Rng& rng, double lo, double hi) {
        Tensor3 t(s);
        for (double& v : t.data_) v = rng.uniform(lo, hi);
        return t;
    }

    static Tensor3 gaussian(const Shape3& s, Rng& rng, double mean, double sd) {
        Tensor3 t(s);
        for (double& v : t.data_) v = rng.gaussian(mean, sd);
        return t;
    }

    const Shape3& shape() const { return shape_; }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }

    double& at(int x, int y, int c) { return data_[flat(x, y, c)]; }
    double at(int x, int y, int c) const { return data_[flat(x, y, c)]; }

    std::int64_t flat(int x, int y, int c) const {
        return (static_cast<std::int64_t>(y) * shape_.w + x) * shape_.d + c;
    }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double* row_ptr(int y) {
        check_row(y);
        return data_.data() + static_cast<std::int64_t>(y) * shape_.w * shape_.d;
    }
    const double* row_ptr(int y) const {
        check_row(y);
        return data_.data() + static_cast<std::int64_t>(y) * shape_.w * shape_.d;
    }

    RowView row(int y) const { return RowView{row_ptr(y), shape_.w, shape_.d}; }
    MutRowView row_mut(int y) { return MutRowView{row_ptr(y), shape_.w, shape_.d}; }

    bool operator==(const Tensor3& o) const {
        return shape_ == o.shape_ && data_ == o.data_;
    }

private:
    void check_row(int y) const {
        if (y < 0 || y >= shape_.h) {
            throw IndexError("row index " + std::to_string(y) + " out of range [0, " +
                             std::to_string(shape_.h) + ")");
        }
    }

    Shape3 shape_;
    std::vector<double> data_;
};

enum class BinOp { Add, Sub, Mul };

inline Tensor3 tensor_map2(const Tensor3& a, const Tensor3& b, BinOp op) {
    if (!(a.shape() == b.shape())) {
        throw ShapeError("tensor_map2: shape mismatch " + a.shape().str() + " vs " +
                         b.shape().str());
    }
    Tensor3 out(a.shape());
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    const std::int64_t n = a.size();
    switch (op) {
        case BinOp::Add:
            for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
            break;
        case BinOp::Sub:
            for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
            break;
        case BinOp::Mul:
            for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
            break;
    }
    return out;
}

inline Tensor3 operator+(const Tensor3& a, const Tensor3& b) { return tensor_map2(a, b, BinOp::Add); }
inline Tensor3 operator-(const Tensor3& a, const Tensor3& b) { return tensor_map2(a, b, BinOp::Sub); }

}  // namespace roadlstm
