#include "codecomp/tensor.hpp"

#include <cmath>
#include <sstream>

CODECOMP_NN_BEGIN

std::string shape_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << 'x';
        out << shape[i];
    }
    out << ']';
    return out.str();
}

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

Tensor::Tensor(Shape s, real fill) : shape(std::move(s)), data(shape_size(shape), fill) {
    for (auto d : shape) {
        if (d == 0) throw ShapeError("tensor: zero-sized dimension in " + shape_string(shape));
    }
}

Tensor::Tensor(Shape s, std::vector<real> values) : shape(std::move(s)), data(std::move(values)) {
    if (data.size() != shape_size(shape)) {
        throw ShapeError("tensor: " + std::to_string(data.size()) +
                         " values do not fill shape " + shape_string(shape));
    }
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<real> values) {
    return Tensor({rows, cols}, std::vector<real>(values));
}

Tensor Tensor::vector(std::initializer_list<real> values) {
    return Tensor({values.size()}, std::vector<real>(values));
}

std::size_t Tensor::width() const {
    std::size_t w = 1;
    for (std::size_t i = 1; i < shape.size(); ++i) w *= shape[i];
    return w;
}

std::size_t Tensor::rows() const {
    if (shape.size() == 1) return 1;
    std::size_t r = 1;
    for (std::size_t i = 0; i + 1 < shape.size(); ++i) r *= shape[i];
    return r;
}

std::size_t Tensor::cols() const { return shape.empty() ? 0 : shape.back(); }

bool Tensor::all_finite() const {
    for (real v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void gemm_nn(std::span<const real> a, std::span<const real> b, std::span<real> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    if (!accumulate) std::fill(c.begin(), c.begin() + m * n, real(0));
    for (std::size_t i = 0; i < m; ++i) {
        real* crow = c.data() + i * n;
        const real* arow = a.data() + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const real av = arow[p];
            if (av == real(0)) continue;
            const real* brow = b.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void gemm_nt(std::span<const real> a, std::span<const real> b, std::span<real> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    // Transpose B once so the inner loop runs contiguously over n.
    std::vector<real> bt(k * n);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
    }
    gemm_nn(a, bt, c, m, k, n, accumulate);
}

void gemm_tn(std::span<const real> a, std::span<const real> b, std::span<real> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    if (!accumulate) std::fill(c.begin(), c.begin() + k * n, real(0));
    for (std::size_t p = 0; p < m; ++p) {
        const real* arow = a.data() + p * k;
        const real* brow = b.data() + p * n;
        for (std::size_t i = 0; i < k; ++i) {
            const real av = arow[i];
            if (av == real(0)) continue;
            real* crow = c.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

CODECOMP_NN_END
