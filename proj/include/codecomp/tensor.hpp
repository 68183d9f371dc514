#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "codecomp/real.hpp"

CODECOMP_NN_BEGIN

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Dense row-major array. Rank-2 tensors are the common case; rank-1 tensors
/// are used for score vectors and biases.
struct Tensor {
    Shape shape;
    std::vector<real> data;

    Tensor() = default;
    explicit Tensor(Shape s, real fill = real(0));
    Tensor(Shape s, std::vector<real> values);

    static Tensor scalar(real v) { return Tensor({1}, std::vector<real>{v}); }
    static Tensor matrix(std::size_t rows, std::size_t cols,
                         std::initializer_list<real> values);
    static Tensor vector(std::initializer_list<real> values);

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    /// Leading dimension (number of items for segment ops).
    std::size_t items() const { return shape.empty() ? 0 : shape[0]; }
    /// Elements per leading-dimension item.
    std::size_t width() const;
    std::size_t rows() const;
    std::size_t cols() const;

    real& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
    real at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

    std::span<real> row(std::size_t r) { return {data.data() + r * cols(), cols()}; }
    std::span<const real> row(std::size_t r) const {
        return {data.data() + r * cols(), cols()};
    }

    bool all_finite() const;
};

std::size_t shape_size(const Shape& shape);

// C(m×n) (+)= A(m×k) · B(k×n); accumulation over k is strictly ascending.
void gemm_nn(std::span<const real> a, std::span<const real> b, std::span<real> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate);
// C(m×n) (+)= A(m×k) · B(n×k)ᵀ
void gemm_nt(std::span<const real> a, std::span<const real> b, std::span<real> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate);
// C(k×n) (+)= A(m×k)ᵀ · B(m×n)
void gemm_tn(std::span<const real> a, std::span<const real> b, std::span<real> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate);

CODECOMP_NN_END
