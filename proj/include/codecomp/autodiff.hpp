#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "codecomp/tensor.hpp"

CODECOMP_NN_BEGIN

struct Node;
using Var = std::shared_ptr<Node>;

/// One vertex of the define-by-run graph. Leaves with `requires_grad` are
/// parameters; everything else is rebuilt per minibatch.
struct Node {
    Tensor value;
    Tensor grad;
    std::vector<Var> inputs;
    std::function<void(Node&)> backward_fn;
    const char* op = "leaf";
    bool requires_grad = false;

    /// Gradient buffer, allocated (zeroed) on first use.
    Tensor& grad_buffer();
};

/// Assignment of items to segments; ids need not be sorted.
struct SegmentIndex {
    std::vector<int> ids;
    int count = 0;

    SegmentIndex() = default;
    SegmentIndex(std::vector<int> segment_ids, int segment_count);
    void validate(std::size_t items, const char* op) const;
};

class IndexError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

Var parameter(Tensor value);
Var constant(Tensor value);

/// Disables graph recording on this thread for its lifetime (inference).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};
bool grad_enabled();

// Dense algebra.
Var matmul(const Var& a, const Var& b);
Var matmul_nt(const Var& a, const Var& b);  // a · bᵀ
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, real factor);
Var add_bias(const Var& a, const Var& bias);  // bias broadcast over rows

// Elementwise nonlinearities.
Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var relu(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);

// Structure.
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_cols(const Var& a, std::size_t start, std::size_t count);
Var slice_rows(const Var& a, std::size_t start, std::size_t count);
Var reshape(const Var& a, Shape shape);
/// Row gather; an id of -1 yields a zero row.
Var gather_rows(const Var& table, std::span<const int> ids);
/// Elements of a rank-1 tensor at the given positions.
Var pick(const Var& a, std::span<const int> positions);
/// Row r of the result is a's row where mask[r] is true, else b's.
Var where_rows(const std::vector<bool>& mask, const Var& a, const Var& b);

// Reductions.
Var sum_all(const Var& a);
Var mean_all(const Var& a);
Var row_sum(const Var& a);  // [n×k] → [n]
Var max_over_rows(const Var& a);   // [n×k] → [1×k]
Var mean_over_rows(const Var& a);  // [n×k] → [1×k]

// Row-wise normalizers.
Var softmax_rows(const Var& a);
Var layer_norm_rows(const Var& a, const Var& gain, const Var& bias, real eps = real(1e-5));

// Segment (scatter-style) operations over the leading dimension.
Var segment_sum(const Var& values, const SegmentIndex& seg);
Var segment_max(const Var& values, const SegmentIndex& seg);
Var segment_softmax(const Var& scores, const SegmentIndex& seg);
Var segment_log_softmax(const Var& scores, const SegmentIndex& seg);

/// 1-D convolution over rows: X [L×C], W [(K·C)×F], b [F] → [(L−K+1)×F].
Var conv1d(const Var& input, const Var& weight, const Var& bias, std::size_t kernel);

/// Reverse pass from a scalar loss. Zeroes every accumulator reachable from
/// `loss` first, then accumulates d loss / d node into each node's grad.
void backward(const Var& loss);

CODECOMP_NN_END
