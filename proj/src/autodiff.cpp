#include "codecomp/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_set>

CODECOMP_NN_BEGIN

namespace {

thread_local bool t_grad_enabled = true;

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " +
                     shape_string(b));
}

[[noreturn]] void shape_fail(const char* op, const Shape& a, const std::string& why) {
    throw ShapeError(std::string(op) + ": shape " + shape_string(a) + " " + why);
}

void require_matrix(const char* op, const Tensor& t) {
    if (t.rank() != 2) shape_fail(op, t.shape, "is not rank 2");
}

Var make_node(Tensor value, const char* op, std::vector<Var> inputs,
              std::function<void(Node&)> backward_fn) {
    if (!value.all_finite()) {
        throw std::domain_error(std::string(op) + ": produced a non-finite value");
    }
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->op = op;
    if (t_grad_enabled) {
        bool needs = false;
        for (const auto& in : inputs) needs = needs || in->requires_grad;
        if (needs) {
            node->requires_grad = true;
            node->inputs = std::move(inputs);
            node->backward_fn = std::move(backward_fn);
        }
    }
    return node;
}

bool wants(const Var& v) { return v->requires_grad; }

void add_into(Tensor& dst, const Tensor& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += src.data[i];
}

template <class F>
Var unary(const Var& a, const char* op, F&& forward, real (*deriv)(real x, real y)) {
    Tensor out(a->value.shape);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = forward(a->value.data[i]);
    return make_node(std::move(out), op, {a}, [deriv](Node& n) {
        auto& in = n.inputs[0];
        Tensor& g = in->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
            g.data[i] += n.grad.data[i] * deriv(in->value.data[i], n.value.data[i]);
        }
    });
}

}  // namespace

Tensor& Node::grad_buffer() {
    if (grad.shape != value.shape) grad = Tensor(value.shape);
    return grad;
}

SegmentIndex::SegmentIndex(std::vector<int> segment_ids, int segment_count)
    : ids(std::move(segment_ids)), count(segment_count) {
    if (count <= 0) throw std::invalid_argument("segment index: segment count must be positive");
    for (int id : ids) {
        if (id < 0 || id >= count) {
            throw IndexError("segment index: id " + std::to_string(id) + " outside [0, " +
                             std::to_string(count) + ")");
        }
    }
}

void SegmentIndex::validate(std::size_t items, const char* op) const {
    if (ids.size() != items) {
        throw ShapeError(std::string(op) + ": " + std::to_string(ids.size()) +
                         " segment ids for " + std::to_string(items) + " items");
    }
    for (int id : ids) {
        if (id < 0 || id >= count) {
            throw IndexError(std::string(op) + ": segment id " + std::to_string(id) +
                             " outside [0, " + std::to_string(count) + ")");
        }
    }
}

Var parameter(Tensor value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->op = "parameter";
    node->requires_grad = true;
    return node;
}

Var constant(Tensor value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->op = "constant";
    return node;
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }
bool grad_enabled() { return t_grad_enabled; }

Var matmul(const Var& a, const Var& b) {
    const Tensor& A = a->value;
    const Tensor& B = b->value;
    require_matrix("matmul", A);
    require_matrix("matmul", B);
    if (A.shape[1] != B.shape[0]) shape_fail("matmul", A.shape, B.shape);
    const std::size_t m = A.shape[0], k = A.shape[1], n = B.shape[1];
    Tensor out({m, n});
    gemm_nn(A.data, B.data, out.data, m, k, n, false);
    return make_node(std::move(out), "matmul", {a, b}, [m, k, n](Node& node) {
        const auto& a = node.inputs[0];
        const auto& b = node.inputs[1];
        if (wants(a)) gemm_nt(node.grad.data, b->value.data, a->grad_buffer().data, m, n, k, true);
        if (wants(b)) gemm_tn(a->value.data, node.grad.data, b->grad_buffer().data, m, k, n, true);
    });
}

Var matmul_nt(const Var& a, const Var& b) {
    const Tensor& A = a->value;
    const Tensor& B = b->value;
    require_matrix("matmul_nt", A);
    require_matrix("matmul_nt", B);
    if (A.shape[1] != B.shape[1]) shape_fail("matmul_nt", A.shape, B.shape);
    const std::size_t m = A.shape[0], k = A.shape[1], n = B.shape[0];
    Tensor out({m, n});
    gemm_nt(A.data, B.data, out.data, m, k, n, false);
    return make_node(std::move(out), "matmul_nt", {a, b}, [m, k, n](Node& node) {
        const auto& a = node.inputs[0];
        const auto& b = node.inputs[1];
        if (wants(a)) gemm_nn(node.grad.data, b->value.data, a->grad_buffer().data, m, n, k, true);
        if (wants(b)) gemm_tn(node.grad.data, a->value.data, b->grad_buffer().data, m, n, k, true);
    });
}

Var add(const Var& a, const Var& b) {
    if (a->value.shape != b->value.shape) shape_fail("add", a->value.shape, b->value.shape);
    Tensor out(a->value.shape);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = a->value.data[i] + b->value.data[i];
    return make_node(std::move(out), "add", {a, b}, [](Node& n) {
        for (auto& in : n.inputs) {
            if (wants(in)) add_into(in->grad_buffer(), n.grad);
        }
    });
}

Var sub(const Var& a, const Var& b) {
    if (a->value.shape != b->value.shape) shape_fail("sub", a->value.shape, b->value.shape);
    Tensor out(a->value.shape);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = a->value.data[i] - b->value.data[i];
    return make_node(std::move(out), "sub", {a, b}, [](Node& n) {
        if (wants(n.inputs[0])) add_into(n.inputs[0]->grad_buffer(), n.grad);
        if (wants(n.inputs[1])) {
            Tensor& g = n.inputs[1]->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g.data[i] -= n.grad.data[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    if (a->value.shape != b->value.shape) shape_fail("mul", a->value.shape, b->value.shape);
    Tensor out(a->value.shape);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = a->value.data[i] * b->value.data[i];
    return make_node(std::move(out), "mul", {a, b}, [](Node& n) {
        const auto& a = n.inputs[0];
        const auto& b = n.inputs[1];
        if (wants(a)) {
            Tensor& g = a->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += n.grad.data[i] * b->value.data[i];
        }
        if (wants(b)) {
            Tensor& g = b->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += n.grad.data[i] * a->value.data[i];
        }
    });
}

Var scale(const Var& a, real factor) {
    Tensor out(a->value.shape);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = a->value.data[i] * factor;
    return make_node(std::move(out), "scale", {a}, [factor](Node& n) {
        Tensor& g = n.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += n.grad.data[i] * factor;
    });
}

Var add_bias(const Var& a, const Var& bias) {
    const Tensor& A = a->value;
    const std::size_t cols = A.cols();
    if (bias->value.size() != cols) shape_fail("add_bias", A.shape, bias->value.shape);
    Tensor out(A.shape);
    const std::size_t rows = A.size() / cols;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            out.data[r * cols + c] = A.data[r * cols + c] + bias->value.data[c];
        }
    }
    return make_node(std::move(out), "add_bias", {a, bias}, [rows, cols](Node& n) {
        if (wants(n.inputs[0])) add_into(n.inputs[0]->grad_buffer(), n.grad);
        if (wants(n.inputs[1])) {
            Tensor& g = n.inputs[1]->grad_buffer();
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c < cols; ++c) g.data[c] += n.grad.data[r * cols + c];
            }
        }
    });
}

Var sigmoid(const Var& a) {
    return unary(
        a, "sigmoid", [](real x) { return real(1) / (real(1) + std::exp(-x)); },
        [](real, real y) { return y * (real(1) - y); });
}

Var tanh(const Var& a) {
    return unary(
        a, "tanh", [](real x) { return std::tanh(x); },
        [](real, real y) { return real(1) - y * y; });
}

Var relu(const Var& a) {
    return unary(
        a, "relu", [](real x) { return x > real(0) ? x : real(0); },
        [](real x, real) { return x > real(0) ? real(1) : real(0); });
}

Var exp(const Var& a) {
    return unary(
        a, "exp", [](real x) { return std::exp(x); }, [](real, real y) { return y; });
}

Var log(const Var& a) {
    return unary(
        a, "log", [](real x) { return std::log(x); }, [](real x, real) { return real(1) / x; });
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const std::size_t rows = parts[0]->value.rows();
    std::size_t total = 0;
    for (const auto& p : parts) {
        if (p->value.rows() != rows) shape_fail("concat_cols", parts[0]->value.shape, p->value.shape);
        total += p->value.cols();
    }
    Tensor out({rows, total});
    std::size_t offset = 0;
    std::vector<std::size_t> offsets;
    for (const auto& p : parts) {
        offsets.push_back(offset);
        const std::size_t w = p->value.cols();
        for (std::size_t r = 0; r < rows; ++r) {
            std::copy_n(p->value.data.data() + r * w, w, out.data.data() + r * total + offset);
        }
        offset += w;
    }
    return make_node(std::move(out), "concat_cols", parts, [rows, total, offsets](Node& n) {
        for (std::size_t i = 0; i < n.inputs.size(); ++i) {
            auto& in = n.inputs[i];
            if (!wants(in)) continue;
            Tensor& g = in->grad_buffer();
            const std::size_t w = in->value.cols();
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c < w; ++c) {
                    g.data[r * w + c] += n.grad.data[r * total + offsets[i] + c];
                }
            }
        }
    });
}

Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no inputs");
    const std::size_t cols = parts[0]->value.cols();
    std::size_t rows = 0;
    for (const auto& p : parts) {
        if (p->value.cols() != cols) shape_fail("concat_rows", parts[0]->value.shape, p->value.shape);
        rows += p->value.rows();
    }
    Tensor out({rows, cols});
    std::size_t offset = 0;
    for (const auto& p : parts) {
        std::copy(p->value.data.begin(), p->value.data.end(), out.data.begin() + offset);
        offset += p->value.size();
    }
    return make_node(std::move(out), "concat_rows", parts, [](Node& n) {
        std::size_t offset = 0;
        for (auto& in : n.inputs) {
            const std::size_t sz = in->value.size();
            if (wants(in)) {
                Tensor& g = in->grad_buffer();
                for (std::size_t i = 0; i < sz; ++i) g.data[i] += n.grad.data[offset + i];
            }
            offset += sz;
        }
    });
}

Var slice_cols(const Var& a, std::size_t start, std::size_t count) {
    const Tensor& A = a->value;
    const std::size_t rows = A.rows(), cols = A.cols();
    if (count == 0 || start + count > cols) {
        shape_fail("slice_cols", A.shape,
                   "cannot take " + std::to_string(count) + " columns from " + std::to_string(start));
    }
    Tensor out({rows, count});
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(A.data.data() + r * cols + start, count, out.data.data() + r * count);
    }
    return make_node(std::move(out), "slice_cols", {a}, [rows, cols, start, count](Node& n) {
        Tensor& g = n.inputs[0]->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < count; ++c) {
                g.data[r * cols + start + c] += n.grad.data[r * count + c];
            }
        }
    });
}

Var slice_rows(const Var& a, std::size_t start, std::size_t count) {
    const Tensor& A = a->value;
    const std::size_t rows = A.rows(), cols = A.cols();
    if (count == 0 || start + count > rows) {
        shape_fail("slice_rows", A.shape,
                   "cannot take " + std::to_string(count) + " rows from " + std::to_string(start));
    }
    Tensor out({count, cols});
    std::copy_n(A.data.data() + start * cols, count * cols, out.data.data());
    return make_node(std::move(out), "slice_rows", {a}, [start, cols](Node& n) {
        Tensor& g = n.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < n.grad.size(); ++i) g.data[start * cols + i] += n.grad.data[i];
    });
}

Var reshape(const Var& a, Shape shape) {
    if (shape_size(shape) != a->value.size()) shape_fail("reshape", a->value.shape, shape);
    Tensor out(std::move(shape), a->value.data);
    return make_node(std::move(out), "reshape", {a}, [](Node& n) {
        add_into(n.inputs[0]->grad_buffer(), n.grad);
    });
}

Var gather_rows(const Var& table, std::span<const int> ids) {
    const Tensor& T = table->value;
    require_matrix("gather_rows", T);
    const std::size_t rows = T.shape[0], cols = T.shape[1];
    if (ids.empty()) throw ShapeError("gather_rows: empty id list");
    Tensor out({ids.size(), cols});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const int id = ids[i];
        if (id == -1) continue;
        if (id < 0 || static_cast<std::size_t>(id) >= rows) {
            throw IndexError("gather_rows: id " + std::to_string(id) + " outside table " +
                             shape_string(T.shape));
        }
        std::copy_n(T.data.data() + id * cols, cols, out.data.data() + i * cols);
    }
    std::vector<int> saved(ids.begin(), ids.end());
    return make_node(std::move(out), "gather_rows", {table}, [saved, cols](Node& n) {
        Tensor& g = n.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < saved.size(); ++i) {
            if (saved[i] < 0) continue;
            real* dst = g.data.data() + saved[i] * cols;
            const real* src = n.grad.data.data() + i * cols;
            for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
        }
    });
}

Var pick(const Var& a, std::span<const int> positions) {
    const Tensor& A = a->value;
    if (positions.empty()) throw ShapeError("pick: empty position list");
    Tensor out({positions.size()});
    for (std::size_t i = 0; i < positions.size(); ++i) {
        const int p = positions[i];
        if (p < 0 || static_cast<std::size_t>(p) >= A.size()) {
            throw IndexError("pick: position " + std::to_string(p) + " outside " +
                             shape_string(A.shape));
        }
        out.data[i] = A.data[p];
    }
    std::vector<int> saved(positions.begin(), positions.end());
    return make_node(std::move(out), "pick", {a}, [saved](Node& n) {
        Tensor& g = n.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < saved.size(); ++i) g.data[saved[i]] += n.grad.data[i];
    });
}

Var where_rows(const std::vector<bool>& mask, const Var& a, const Var& b) {
    const Tensor& A = a->value;
    if (A.shape != b->value.shape) shape_fail("where_rows", A.shape, b->value.shape);
    const std::size_t rows = A.rows(), cols = A.cols();
    if (mask.size() != rows) shape_fail("where_rows", A.shape, "does not match mask length");
    Tensor out(A.shape);
    for (std::size_t r = 0; r < rows; ++r) {
        const Tensor& src = mask[r] ? A : b->value;
        std::copy_n(src.data.data() + r * cols, cols, out.data.data() + r * cols);
    }
    return make_node(std::move(out), "where_rows", {a, b}, [mask, rows, cols](Node& n) {
        for (int side = 0; side < 2; ++side) {
            auto& in = n.inputs[side];
            if (!wants(in)) continue;
            Tensor& g = in->grad_buffer();
            for (std::size_t r = 0; r < rows; ++r) {
                if (mask[r] != (side == 0)) continue;
                for (std::size_t c = 0; c < cols; ++c) g.data[r * cols + c] += n.grad.data[r * cols + c];
            }
        }
    });
}

Var sum_all(const Var& a) {
    real total = 0;
    for (real v : a->value.data) total += v;
    return make_node(Tensor::scalar(total), "sum_all", {a}, [](Node& n) {
        Tensor& g = n.inputs[0]->grad_buffer();
        const real up = n.grad.data[0];
        for (auto& v : g.data) v += up;
    });
}

Var mean_all(const Var& a) {
    return scale(sum_all(a), real(1) / static_cast<real>(a->value.size()));
}

Var row_sum(const Var& a) {
    const Tensor& A = a->value;
    const std::size_t rows = A.items(), cols = A.width();
    Tensor out({rows});
    for (std::size_t r = 0; r < rows; ++r) {
        real s = 0;
        for (std::size_t c = 0; c < cols; ++c) s += A.data[r * cols + c];
        out.data[r] = s;
    }
    return make_node(std::move(out), "row_sum", {a}, [rows, cols](Node& n) {
        Tensor& g = n.inputs[0]->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) g.data[r * cols + c] += n.grad.data[r];
        }
    });
}

Var max_over_rows(const Var& a) {
    Var pooled = segment_max(a, SegmentIndex(std::vector<int>(a->value.items(), 0), 1));
    return reshape(pooled, {1, a->value.width()});
}

Var mean_over_rows(const Var& a) {
    Var summed = segment_sum(a, SegmentIndex(std::vector<int>(a->value.items(), 0), 1));
    return reshape(scale(summed, real(1) / static_cast<real>(a->value.items())),
                   {1, a->value.width()});
}

Var softmax_rows(const Var& a) {
    const Tensor& A = a->value;
    const std::size_t rows = A.rows(), cols = A.cols();
    Tensor out(A.shape);
    for (std::size_t r = 0; r < rows; ++r) {
        const real* x = A.data.data() + r * cols;
        real* y = out.data.data() + r * cols;
        real mx = *std::max_element(x, x + cols);
        real z = 0;
        for (std::size_t c = 0; c < cols; ++c) {
            y[c] = std::exp(x[c] - mx);
            z += y[c];
        }
        for (std::size_t c = 0; c < cols; ++c) y[c] /= z;
    }
    return make_node(std::move(out), "softmax_rows", {a}, [rows, cols](Node& n) {
        Tensor& g = n.inputs[0]->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
            const real* y = n.value.data.data() + r * cols;
            const real* gy = n.grad.data.data() + r * cols;
            real dot = 0;
            for (std::size_t c = 0; c < cols; ++c) dot += gy[c] * y[c];
            for (std::size_t c = 0; c < cols; ++c) g.data[r * cols + c] += y[c] * (gy[c] - dot);
        }
    });
}

Var layer_norm_rows(const Var& a, const Var& gain, const Var& bias, real eps) {
    const Tensor& A = a->value;
    const std::size_t rows = A.rows(), cols = A.cols();
    if (gain->value.size() != cols || bias->value.size() != cols) {
        shape_fail("layer_norm_rows", A.shape, gain->value.shape);
    }
    Tensor out(A.shape);
    std::vector<real> normalized(A.size());
    std::vector<real> inv_std(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const real* x = A.data.data() + r * cols;
        real mean = 0;
        for (std::size_t c = 0; c < cols; ++c) mean += x[c];
        mean /= static_cast<real>(cols);
        real var = 0;
        for (std::size_t c = 0; c < cols; ++c) var += (x[c] - mean) * (x[c] - mean);
        var /= static_cast<real>(cols);
        inv_std[r] = real(1) / std::sqrt(var + eps);
        for (std::size_t c = 0; c < cols; ++c) {
            const real xh = (x[c] - mean) * inv_std[r];
            normalized[r * cols + c] = xh;
            out.data[r * cols + c] = xh * gain->value.data[c] + bias->value.data[c];
        }
    }
    return make_node(std::move(out), "layer_norm_rows", {a, gain, bias},
                     [rows, cols, normalized, inv_std](Node& n) {
        const auto& a = n.inputs[0];
        const auto& gain = n.inputs[1];
        const auto& bias = n.inputs[2];
        if (wants(gain) || wants(bias)) {
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c < cols; ++c) {
                    const real gy = n.grad.data[r * cols + c];
                    if (wants(gain)) gain->grad_buffer().data[c] += gy * normalized[r * cols + c];
                    if (wants(bias)) bias->grad_buffer().data[c] += gy;
                }
            }
        }
        if (!wants(a)) return;
        Tensor& g = a->grad_buffer();
        const real inv_n = real(1) / static_cast<real>(cols);
        for (std::size_t r = 0; r < rows; ++r) {
            real mean_d = 0, mean_dx = 0;
            for (std::size_t c = 0; c < cols; ++c) {
                const real d = n.grad.data[r * cols + c] * gain->value.data[c];
                mean_d += d;
                mean_dx += d * normalized[r * cols + c];
            }
            mean_d *= inv_n;
            mean_dx *= inv_n;
            for (std::size_t c = 0; c < cols; ++c) {
                const real d = n.grad.data[r * cols + c] * gain->value.data[c];
                g.data[r * cols + c] += inv_std[r] * (d - mean_d - normalized[r * cols + c] * mean_dx);
            }
        }
    });
}

Var segment_sum(const Var& values, const SegmentIndex& seg) {
    const Tensor& V = values->value;
    seg.validate(V.items(), "segment_sum");
    const std::size_t width = V.width();
    Shape out_shape = V.shape;
    out_shape[0] = static_cast<std::size_t>(seg.count);
    Tensor out(out_shape);
    for (std::size_t i = 0; i < seg.ids.size(); ++i) {
        real* dst = out.data.data() + seg.ids[i] * width;
        const real* src = V.data.data() + i * width;
        for (std::size_t c = 0; c < width; ++c) dst[c] += src[c];
    }
    return make_node(std::move(out), "segment_sum", {values}, [ids = seg.ids, width](Node& n) {
        Tensor& g = n.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < ids.size(); ++i) {
            const real* src = n.grad.data.data() + ids[i] * width;
            real* dst = g.data.data() + i * width;
            for (std::size_t c = 0; c < width; ++c) dst[c] += src[c];
        }
    });
}

Var segment_max(const Var& values, const SegmentIndex& seg) {
    const Tensor& V = values->value;
    seg.validate(V.items(), "segment_max");
    const std::size_t width = V.width();
    Shape out_shape = V.shape;
    out_shape[0] = static_cast<std::size_t>(seg.count);
    Tensor out(out_shape);
    // Source item of each output element; -1 for empty segments.
    std::vector<int> argmax(out.size(), -1);
    for (std::size_t i = 0; i < seg.ids.size(); ++i) {
        const std::size_t base = seg.ids[i] * width;
        for (std::size_t c = 0; c < width; ++c) {
            const real v = V.data[i * width + c];
            if (argmax[base + c] < 0 || v > out.data[base + c]) {
                out.data[base + c] = v;
                argmax[base + c] = static_cast<int>(i);
            }
        }
    }
    return make_node(std::move(out), "segment_max", {values}, [argmax, width](Node& n) {
        Tensor& g = n.inputs[0]->grad_buffer();
        for (std::size_t o = 0; o < argmax.size(); ++o) {
            if (argmax[o] < 0) continue;
            g.data[argmax[o] * width + o % width] += n.grad.data[o];
        }
    });
}

namespace {

// Per-segment max and log-sum-exp of a score vector.
void segment_lse(const Tensor& scores, const SegmentIndex& seg, std::vector<real>& max_out,
                 std::vector<real>& lse_out) {
    max_out.assign(seg.count, -std::numeric_limits<real>::infinity());
    for (std::size_t i = 0; i < seg.ids.size(); ++i) {
        max_out[seg.ids[i]] = std::max(max_out[seg.ids[i]], scores.data[i]);
    }
    std::vector<real> z(seg.count, real(0));
    for (std::size_t i = 0; i < seg.ids.size(); ++i) {
        z[seg.ids[i]] += std::exp(scores.data[i] - max_out[seg.ids[i]]);
    }
    lse_out.assign(seg.count, real(0));
    for (int s = 0; s < seg.count; ++s) {
        if (z[s] > real(0)) lse_out[s] = max_out[s] + std::log(z[s]);
    }
}

void require_vector(const char* op, const Tensor& t) {
    if (t.width() != 1) shape_fail(op, t.shape, "is not a score vector");
}

}  // namespace

Var segment_softmax(const Var& scores, const SegmentIndex& seg) {
    const Tensor& S = scores->value;
    require_vector("segment_softmax", S);
    seg.validate(S.items(), "segment_softmax");
    std::vector<real> mx, lse;
    segment_lse(S, seg, mx, lse);
    // Normalize by the shifted partition sum so equal scores give exact ratios.
    std::vector<real> z(seg.count, real(0));
    Tensor out(S.shape);
    for (std::size_t i = 0; i < seg.ids.size(); ++i) {
        out.data[i] = std::exp(S.data[i] - mx[seg.ids[i]]);
        z[seg.ids[i]] += out.data[i];
    }
    for (std::size_t i = 0; i < seg.ids.size(); ++i) out.data[i] /= z[seg.ids[i]];
    return make_node(std::move(out), "segment_softmax", {scores}, [seg](Node& n) {
        std::vector<real> dot(seg.count, real(0));
        for (std::size_t i = 0; i < seg.ids.size(); ++i) {
            dot[seg.ids[i]] += n.grad.data[i] * n.value.data[i];
        }
        Tensor& g = n.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < seg.ids.size(); ++i) {
            g.data[i] += n.value.data[i] * (n.grad.data[i] - dot[seg.ids[i]]);
        }
    });
}

Var segment_log_softmax(const Var& scores, const SegmentIndex& seg) {
    const Tensor& S = scores->value;
    require_vector("segment_log_softmax", S);
    seg.validate(S.items(), "segment_log_softmax");
    std::vector<real> mx, lse;
    segment_lse(S, seg, mx, lse);
    Tensor out(S.shape);
    for (std::size_t i = 0; i < seg.ids.size(); ++i) out.data[i] = S.data[i] - lse[seg.ids[i]];
    return make_node(std::move(out), "segment_log_softmax", {scores}, [seg](Node& n) {
        std::vector<real> total(seg.count, real(0));
        for (std::size_t i = 0; i < seg.ids.size(); ++i) total[seg.ids[i]] += n.grad.data[i];
        Tensor& g = n.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < seg.ids.size(); ++i) {
            g.data[i] += n.grad.data[i] - std::exp(n.value.data[i]) * total[seg.ids[i]];
        }
    });
}

Var conv1d(const Var& input, const Var& weight, const Var& bias, std::size_t kernel) {
    const Tensor& X = input->value;
    const Tensor& W = weight->value;
    require_matrix("conv1d", X);
    require_matrix("conv1d", W);
    const std::size_t length = X.shape[0], channels = X.shape[1];
    const std::size_t filters = W.shape[1];
    if (kernel == 0 || length < kernel) {
        shape_fail("conv1d", X.shape, "is shorter than kernel " + std::to_string(kernel));
    }
    if (W.shape[0] != kernel * channels) shape_fail("conv1d", X.shape, W.shape);
    if (bias->value.size() != filters) shape_fail("conv1d", W.shape, bias->value.shape);
    const std::size_t windows = length - kernel + 1;
    const std::size_t span = kernel * channels;
    // Window i is rows i..i+kernel-1, contiguous in row-major storage.
    std::vector<real> unfolded(windows * span);
    for (std::size_t i = 0; i < windows; ++i) {
        std::copy_n(X.data.data() + i * channels, span, unfolded.data() + i * span);
    }
    Tensor out({windows, filters});
    gemm_nn(unfolded, W.data, out.data, windows, span, filters, false);
    for (std::size_t i = 0; i < windows; ++i) {
        for (std::size_t f = 0; f < filters; ++f) out.data[i * filters + f] += bias->value.data[f];
    }
    return make_node(std::move(out), "conv1d", {input, weight, bias},
                     [unfolded = std::move(unfolded), windows, span, channels, filters](Node& n) {
        const auto& x = n.inputs[0];
        const auto& w = n.inputs[1];
        const auto& b = n.inputs[2];
        if (wants(w)) gemm_tn(unfolded, n.grad.data, w->grad_buffer().data, windows, span, filters, true);
        if (wants(b)) {
            Tensor& g = b->grad_buffer();
            for (std::size_t i = 0; i < windows; ++i) {
                for (std::size_t f = 0; f < filters; ++f) g.data[f] += n.grad.data[i * filters + f];
            }
        }
        if (wants(x)) {
            std::vector<real> dunfolded(windows * span);
            gemm_nt(n.grad.data, w->value.data, dunfolded, windows, filters, span, false);
            Tensor& g = x->grad_buffer();
            for (std::size_t i = 0; i < windows; ++i) {
                real* dst = g.data.data() + i * channels;
                for (std::size_t j = 0; j < span; ++j) dst[j] += dunfolded[i * span + j];
            }
        }
    });
}

void backward(const Var& loss) {
    if (loss->value.size() != 1) {
        throw ShapeError("backward: loss must be scalar, got " + shape_string(loss->value.shape));
    }
    // Iterative post-order DFS gives a topological order (inputs first).
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(loss.get(), 0);
    visited.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* child = node->inputs[next++].get();
            if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    for (Node* node : order) node->grad = Tensor(node->value.shape);
    loss->grad.data[0] = real(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward_fn) (*it)->backward_fn(**it);
    }
}

CODECOMP_NN_END
