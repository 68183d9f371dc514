#include "codecomp/context_encoders.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

CODECOMP_NN_BEGIN

std::string to_string(ContextEncoderKind kind) {
    switch (kind) {
        case ContextEncoderKind::gru: return "gru";
        case ContextEncoderKind::bigru: return "bigru";
        case ContextEncoderKind::cnn: return "cnn";
        case ContextEncoderKind::transformer: return "transformer";
    }
    return "?";
}

ContextEncoderKind context_encoder_kind_from_string(std::string_view name) {
    if (name == "gru") return ContextEncoderKind::gru;
    if (name == "bigru") return ContextEncoderKind::bigru;
    if (name == "cnn") return ContextEncoderKind::cnn;
    if (name == "transformer") return ContextEncoderKind::transformer;
    throw std::invalid_argument("unknown context encoder '" + std::string(name) + "'");
}

void ContextEncoderConfig::validate() const {
    if (input_dim == 0 || hidden == 0 || layers == 0) {
        throw std::invalid_argument("context encoder: widths and depth must be positive");
    }
    if (kind == ContextEncoderKind::bigru && hidden % 2 != 0) {
        throw std::invalid_argument("context encoder: biGRU needs an even hidden width, got " +
                                    std::to_string(hidden));
    }
    if (kind == ContextEncoderKind::transformer && (heads == 0 || hidden % heads != 0)) {
        throw std::invalid_argument("context encoder: hidden width " + std::to_string(hidden) +
                                    " is not divisible by " + std::to_string(heads) + " heads");
    }
    if (kind == ContextEncoderKind::cnn && kernel == 0) {
        throw std::invalid_argument("context encoder: kernel width must be positive");
    }
}

nlohmann::json to_json(const ContextEncoderConfig& c) {
    return {{"kind", to_string(c.kind)}, {"input_dim", c.input_dim}, {"hidden", c.hidden},
            {"layers", c.layers},        {"kernel", c.kernel},       {"heads", c.heads},
            {"ff_multiplier", c.ff_multiplier}};
}

ContextEncoderConfig context_encoder_config_from_json(const nlohmann::json& j) {
    ContextEncoderConfig c;
    c.kind = context_encoder_kind_from_string(j.at("kind").get<std::string>());
    c.input_dim = j.value("input_dim", c.input_dim);
    c.hidden = j.value("hidden", c.hidden);
    c.layers = j.value("layers", c.layers);
    c.kernel = j.value("kernel", c.kernel);
    c.heads = j.value("heads", c.heads);
    c.ff_multiplier = j.value("ff_multiplier", c.ff_multiplier);
    return c;
}

GruCell GruCell::create(std::size_t input, std::size_t hidden, ParamInit& init) {
    const real bound = real(1) / std::sqrt(static_cast<real>(hidden));
    GruCell cell;
    cell.w_input = parameter(init.uniform({input, 3 * hidden}, bound));
    cell.b_input = parameter(init.uniform({3 * hidden}, bound));
    cell.u_gates = parameter(init.uniform({hidden, 2 * hidden}, bound));
    cell.u_candidate = parameter(init.uniform({hidden, hidden}, bound));
    cell.b_hidden = parameter(init.uniform({3 * hidden}, bound));
    return cell;
}

namespace {

Var linear_param(ParamInit& init, std::size_t in, std::size_t out) {
    return parameter(init.uniform({in, out}, real(1) / std::sqrt(static_cast<real>(in))));
}

Var zeros_param(std::size_t n) { return parameter(Tensor({n})); }
Var ones_param(std::size_t n) { return parameter(Tensor({n}, real(1))); }

Var linear(const Var& x, const Var& w, const Var& b) { return add_bias(matmul(x, w), b); }

}  // namespace

ContextEncoder ContextEncoder::create(const ContextEncoderConfig& config, std::uint64_t seed) {
    config.validate();
    ContextEncoder enc;
    enc.config_ = config;
    ParamInit init(seed);
    const std::size_t d = config.input_dim, h = config.hidden;
    switch (config.kind) {
        case ContextEncoderKind::gru:
            for (std::size_t l = 0; l < config.layers; ++l) {
                enc.forward_.push_back(GruCell::create(l == 0 ? d : h, h, init));
            }
            break;
        case ContextEncoderKind::bigru:
            for (std::size_t l = 0; l < config.layers; ++l) {
                enc.forward_.push_back(GruCell::create(l == 0 ? d : h / 2, h / 2, init));
                enc.backward_.push_back(GruCell::create(l == 0 ? d : h / 2, h / 2, init));
            }
            break;
        case ContextEncoderKind::cnn: {
            const std::size_t k = config.kernel;
            enc.conv1_w_ = linear_param(init, k * d, h);
            enc.conv1_b_ = zeros_param(h);
            enc.conv2_w_ = linear_param(init, k * h, h);
            enc.conv2_b_ = zeros_param(h);
            break;
        }
        case ContextEncoderKind::transformer: {
            enc.in_proj_w_ = linear_param(init, d, h);
            enc.in_proj_b_ = zeros_param(h);
            for (std::size_t l = 0; l < config.layers; ++l) {
                TransformerLayer b;
                b.wq = linear_param(init, h, h);
                b.bq = zeros_param(h);
                b.wk = linear_param(init, h, h);
                b.bk = zeros_param(h);
                b.wv = linear_param(init, h, h);
                b.bv = zeros_param(h);
                b.wo = linear_param(init, h, h);
                b.bo = zeros_param(h);
                b.ln1_gain = ones_param(h);
                b.ln1_bias = zeros_param(h);
                b.ln2_gain = ones_param(h);
                b.ln2_bias = zeros_param(h);
                const std::size_t ff = config.ff_multiplier * h;
                b.ff1_w = linear_param(init, h, ff);
                b.ff1_b = zeros_param(ff);
                b.ff2_w = linear_param(init, ff, h);
                b.ff2_b = zeros_param(h);
                enc.blocks_.push_back(std::move(b));
            }
            enc.out_proj_w_ = linear_param(init, h, h);
            enc.out_proj_b_ = zeros_param(h);
            break;
        }
    }
    return enc;
}

NamedParameters ContextEncoder::parameters() const {
    NamedParameters out;
    auto add_cell = [&out](const std::string& prefix, const GruCell& c) {
        out.emplace_back(prefix + ".w_input", c.w_input);
        out.emplace_back(prefix + ".b_input", c.b_input);
        out.emplace_back(prefix + ".u_gates", c.u_gates);
        out.emplace_back(prefix + ".u_candidate", c.u_candidate);
        out.emplace_back(prefix + ".b_hidden", c.b_hidden);
    };
    for (std::size_t l = 0; l < forward_.size(); ++l) add_cell("context.fwd" + std::to_string(l), forward_[l]);
    for (std::size_t l = 0; l < backward_.size(); ++l) add_cell("context.bwd" + std::to_string(l), backward_[l]);
    if (config_.kind == ContextEncoderKind::cnn) {
        out.emplace_back("context.conv1.weight", conv1_w_);
        out.emplace_back("context.conv1.bias", conv1_b_);
        out.emplace_back("context.conv2.weight", conv2_w_);
        out.emplace_back("context.conv2.bias", conv2_b_);
    }
    if (config_.kind == ContextEncoderKind::transformer) {
        out.emplace_back("context.in_proj.weight", in_proj_w_);
        out.emplace_back("context.in_proj.bias", in_proj_b_);
        for (std::size_t l = 0; l < blocks_.size(); ++l) {
            const auto& b = blocks_[l];
            const std::string p = "context.block" + std::to_string(l) + ".";
            out.emplace_back(p + "wq", b.wq);
            out.emplace_back(p + "bq", b.bq);
            out.emplace_back(p + "wk", b.wk);
            out.emplace_back(p + "bk", b.bk);
            out.emplace_back(p + "wv", b.wv);
            out.emplace_back(p + "bv", b.bv);
            out.emplace_back(p + "wo", b.wo);
            out.emplace_back(p + "bo", b.bo);
            out.emplace_back(p + "ln1.gain", b.ln1_gain);
            out.emplace_back(p + "ln1.bias", b.ln1_bias);
            out.emplace_back(p + "ln2.gain", b.ln2_gain);
            out.emplace_back(p + "ln2.bias", b.ln2_bias);
            out.emplace_back(p + "ff1.weight", b.ff1_w);
            out.emplace_back(p + "ff1.bias", b.ff1_b);
            out.emplace_back(p + "ff2.weight", b.ff2_w);
            out.emplace_back(p + "ff2.bias", b.ff2_b);
        }
        out.emplace_back("context.out_proj.weight", out_proj_w_);
        out.emplace_back("context.out_proj.bias", out_proj_b_);
    }
    return out;
}

Var ContextEncoder::encode(const Var& rows, std::span<const std::size_t> lengths,
                           std::vector<Tensor>* attention) const {
    if (lengths.empty()) throw std::invalid_argument("context encoder: empty batch");
    std::size_t total = 0;
    for (auto len : lengths) {
        if (len == 0) throw std::invalid_argument("context encoder: empty context");
        total += len;
    }
    if (rows->value.rank() != 2 || rows->value.shape[0] != total ||
        rows->value.shape[1] != config_.input_dim) {
        throw ShapeError("context encoder: expected [" + std::to_string(total) + "x" +
                         std::to_string(config_.input_dim) + "] token rows, got " +
                         shape_string(rows->value.shape));
    }
    switch (config_.kind) {
        case ContextEncoderKind::gru:
        case ContextEncoderKind::bigru: return encode_gru(rows, lengths);
        case ContextEncoderKind::cnn: return encode_cnn(rows, lengths);
        case ContextEncoderKind::transformer: return encode_transformer(rows, lengths, attention);
    }
    throw std::logic_error("context encoder: unknown kind");
}

Var ContextEncoder::run_gru(const GruCell& cell, const Var& inputs, std::size_t steps, std::size_t batch,
                            const std::vector<std::vector<bool>>& active, std::vector<Var>* states) {
    const std::size_t h = cell.hidden();
    Var projected = add_bias(matmul(inputs, cell.w_input), cell.b_input);  // [T·B × 3H]
    Var b_gates = slice_cols(cell.b_hidden, 0, 2 * h);
    Var b_candidate = slice_cols(cell.b_hidden, 2 * h, h);
    Var state = constant(Tensor({batch, h}));
    for (std::size_t t = 0; t < steps; ++t) {
        const auto& mask = active[t];
        const bool any = std::find(mask.begin(), mask.end(), true) != mask.end();
        if (!any) {
            if (states) states->push_back(state);
            continue;
        }
        Var x = slice_rows(projected, t * batch, batch);
        Var hidden_gates = add_bias(matmul(state, cell.u_gates), b_gates);
        Var z = sigmoid(add(slice_cols(x, 0, h), slice_cols(hidden_gates, 0, h)));
        Var r = sigmoid(add(slice_cols(x, h, h), slice_cols(hidden_gates, h, h)));
        Var candidate = tanh(add(slice_cols(x, 2 * h, h),
                                 add_bias(matmul(mul(r, state), cell.u_candidate), b_candidate)));
        // (1 − z) ⊙ n + z ⊙ h  ==  n + z ⊙ (h − n)
        Var next = add(candidate, mul(z, sub(state, candidate)));
        const bool all = std::find(mask.begin(), mask.end(), false) == mask.end();
        state = all ? next : where_rows(mask, next, state);
        if (states) states->push_back(state);
    }
    return state;
}

Var ContextEncoder::encode_gru(const Var& rows, std::span<const std::size_t> lengths) const {
    const std::size_t batch = lengths.size();
    const std::size_t steps = *std::max_element(lengths.begin(), lengths.end());
    std::vector<std::size_t> offset(batch);
    for (std::size_t b = 1; b < batch; ++b) offset[b] = offset[b - 1] + lengths[b - 1];

    // Time-major layout, shorter contexts left-padded; padded steps leave the
    // state untouched so each instance sees exactly its own recurrence.
    std::vector<int> fwd_idx(steps * batch, -1), bwd_idx(steps * batch, -1);
    std::vector<std::vector<bool>> active(steps, std::vector<bool>(batch, false));
    for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t pad = steps - lengths[b];
        for (std::size_t t = pad; t < steps; ++t) {
            const std::size_t pos = t - pad;
            fwd_idx[t * batch + b] = static_cast<int>(offset[b] + pos);
            bwd_idx[t * batch + b] = static_cast<int>(offset[b] + lengths[b] - 1 - pos);
            active[t][b] = true;
        }
    }

    auto run_stack = [&](const std::vector<GruCell>& cells, const std::vector<int>& idx) {
        Var inputs = gather_rows(rows, idx);
        Var last;
        for (std::size_t l = 0; l < cells.size(); ++l) {
            std::vector<Var> states;
            const bool more = l + 1 < cells.size();
            last = run_gru(cells[l], inputs, steps, batch, active, more ? &states : nullptr);
            if (more) inputs = concat_rows(states);
        }
        return last;
    };

    Var forward = run_stack(forward_, fwd_idx);
    if (config_.kind == ContextEncoderKind::gru) return forward;
    Var backward = run_stack(backward_, bwd_idx);
    return concat_cols({forward, backward});
}

Var ContextEncoder::encode_cnn(const Var& rows, std::span<const std::size_t> lengths) const {
    const std::size_t k = config_.kernel;
    const std::size_t min_len = 2 * (k - 1) + 1;
    std::vector<Var> pooled;
    std::size_t offset = 0;
    for (auto len : lengths) {
        const std::size_t pad = len < min_len ? min_len - len : 0;
        std::vector<int> idx(pad, -1);
        for (std::size_t i = 0; i < len; ++i) idx.push_back(static_cast<int>(offset + i));
        offset += len;
        Var x = gather_rows(rows, idx);
        Var h1 = relu(conv1d(x, conv1_w_, conv1_b_, k));
        Var h2 = relu(conv1d(h1, conv2_w_, conv2_b_, k));
        pooled.push_back(max_over_rows(h2));
    }
    return pooled.size() == 1 ? pooled.front() : concat_rows(pooled);
}

Tensor sinusoidal_positions(std::size_t length, std::size_t width) {
    Tensor pe({length, width});
    for (std::size_t pos = 0; pos < length; ++pos) {
        for (std::size_t i = 0; i < width; ++i) {
            const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(width));
            const double angle = static_cast<double>(pos) * rate;
            pe.data[pos * width + i] = static_cast<real>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
        }
    }
    return pe;
}

Var ContextEncoder::encode_transformer(const Var& rows, std::span<const std::size_t> lengths,
                                       std::vector<Tensor>* attention) const {
    const std::size_t h = config_.hidden;
    const std::size_t heads = config_.heads;
    const std::size_t head_dim = h / heads;
    const real inv_sqrt = real(1) / std::sqrt(static_cast<real>(head_dim));
    std::vector<Var> outputs;
    std::size_t offset = 0;
    for (auto len : lengths) {
        Var x = add(linear(slice_rows(rows, offset, len), in_proj_w_, in_proj_b_),
                    constant(sinusoidal_positions(len, h)));
        offset += len;
        for (const auto& b : blocks_) {
            Var q = linear(x, b.wq, b.bq);
            Var kk = linear(x, b.wk, b.bk);
            Var v = linear(x, b.wv, b.bv);
            std::vector<Var> head_out;
            for (std::size_t hd = 0; hd < heads; ++hd) {
                Var qh = slice_cols(q, hd * head_dim, head_dim);
                Var kh = slice_cols(kk, hd * head_dim, head_dim);
                Var vh = slice_cols(v, hd * head_dim, head_dim);
                Var weights = softmax_rows(scale(matmul_nt(qh, kh), inv_sqrt));
                if (attention) attention->push_back(weights->value);
                head_out.push_back(matmul(weights, vh));
            }
            Var attended = linear(heads == 1 ? head_out.front() : concat_cols(head_out), b.wo, b.bo);
            x = layer_norm_rows(add(x, attended), b.ln1_gain, b.ln1_bias);
            Var ff = linear(relu(linear(x, b.ff1_w, b.ff1_b)), b.ff2_w, b.ff2_b);
            x = layer_norm_rows(add(x, ff), b.ln2_gain, b.ln2_bias);
        }
        outputs.push_back(linear(slice_rows(x, len - 1, 1), out_proj_w_, out_proj_b_));
    }
    return outputs.size() == 1 ? outputs.front() : concat_rows(outputs);
}

CODECOMP_NN_END
