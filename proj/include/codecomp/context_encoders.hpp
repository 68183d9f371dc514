#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "codecomp/autodiff.hpp"
#include "codecomp/init.hpp"
#include "codecomp/token_encoders.hpp"

CODECOMP_NN_BEGIN

enum class ContextEncoderKind { gru, bigru, cnn, transformer };

std::string to_string(ContextEncoderKind kind);
ContextEncoderKind context_encoder_kind_from_string(std::string_view name);

struct ContextEncoderConfig {
    ContextEncoderKind kind = ContextEncoderKind::gru;
    std::size_t input_dim = 64;   // D, or D+1 with the receiver bit
    std::size_t hidden = 64;      // H
    std::size_t layers = 1;       // recurrent / transformer depth
    std::size_t kernel = 3;       // CNN kernel width (two stacked layers)
    std::size_t heads = 4;
    std::size_t ff_multiplier = 4;

    void validate() const;
};

nlohmann::json to_json(const ContextEncoderConfig& config);
ContextEncoderConfig context_encoder_config_from_json(const nlohmann::json& j);

/// Parameters of one GRU direction/layer:
///   z = σ(x W_z + b_xz + h U_z + b_hz)
///   r = σ(x W_r + b_xr + h U_r + b_hr)
///   n = tanh(x W_n + b_xn + (r ⊙ h) U_n + b_hn)
///   h' = (1 − z) ⊙ n + z ⊙ h
struct GruCell {
    Var w_input;      // [in × 3H]  (z | r | n)
    Var b_input;      // [3H]
    Var u_gates;      // [H × 2H]   (z | r)
    Var u_candidate;  // [H × H]
    Var b_hidden;     // [3H]

    static GruCell create(std::size_t input, std::size_t hidden, ParamInit& init);
    std::size_t hidden() const { return u_candidate->value.shape[0]; }
};

/// Encodes the context token rows of a batch into one H-vector per instance.
class ContextEncoder {
public:
    ContextEncoder() = default;
    static ContextEncoder create(const ContextEncoderConfig& config, std::uint64_t seed);

    /// `rows` holds the token encodings of all instances back to back
    /// ([Σ lengths × input_dim]); returns [batch × H]. Every length must be
    /// at least 1. When `attention` is given, transformer attention matrices
    /// are appended to it.
    Var encode(const Var& rows, std::span<const std::size_t> lengths,
               std::vector<Tensor>* attention = nullptr) const;

    const ContextEncoderConfig& config() const { return config_; }
    std::size_t hidden() const { return config_.hidden; }
    NamedParameters parameters() const;

    /// Recurrence of one direction over a time-major padded batch.
    static Var run_gru(const GruCell& cell, const Var& inputs, std::size_t steps, std::size_t batch,
                       const std::vector<std::vector<bool>>& active, std::vector<Var>* states);

private:
    Var encode_gru(const Var& rows, std::span<const std::size_t> lengths) const;
    Var encode_cnn(const Var& rows, std::span<const std::size_t> lengths) const;
    Var encode_transformer(const Var& rows, std::span<const std::size_t> lengths,
                           std::vector<Tensor>* attention) const;

    struct TransformerLayer {
        Var wq, bq, wk, bk, wv, bv, wo, bo;
        Var ln1_gain, ln1_bias, ln2_gain, ln2_bias;
        Var ff1_w, ff1_b, ff2_w, ff2_b;
    };

    ContextEncoderConfig config_;
    std::vector<GruCell> forward_;   // one per layer
    std::vector<GruCell> backward_;  // biGRU only
    Var conv1_w_, conv1_b_, conv2_w_, conv2_b_;
    Var in_proj_w_, in_proj_b_, out_proj_w_, out_proj_b_;
    std::vector<TransformerLayer> blocks_;
};

/// Sinusoidal position table [length × width].
Tensor sinusoidal_positions(std::size_t length, std::size_t width);

CODECOMP_NN_END
