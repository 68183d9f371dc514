#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "codecomp/context_encoders.hpp"

using namespace codecomp;

namespace {

using Vec = std::vector<double>;

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1) {
    std::uniform_real_distribution<double> u(-scale, scale);
    Tensor t(std::move(shape));
    for (auto& v : t.data) v = static_cast<real>(u(rng));
    return t;
}

ContextEncoder make(ContextEncoderKind kind, std::size_t in, std::size_t hidden, std::uint64_t seed = 1) {
    ContextEncoderConfig c;
    c.kind = kind;
    c.input_dim = in;
    c.hidden = hidden;
    c.heads = 2;
    c.ff_multiplier = 2;
    return ContextEncoder::create(c, seed);
}

std::map<std::string, Var> by_name(const ContextEncoder& enc) {
    std::map<std::string, Var> out;
    for (const auto& [name, p] : enc.parameters()) out[name] = p;
    return out;
}

double sigmoid(double x) { return 1 / (1 + std::exp(-x)); }

/// Step-by-step GRU over the rows of `x`, straight from the cell equations.
Vec gru_oracle(const std::map<std::string, Var>& p, const std::string& prefix, const Tensor& x,
               bool reversed) {
    const Tensor& w = p.at(prefix + ".w_input")->value;
    const Tensor& bx = p.at(prefix + ".b_input")->value;
    const Tensor& ug = p.at(prefix + ".u_gates")->value;
    const Tensor& uc = p.at(prefix + ".u_candidate")->value;
    const Tensor& bh = p.at(prefix + ".b_hidden")->value;
    const std::size_t h = uc.shape[0], in = x.cols(), steps = x.rows();
    Vec state(h, 0.0);
    for (std::size_t s = 0; s < steps; ++s) {
        const std::size_t t = reversed ? steps - 1 - s : s;
        Vec next(h);
        for (std::size_t j = 0; j < h; ++j) {
            double az = bx.data[j] + bh.data[j];
            for (std::size_t i = 0; i < in; ++i) {
                az += x.at(t, i) * w.at(i, j);
            }
            for (std::size_t i = 0; i < h; ++i) {
                az += state[i] * ug.at(i, j);
            }
            const double z = sigmoid(az);
            double an = bx.data[2 * h + j] + bh.data[2 * h + j];
            for (std::size_t i = 0; i < in; ++i) an += x.at(t, i) * w.at(i, 2 * h + j);
            // r is recomputed per column so every entry of r ⊙ h is available.
            for (std::size_t i = 0; i < h; ++i) {
                double ari = bx.data[h + i] + bh.data[h + i];
                for (std::size_t q = 0; q < in; ++q) ari += x.at(t, q) * w.at(q, h + i);
                for (std::size_t q = 0; q < h; ++q) ari += state[q] * ug.at(q, h + i);
                an += sigmoid(ari) * state[i] * uc.at(i, j);
            }
            const double n = std::tanh(an);
            next[j] = (1 - z) * n + z * state[j];
        }
        state = next;
    }
    return state;
}

void randomize(const ContextEncoder& enc, std::mt19937_64& rng, double scale) {
    for (const auto& [_, p] : enc.parameters()) p->value = random_tensor(p->value.shape, rng, scale);
}

Tensor rows_of(const Tensor& all, std::size_t begin, std::size_t count) {
    Tensor out({count, all.cols()});
    std::copy(all.data.begin() + static_cast<std::ptrdiff_t>(begin * all.cols()),
              all.data.begin() + static_cast<std::ptrdiff_t>((begin + count) * all.cols()), out.data.begin());
    return out;
}

}  // namespace

TEST_CASE("GRU matches an independent step-by-step loop on ragged batches") {
    std::mt19937_64 rng(1);
    const auto enc = make(ContextEncoderKind::gru, 5, 4);
    randomize(enc, rng, 0.8);
    const auto params = by_name(enc);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::size_t> lengths(1 + rng() % 4);
        std::size_t total = 0;
        for (auto& l : lengths) total += (l = 1 + rng() % 7);
        const Tensor x = random_tensor({total, 5}, rng);
        const auto out = enc.encode(constant(x), lengths)->value;
        std::size_t offset = 0;
        for (std::size_t b = 0; b < lengths.size(); ++b) {
            const auto expected = gru_oracle(params, "context.fwd0", rows_of(x, offset, lengths[b]), false);
            for (std::size_t j = 0; j < 4; ++j) CHECK(out.at(b, j) == doctest::Approx(expected[j]).epsilon(1e-5));
            offset += lengths[b];
        }
    }
}

TEST_CASE("GRU with zero parameters outputs zero and length 1 is one cell step") {
    const auto enc = make(ContextEncoderKind::gru, 3, 4);
    for (const auto& [_, p] : enc.parameters()) std::fill(p->value.data.begin(), p->value.data.end(), real(0));
    std::mt19937_64 rng(2);
    const std::size_t lengths[] = {6};
    const auto out = enc.encode(constant(random_tensor({6, 3}, rng)), lengths)->value;
    for (auto v : out.data) CHECK(v == 0);

    randomize(enc, rng, 1);
    const Tensor one = random_tensor({1, 3}, rng);
    const std::size_t single[] = {1};
    const auto expected = gru_oracle(by_name(enc), "context.fwd0", one, false);
    const auto got = enc.encode(constant(one), single)->value;
    for (std::size_t j = 0; j < 4; ++j) CHECK(got.data[j] == doctest::Approx(expected[j]).epsilon(1e-5));
}

TEST_CASE("GRU states stay inside (-1, 1) at every step") {
    std::mt19937_64 rng(3);
    ParamInit init(4);
    GruCell cell = GruCell::create(3, 5, init);
    for (Var* v : {&cell.w_input, &cell.b_input, &cell.u_gates, &cell.u_candidate, &cell.b_hidden})
        (*v)->value = random_tensor((*v)->value.shape, rng, 1);
    const std::size_t steps = 12, batch = 3;
    std::vector<std::vector<bool>> active(steps, std::vector<bool>(batch, true));
    std::vector<Var> states;
    ContextEncoder::run_gru(cell, constant(random_tensor({steps * batch, 3}, rng, 2)), steps, batch, active, &states);
    REQUIRE(states.size() == steps);
    for (const auto& s : states)
        for (auto v : s->value.data) CHECK(std::abs(v) < 1);
}

TEST_CASE("biGRU is the concatenation of a forward and a reversed oracle") {
    std::mt19937_64 rng(5);
    const auto enc = make(ContextEncoderKind::bigru, 3, 6);
    randomize(enc, rng, 0.8);
    const auto params = by_name(enc);
    const std::size_t lengths[] = {4, 1, 6};
    const Tensor x = random_tensor({11, 3}, rng);
    const auto out = enc.encode(constant(x), lengths)->value;
    REQUIRE(out.cols() == 6);
    std::size_t offset = 0;
    for (std::size_t b = 0; b < 3; ++b) {
        const Tensor seq = rows_of(x, offset, lengths[b]);
        const auto f = gru_oracle(params, "context.fwd0", seq, false);
        const auto r = gru_oracle(params, "context.bwd0", seq, true);
        for (std::size_t j = 0; j < 3; ++j) {
            CHECK(out.at(b, j) == doctest::Approx(f[j]).epsilon(1e-5));
            CHECK(out.at(b, 3 + j) == doctest::Approx(r[j]).epsilon(1e-5));
        }
        offset += lengths[b];
    }
}

TEST_CASE("biGRU with tied directions gives equal halves on a palindrome") {
    std::mt19937_64 rng(6);
    const auto enc = make(ContextEncoderKind::bigru, 2, 4);
    randomize(enc, rng, 0.8);
    auto params = by_name(enc);
    for (const char* part : {".w_input", ".b_input", ".u_gates", ".u_candidate", ".b_hidden"})
        params.at(std::string("context.bwd0") + part)->value = params.at(std::string("context.fwd0") + part)->value;
    const Tensor a = random_tensor({1, 2}, rng), b = random_tensor({1, 2}, rng), c = random_tensor({1, 2}, rng);
    Tensor x({5, 2});
    const Tensor* order[] = {&a, &b, &c, &b, &a};
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 2; ++j) x.at(i, j) = order[i]->data[j];
    const std::size_t lengths[] = {5};
    const auto out = enc.encode(constant(x), lengths)->value;
    for (std::size_t j = 0; j < 2; ++j) CHECK(out.data[j] == out.data[2 + j]);
}

TEST_CASE("biGRU requires an even width") {
    ContextEncoderConfig c;
    c.kind = ContextEncoderKind::bigru;
    c.hidden = 5;
    CHECK_THROWS(c.validate());
    CHECK_THROWS(ContextEncoder::create(c, 1));
}

TEST_CASE("every kind outputs H columns for any length and is deterministic") {
    std::mt19937_64 rng(7);
    for (auto kind : {ContextEncoderKind::gru, ContextEncoderKind::bigru, ContextEncoderKind::cnn,
                      ContextEncoderKind::transformer}) {
        const auto enc = make(kind, 3, 6);
        for (std::size_t len : {1, 2, 5, 80}) {
            const Tensor x = random_tensor({len, 3}, rng);
            const std::size_t lengths[] = {len};
            const auto a = enc.encode(constant(x), lengths)->value;
            CHECK(a.shape == Shape{1, 6});
            CHECK(enc.encode(constant(x), lengths)->value.data == a.data);
        }
    }
}

TEST_CASE("batched encoding equals encoding each context alone") {
    std::mt19937_64 rng(8);
    for (auto kind : {ContextEncoderKind::gru, ContextEncoderKind::bigru, ContextEncoderKind::cnn,
                      ContextEncoderKind::transformer}) {
        const auto enc = make(kind, 3, 4);
        const std::size_t lengths[] = {3, 1, 9};
        const Tensor x = random_tensor({13, 3}, rng);
        const auto together = enc.encode(constant(x), lengths)->value;
        std::size_t offset = 0;
        for (std::size_t b = 0; b < 3; ++b) {
            const std::size_t one[] = {lengths[b]};
            const auto alone = enc.encode(constant(rows_of(x, offset, lengths[b])), one)->value;
            for (std::size_t j = 0; j < 4; ++j) CHECK(together.at(b, j) == doctest::Approx(alone.data[j]).epsilon(1e-6));
            offset += lengths[b];
        }
    }
}

TEST_CASE("CNN pads short contexts with leading zero rows") {
    std::mt19937_64 rng(9);
    const auto enc = make(ContextEncoderKind::cnn, 3, 4);
    randomize(enc, rng, 1);
    const Tensor x = random_tensor({2, 3}, rng);
    Tensor padded({5, 3});
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 3; ++j) padded.at(3 + i, j) = x.at(i, j);
    const std::size_t two[] = {2}, five[] = {5};
    CHECK(enc.encode(constant(x), two)->value.data == enc.encode(constant(padded), five)->value.data);
}

TEST_CASE("CNN features are unchanged by extra leading zeros when windows stay zero") {
    std::mt19937_64 rng(10);
    const auto enc = make(ContextEncoderKind::cnn, 2, 3);
    randomize(enc, rng, 1);
    auto p = by_name(enc);
    for (const char* name : {"context.conv1.bias", "context.conv2.bias"}) {
        auto& data = p.at(name)->value.data;
        std::fill(data.begin(), data.end(), real(0));
    }
    // Four zero rows already lead the context, so new windows see only zeros.
    Tensor x({7, 2});
    for (std::size_t i = 4; i < 7; ++i)
        for (std::size_t j = 0; j < 2; ++j) x.at(i, j) = static_cast<real>(i + j) - real(5.5);
    Tensor longer({10, 2});
    for (std::size_t i = 0; i < 7; ++i)
        for (std::size_t j = 0; j < 2; ++j) longer.at(3 + i, j) = x.at(i, j);
    const std::size_t seven[] = {7}, ten[] = {10};
    CHECK(enc.encode(constant(x), seven)->value.data == enc.encode(constant(longer), ten)->value.data);
}

TEST_CASE("transformer attention rows sum to one") {
    std::mt19937_64 rng(11);
    const auto enc = make(ContextEncoderKind::transformer, 4, 6);
    const std::size_t lengths[] = {5, 2};
    std::vector<Tensor> attention;
    enc.encode(constant(random_tensor({7, 4}, rng)), lengths, &attention);
    REQUIRE_FALSE(attention.empty());
    for (const auto& a : attention) {
        for (std::size_t r = 0; r < a.rows(); ++r) {
            double sum = 0;
            for (std::size_t c = 0; c < a.cols(); ++c) sum += a.at(r, c);
            CHECK(std::abs(sum - 1) <= 1e-6);
        }
    }
}

TEST_CASE("transformer on one token depends only on that token") {
    std::mt19937_64 rng(12);
    const auto enc = make(ContextEncoderKind::transformer, 3, 4);
    const Tensor x = random_tensor({1, 3}, rng);
    const std::size_t one[] = {1};
    const auto a = enc.encode(constant(x), one)->value;
    const Tensor other = random_tensor({1, 3}, rng);
    const std::size_t lengths[] = {1, 1};
    Tensor stacked({2, 3});
    for (std::size_t j = 0; j < 3; ++j) {
        stacked.at(0, j) = x.at(0, j);
        stacked.at(1, j) = other.at(0, j);
    }
    const auto b = enc.encode(constant(stacked), lengths)->value;
    for (std::size_t j = 0; j < 4; ++j) CHECK(b.at(0, j) == doctest::Approx(a.data[j]).epsilon(1e-6));
}

TEST_CASE("sinusoidal positions follow the sine and cosine schedule") {
    const Tensor p = sinusoidal_positions(3, 4);
    CHECK(p.at(0, 0) == 0);
    CHECK(p.at(0, 1) == 1);
    CHECK(p.at(1, 0) == doctest::Approx(std::sin(1.0)));
    CHECK(p.at(1, 1) == doctest::Approx(std::cos(1.0)));
    CHECK(p.at(2, 2) == doctest::Approx(std::sin(2.0 / 100.0)));
}

TEST_CASE("empty contexts are rejected") {
    const auto enc = make(ContextEncoderKind::gru, 2, 2);
    const std::size_t lengths[] = {0};
    CHECK_THROWS(enc.encode(constant(Tensor({1, 2})), lengths));
}

TEST_CASE("configuration round-trips through JSON") {
    ContextEncoderConfig c;
    c.kind = ContextEncoderKind::transformer;
    c.hidden = 32;
    c.heads = 8;
    const auto back = context_encoder_config_from_json(to_json(c));
    CHECK(back.kind == c.kind);
    CHECK(back.hidden == 32);
    CHECK(back.heads == 8);
    CHECK_THROWS(context_encoder_kind_from_string("lstm"));
}
