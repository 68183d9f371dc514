#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "codecomp/ranker.hpp"
#include "codecomp/synth.hpp"
#include "outcome.hpp"

static_assert(std::is_same_v<codecomp::real, double>, "built against the double-precision library");

namespace acceptance {

using namespace codecomp;

namespace {

/// Per-instance cross-entropy straight from the definition: one context
/// encoding, one token encoding per candidate, explicit log-sum-exp.
double unbatched_loss(const CompletionModel& model, const CompletionInstance& inst,
                      const std::vector<std::string>& candidates) {
    const auto c = model.context_encoding(inst);
    const auto& w = model.projection()->value;
    const std::size_t h = w.shape[0], d = w.shape[1];
    std::vector<double> q(d, 0.0);
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < d; ++j) q[j] += c[i] * w.data[i * d + j];
    std::vector<double> logits;
    double target = 0;
    for (const auto& s : candidates) {
        const auto e = model.token_encoder().encode_one(s);
        double logit = 0;
        for (std::size_t j = 0; j < d; ++j) logit += q[j] * e[j];
        logits.push_back(logit);
        if (s == inst.target) target = logit;
    }
    const double top = *std::max_element(logits.begin(), logits.end());
    double z = 0;
    for (double l : logits) z += std::exp(l - top);
    return top + std::log(z) - target;
}

}  // namespace

Outcome segment_equivalence() {
    SynthSpec spec;
    spec.instances = 400;
    const auto corpus = synth_generate(spec);
    std::vector<std::string> pool;
    for (const auto& t : synth_types(spec))
        pool.insert(pool.end(), t.members.begin(), t.members.end());

    ModelConfig config;
    config.token.kind = TokenEncoderKind::subtoken;
    config.token.dim = 16;
    config.context.hidden = 16;
    config.annotate = true;
    const auto model = CompletionModel::build(config, corpus, 3);
    // Spread the logits so the softmax is far from uniform.
    for (auto& v : model.projection()->value.data) v *= 8;

    std::mt19937_64 rng(17);
    double worst = 0;
    std::size_t instances = 0;
    for (int b = 0; b < 100; ++b) {
        const std::size_t batch_size = 1 + rng() % 16;
        std::vector<CompletionInstance> batch;
        std::vector<CandidateSet> sets;
        for (std::size_t i = 0; i < batch_size; ++i) {
            auto inst = corpus[rng() % corpus.size()];
            const std::size_t m = 1 + rng() % 20;
            std::vector<std::string> cands = {inst.target};
            while (cands.size() < m) {
                const auto& s = pool[rng() % pool.size()];
                if (std::find(cands.begin(), cands.end(), s) == cands.end()) cands.push_back(s);
            }
            std::shuffle(cands.begin(), cands.end(), rng);
            inst.candidates = cands;
            sets.push_back({cands, Provenance::stan});
            batch.push_back(std::move(inst));
        }
        double oracle = 0;
        for (std::size_t i = 0; i < batch.size(); ++i) oracle += unbatched_loss(model, batch[i], sets[i].candidates);
        oracle /= static_cast<double>(batch.size());
        const double batched = model.batch_loss(batch, sets)->value.data[0];
        worst = std::max(worst, std::abs(batched - oracle));
        instances += batch.size();
    }
    std::ostringstream detail;
    detail << "100 batches, " << instances << " instances, candidate sets 1..20, max |batched - unbatched| = "
           << worst;
    return {"segment-path equivalence", worst <= 1e-6, detail.str()};
}

}  // namespace acceptance
