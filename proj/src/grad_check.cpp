#include "codecomp/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

CODECOMP_NN_BEGIN

namespace {

std::vector<std::size_t> sample_coordinates(std::size_t size, std::size_t limit, std::mt19937_64& rng) {
    std::vector<std::size_t> coords(size);
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (limit == 0 || limit >= size) return coords;
    for (std::size_t i = 0; i < limit; ++i) {
        const std::size_t j = i + rng() % (size - i);
        std::swap(coords[i], coords[j]);
    }
    coords.resize(limit);
    std::sort(coords.begin(), coords.end());
    return coords;
}

void compare(GradCheckReport& report, real analytic, real numeric, const GradCheckOptions& options,
             const std::string& where) {
    const real denom = std::max({std::abs(analytic), std::abs(numeric), options.floor});
    const real err = std::abs(analytic - numeric) / denom;
    ++report.coordinates_checked;
    if (report.worst_location.empty() || err > report.max_relative_error) {
        report.max_relative_error = err;
        report.worst_location = where;
    }
}

}  // namespace

GradCheckReport grad_check(const std::function<Var(const Var&)>& f, const Tensor& point,
                           const GradCheckOptions& options) {
    Var x = parameter(point);
    return grad_check_parameters([&] { return f(x); }, {{"input", x}}, options);
}

GradCheckReport grad_check_parameters(const std::function<Var()>& loss,
                                      const std::vector<std::pair<std::string, Var>>& params,
                                      const GradCheckOptions& options) {
    GradCheckReport report;
    std::mt19937_64 rng(options.seed);
    Var out = loss();
    backward(out);
    std::vector<Tensor> analytic;
    for (const auto& [name, p] : params) analytic.push_back(p->grad_buffer());

    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        const auto& [name, p] = params[pi];
        for (std::size_t c : sample_coordinates(p->value.size(), options.max_coordinates, rng)) {
            const real saved = p->value.data[c];
            p->value.data[c] = saved + options.epsilon;
            const real up = loss()->value.data[0];
            p->value.data[c] = saved - options.epsilon;
            const real down = loss()->value.data[0];
            p->value.data[c] = saved;
            const real numeric = (up - down) / (real(2) * options.epsilon);
            compare(report, analytic[pi].data[c], numeric, options, name + "[" + std::to_string(c) + "]");
        }
    }
    report.passed = report.max_relative_error < options.tolerance;
    return report;
}

CODECOMP_NN_END
