#pragma once

// Central-difference gradient check against the reference loss.

#include <cmath>
#include <string>
#include <vector>

#include "orthomix/engine.hpp"
#include "reference.hpp"

namespace ref {

struct TensorCheck {
    std::string name;
    double relative_error = 0.0;
};

struct GradientCheck {
    double analytic_loss = 0.0;
    double reference_loss = 0.0;
    std::vector<TensorCheck> tensors;
    bool running_stats_zero = true;

    double worst() const {
        double w = 0.0;
        for (const auto& t : tensors) w = std::max(w, t.relative_error);
        return w;
    }
};

/// Per trainable tensor, ||g - g_num|| / (||g|| + ||g_num||), or the plain
/// difference norm when both gradients vanish.
inline GradientCheck check_gradients(const orthomix::ConvMixerModel& model, const std::vector<ImageTensor>& xs,
                                     const std::vector<std::uint32_t>& labels, orthomix::NormMode mode,
                                     double h = 1e-5) {
    using orthomix::TensorRole;
    const bool training = mode == orthomix::NormMode::training;
    orthomix::GradientResult r = orthomix::compute_gradients(model, xs, labels, mode);
    GradientCheck out;
    out.analytic_loss = r.loss;
    out.reference_loss = loss(model, xs, labels, training);

    std::vector<std::span<const double>> grads;
    r.gradients.for_each_tensor([&](const std::string&, std::span<const double> t, TensorRole role) {
        if (role == TensorRole::trainable) {
            grads.push_back(t);
        } else {
            for (double v : t) out.running_stats_zero = out.running_stats_zero && v == 0.0;
        }
    });

    ConvMixerModel probe = model;
    std::vector<std::pair<std::string, std::span<double>>> params;
    probe.for_each_tensor([&](const std::string& name, std::span<double> t, TensorRole role) {
        if (role == TensorRole::trainable) params.emplace_back(name, t);
    });
    for (std::size_t t = 0; t < params.size(); ++t) {
        auto p = params[t].second;
        double diff2 = 0.0, norm_a = 0.0, norm_n = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double saved = p[i];
            p[i] = saved + h;
            const double up = loss(probe, xs, labels, training);
            p[i] = saved - h;
            const double down = loss(probe, xs, labels, training);
            p[i] = saved;
            const double numeric = (up - down) / (2.0 * h);
            diff2 += (grads[t][i] - numeric) * (grads[t][i] - numeric);
            norm_a += grads[t][i] * grads[t][i];
            norm_n += numeric * numeric;
        }
        const double denom = std::sqrt(norm_a) + std::sqrt(norm_n);
        out.tensors.push_back({params[t].first, denom > 1e-12 ? std::sqrt(diff2) / denom : std::sqrt(diff2)});
    }
    return out;
}

}  // namespace ref
