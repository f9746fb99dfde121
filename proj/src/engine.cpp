#include "orthomix/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

#include "orthomix/cipher.hpp"
#include "orthomix/error.hpp"
#include "orthomix/kernels.hpp"
#include "orthomix/rng.hpp"

namespace orthomix {

namespace {

using Maps = std::vector<std::vector<double>>;

double gelu_grad(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
    const double pdf = std::exp(-0.5 * x * x) * (std::numbers::inv_sqrtpi / std::numbers::sqrt2);
    return cdf + x * pdf;
}

struct BnSite {
    Maps xhat;
    std::vector<double> invstd;
    std::vector<double> mean;
    std::vector<double> var;
};

void bn_forward(const BatchNormParams& p, NormMode mode, const Maps& in, Maps& out, BnSite& site,
                std::size_t d) {
    const std::size_t batch = in.size();
    const std::size_t positions = in.front().size() / d;
    if (mode == NormMode::training) {
        const double count = static_cast<double>(batch * positions);
        site.mean.assign(d, 0.0);
        site.var.assign(d, 0.0);
        for (const auto& x : in)
            for (std::size_t i = 0; i < positions; ++i)
                for (std::size_t c = 0; c < d; ++c) site.mean[c] += x[i * d + c];
        for (double& v : site.mean) v /= count;
        for (const auto& x : in)
            for (std::size_t i = 0; i < positions; ++i)
                for (std::size_t c = 0; c < d; ++c) {
                    const double diff = x[i * d + c] - site.mean[c];
                    site.var[c] += diff * diff;
                }
        for (double& v : site.var) v /= count;
    } else {
        site.mean = p.mean;
        site.var = p.var;
    }
    site.invstd.resize(d);
    for (std::size_t c = 0; c < d; ++c) site.invstd[c] = 1.0 / std::sqrt(site.var[c] + batch_norm_epsilon);
    site.xhat.assign(batch, {});
    out.assign(batch, {});
    for (std::size_t s = 0; s < batch; ++s) {
        auto& xh = site.xhat[s];
        auto& y = out[s];
        xh.resize(in[s].size());
        y.resize(in[s].size());
        for (std::size_t i = 0; i < positions; ++i) {
            for (std::size_t c = 0; c < d; ++c) {
                const std::size_t at = i * d + c;
                xh[at] = (in[s][at] - site.mean[c]) * site.invstd[c];
                y[at] = p.gamma[c] * xh[at] + p.beta[c];
            }
        }
    }
}

// Replaces `grad` (dL/dy) by dL/dx and accumulates the scale/shift gradients.
void bn_backward(const BatchNormParams& p, NormMode mode, const BnSite& site, Maps& grad,
                 BatchNormParams& g, std::size_t d) {
    const std::size_t positions = grad.front().size() / d;
    std::vector<double> sum_dxhat(d, 0.0);
    std::vector<double> sum_dxhat_xhat(d, 0.0);
    for (std::size_t s = 0; s < grad.size(); ++s) {
        for (std::size_t i = 0; i < positions; ++i) {
            for (std::size_t c = 0; c < d; ++c) {
                const std::size_t at = i * d + c;
                const double dy = grad[s][at];
                g.gamma[c] += dy * site.xhat[s][at];
                g.beta[c] += dy;
                const double dxhat = dy * p.gamma[c];
                sum_dxhat[c] += dxhat;
                sum_dxhat_xhat[c] += dxhat * site.xhat[s][at];
            }
        }
    }
    const double count = static_cast<double>(grad.size() * positions);
    for (std::size_t s = 0; s < grad.size(); ++s) {
        for (std::size_t i = 0; i < positions; ++i) {
            for (std::size_t c = 0; c < d; ++c) {
                const std::size_t at = i * d + c;
                const double dxhat = grad[s][at] * p.gamma[c];
                if (mode == NormMode::training) {
                    grad[s][at] = site.invstd[c] / count *
                                  (count * dxhat - sum_dxhat[c] - site.xhat[s][at] * sum_dxhat_xhat[c]);
                } else {
                    grad[s][at] = dxhat * site.invstd[c];
                }
            }
        }
    }
}

Maps apply_gelu(const Maps& in) {
    Maps out(in.size());
    for (std::size_t s = 0; s < in.size(); ++s) {
        out[s].resize(in[s].size());
        kernels::gelu(in[s], out[s]);
    }
    return out;
}

struct LayerCache {
    Maps input;
    Maps pre_depthwise;  // depthwise output before GELU
    BnSite bn1;
    Maps residual;       // input + BN1 output
    Maps pre_pointwise;  // pointwise output before GELU
    BnSite bn2;
};

struct ForwardCache {
    std::size_t grid_h = 0;
    std::size_t grid_w = 0;
    std::vector<Matrix> blocks;
    Maps embedded;  // before GELU
    BnSite bn0;
    std::vector<LayerCache> layers;
    Maps pooled;
    std::vector<Logits> logits;
};

void check_inputs(const ConvMixerModel& m, std::span<const ImageTensor> xs) {
    if (xs.empty()) throw DimensionError("forward: empty batch");
    const auto& g = m.geometry;
    for (const auto& x : xs) {
        if (x.channels() != g.channels || x.height() % g.patch != 0 || x.width() % g.patch != 0 ||
            x.height() == 0 || x.width() == 0) {
            throw DimensionError("forward: image " + std::to_string(x.height()) + "x" +
                                 std::to_string(x.width()) + "x" + std::to_string(x.channels()) +
                                 " does not fit patch " + std::to_string(g.patch) + " with " +
                                 std::to_string(g.channels) + " channels");
        }
        if (!x.same_shape(xs.front())) throw DimensionError("forward: images in a batch differ in shape");
    }
}

ForwardCache run_forward(const ConvMixerModel& m, std::span<const ImageTensor> xs, NormMode mode) {
    check_inputs(m, xs);
    const auto& g = m.geometry;
    const std::size_t d = g.dim;
    const std::size_t batch = xs.size();
    ForwardCache cache;
    cache.grid_h = xs.front().height() / g.patch;
    cache.grid_w = xs.front().width() / g.patch;
    const std::size_t positions = cache.grid_h * cache.grid_w;

    cache.blocks.reserve(batch);
    cache.embedded.reserve(batch);
    for (const auto& x : xs) {
        cache.blocks.push_back(blockify(x, g.patch));
        cache.embedded.push_back(patch_embed(cache.blocks.back(), m.patch, cache.grid_h, cache.grid_w).data);
    }
    Maps act;
    bn_forward(m.embed_bn, mode, apply_gelu(cache.embedded), act, cache.bn0, d);

    cache.layers.resize(m.layers.size());
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        const auto& layer = m.layers[l];
        auto& lc = cache.layers[l];
        lc.input = std::move(act);
        lc.pre_depthwise.assign(batch, std::vector<double>(positions * d));
        for (std::size_t s = 0; s < batch; ++s) {
            kernels::depthwise_conv(lc.input[s], layer.depthwise, layer.depthwise_bias, lc.pre_depthwise[s],
                                    cache.grid_h, cache.grid_w, d, g.kernel);
        }
        Maps normed;
        bn_forward(layer.bn1, mode, apply_gelu(lc.pre_depthwise), normed, lc.bn1, d);
        lc.residual = lc.input;
        lc.pre_pointwise.assign(batch, std::vector<double>(positions * d));
        for (std::size_t s = 0; s < batch; ++s) {
            for (std::size_t i = 0; i < lc.residual[s].size(); ++i) lc.residual[s][i] += normed[s][i];
            kernels::gemm_bt(lc.residual[s], layer.pointwise.data(), layer.pointwise_bias, lc.pre_pointwise[s],
                             positions, d, d);
        }
        bn_forward(layer.bn2, mode, apply_gelu(lc.pre_pointwise), act, lc.bn2, d);
    }

    cache.pooled.assign(batch, std::vector<double>(d, 0.0));
    cache.logits.resize(batch);
    for (std::size_t s = 0; s < batch; ++s) {
        auto& pooled = cache.pooled[s];
        for (std::size_t i = 0; i < positions; ++i)
            for (std::size_t c = 0; c < d; ++c) pooled[c] += act[s][i * d + c];
        for (double& v : pooled) v /= static_cast<double>(positions);
        cache.logits[s].values.resize(g.classes);
        kernels::gemm_bt(pooled, m.head.data(), m.head_bias, cache.logits[s].values, 1, d, g.classes);
    }
    return cache;
}

}  // namespace

std::size_t Logits::argmax() const noexcept {
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i)
        if (values[i] > values[best]) best = i;
    return best;
}

double Logits::top2_gap() const noexcept {
    if (values.size() < 2) return std::numeric_limits<double>::infinity();
    double first = -std::numeric_limits<double>::infinity();
    double second = first;
    for (double v : values) {
        if (v > first) {
            second = first;
            first = v;
        } else if (v > second) {
            second = v;
        }
    }
    return first - second;
}

Logits forward(const ConvMixerModel& m, const ImageTensor& x) {
    return std::move(run_forward(m, std::span(&x, 1), NormMode::inference).logits.front());
}

std::vector<Logits> forward_batch(const ConvMixerModel& m, std::span<const ImageTensor> xs, NormMode mode) {
    return run_forward(m, xs, mode).logits;
}

GradientResult compute_gradients(const ConvMixerModel& m, std::span<const ImageTensor> xs,
                                 std::span<const std::uint32_t> labels, NormMode mode) {
    if (labels.size() != xs.size()) throw DimensionError("compute_gradients: label count differs from batch");
    for (auto label : labels) {
        if (label >= m.geometry.classes) throw DimensionError("compute_gradients: label out of range");
    }
    ForwardCache cache = run_forward(m, xs, mode);
    const auto& g = m.geometry;
    const std::size_t d = g.dim;
    const std::size_t batch = xs.size();
    const std::size_t positions = cache.grid_h * cache.grid_w;
    const std::size_t k = g.kernel;
    const auto radius = static_cast<std::ptrdiff_t>(k / 2);
    const auto gh = static_cast<std::ptrdiff_t>(cache.grid_h);
    const auto gw = static_cast<std::ptrdiff_t>(cache.grid_w);

    GradientResult result;
    result.gradients = ConvMixerModel(g);
    ConvMixerModel& grad = result.gradients;
    grad.encrypted = m.encrypted;
    grad.for_each_tensor([](const std::string&, std::span<double> t, TensorRole) {
        std::fill(t.begin(), t.end(), 0.0);
    });

    // Softmax cross-entropy.
    Maps act_grad(batch, std::vector<double>(positions * d, 0.0));
    for (std::size_t s = 0; s < batch; ++s) {
        const auto& z = cache.logits[s].values;
        const double zmax = *std::max_element(z.begin(), z.end());
        double denom = 0.0;
        for (double v : z) denom += std::exp(v - zmax);
        result.loss += (std::log(denom) + zmax - z[labels[s]]) / static_cast<double>(batch);

        std::vector<double> dlogits(g.classes);
        for (std::size_t c = 0; c < g.classes; ++c) {
            dlogits[c] = (std::exp(z[c] - zmax) / denom - (c == labels[s] ? 1.0 : 0.0)) /
                         static_cast<double>(batch);
        }
        std::vector<double> dpooled(d, 0.0);
        for (std::size_t c = 0; c < g.classes; ++c) {
            grad.head_bias[c] += dlogits[c];
            for (std::size_t j = 0; j < d; ++j) {
                grad.head(c, j) += dlogits[c] * cache.pooled[s][j];
                dpooled[j] += dlogits[c] * m.head(c, j);
            }
        }
        for (std::size_t i = 0; i < positions; ++i)
            for (std::size_t j = 0; j < d; ++j)
                act_grad[s][i * d + j] = dpooled[j] / static_cast<double>(positions);
    }

    for (std::size_t l = m.layers.size(); l-- > 0;) {
        const auto& layer = m.layers[l];
        const auto& lc = cache.layers[l];
        auto& gl = grad.layers[l];

        bn_backward(layer.bn2, mode, lc.bn2, act_grad, gl.bn2, d);
        Maps residual_grad(batch, std::vector<double>(positions * d, 0.0));
        for (std::size_t s = 0; s < batch; ++s) {
            auto& dv = act_grad[s];
            for (std::size_t i = 0; i < dv.size(); ++i) dv[i] *= gelu_grad(lc.pre_pointwise[s][i]);
            for (std::size_t i = 0; i < positions; ++i) {
                for (std::size_t o = 0; o < d; ++o) {
                    const double dvo = dv[i * d + o];
                    gl.pointwise_bias[o] += dvo;
                    for (std::size_t in = 0; in < d; ++in) {
                        gl.pointwise(o, in) += dvo * lc.residual[s][i * d + in];
                        residual_grad[s][i * d + in] += dvo * layer.pointwise(o, in);
                    }
                }
            }
        }

        // The residual branch passes the gradient straight to the layer input;
        // the other copy flows back through BN1 and the depthwise conv.
        Maps branch = residual_grad;
        bn_backward(layer.bn1, mode, lc.bn1, branch, gl.bn1, d);
        for (std::size_t s = 0; s < batch; ++s) {
            auto& dt = branch[s];
            for (std::size_t i = 0; i < dt.size(); ++i) dt[i] *= gelu_grad(lc.pre_depthwise[s][i]);
            const auto& in = lc.input[s];
            auto& din = residual_grad[s];
            for (std::ptrdiff_t y = 0; y < gh; ++y) {
                for (std::ptrdiff_t x = 0; x < gw; ++x) {
                    for (std::size_t c = 0; c < d; ++c) {
                        const double dtv = dt[static_cast<std::size_t>(y * gw + x) * d + c];
                        gl.depthwise_bias[c] += dtv;
                        for (std::size_t dy = 0; dy < k; ++dy) {
                            const std::ptrdiff_t sy = y + static_cast<std::ptrdiff_t>(dy) - radius;
                            if (sy < 0 || sy >= gh) continue;
                            for (std::size_t dx = 0; dx < k; ++dx) {
                                const std::ptrdiff_t sx = x + static_cast<std::ptrdiff_t>(dx) - radius;
                                if (sx < 0 || sx >= gw) continue;
                                const std::size_t src = static_cast<std::size_t>(sy * gw + sx) * d + c;
                                const std::size_t widx = (c * k + dy) * k + dx;
                                gl.depthwise[widx] += dtv * in[src];
                                din[src] += dtv * layer.depthwise[widx];
                            }
                        }
                    }
                }
            }
        }
        act_grad = std::move(residual_grad);
    }

    bn_backward(m.embed_bn, mode, cache.bn0, act_grad, grad.embed_bn, d);
    const std::size_t n = g.block_dim();
    for (std::size_t s = 0; s < batch; ++s) {
        auto& dz = act_grad[s];
        for (std::size_t i = 0; i < dz.size(); ++i) dz[i] *= gelu_grad(cache.embedded[s][i]);
        const Matrix& blocks = cache.blocks[s];
        for (std::size_t i = 0; i < positions; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
                const double dzj = dz[i * d + j];
                grad.patch.bias[j] += dzj;
                for (std::size_t r = 0; r < n; ++r) grad.patch.e(r, j) += blocks(i, r) * dzj;
            }
        }
    }

    // Running-stat slots of the gradient model carry no meaning; keep them zero.
    grad.for_each_tensor([](const std::string&, std::span<double> t, TensorRole role) {
        if (role == TensorRole::running_stat) std::fill(t.begin(), t.end(), 0.0);
    });
    if (mode == NormMode::training) {
        result.batch_mean.push_back(cache.bn0.mean);
        result.batch_var.push_back(cache.bn0.var);
        for (const auto& lc : cache.layers) {
            result.batch_mean.push_back(lc.bn1.mean);
            result.batch_var.push_back(lc.bn1.var);
            result.batch_mean.push_back(lc.bn2.mean);
            result.batch_var.push_back(lc.bn2.var);
        }
    }
    result.logits = std::move(cache.logits);
    return result;
}

GradientResult backward(const ConvMixerModel& m, const ImageTensor& x, std::uint32_t label, NormMode mode) {
    return compute_gradients(m, std::span(&x, 1), std::span(&label, 1), mode);
}

void TrainConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw Error("train config: learning rate must be finite and non-negative");
    }
    if (batch_size == 0) throw Error("train config: batch size must be at least 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && epsilon > 0.0)) {
        throw Error("train config: Adam parameters out of range");
    }
}

Optimizer::Optimizer(const TrainConfig& config, const ConvMixerModel& shape)
    : config_(config), first_moment_(shape.geometry), second_moment_(shape.geometry) {
    for (auto* moment : {&first_moment_, &second_moment_}) {
        moment->for_each_tensor([](const std::string&, std::span<double> t, TensorRole) {
            std::fill(t.begin(), t.end(), 0.0);
        });
    }
}

void Optimizer::apply(ConvMixerModel& m, const ConvMixerModel& gradients) {
    std::vector<std::span<double>> params, m1, m2;
    std::vector<std::span<const double>> grads;
    std::vector<TensorRole> roles;
    m.for_each_tensor([&](const std::string&, std::span<double> t, TensorRole role) {
        params.push_back(t);
        roles.push_back(role);
    });
    gradients.for_each_tensor([&](const std::string&, std::span<const double> t, TensorRole) { grads.push_back(t); });
    first_moment_.for_each_tensor([&](const std::string&, std::span<double> t, TensorRole) { m1.push_back(t); });
    second_moment_.for_each_tensor([&](const std::string&, std::span<double> t, TensorRole) { m2.push_back(t); });
    if (grads.size() != params.size()) throw DimensionError("optimizer: gradient shape differs from model");

    ++step_;
    const double lr = config_.learning_rate;
    const double correction1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
    const double correction2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
    for (std::size_t t = 0; t < params.size(); ++t) {
        if (roles[t] != TensorRole::trainable) continue;
        auto p = params[t];
        const auto gr = grads[t];
        if (gr.size() != p.size()) throw DimensionError("optimizer: gradient shape differs from model");
        if (config_.optimizer == OptimizerKind::sgd) {
            for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * gr[i];
            continue;
        }
        auto mt = m1[t];
        auto vt = m2[t];
        for (std::size_t i = 0; i < p.size(); ++i) {
            mt[i] = config_.beta1 * mt[i] + (1.0 - config_.beta1) * gr[i];
            vt[i] = config_.beta2 * vt[i] + (1.0 - config_.beta2) * gr[i] * gr[i];
            const double mhat = mt[i] / correction1;
            const double vhat = vt[i] / correction2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + config_.epsilon);
        }
    }
}

namespace {

double plain_accuracy(const ConvMixerModel& m, const Dataset& data) {
    if (data.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i)
        if (forward(m, data.images[i]).argmax() == data.labels[i]) ++correct;
    return 100.0 * static_cast<double>(correct) / static_cast<double>(data.size());
}

void update_running_stats(ConvMixerModel& m, const GradientResult& r) {
    std::size_t site = 0;
    auto blend = [&](BatchNormParams& bn) {
        for (std::size_t c = 0; c < bn.mean.size(); ++c) {
            bn.mean[c] = batch_norm_momentum * bn.mean[c] + (1.0 - batch_norm_momentum) * r.batch_mean[site][c];
            bn.var[c] = batch_norm_momentum * bn.var[c] + (1.0 - batch_norm_momentum) * r.batch_var[site][c];
        }
        ++site;
    };
    blend(m.embed_bn);
    for (auto& layer : m.layers) {
        blend(layer.bn1);
        blend(layer.bn2);
    }
}

}  // namespace

TrainResult train(const TrainConfig& config, const Dataset& data, const ModelGeometry& geometry,
                  const Dataset* test, const std::function<void(const EpochStats&)>& on_epoch) {
    config.validate();
    geometry.validate();
    if (data.empty()) throw Error("train: dataset is empty");
    data.validate();
    if (data.classes > geometry.classes) throw DimensionError("train: dataset has more classes than the model");

    TrainResult result{init_model(geometry, config.seed), {}};
    ConvMixerModel& model = result.model;
    Optimizer optimizer(config, model);
    SplitMix64 shuffle_rng(config.seed ^ 0x6A09E667F3BCC909ULL);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    std::vector<ImageTensor> batch_images;
    std::vector<std::uint32_t> batch_labels;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[shuffle_rng.below(i + 1)]);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            batch_images.clear();
            batch_labels.clear();
            for (std::size_t i = start; i < end; ++i) {
                batch_images.push_back(data.images[order[i]]);
                batch_labels.push_back(data.labels[order[i]]);
            }
            GradientResult r = compute_gradients(model, batch_images, batch_labels, NormMode::training);
            if (!std::isfinite(r.loss)) {
                throw DivergenceError("train: loss became non-finite in epoch " + std::to_string(epoch));
            }
            loss_sum += r.loss * static_cast<double>(end - start);
            optimizer.apply(model, r.gradients);
            update_running_stats(model, r);
        }
        EpochStats stats{epoch, loss_sum / static_cast<double>(data.size()), plain_accuracy(model, data),
                         test ? plain_accuracy(model, *test) : std::numeric_limits<double>::quiet_NaN()};
        result.history.push_back(stats);
        if (on_epoch) on_epoch(stats);
    }
    return result;
}

}  // namespace orthomix
