#pragma once

// ConvMixer forward/backward passes and the toy trainer.
//
// Frozen architecture:
//   blockify -> patch embedding -> GELU -> BN
//   depth x [ a + BN(GELU(depthwise(a))) -> BN(GELU(pointwise(.))) ]
//   global average pool -> linear head

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "orthomix/dataset.hpp"
#include "orthomix/image.hpp"
#include "orthomix/model.hpp"

namespace orthomix {

struct Logits {
    std::vector<double> values;

    /// Index of the largest logit; the lowest index wins exact ties.
    std::size_t argmax() const noexcept;
    /// Difference between the largest and second-largest logit.
    double top2_gap() const noexcept;

    bool operator==(const Logits&) const = default;
};

/// Batch norm uses running statistics (inference) or statistics of the
/// current batch over all samples and spatial positions (training).
enum class NormMode { inference, training };

/// Inference-mode forward pass. Throws DimensionError when the image does
/// not fit the model geometry.
Logits forward(const ConvMixerModel& m, const ImageTensor& x);

std::vector<Logits> forward_batch(const ConvMixerModel& m, std::span<const ImageTensor> xs,
                                  NormMode mode = NormMode::inference);

struct GradientResult {
    /// Mean softmax cross-entropy over the batch.
    double loss = 0.0;
    /// Same shape as the model; running-stat tensors are zero.
    ConvMixerModel gradients;
    std::vector<Logits> logits;
    /// Per batch-norm site, in tensor order: the batch mean and biased
    /// variance (training mode only; empty in inference mode).
    std::vector<std::vector<double>> batch_mean;
    std::vector<std::vector<double>> batch_var;
};

/// Gradients of the mean cross-entropy over a batch.
GradientResult compute_gradients(const ConvMixerModel& m, std::span<const ImageTensor> xs,
                                 std::span<const std::uint32_t> labels, NormMode mode);

/// Single-sample gradients.
GradientResult backward(const ConvMixerModel& m, const ImageTensor& x, std::uint32_t label,
                        NormMode mode = NormMode::inference);

enum class OptimizerKind { adam, sgd };

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    OptimizerKind optimizer = OptimizerKind::adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 1;

    /// Throws Error for a negative learning rate or zero batch size.
    void validate() const;
};

/// Running statistics blend as running = momentum * running + (1 - momentum) * batch.
inline constexpr double batch_norm_momentum = 0.9;

struct EpochStats {
    std::size_t epoch = 0;
    double loss = 0.0;
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;  // NaN when no test set is given

    bool operator==(const EpochStats&) const = default;
};

struct TrainResult {
    ConvMixerModel model;
    std::vector<EpochStats> history;
};

/// Deterministic in config.seed: initialization, shuffling and batch
/// composition are all seeded. Single-threaded update loop. Throws
/// DivergenceError if the loss becomes non-finite.
TrainResult train(const TrainConfig& config, const Dataset& data, const ModelGeometry& geometry,
                  const Dataset* test = nullptr,
                  const std::function<void(const EpochStats&)>& on_epoch = {});

/// Adam or plain SGD over the trainable tensors of a model.
class Optimizer {
public:
    Optimizer(const TrainConfig& config, const ConvMixerModel& shape);
    void apply(ConvMixerModel& m, const ConvMixerModel& gradients);

private:
    TrainConfig config_;
    ConvMixerModel first_moment_;
    ConvMixerModel second_moment_;
    std::size_t step_ = 0;
};

}  // namespace orthomix
