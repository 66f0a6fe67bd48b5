#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace hfc {

struct Shape3 {
    int c = 0, h = 0, w = 0;
    std::size_t count() const { return std::size_t(c) * std::size_t(h) * std::size_t(w); }
    bool operator==(const Shape3&) const = default;
};

/// One stage of a sequential network. Shapes are wired once via configure;
/// forward/backward then work on raw activation buffers owned by the model.
/// backward accumulates into the parameter gradients (+=) and overwrites
/// din; a null din skips input-gradient computation (first layer).
class Layer {
public:
    virtual ~Layer() = default;
    virtual const char* kind() const = 0;
    virtual Shape3 configure(Shape3 in) = 0;
    virtual void forward(const double* in, double* out) = 0;
    virtual void backward(const double* in, const double* dout, double* din) = 0;
    virtual std::vector<double>* params() { return nullptr; }
    virtual std::vector<double>* grads() { return nullptr; }
    // Xavier fan sizes; zero for parameter-free layers.
    virtual std::size_t fan_in() const { return 0; }
    virtual std::size_t fan_out() const { return 0; }
};

std::unique_ptr<Layer> make_conv3x3(int in_channels, int out_channels);  // bias-free, zero pad 1
std::unique_ptr<Layer> make_relu();
std::unique_ptr<Layer> make_maxpool2();  // 2x2 stride 2, ceil mode (partial edge windows)
std::unique_ptr<Layer> make_flatten();
std::unique_ptr<Layer> make_dense(int out_features);  // bias-free, input from configure

/// Sequential network with cached per-layer activations (enabling partial
/// forward re-evaluation) and Adam state. Move-only.
class Model {
public:
    Model(std::string arch, Shape3 input, std::vector<std::unique_ptr<Layer>> layers);
    Model(Model&&) = default;
    Model& operator=(Model&&) = default;

    const std::string& arch() const { return arch_; }
    Shape3 input_shape() const { return shapes_.front(); }
    int layer_count() const { return int(layers_.size()); }
    Layer& layer(int i) { return *layers_[std::size_t(i)]; }
    const Layer& layer(int i) const { return *layers_[std::size_t(i)]; }
    const std::vector<Shape3>& shapes() const { return shapes_; }
    int num_classes() const { return int(shapes_.back().count()); }

    /// Input side followed by the side of each pooling output.
    std::vector<int> spatial_trace() const;

    /// The final dense layer is the classification head; "core" excludes it.
    std::size_t param_count() const;
    std::size_t core_param_count() const;
    std::vector<std::size_t> core_layer_param_counts() const;
    double core_size_kib(bool single_precision) const;

    const std::vector<double>& forward(const std::vector<double>& input);
    /// Re-runs layers first_layer.. on the cached activations; valid only
    /// after a full forward with the same input.
    const std::vector<double>& forward_from(int first_layer);
    const std::vector<double>& logits() const { return acts_.back(); }
    const std::vector<double>& activation(int i) const { return acts_[std::size_t(i)]; }

    void zero_grads();
    /// Backpropagates d(loss)/d(logits) through the cached activations,
    /// accumulating parameter gradients.
    void backward(const std::vector<double>& dlogits);
    /// One Adam update from the accumulated gradients scaled by grad_scale
    /// (1/batch for a mean over the batch). beta1=0.9, beta2=0.999, eps=1e-8,
    /// bias-corrected.
    void adam_step(double lr, double grad_scale = 1.0);
    void reset_adam();

private:
    std::string arch_;
    std::vector<std::unique_ptr<Layer>> layers_;
    std::vector<Shape3> shapes_;
    std::vector<std::vector<double>> acts_;
    std::vector<std::vector<double>> dacts_;
    struct AdamState {
        std::vector<double> m, v;
    };
    std::vector<AdamState> adam_;
    std::int64_t adam_t_ = 0;
    bool has_forward_ = false;
};

/// conv(1->4)/relu/pool x3 widening to 16 channels, then dense embedding of
/// 32 and a 2-way head. On a 90x90 input the pooled sides run 90/45/23/12
/// and the core holds 75,204 weights.
Model build_net4(int input_side = 90);

/// Single conv(1->4)/relu/pool block, dense embedding of 8, 2-way head.
/// 64,836 core weights on a 90x90 input.
Model build_net2(int input_side = 90);

Model build_model(const std::string& arch, int input_side);  // "net4" | "net2"

/// Xavier-uniform fill of every parameter block in layer order; resets
/// gradients and Adam state.
void init_weights(Model& model, std::uint64_t seed);

/// Rounds every weight through IEEE single precision in place.
void quantize_weights_single(Model& model);

/// Stable softmax cross-entropy in nats; optionally writes d(loss)/d(logits).
double softmax_ce(const std::vector<double>& logits, int label,
                  std::vector<double>* dlogits = nullptr);

/// Versioned little-endian binary checkpoint: architecture tag, provenance
/// seed, input shape, raw double parameter blocks in layer order.
void save_model(const Model& model, const std::string& path, std::uint64_t seed = 0);
Model load_model(const std::string& path, std::uint64_t* seed_out = nullptr);

struct GradCheckReport {
    std::size_t params_checked = 0;
    double max_rel_err = 0.0;
    int worst_layer = -1;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_fd = 0.0;
};

/// Central-difference check of d(loss)/d(theta) against backward for every
/// parameter, reusing cached activations so only layers at and after the
/// perturbed one are re-evaluated. Relative error is
/// |fd - an| / max(|fd|, |an|, tau). A non-negative corrupt_layer makes the
/// comparison read a deliberately wrong analytic value at
/// (corrupt_layer, corrupt_index); the report must then flag it. only_layer
/// restricts the sweep to one layer (-1 sweeps all).
GradCheckReport gradient_check(Model& model, const std::vector<double>& input, int label,
                               double epsilon = 1e-5, double tau = 1e-6, int corrupt_layer = -1,
                               std::size_t corrupt_index = 0, int only_layer = -1);

}  // namespace hfc
