#pragma once

#include "dnetknn/rbm.hpp"
#include "dnetknn/types.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

namespace dnetknn {

enum class Activation : std::uint8_t {
    logistic = 0,
    linear = 1,
};

// y = act(x W + b), x a row vector. weights is in x out.
struct Layer {
    Matrix weights;
    Vector bias;
    Activation activation = Activation::logistic;

    std::size_t inputs() const { return static_cast<std::size_t>(weights.rows()); }
    std::size_t outputs() const { return static_cast<std::size_t>(weights.cols()); }
    std::size_t parameter_count() const { return inputs() * outputs() + outputs(); }
};

// The encoder f: R^D -> R^d. Hidden layers are logistic and the code layer is
// linear.
class EncoderParams {
public:
    EncoderParams() = default;
    explicit EncoderParams(std::vector<Layer> layers);

    // Logistic hidden layers, linear top layer, N(0, 1/fan_in) weights.
    static EncoderParams gaussian(std::span<const std::size_t> widths, std::uint64_t seed);
    static EncoderParams zeros(std::span<const std::size_t> widths);

    const std::vector<Layer>& layers() const { return layers_; }
    std::vector<Layer>& layers() { return layers_; }
    std::size_t depth() const { return layers_.size(); }
    std::size_t input_dim() const;
    std::size_t output_dim() const;
    std::vector<std::size_t> widths() const;
    std::size_t parameter_count() const;

    // Shape chaining and finiteness.
    void validate() const;

    friend bool operator==(const EncoderParams& a, const EncoderParams& b);

private:
    std::vector<Layer> layers_;
};

// Layer t takes Rbm t's weights and hidden bias; visible biases are dropped.
// The last layer becomes the linear code layer.
EncoderParams from_rbm_stack(std::span<const Rbm> stack);

// Activations of every layer from the last forward pass, input included.
struct ForwardCache {
    std::vector<Matrix> activations;
};

Matrix forward(const EncoderParams& params, const Matrix& x);
Matrix forward(const EncoderParams& params, const Matrix& x, ForwardCache& cache);

// Reverse-mode pass: gradient of sum(code_grad .* codes) with respect to
// every layer's weights and bias. Returned layers mirror the parameter shapes.
std::vector<Layer> backward(const EncoderParams& params, const ForwardCache& cache,
                            const Matrix& code_grad);

// Layer-major; within a layer the row-major weights then the bias.
Vector flatten(const EncoderParams& params);
Vector flatten(std::span<const Layer> layers);
EncoderParams unflatten(const EncoderParams& shape, std::span<const double> values);

// Binary checkpoint:
//   "DNKN" | u32 version = 1 | u32 L | u32 widths[L+1] | u8 activation[L]
//   | per layer: f64 weights (row-major), f64 bias
// All integers and floats little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;
std::size_t checkpoint_header_bytes(std::size_t layers);
void save_checkpoint(const EncoderParams& params, const std::filesystem::path& path);
EncoderParams load_checkpoint(const std::filesystem::path& path);

} // namespace dnetknn
