#include "dnetknn/encoder.hpp"

#include "dnetknn/error.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

namespace dnetknn {

namespace {

constexpr char kMagic[4] = {'D', 'N', 'K', 'N'};

template <typename T>
void put_le(std::vector<char>& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
        std::reverse(bytes, bytes + sizeof(T));
    }
    out.insert(out.end(), bytes, bytes + sizeof(T));
}

class Reader {
public:
    Reader(const std::vector<char>& buf, const std::filesystem::path& path) : buf_(buf), path_(path) {}

    template <typename T>
    T get(const char* what) {
        if (pos_ + sizeof(T) > buf_.size()) {
            throw TruncatedError(path_.string() + ": truncated while reading " + what);
        }
        char bytes[sizeof(T)];
        std::memcpy(bytes, buf_.data() + pos_, sizeof(T));
        if constexpr (std::endian::native == std::endian::big) {
            std::reverse(bytes, bytes + sizeof(T));
        }
        pos_ += sizeof(T);
        T value;
        std::memcpy(&value, bytes, sizeof(T));
        return value;
    }

    std::size_t remaining() const { return buf_.size() - pos_; }

private:
    const std::vector<char>& buf_;
    const std::filesystem::path& path_;
    std::size_t pos_ = 0;
};

void apply_activation(Matrix& z, Activation act) {
    if (act == Activation::logistic) {
        z = z.unaryExpr([](double v) { return sigmoid(v); });
    }
}

} // namespace

EncoderParams::EncoderParams(std::vector<Layer> layers) : layers_(std::move(layers)) { validate(); }

EncoderParams EncoderParams::zeros(std::span<const std::size_t> widths) {
    if (widths.size() < 2) {
        throw ConfigError("encoder needs at least an input and an output width");
    }
    std::vector<Layer> layers;
    for (std::size_t t = 0; t + 1 < widths.size(); ++t) {
        if (widths[t] == 0 || widths[t + 1] == 0) {
            throw ConfigError("encoder widths must be positive");
        }
        Layer layer;
        layer.weights = Matrix::Zero(static_cast<Eigen::Index>(widths[t]),
                                     static_cast<Eigen::Index>(widths[t + 1]));
        layer.bias = Vector::Zero(static_cast<Eigen::Index>(widths[t + 1]));
        layer.activation = t + 2 == widths.size() ? Activation::linear : Activation::logistic;
        layers.push_back(std::move(layer));
    }
    return EncoderParams(std::move(layers));
}

EncoderParams EncoderParams::gaussian(std::span<const std::size_t> widths, std::uint64_t seed) {
    EncoderParams params = zeros(widths);
    std::mt19937_64 rng(seed);
    for (auto& layer : params.layers_) {
        std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(layer.inputs())));
        for (Eigen::Index i = 0; i < layer.weights.size(); ++i) {
            layer.weights.data()[i] = normal(rng);
        }
    }
    return params;
}

std::size_t EncoderParams::input_dim() const {
    return layers_.empty() ? 0 : layers_.front().inputs();
}

std::size_t EncoderParams::output_dim() const {
    return layers_.empty() ? 0 : layers_.back().outputs();
}

std::vector<std::size_t> EncoderParams::widths() const {
    std::vector<std::size_t> w;
    if (layers_.empty()) {
        return w;
    }
    w.push_back(layers_.front().inputs());
    for (const auto& layer : layers_) {
        w.push_back(layer.outputs());
    }
    return w;
}

std::size_t EncoderParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& layer : layers_) {
        n += layer.parameter_count();
    }
    return n;
}

void EncoderParams::validate() const {
    if (layers_.empty()) {
        throw ConfigError("encoder has no layers");
    }
    for (std::size_t t = 0; t < layers_.size(); ++t) {
        const Layer& layer = layers_[t];
        if (layer.weights.rows() == 0 || layer.weights.cols() == 0) {
            throw DimensionError("encoder layer " + std::to_string(t) + " has an empty weight matrix");
        }
        if (layer.bias.size() != layer.weights.cols()) {
            throw DimensionError("encoder layer " + std::to_string(t) + ": bias length " +
                                 std::to_string(layer.bias.size()) + " != output width " +
                                 std::to_string(layer.weights.cols()));
        }
        if (t > 0 && layers_[t - 1].outputs() != layer.inputs()) {
            throw DimensionError("encoder layer " + std::to_string(t) + " takes " +
                                 std::to_string(layer.inputs()) + " inputs but layer " +
                                 std::to_string(t - 1) + " produces " +
                                 std::to_string(layers_[t - 1].outputs()));
        }
        if (!layer.weights.allFinite() || !layer.bias.allFinite()) {
            throw DivergenceError("encoder layer " + std::to_string(t) + " has non-finite parameters");
        }
    }
}

bool operator==(const EncoderParams& a, const EncoderParams& b) {
    if (a.layers_.size() != b.layers_.size()) {
        return false;
    }
    for (std::size_t t = 0; t < a.layers_.size(); ++t) {
        const Layer& x = a.layers_[t];
        const Layer& y = b.layers_[t];
        if (x.activation != y.activation || x.weights.rows() != y.weights.rows() ||
            x.weights.cols() != y.weights.cols() || x.bias.size() != y.bias.size() ||
            x.weights != y.weights || x.bias != y.bias) {
            return false;
        }
    }
    return true;
}

EncoderParams from_rbm_stack(std::span<const Rbm> stack) {
    if (stack.empty()) {
        throw ConfigError("from_rbm_stack: empty RBM stack");
    }
    std::vector<Layer> layers;
    for (std::size_t t = 0; t < stack.size(); ++t) {
        if (t > 0 && stack[t - 1].num_hidden() != stack[t].num_visible()) {
            throw DimensionError("from_rbm_stack: RBM " + std::to_string(t) + " has " +
                                 std::to_string(stack[t].num_visible()) + " visible units but RBM " +
                                 std::to_string(t - 1) + " has " +
                                 std::to_string(stack[t - 1].num_hidden()) + " hidden units");
        }
        layers.push_back({stack[t].weights, stack[t].hidden_bias,
                          t + 1 == stack.size() ? Activation::linear : Activation::logistic});
    }
    return EncoderParams(std::move(layers));
}

Matrix forward(const EncoderParams& params, const Matrix& x) {
    if (static_cast<std::size_t>(x.cols()) != params.input_dim()) {
        throw DimensionError("forward: input width " + std::to_string(x.cols()) +
                             " does not match encoder input " + std::to_string(params.input_dim()));
    }
    Matrix a = x;
    for (const auto& layer : params.layers()) {
        Matrix z = a * layer.weights;
        z.rowwise() += layer.bias.transpose();
        apply_activation(z, layer.activation);
        a = std::move(z);
    }
    return a;
}

Matrix forward(const EncoderParams& params, const Matrix& x, ForwardCache& cache) {
    if (static_cast<std::size_t>(x.cols()) != params.input_dim()) {
        throw DimensionError("forward: input width " + std::to_string(x.cols()) +
                             " does not match encoder input " + std::to_string(params.input_dim()));
    }
    cache.activations.clear();
    cache.activations.reserve(params.depth() + 1);
    cache.activations.push_back(x);
    for (const auto& layer : params.layers()) {
        Matrix z = cache.activations.back() * layer.weights;
        z.rowwise() += layer.bias.transpose();
        apply_activation(z, layer.activation);
        cache.activations.push_back(std::move(z));
    }
    return cache.activations.back();
}

std::vector<Layer> backward(const EncoderParams& params, const ForwardCache& cache,
                            const Matrix& code_grad) {
    const auto& acts = cache.activations;
    const auto& layers = params.layers();
    if (acts.size() != layers.size() + 1) {
        throw ConsistencyError("backward: cache holds " + std::to_string(acts.size()) +
                               " activations for a " + std::to_string(layers.size()) +
                               "-layer encoder");
    }
    for (std::size_t t = 0; t < layers.size(); ++t) {
        if (static_cast<std::size_t>(acts[t].cols()) != layers[t].inputs() ||
            static_cast<std::size_t>(acts[t + 1].cols()) != layers[t].outputs() ||
            acts[t].rows() != acts[0].rows() || acts[t + 1].rows() != acts[0].rows()) {
            throw ConsistencyError("backward: cache does not match encoder layer " + std::to_string(t));
        }
    }
    if (code_grad.rows() != acts.back().rows() || code_grad.cols() != acts.back().cols()) {
        throw ConsistencyError("backward: code gradient is " + std::to_string(code_grad.rows()) + "x" +
                               std::to_string(code_grad.cols()) + ", codes are " +
                               std::to_string(acts.back().rows()) + "x" +
                               std::to_string(acts.back().cols()));
    }

    std::vector<Layer> grads(layers.size());
    Matrix delta = code_grad;
    for (std::size_t t = layers.size(); t-- > 0;) {
        if (layers[t].activation == Activation::logistic) {
            const Matrix& a = acts[t + 1];
            delta = delta.cwiseProduct(a.cwiseProduct((1.0 - a.array()).matrix()));
        }
        grads[t].weights = acts[t].transpose() * delta;
        grads[t].bias = delta.colwise().sum().transpose();
        grads[t].activation = layers[t].activation;
        if (t > 0) {
            delta = delta * layers[t].weights.transpose();
        }
    }
    return grads;
}

Vector flatten(std::span<const Layer> layers) {
    std::size_t n = 0;
    for (const auto& layer : layers) {
        n += layer.parameter_count();
    }
    Vector out(static_cast<Eigen::Index>(n));
    double* p = out.data();
    for (const auto& layer : layers) {
        p = std::copy(layer.weights.data(), layer.weights.data() + layer.weights.size(), p);
        p = std::copy(layer.bias.data(), layer.bias.data() + layer.bias.size(), p);
    }
    return out;
}

Vector flatten(const EncoderParams& params) { return flatten(params.layers()); }

EncoderParams unflatten(const EncoderParams& shape, std::span<const double> values) {
    if (values.size() != shape.parameter_count()) {
        throw DimensionError("unflatten: got " + std::to_string(values.size()) +
                             " values, encoder has " + std::to_string(shape.parameter_count()) +
                             " parameters");
    }
    std::vector<Layer> layers = shape.layers();
    const double* p = values.data();
    for (auto& layer : layers) {
        std::copy(p, p + layer.weights.size(), layer.weights.data());
        p += layer.weights.size();
        std::copy(p, p + layer.bias.size(), layer.bias.data());
        p += layer.bias.size();
    }
    return EncoderParams(std::move(layers));
}

std::size_t checkpoint_header_bytes(std::size_t layers) {
    return 4 + 4 + 4 + 4 * (layers + 1) + layers;
}

void save_checkpoint(const EncoderParams& params, const std::filesystem::path& path) {
    params.validate();
    std::vector<char> buf;
    buf.reserve(checkpoint_header_bytes(params.depth()) + 8 * params.parameter_count());
    buf.insert(buf.end(), kMagic, kMagic + 4);
    put_le<std::uint32_t>(buf, kCheckpointVersion);
    put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(params.depth()));
    for (std::size_t w : params.widths()) {
        put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(w));
    }
    for (const auto& layer : params.layers()) {
        buf.push_back(static_cast<char>(layer.activation));
    }
    for (const auto& layer : params.layers()) {
        for (Eigen::Index i = 0; i < layer.weights.size(); ++i) {
            put_le<double>(buf, layer.weights.data()[i]);
        }
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i) {
            put_le<double>(buf, layer.bias[i]);
        }
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) {
        throw IoError("write failed: " + path.string());
    }
}

EncoderParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    const std::vector<char> buf{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    if (buf.size() < 4) {
        throw TruncatedError(path.string() + ": truncated while reading magic");
    }
    if (std::memcmp(buf.data(), kMagic, 4) != 0) {
        throw BadMagicError(path.string() + ": not a DNKN checkpoint (bad magic)");
    }
    std::vector<char> rest(buf.begin() + 4, buf.end());
    Reader r(rest, path);
    const auto version = r.get<std::uint32_t>("version");
    if (version != kCheckpointVersion) {
        throw VersionError(path.string() + ": checkpoint version " + std::to_string(version) +
                           " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
    }
    const auto depth = r.get<std::uint32_t>("layer count");
    if (depth == 0) {
        throw FormatError(path.string() + ": checkpoint declares zero layers");
    }
    if (r.remaining() < 4 * (std::size_t{depth} + 1) + depth) {
        throw TruncatedError(path.string() + ": truncated while reading layer widths");
    }
    std::vector<std::size_t> widths;
    for (std::uint32_t t = 0; t <= depth; ++t) {
        widths.push_back(r.get<std::uint32_t>("layer width"));
        if (widths.back() == 0) {
            throw FormatError(path.string() + ": zero layer width");
        }
    }
    std::vector<Layer> layers(depth);
    for (std::uint32_t t = 0; t < depth; ++t) {
        const auto flag = r.get<std::uint8_t>("activation flag");
        if (flag > 1) {
            throw FormatError(path.string() + ": unknown activation flag " + std::to_string(flag));
        }
        layers[t].activation = static_cast<Activation>(flag);
    }
    std::size_t expected = 0;
    for (std::uint32_t t = 0; t < depth; ++t) {
        expected += widths[t] * widths[t + 1] + widths[t + 1];
    }
    if (r.remaining() < 8 * expected) {
        throw TruncatedError(path.string() + ": truncated parameter payload");
    }
    if (r.remaining() > 8 * expected) {
        throw FormatError(path.string() + ": trailing bytes after parameter payload");
    }
    for (std::uint32_t t = 0; t < depth; ++t) {
        Layer& layer = layers[t];
        layer.weights.resize(static_cast<Eigen::Index>(widths[t]), static_cast<Eigen::Index>(widths[t + 1]));
        layer.bias.resize(static_cast<Eigen::Index>(widths[t + 1]));
        for (Eigen::Index i = 0; i < layer.weights.size(); ++i) {
            layer.weights.data()[i] = r.get<double>("weights");
        }
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i) {
            layer.bias[i] = r.get<double>("bias");
        }
    }
    return EncoderParams(std::move(layers));
}

} // namespace dnetknn
