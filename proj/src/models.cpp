// Copyright (c) 2026, The Tied-Augment Authors
// SPDX-License-Identifier: Apache-2.0

#include "tiedaug/models.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>

#include "tiedaug/errors.hpp"
#include "tiedaug/rng.hpp"

namespace tiedaug {

namespace {

constexpr char kCheckpointMagic[] = "TIEDCKPT1";
constexpr std::size_t kMagicLength = sizeof(kCheckpointMagic) - 1;

constexpr double kPixelCenter = 0.5;

// Weights: U(±gain·sqrt(3/fan_in)), variance gain²/fan_in. Biases use gain 1/sqrt(3),
// i.e. U(±1/sqrt(fan_in)).
Tensor init_uniform(Shape shape, std::size_t fan_in, double gain, Rng& rng) {
    const double bound = gain * std::sqrt(3.0 / static_cast<double>(fan_in));
    std::vector<double> values(shape_numel(shape));
    for (double& v : values) v = uniform(rng, -bound, bound);
    return Tensor::from(std::move(shape), std::move(values), true);
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void put_f64(std::string& out, double d) {
    const auto bits = std::bit_cast<std::uint64_t>(d);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
}

class ByteReader {
public:
    explicit ByteReader(std::string bytes) : bytes_(std::move(bytes)) {}

    bool done() const { return pos_ == bytes_.size(); }

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }

    double f64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return std::bit_cast<double>(v);
    }

    std::string str(std::size_t n) {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) {
            throw FormatError("checkpoint truncated at byte offset " + std::to_string(pos_));
        }
    }

    std::string bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

void ModelSpec::validate() const {
    if (input.size() != 3 || input[0] == 0 || input[1] == 0 || input[2] == 0)
        throw ConfigError("model: input must be three positive extents C×H×W, got " +
                          shape_string(input));
    if (feature_dim < 1) throw ConfigError("model: feature_dim must be >= 1");
    if (classes < 2) throw ConfigError("model: classes must be >= 2");
    for (std::size_t w : hidden)
        if (w == 0) throw ConfigError("model: hidden widths must be positive");
    if (kind == ModelKind::small_conv) {
        if (conv_channels.size() != 2 || conv_channels[0] == 0 || conv_channels[1] == 0)
            throw ConfigError("model: small_conv needs two positive conv channel counts");
        if (kernel % 2 == 0 || kernel == 0) throw ConfigError("model: kernel must be odd");
        if (input[1] % 4 != 0 || input[2] % 4 != 0)
            throw ConfigError("model: small_conv needs H and W divisible by 4, got " +
                              shape_string(input));
    }
}

Model Model::build(const ModelSpec& spec, std::uint64_t seed) {
    spec.validate();
    Model m;
    m.spec_ = spec;
    Rng rng(seed);
    const double gain = spec.activation == Activation::relu ? std::sqrt(2.0) : 1.0;
    const double bias_gain = 1.0 / std::sqrt(3.0);
    auto dense = [&](const std::string& name, std::size_t in, std::size_t out, double g) {
        m.params_.push_back({name + ".weight", init_uniform({in, out}, in, g, rng)});
        m.params_.push_back({name + ".bias", init_uniform({out}, in, bias_gain, rng)});
    };

    std::size_t width = spec.input_numel();
    if (spec.kind == ModelKind::mlp) {
        for (std::size_t i = 0; i < spec.hidden.size(); ++i) {
            dense("fc" + std::to_string(i), width, spec.hidden[i], gain);
            width = spec.hidden[i];
        }
    } else {
        std::size_t channels = spec.input[0];
        const std::size_t k = spec.kernel;
        for (std::size_t i = 0; i < 2; ++i) {
            const std::size_t out = spec.conv_channels[i];
            const std::size_t fan_in = channels * k * k;
            m.params_.push_back(
                {"conv" + std::to_string(i) + ".weight", init_uniform({out, channels, k, k}, fan_in, gain, rng)});
            m.params_.push_back({"conv" + std::to_string(i) + ".bias", init_uniform({out}, fan_in, bias_gain, rng)});
            channels = out;
        }
        width = channels * (spec.input[1] / 4) * (spec.input[2] / 4);
    }
    dense("feature", width, spec.feature_dim, gain);
    dense("head", spec.feature_dim, spec.classes, 1.0);
    return m;
}

Model Model::clone() const {
    Model m;
    m.spec_ = spec_;
    for (const auto& p : params_) {
        m.params_.push_back({p.name, Tensor::from(p.value.shape(),
                                                  {p.value.data().begin(), p.value.data().end()},
                                                  true)});
    }
    return m;
}

Tensor Model::activate(const Tensor& x) const {
    switch (spec_.activation) {
        case Activation::relu: return relu(x);
        case Activation::tanh: return tanh(x);
        case Activation::identity: return x;
    }
    return x;
}

ModelOutput Model::forward(const Tensor& x) const {
    if (!x.defined() || x.rank() < 1)
        throw ContractError("Model::forward: input must have a batch axis");
    const std::size_t n = x.dim(0);
    const std::size_t per_example = n == 0 ? 0 : x.numel() / n;
    if (per_example != spec_.input_numel() && n != 0)
        throw ContractError("Model::forward: input " + shape_string(x.shape()) +
                            " does not match model input " + shape_string(spec_.input));

    std::size_t next = 0;
    // Centering keeps early relus out of their all-positive linear regime on [0,1] pixels.
    Tensor h = add_scalar(x, -kPixelCenter);
    if (spec_.kind == ModelKind::mlp) {
        h = h.rank() == 2 ? h : flatten_rows(h);
        for (std::size_t i = 0; i < spec_.hidden.size(); ++i, next += 2)
            h = activate(add_row_bias(matmul(h, param(next)), param(next + 1)));
    } else {
        h = h.rank() == 4 ? h : reshape(h, {n, spec_.input[0], spec_.input[1], spec_.input[2]});
        const std::size_t pad = spec_.kernel / 2;
        for (std::size_t i = 0; i < 2; ++i, next += 2)
            h = avg_pool2(activate(conv2d(h, param(next), param(next + 1), pad)));
        h = flatten_rows(h);
    }
    Tensor features = activate(add_row_bias(matmul(h, param(next)), param(next + 1)));
    Tensor logits = add_row_bias(matmul(features, param(next + 2)), param(next + 3));
    return {features, logits};
}

std::size_t Model::parameter_count() const {
    std::size_t total = 0;
    for (const auto& p : params_) total += p.value.numel();
    return total;
}

void Model::zero_grad() {
    for (auto& p : params_) p.value.zero_grad();
}

std::vector<ModelOutput> forward_views(const Model& model, std::span<const Tensor> inputs, ForwardMode mode) {
    std::vector<ModelOutput> outs;
    outs.reserve(inputs.size());
    if (mode == ForwardMode::separate) {
        for (const Tensor& x : inputs) outs.push_back(model.forward(x));
        return outs;
    }
    const ModelOutput joint = model.forward(concat_rows(inputs));
    std::size_t begin = 0;
    for (const Tensor& x : inputs) {
        const std::size_t end = begin + x.dim(0);
        outs.push_back({slice_rows(joint.features, begin, end), slice_rows(joint.logits, begin, end)});
        begin = end;
    }
    return outs;
}

std::vector<int> argmax_rows(const Tensor& logits) {
    if (logits.rank() != 2) throw ContractError("argmax_rows: expected N×C logits");
    const std::size_t rows = logits.dim(0), cols = logits.dim(1);
    std::vector<int> out(rows);
    auto v = logits.data();
    for (std::size_t r = 0; r < rows; ++r) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < cols; ++c)
            if (v[r * cols + c] > v[r * cols + best]) best = c;
        out[r] = static_cast<int>(best);
    }
    return out;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
    std::string out(kCheckpointMagic, kMagicLength);
    for (const auto& p : model.parameters()) {
        put_u32(out, static_cast<std::uint32_t>(p.name.size()));
        out += p.name;
        put_u32(out, static_cast<std::uint32_t>(p.value.rank()));
        for (std::size_t e : p.value.shape()) put_u32(out, static_cast<std::uint32_t>(e));
        for (double d : p.value.data()) put_f64(out, d);
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open checkpoint for writing: " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("failed writing checkpoint: " + path.string());
}

void load_checkpoint(Model& model, const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint: " + path.string());
    ByteReader reader(std::string(std::istreambuf_iterator<char>(f), {}));
    if (reader.str(kMagicLength) != kCheckpointMagic)
        throw FormatError("not a TIEDCKPT1 checkpoint: " + path.string());

    std::vector<std::vector<double>> loaded;
    auto& params = model.parameters();
    while (!reader.done()) {
        const std::size_t index = loaded.size();
        const std::string name = reader.str(reader.u32());
        if (index >= params.size())
            throw FormatError("checkpoint has extra parameter '" + name + "'");
        const Parameter& expected = params[index];
        if (name != expected.name)
            throw FormatError("checkpoint parameter " + std::to_string(index) + " is '" + name +
                              "', model expects '" + expected.name + "'");
        Shape shape(reader.u32());
        for (auto& e : shape) e = reader.u32();
        if (shape != expected.value.shape())
            throw FormatError("checkpoint parameter '" + name + "' has shape " + shape_string(shape) +
                              ", model expects " + shape_string(expected.value.shape()));
        std::vector<double> values(shape_numel(shape));
        for (double& d : values) d = reader.f64();
        loaded.push_back(std::move(values));
    }
    if (loaded.size() != params.size())
        throw FormatError("checkpoint has " + std::to_string(loaded.size()) + " parameters, model expects " +
                          std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto dst = params[i].value.mutable_data();
        std::copy(loaded[i].begin(), loaded[i].end(), dst.begin());
    }
}

}  // namespace tiedaug
