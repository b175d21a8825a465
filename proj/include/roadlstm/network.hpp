#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "roadlstm/errors.hpp"
#include "roadlstm/layers.hpp"
#include "roadlstm/tensor.hpp"

namespace roadlstm {

enum class LayerKind : std::uint8_t { Conv = 1, DistLstm = 2, Act = 3, Upsample = 4 };

inline const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Conv: return "conv";
        case LayerKind::DistLstm: return "dlstm";
        case LayerKind::Act: return "act";
        case LayerKind::Upsample: return "upsample";
    }
    return "?";
}

// One declarative layer. For conv, in_channels == 0 means "take it from the
// chain"; infer_shapes/Network::init resolve it.
struct LayerSpec {
    LayerKind kind = LayerKind::Conv;
    std::string name;
    ConvSpec conv;
    int hidden_dim = 0;       // DistLstm
    Activation act = Activation::Linear;
    int up_factor = 8;        // Upsample
};

struct NetworkSpec {
    Shape3 input_shape;
    std::vector<LayerSpec> layers;
};

inline LayerSpec conv_spec(std::string name, int kw, int kh, int out_ch, int sw, int sh,
                           Padding pad, int in_ch = 0) {
    LayerSpec l;
    l.kind = LayerKind::Conv;
    l.name = std::move(name);
    l.conv = ConvSpec{kw, kh, in_ch, out_ch, sw, sh, pad};
    return l;
}

inline LayerSpec act_spec(std::string name, Activation a) {
    LayerSpec l;
    l.kind = LayerKind::Act;
    l.name = std::move(name);
    l.act = a;
    return l;
}

inline LayerSpec dlstm_spec(std::string name, int hidden) {
    LayerSpec l;
    l.kind = LayerKind::DistLstm;
    l.name = std::move(name);
    l.hidden_dim = hidden;
    return l;
}

inline LayerSpec upsample_spec(std::string name, int factor) {
    LayerSpec l;
    l.kind = LayerKind::Upsample;
    l.name = std::move(name);
    l.up_factor = factor;
    return l;
}

// Fills chain-derived fields (conv in_channels) and validates the chain.
// Returns the per-layer shape list: element 0 is the input shape, element
// i+1 the output of layer i.
inline std::vector<Shape3> resolve_and_infer(NetworkSpec& spec) {
    check_shape(spec.input_shape, "NetworkSpec input");
    std::vector<Shape3> shapes;
    shapes.push_back(spec.input_shape);
    Shape3 cur = spec.input_shape;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        LayerSpec& l = spec.layers[i];
        try {
            switch (l.kind) {
                case LayerKind::Conv: {
                    if (l.conv.in_channels == 0) l.conv.in_channels = cur.d;
                    cur = conv_output_shape(cur, l.conv);
                    break;
                }
                case LayerKind::DistLstm: {
                    if (l.hidden_dim < 1) throw ShapeError("hidden_dim must be >= 1");
                    cur = Shape3{cur.w, cur.h, l.hidden_dim};
                    break;
                }
                case LayerKind::Act:
                    break;
                case LayerKind::Upsample: {
                    if (cur.h != 1 || cur.d != 1) {
                        throw ShapeError("upsample input must be w x 1 x 1, got " + cur.str());
                    }
                    if (l.up_factor < 1) throw ShapeError("upsample factor must be >= 1");
                    cur = Shape3{cur.w * l.up_factor, 1, 1};
                    break;
                }
            }
        } catch (const Error& e) {
            throw ShapeError("layer '" + l.name + "' (index " + std::to_string(i) +
                             "): " + e.what());
        }
        shapes.push_back(cur);
    }
    return shapes;
}

inline std::vector<Shape3> infer_shapes(const NetworkSpec& spec) {
    NetworkSpec copy = spec;
    return resolve_and_infer(copy);
}

// The road-segmentation architecture: a six-conv encoder that halves the
// map three times, a conv/distributed-LSTM feature processor, and a decoder
// that collapses height and upsamples width back to the input. The final
// sigmoid keeps the boundary vector in [0,1].
inline NetworkSpec build_roadnet() {
    NetworkSpec spec;
    spec.input_shape = Shape3{600, 160, 5};
    auto& L = spec.layers;
    // encoder: three groups, first conv of each group strides 2x2
    L.push_back(conv_spec("Conv1", 3, 3, 64, 2, 2, Padding::Same, 5));
    L.push_back(act_spec("ReLU1", Activation::Relu));
    L.push_back(conv_spec("Conv2", 3, 3, 64, 1, 1, Padding::Same, 64));
    L.push_back(act_spec("ReLU2", Activation::Relu));
    L.push_back(conv_spec("Conv3", 3, 3, 64, 2, 2, Padding::Same, 64));
    L.push_back(act_spec("ReLU3", Activation::Relu));
    L.push_back(conv_spec("Conv4", 3, 3, 64, 1, 1, Padding::Same, 64));
    L.push_back(act_spec("ReLU4", Activation::Relu));
    L.push_back(conv_spec("Conv5", 3, 3, 64, 2, 2, Padding::Same, 64));
    L.push_back(act_spec("ReLU5", Activation::Relu));
    L.push_back(conv_spec("Conv6", 3, 3, 64, 1, 1, Padding::Same, 64));
    L.push_back(act_spec("ReLU6", Activation::Relu));
    // feature processor: conv + distributed LSTM blocks
    L.push_back(conv_spec("Conv7", 3, 3, 64, 1, 1, Padding::Same, 64));
    L.push_back(act_spec("ReLU7", Activation::Relu));
    L.push_back(dlstm_spec("D-LSTM1", 64));
    L.push_back(conv_spec("Conv8", 3, 3, 64, 1, 1, Padding::Same, 64));
    L.push_back(act_spec("ReLU8", Activation::Relu));
    L.push_back(dlstm_spec("D-LSTM2", 64));
    // decoder: collapse height, then widen back to the input width
    L.push_back(conv_spec("Conv9", 1, 5, 64, 1, 5, Padding::Valid, 64));
    L.push_back(act_spec("ReLU9", Activation::Relu));
    L.push_back(conv_spec("Conv10", 1, 4, 1, 1, 4, Padding::Valid, 64));
    L.push_back(upsample_spec("Up-sample", 8));
    L.push_back(act_spec("Sigmoid", Activation::Sigmoid));
    return spec;
}

// ---------------------------------------------------------------------------
// Instantiated network
// ---------------------------------------------------------------------------

struct ActLayer {
    Activation kind = Activation::Linear;
};

using LayerState = std::variant<ConvLayer, DistLstmLayer, ActLayer, UpsampleLayer>;

struct ForwardCache {
    std::vector<Tensor3> inputs;          // input tensor fed to each layer
    std::map<int, LstmCache> lstm;        // per distributed-LSTM layer index
    Tensor3 output;
    bool valid = false;
};

class Network {
public:
    Network() = default;

    // Instantiates weights in layer order with the given generator, so a
    // fixed seed yields a bit-identical network.
    static Network init(const NetworkSpec& spec, Rng& rng) {
        Network net;
        net.spec_ = spec;
        net.shapes_ = resolve_and_infer(net.spec_);
        for (std::size_t i = 0; i < net.spec_.layers.size(); ++i) {
            const LayerSpec& l = net.spec_.layers[i];
            const Shape3& in_shape = net.shapes_[i];
            switch (l.kind) {
                case LayerKind::Conv:
                    net.layers_.emplace_back(ConvLayer::init(l.conv, rng));
                    break;
                case LayerKind::DistLstm:
                    net.layers_.emplace_back(DistLstmLayer::init(in_shape.d, l.hidden_dim, rng));
                    break;
                case LayerKind::Act:
                    net.layers_.emplace_back(ActLayer{l.act});
                    break;
                case LayerKind::Upsample:
                    net.layers_.emplace_back(UpsampleLayer::init(l.up_factor));
                    break;
            }
        }
        net.index_params();
        return net;
    }

    const NetworkSpec& spec() const { return spec_; }
    const std::vector<Shape3>& shapes() const { return shapes_; }
    Shape3 output_shape() const { return shapes_.back(); }
    std::size_t layer_count() const { return layers_.size(); }
    const LayerState& layer(std::size_t i) const { return layers_[i]; }
    LayerState& layer(std::size_t i) { return layers_[i]; }

    std::int64_t param_count() const { return total_params_; }
    std::int64_t layer_param_offset(std::size_t i) const { return param_offsets_[i]; }
    std::int64_t layer_param_count(std::size_t i) const {
        return param_offsets_[i + 1] - param_offsets_[i];
    }

    // Flat parameter order (also the serialized order): per layer, conv
    // weights then bias; LSTM W, U, b; upsample kernel then bias.
    void gather_params(std::vector<double>& out) const {
        out.resize(static_cast<std::size_t>(total_params_));
        double* p = out.data();
        for (const LayerState& ls : layers_) {
            if (const auto* c = std::get_if<ConvLayer>(&ls)) {
                p = copy_out(p, c->weights);
                p = copy_out(p, c->bias);
            } else if (const auto* l = std::get_if<DistLstmLayer>(&ls)) {
                p = copy_out(p, l->W);
                p = copy_out(p, l->U);
                p = copy_out(p, l->b);
            } else if (const auto* u = std::get_if<UpsampleLayer>(&ls)) {
                p = copy_out(p, u->kernel);
                *p++ = u->bias;
            }
        }
    }

    void scatter_params(const std::vector<double>& in) {
        if (static_cast<std::int64_t>(in.size()) != total_params_) {
            throw ShapeError("scatter_params: expected " + std::to_string(total_params_) +
                             " values, got " + std::to_string(in.size()));
        }
        const double* p = in.data();
        for (LayerState& ls : layers_) {
            if (auto* c = std::get_if<ConvLayer>(&ls)) {
                p = copy_in(p, c->weights);
                p = copy_in(p, c->bias);
            } else if (auto* l = std::get_if<DistLstmLayer>(&ls)) {
                p = copy_in(p, l->W);
                p = copy_in(p, l->U);
                p = copy_in(p, l->b);
            } else if (auto* u = std::get_if<UpsampleLayer>(&ls)) {
                p = copy_in(p, u->kernel);
                u->bias = *p++;
            }
        }
    }

    Tensor3 forward(const Tensor3& in, ForwardCache* cache = nullptr) const {
        if (!(in.shape() == spec_.input_shape)) {
            throw ShapeError("forward: input shape " + in.shape().str() + " != spec input " +
                             spec_.input_shape.str());
        }
        if (cache) {
            cache->inputs.clear();
            cache->inputs.reserve(layers_.size());
            cache->lstm.clear();
            cache->valid = false;
        }
        Tensor3 cur = in;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            Tensor3 next;
            const LayerState& ls = layers_[i];
            if (const auto* c = std::get_if<ConvLayer>(&ls)) {
                next = conv_forward(*c, cur);
            } else if (const auto* l = std::get_if<DistLstmLayer>(&ls)) {
                LstmCache* lc = nullptr;
                if (cache) lc = &cache->lstm[static_cast<int>(i)];
                next = dist_lstm_forward(*l, cur, lc);
            } else if (const auto* a = std::get_if<ActLayer>(&ls)) {
                next = activation_forward(a->kind, cur);
            } else {
                next = upsample_forward(std::get<UpsampleLayer>(ls), cur);
            }
            if (cache) cache->inputs.push_back(std::move(cur));
            cur = std::move(next);
        }
        if (cache) {
            cache->output = cur;
            cache->valid = true;
        }
        return cur;
    }

    // Output as the flat boundary vector (the final w x 1 x 1 tensor).
    std::vector<double> forward_vector(const Tensor3& in, ForwardCache* cache = nullptr) const {
        Tensor3 out = forward(in, cache);
        return std::vector<double>(out.data(), out.data() + out.size());
    }

    struct BackwardResult {
        std::vector<double> flat_grads;  // aligned with gather_params order
        Tensor3 grad_input;
    };

    BackwardResult backward(const ForwardCache& cache, const Tensor3& grad_out) const {
        if (!cache.valid || cache.inputs.size() != layers_.size()) {
            throw Error("backward: forward cache missing or stale; run forward with a cache first");
        }
        BackwardResult r;
        r.flat_grads.assign(static_cast<std::size_t>(total_params_), 0.0);
        Tensor3 grad = grad_out;
        for (std::size_t ri = layers_.size(); ri-- > 0;) {
            const Tensor3& input = cache.inputs[ri];
            double* slot = r.flat_grads.data() + param_offsets_[ri];
            const LayerState& ls = layers_[ri];
            if (const auto* c = std::get_if<ConvLayer>(&ls)) {
                ConvGrads g = conv_backward(*c, input, grad);
                std::memcpy(slot, g.grad_weights.data(), g.grad_weights.size() * sizeof(double));
                std::memcpy(slot + g.grad_weights.size(), g.grad_bias.data(),
                            g.grad_bias.size() * sizeof(double));
                grad = std::move(g.grad_in);
            } else if (const auto* l = std::get_if<DistLstmLayer>(&ls)) {
                auto it = cache.lstm.find(static_cast<int>(ri));
                if (it == cache.lstm.end()) throw Error("backward: missing LSTM cache");
                LstmGrads g = dist_lstm_backward(*l, input, it->second, grad);
                double* p = slot;
                std::memcpy(p, g.grad_W.data(), g.grad_W.size() * sizeof(double));
                p += g.grad_W.size();
                std::memcpy(p, g.grad_U.data(), g.grad_U.size() * sizeof(double));
                p += g.grad_U.size();
                std::memcpy(p, g.grad_b.data(), g.grad_b.size() * sizeof(double));
                grad = std::move(g.grad_in);
            } else if (const auto* a = std::get_if<ActLayer>(&ls)) {
                grad = activation_backward(a->kind, input, grad);
            } else {
                UpsampleGrads g = upsample_backward(std::get<UpsampleLayer>(ls), input, grad);
                std::memcpy(slot, g.grad_kernel.data(), g.grad_kernel.size() * sizeof(double));
                slot[g.grad_kernel.size()] = g.grad_bias;
                grad = std::move(g.grad_in);
            }
        }
        r.grad_input = std::move(grad);
        return r;
    }

private:
    static double* copy_out(double* p, const std::vector<double>& v) {
        std::memcpy(p, v.data(), v.size() * sizeof(double));
        return p + v.size();
    }
    static const double* copy_in(const double* p, std::vector<double>& v) {
        std::memcpy(v.data(), p, v.size() * sizeof(double));
        return p + v.size();
    }

    void index_params() {
        param_offsets_.clear();
        std::int64_t off = 0;
        for (const LayerState& ls : layers_) {
            param_offsets_.push_back(off);
            if (const auto* c = std::get_if<ConvLayer>(&ls)) {
                off += static_cast<std::int64_t>(c->weights.size() + c->bias.size());
            } else if (const auto* l = std::get_if<DistLstmLayer>(&ls)) {
                off += static_cast<std::int64_t>(l->W.size() + l->U.size() + l->b.size());
            } else if (const auto* u = std::get_if<UpsampleLayer>(&ls)) {
                off += static_cast<std::int64_t>(u->kernel.size() + 1);
            }
        }
        param_offsets_.push_back(off);
        total_params_ = off;
    }

    NetworkSpec spec_;
    std::vector<Shape3> shapes_;
    std::vector<LayerState> layers_;
    std::vector<std::int64_t> param_offsets_;
    std::int64_t total_params_ = 0;
};

// ---------------------------------------------------------------------------
// Weight serialization
//
// Little-endian byte format:
//   magic "RLSTMSEG" | version u32 | layer count u32 | input shape u32 x3
//   per layer:
//     name length u32 | UTF-8 name bytes | kind tag u8 |
//     geometry u32s (conv: kw kh cin cout sw sh pad; dlstm: cin hidden;
//                    act: kind; upsample: factor) |
//     weight then bias doubles in the in-memory order documented on each
//     layer struct.
// ---------------------------------------------------------------------------

namespace wire {

inline constexpr char kMagic[8] = {'R', 'L', 'S', 'T', 'M', 'S', 'E', 'G'};
inline constexpr std::uint32_t kVersion = 1;

struct Writer {
    std::string buf;
    void u8(std::uint8_t v) { buf.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
    }
    void f64s(const std::vector<double>& v) {
        for (double x : v) f64(x);
    }
    void bytes(const void* p, std::size_t n) {
        buf.append(static_cast<const char*>(p), n);
    }
};

struct Reader {
    const unsigned char* p;
    std::size_t n;
    std::size_t off = 0;

    void need(std::size_t k, const char* what) const {
        if (off + k > n) throw FormatError(std::string("truncated weight file reading ") + what, off);
    }
    std::uint8_t u8(const char* what) {
        need(1, what);
        return p[off++];
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[off + static_cast<std::size_t>(i)]) << (8 * i);
        off += 4;
        return v;
    }
    double f64(const char* what) {
        need(8, what);
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[off + static_cast<std::size_t>(i)]) << (8 * i);
        off += 8;
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    void f64s(std::vector<double>& out, std::size_t count, const char* what) {
        out.resize(count);
        for (std::size_t i = 0; i < count; ++i) out[i] = f64(what);
    }
    std::string str(std::size_t len, const char* what) {
        need(len, what);
        std::string s(reinterpret_cast<const char*>(p + off), len);
        off += len;
        return s;
    }
};

}  // namespace wire

inline void save_weights(const Network& net, const std::string& path) {
    wire::Writer w;
    w.bytes(wire::kMagic, 8);
    w.u32(wire::kVersion);
    w.u32(static_cast<std::uint32_t>(net.layer_count()));
    w.u32(static_cast<std::uint32_t>(net.spec().input_shape.w));
    w.u32(static_cast<std::uint32_t>(net.spec().input_shape.h));
    w.u32(static_cast<std::uint32_t>(net.spec().input_shape.d));
    for (std::size_t i = 0; i < net.layer_count(); ++i) {
        const LayerSpec& ls = net.spec().layers[i];
        w.u32(static_cast<std::uint32_t>(ls.name.size()));
        w.bytes(ls.name.data(), ls.name.size());
        const LayerState& st = net.layer(i);
        if (const auto* c = std::get_if<ConvLayer>(&st)) {
            w.u8(static_cast<std::uint8_t>(LayerKind::Conv));
            w.u32(static_cast<std::uint32_t>(c->spec.kernel_w));
            w.u32(static_cast<std::uint32_t>(c->spec.kernel_h));
            w.u32(static_cast<std::uint32_t>(c->spec.in_channels));
            w.u32(static_cast<std::uint32_t>(c->spec.out_channels));
            w.u32(static_cast<std::uint32_t>(c->spec.stride_w));
            w.u32(static_cast<std::uint32_t>(c->spec.stride_h));
            w.u32(c->spec.padding == Padding::Same ? 0u : 1u);
            w.f64s(c->weights);
            w.f64s(c->bias);
        } else if (const auto* l = std::get_if<DistLstmLayer>(&st)) {
            w.u8(static_cast<std::uint8_t>(LayerKind::DistLstm));
            w.u32(static_cast<std::uint32_t>(l->input_dim));
            w.u32(static_cast<std::uint32_t>(l->hidden_dim));
            w.f64s(l->W);
            w.f64s(l->U);
            w.f64s(l->b);
        } else if (const auto* a = std::get_if<ActLayer>(&st)) {
            w.u8(static_cast<std::uint8_t>(LayerKind::Act));
            w.u32(static_cast<std::uint32_t>(a->kind));
        } else {
            const auto& u = std::get<UpsampleLayer>(st);
            w.u8(static_cast<std::uint8_t>(LayerKind::Upsample));
            w.u32(static_cast<std::uint32_t>(u.factor));
            w.f64s(u.kernel);
            w.f64(u.bias);
        }
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open '" + path + "' for writing");
    f.write(w.buf.data(), static_cast<std::streamsize>(w.buf.size()));
    if (!f) throw DataError("write failed for '" + path + "'");
}

inline Network load_weights(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open weight file '" + path + "'");
    std::string blob((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    wire::Reader r{reinterpret_cast<const unsigned char*>(blob.data()), blob.size()};

    r.need(8, "magic");
    if (std::memcmp(blob.data(), wire::kMagic, 8) != 0) throw FormatError("bad magic", 0);
    r.off = 8;
    const std::uint32_t version = r.u32("version");
    if (version != wire::kVersion) throw FormatError("unsupported version " + std::to_string(version), 8);
    const std::uint32_t layer_count = r.u32("layer count");

    NetworkSpec spec;
    spec.input_shape.w = static_cast<int>(r.u32("input width"));
    spec.input_shape.h = static_cast<int>(r.u32("input height"));
    spec.input_shape.d = static_cast<int>(r.u32("input channels"));

    struct Pending {
        std::vector<double> a, b, c;
        double scalar = 0.0;
    };
    std::vector<Pending> weights(layer_count);

    for (std::uint32_t i = 0; i < layer_count; ++i) {
        const std::uint32_t name_len = r.u32("name length");
        LayerSpec ls;
        ls.name = r.str(name_len, "name");
        const std::uint8_t tag = r.u8("kind tag");
        Pending& pw = weights[i];
        switch (tag) {
            case static_cast<std::uint8_t>(LayerKind::Conv): {
                ls.kind = LayerKind::Conv;
                ls.conv.kernel_w = static_cast<int>(r.u32("kernel_w"));
                ls.conv.kernel_h = static_cast<int>(r.u32("kernel_h"));
                ls.conv.in_channels = static_cast<int>(r.u32("in_channels"));
                ls.conv.out_channels = static_cast<int>(r.u32("out_channels"));
                ls.conv.stride_w = static_cast<int>(r.u32("stride_w"));
                ls.conv.stride_h = static_cast<int>(r.u32("stride_h"));
                ls.conv.padding = r.u32("padding") == 0 ? Padding::Same : Padding::Valid;
                const std::size_t wn = static_cast<std::size_t>(ls.conv.kernel_w) * ls.conv.kernel_h *
                                       ls.conv.in_channels * ls.conv.out_channels;
                r.f64s(pw.a, wn, "conv weights");
                r.f64s(pw.b, static_cast<std::size_t>(ls.conv.out_channels), "conv bias");
                break;
            }
            case static_cast<std::uint8_t>(LayerKind::DistLstm): {
                ls.kind = LayerKind::DistLstm;
                const int cin = static_cast<int>(r.u32("lstm input_dim"));
                ls.hidden_dim = static_cast<int>(r.u32("lstm hidden_dim"));
                const std::size_t g4 = static_cast<std::size_t>(4) * ls.hidden_dim;
                r.f64s(pw.a, static_cast<std::size_t>(cin) * g4, "lstm W");
                r.f64s(pw.b, static_cast<std::size_t>(ls.hidden_dim) * g4, "lstm U");
                r.f64s(pw.c, g4, "lstm b");
                pw.scalar = cin;  // validated against the chain below
                break;
            }
            case static_cast<std::uint8_t>(LayerKind::Act): {
                ls.kind = LayerKind::Act;
                const std::uint32_t a = r.u32("activation kind");
                if (a > 2) throw FormatError("unknown activation kind " + std::to_string(a), r.off - 4);
                ls.act = static_cast<Activation>(a);
                break;
            }
            case static_cast<std::uint8_t>(LayerKind::Upsample): {
                ls.kind = LayerKind::Upsample;
                ls.up_factor = static_cast<int>(r.u32("upsample factor"));
                r.f64s(pw.a, static_cast<std::size_t>(ls.up_factor), "upsample kernel");
                pw.scalar = r.f64("upsample bias");
                break;
            }
            default:
                throw FormatError("unknown layer kind tag " + std::to_string(tag), r.off - 1);
        }
        spec.layers.push_back(std::move(ls));
    }
    if (r.off != blob.size()) {
        throw FormatError("trailing bytes after last layer", r.off);
    }

    Rng rng(0);
    Network net = Network::init(spec, rng);  // validates the chain
    for (std::uint32_t i = 0; i < layer_count; ++i) {
        LayerState& st = net.layer(i);
        Pending& pw = weights[i];
        if (auto* c = std::get_if<ConvLayer>(&st)) {
            c->weights = std::move(pw.a);
            c->bias = std::move(pw.b);
        } else if (auto* l = std::get_if<DistLstmLayer>(&st)) {
            if (l->input_dim != static_cast<int>(pw.scalar)) {
                throw FormatError("lstm layer '" + spec.layers[i].name + "' input_dim " +
                                      std::to_string(static_cast<int>(pw.scalar)) +
                                      " does not match the layer chain (" +
                                      std::to_string(l->input_dim) + ")",
                                  0);
            }
            l->W = std::move(pw.a);
            l->U = std::move(pw.b);
            l->b = std::move(pw.c);
        } else if (auto* u = std::get_if<UpsampleLayer>(&st)) {
            u->kernel = std::move(pw.a);
            u->bias = pw.scalar;
        }
    }
    return net;
}

// ---------------------------------------------------------------------------
// Human-readable spec text. One layer per line; also the accepted arch-file
// syntax, so a dump can be fed back via --arch-file:
//
//   input 600x160x5
//   conv Conv1 3x3x64 stride 2x2 same -> 300x80x64
//   act ReLU1 relu
//   dlstm D-LSTM1 64 -> 75x20x64
//   upsample Up-sample 8
//
// Anything from "->" on is ignored when parsing.
// ---------------------------------------------------------------------------

inline std::string dump_spec(const NetworkSpec& spec) {
    const std::vector<Shape3> shapes = infer_shapes(spec);
    std::ostringstream os;
    os << "input " << spec.input_shape.str() << "\n";
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        switch (l.kind) {
            case LayerKind::Conv:
                os << "conv " << l.name << " " << l.conv.kernel_w << "x" << l.conv.kernel_h << "x"
                   << l.conv.out_channels << " stride " << l.conv.stride_w << "x" << l.conv.stride_h
                   << " " << (l.conv.padding == Padding::Same ? "same" : "valid");
                break;
            case LayerKind::DistLstm:
                os << "dlstm " << l.name << " " << l.hidden_dim;
                break;
            case LayerKind::Act:
                os << "act " << l.name << " " << activation_name(l.act);
                break;
            case LayerKind::Upsample:
                os << "upsample " << l.name << " " << l.up_factor;
                break;
        }
        os << " -> " << shapes[i + 1].str() << "\n";
    }
    return os.str();
}

namespace detail {
inline bool parse_triplet(const std::string& tok, int& a, int& b, int& c) {
    return std::sscanf(tok.c_str(), "%dx%dx%d", &a, &b, &c) == 3;
}
inline bool parse_pair(const std::string& tok, int& a, int& b) {
    return std::sscanf(tok.c_str(), "%dx%d", &a, &b) == 2;
}
}  // namespace detail

inline NetworkSpec parse_arch_text(const std::string& text) {
    NetworkSpec spec;
    bool have_input = false;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    auto fail = [&](const std::string& msg) -> void {
        throw ConfigError("arch file line " + std::to_string(lineno) + ": " + msg);
    };
    while (std::getline(is, line)) {
        ++lineno;
        if (auto pos = line.find("->"); pos != std::string::npos) line.erase(pos);
        std::istringstream ls(line);
        std::vector<std::string> tok;
        std::string t;
        while (ls >> t) tok.push_back(t);
        if (tok.empty() || tok[0][0] == '#') continue;
        if (tok[0] == "input") {
            if (tok.size() != 2) fail("expected: input WxHxC");
            int w, h, d;
            if (!detail::parse_triplet(tok[1], w, h, d)) fail("bad shape '" + tok[1] + "'");
            spec.input_shape = Shape3{w, h, d};
            have_input = true;
        } else if (tok[0] == "conv") {
            if (tok.size() != 6 || tok[3] != "stride")
                fail("expected: conv NAME WxHxOUT stride SWxSH same|valid");
            int kw, kh, out, sw, sh;
            if (!detail::parse_triplet(tok[2], kw, kh, out)) fail("bad kernel '" + tok[2] + "'");
            if (!detail::parse_pair(tok[4], sw, sh)) fail("bad stride '" + tok[4] + "'");
            Padding pad;
            if (tok[5] == "same") pad = Padding::Same;
            else if (tok[5] == "valid") pad = Padding::Valid;
            else { fail("bad padding '" + tok[5] + "' (same|valid)"); return spec; }
            spec.layers.push_back(conv_spec(tok[1], kw, kh, out, sw, sh, pad));
        } else if (tok[0] == "dlstm") {
            if (tok.size() != 3) fail("expected: dlstm NAME HIDDEN");
            spec.layers.push_back(dlstm_spec(tok[1], std::stoi(tok[2])));
        } else if (tok[0] == "act") {
            if (tok.size() != 3) fail("expected: act NAME relu|sigmoid|linear");
            Activation a;
            if (tok[2] == "relu") a = Activation::Relu;
            else if (tok[2] == "sigmoid") a = Activation::Sigmoid;
            else if (tok[2] == "linear") a = Activation::Linear;
            else { fail("bad activation '" + tok[2] + "'"); return spec; }
            spec.layers.push_back(act_spec(tok[1], a));
        } else if (tok[0] == "upsample") {
            if (tok.size() != 3) fail("expected: upsample NAME FACTOR");
            spec.layers.push_back(upsample_spec(tok[1], std::stoi(tok[2])));
        } else {
            fail("unknown layer kind '" + tok[0] + "'");
        }
    }
    if (!have_input) throw ConfigError("arch file: missing 'input WxHxC' line");
    try {
        infer_shapes(spec);
    } catch (const Error& e) {
        throw ConfigError(std::string("arch file: ") + e.what());
    }
    return spec;
}

inline NetworkSpec parse_arch_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open arch file '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_arch_text(text);
}

}  // namespace roadlstm
