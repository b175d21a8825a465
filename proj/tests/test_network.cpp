#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "roadlstm/analysis.hpp"
#include "roadlstm/network.hpp"

using namespace roadlstm;

namespace {

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

// Small chain exercising every layer kind; output width 16.
NetworkSpec tiny_spec() {
    NetworkSpec spec;
    spec.input_shape = Shape3{16, 8, 2};
    spec.layers.push_back(conv_spec("c1", 3, 3, 4, 2, 2, Padding::Same));
    spec.layers.push_back(act_spec("r1", Activation::Relu));
    spec.layers.push_back(dlstm_spec("l1", 3));
    spec.layers.push_back(conv_spec("c2", 1, 4, 2, 1, 4, Padding::Valid));
    spec.layers.push_back(act_spec("r2", Activation::Relu));
    spec.layers.push_back(conv_spec("c3", 1, 1, 1, 1, 1, Padding::Same));
    spec.layers.push_back(upsample_spec("u1", 2));
    spec.layers.push_back(act_spec("s1", Activation::Sigmoid));
    return spec;
}

}  // namespace

TEST_CASE("roadnet shape chain follows the architecture table", "[network]") {
    NetworkSpec spec = build_roadnet();
    const std::vector<Shape3> shapes = infer_shapes(spec);
    REQUIRE(shapes.size() == spec.layers.size() + 1);
    CHECK(shapes[0] == Shape3{600, 160, 5});

    auto out_of = [&](const std::string& name) {
        for (std::size_t i = 0; i < spec.layers.size(); ++i)
            if (spec.layers[i].name == name) return shapes[i + 1];
        FAIL("layer not found: " << name);
        return Shape3{};
    };
    // spatial halving happens exactly three times
    CHECK(out_of("Conv1") == Shape3{300, 80, 64});
    CHECK(out_of("Conv3") == Shape3{150, 40, 64});
    CHECK(out_of("Conv5") == Shape3{75, 20, 64});
    CHECK(out_of("Conv6") == Shape3{75, 20, 64});
    CHECK(out_of("D-LSTM2") == Shape3{75, 20, 64});
    CHECK(out_of("Conv9") == Shape3{75, 4, 64});
    CHECK(out_of("Conv10") == Shape3{75, 1, 1});
    CHECK(out_of("Up-sample") == Shape3{600, 1, 1});
    CHECK(shapes.back() == Shape3{600, 1, 1});
}

TEST_CASE("infer_shapes edge cases", "[network]") {
    NetworkSpec empty;
    empty.input_shape = Shape3{10, 4, 2};
    const std::vector<Shape3> shapes = infer_shapes(empty);
    REQUIRE(shapes.size() == 1);
    CHECK(shapes[0] == Shape3{10, 4, 2});

    // conv expecting 64 channels fed 5: the error names the layer
    NetworkSpec bad;
    bad.input_shape = Shape3{16, 16, 5};
    bad.layers.push_back(conv_spec("NeedsMore", 3, 3, 8, 1, 1, Padding::Same, /*in_ch=*/64));
    try {
        infer_shapes(bad);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find("NeedsMore") != std::string::npos);
    }
}

TEST_CASE("zero-weight roadnet outputs 0.5 everywhere", "[network]") {
    Rng rng(1);
    Network net = Network::init(build_roadnet(), rng);
    std::vector<double> zeros(static_cast<std::size_t>(net.param_count()), 0.0);
    net.scatter_params(zeros);
    Tensor3 in = Tensor3::uniform(Shape3{600, 160, 5}, rng, 0, 1);
    std::vector<double> out = net.forward_vector(in);
    REQUIRE(out.size() == 600);
    for (double v : out) CHECK(v == 0.5);
}

TEST_CASE("forward equals the composition of layer references", "[network]") {
    Rng rng(21);
    Network net = Network::init(tiny_spec(), rng);
    Tensor3 in = Tensor3::uniform(net.spec().input_shape, rng, -1, 1);
    Tensor3 got = net.forward(in);

    Tensor3 cur = in;
    for (std::size_t i = 0; i < net.layer_count(); ++i) {
        const LayerState& ls = net.layer(i);
        if (const auto* c = std::get_if<ConvLayer>(&ls)) cur = oracle::conv_forward(*c, cur);
        else if (const auto* l = std::get_if<DistLstmLayer>(&ls)) cur = oracle::dist_lstm_forward(*l, cur);
        else if (const auto* a = std::get_if<ActLayer>(&ls)) cur = activation_forward(a->kind, cur);
        else cur = oracle::upsample_forward(std::get<UpsampleLayer>(ls), cur);
    }
    REQUIRE(got.shape() == cur.shape());
    for (std::int64_t i = 0; i < got.size(); ++i)
        CHECK(std::abs(got.data()[i] - cur.data()[i]) <= 1e-12);

    CHECK_THROWS_AS(net.forward(Tensor3::zeros(Shape3{4, 4, 2})), ShapeError);
}

TEST_CASE("backward zero upstream gives zero grads and is deterministic", "[network]") {
    Rng rng(23);
    Network net = Network::init(tiny_spec(), rng);
    Tensor3 in = Tensor3::uniform(net.spec().input_shape, rng, -1, 1);
    ForwardCache cache;
    net.forward(in, &cache);
    Network::BackwardResult z = net.backward(cache, Tensor3::zeros(net.output_shape()));
    for (double v : z.flat_grads) CHECK(v == 0.0);

    Tensor3 g = Tensor3::uniform(net.output_shape(), rng, -1, 1);
    Network::BackwardResult a = net.backward(cache, g);
    Network::BackwardResult b = net.backward(cache, g);
    CHECK(a.flat_grads == b.flat_grads);

    ForwardCache empty;
    CHECK_THROWS_AS(net.backward(empty, g), Error);
}

TEST_CASE("weight serialization round trip is bit-exact", "[network]") {
    Rng rng(29);
    Network net = Network::init(build_roadnet(), rng);
    const std::string p1 = temp_path("roadlstm_w1.bin");
    const std::string p2 = temp_path("roadlstm_w2.bin");
    save_weights(net, p1);
    Network loaded = load_weights(p1);
    save_weights(loaded, p2);
    const std::string b1 = slurp(p1), b2 = slurp(p2);
    REQUIRE(!b1.empty());
    CHECK(b1 == b2);

    std::vector<double> pa, pb;
    net.gather_params(pa);
    loaded.gather_params(pb);
    CHECK(pa == pb);

    // serialized parameter count matches the cost model
    CHECK(net.param_count() == count_params(net.spec()).total_params);

    std::filesystem::remove(p1);
    std::filesystem::remove(p2);
}

TEST_CASE("corrupt weight files are rejected with byte offsets", "[network]") {
    Rng rng(31);
    Network net = Network::init(tiny_spec(), rng);
    const std::string p = temp_path("roadlstm_corrupt.bin");
    save_weights(net, p);
    std::string blob = slurp(p);

    // truncation
    std::ofstream(p, std::ios::binary | std::ios::trunc)
        .write(blob.data(), static_cast<std::streamsize>(blob.size() / 2));
    CHECK_THROWS_AS(load_weights(p), FormatError);

    // bad magic
    std::string bad = blob;
    bad[0] = 'X';
    std::ofstream(p, std::ios::binary | std::ios::trunc)
        .write(bad.data(), static_cast<std::streamsize>(bad.size()));
    try {
        load_weights(p);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.byte_offset == 0);
    }

    // trailing garbage
    std::string extra = blob + "junk";
    std::ofstream(p, std::ios::binary | std::ios::trunc)
        .write(extra.data(), static_cast<std::streamsize>(extra.size()));
    CHECK_THROWS_AS(load_weights(p), FormatError);
    std::filesystem::remove(p);
}

TEST_CASE("spec dump parses back to the same network", "[network]") {
    const NetworkSpec spec = build_roadnet();
    const std::string text = dump_spec(spec);
    const NetworkSpec parsed = parse_arch_text(text);
    CHECK(dump_spec(parsed) == text);
    CHECK(infer_shapes(parsed) == infer_shapes(spec));

    CHECK_THROWS_AS(parse_arch_text("conv X 3x3x4 stride 1x1 same\n"), ConfigError);  // no input
    try {
        parse_arch_text("input 8x8x2\nconv C1 3x3 stride 1x1 same\n");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}

TEST_CASE("init is deterministic under a seed", "[network]") {
    Rng a(7), b(7);
    Network na = Network::init(tiny_spec(), a);
    Network nb = Network::init(tiny_spec(), b);
    std::vector<double> pa, pb;
    na.gather_params(pa);
    nb.gather_params(pb);
    CHECK(pa == pb);
}
