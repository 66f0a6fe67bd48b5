#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "hfc/common.hpp"
#include "hfc/nn.hpp"

using namespace hfc;
namespace fs = std::filesystem;

namespace {

std::vector<double> random_input(std::uint64_t seed, std::size_t n) {
    Rng rng(seed);
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
}

Model tiny_dense_model() {
    std::vector<std::unique_ptr<Layer>> layers;
    layers.push_back(make_dense(1));
    return Model("tiny", {1, 1, 1}, std::move(layers));
}

}  // namespace

TEST_CASE("published parameter counts") {
    Model n4 = build_net4(90);
    CHECK(n4.core_param_count() == 75204);
    CHECK(n4.param_count() == 75204 + 64);
    auto counts = n4.core_layer_param_counts();
    REQUIRE(counts.size() == 4);
    CHECK(counts[0] == 36);
    CHECK(counts[1] == 288);
    CHECK(counts[2] == 1152);
    CHECK(counts[3] == 73728);

    Model n2 = build_net2(90);
    CHECK(n2.core_param_count() == 64836);
    CHECK(n2.param_count() == 64836 + 16);
    auto counts2 = n2.core_layer_param_counts();
    REQUIRE(counts2.size() == 2);
    CHECK(counts2[0] == 36);
    CHECK(counts2[1] == 64800);
}

TEST_CASE("single precision core sizes in KiB") {
    // 4- and 8-byte parameter sizes divide 1024, so these are exact.
    CHECK(build_net4(90).core_size_kib(true) == 293.765625);
    CHECK(build_net2(90).core_size_kib(true) == 253.265625);
    CHECK(build_net4(90).core_size_kib(false) == 587.53125);
}

TEST_CASE("pooling trace is ceil(n/2) at every stage") {
    CHECK((build_net4(90).spatial_trace() == std::vector<int>{90, 45, 23, 12}));
    CHECK((build_net2(90).spatial_trace() == std::vector<int>{90, 45}));
    CHECK((build_net4(64).spatial_trace() == std::vector<int>{64, 32, 16, 8}));
}

TEST_CASE("zero input produces zero logits (no biases anywhere)") {
    for (const char* arch : {"net4", "net2"}) {
        Model m = build_model(arch, 90);
        init_weights(m, 77);
        const auto& logits = m.forward(std::vector<double>(90 * 90, 0.0));
        REQUIRE(logits.size() == 2);
        CHECK(logits[0] == 0.0);
        CHECK(logits[1] == 0.0);
    }
}

TEST_CASE("build_model rejects unknown architectures") {
    CHECK_THROWS_AS(build_model("resnet", 90), config_error);
    CHECK_THROWS_AS(build_net4(0), config_error);
}

TEST_CASE("conv with an all-ones kernel sums the zero-padded neighborhood") {
    std::vector<std::unique_ptr<Layer>> layers;
    layers.push_back(make_conv3x3(1, 1));
    Model m("conv", {1, 2, 2}, std::move(layers));
    m.layer(0).params()->assign(9, 1.0);
    const auto& out = m.forward({1.0, 2.0, 3.0, 4.0});
    REQUIRE(out.size() == 4);
    for (double v : out) REQUIRE(v == 10.0);
}

TEST_CASE("conv single-tap kernel shifts the image") {
    std::vector<std::unique_ptr<Layer>> layers;
    layers.push_back(make_conv3x3(1, 1));
    Model m("conv", {1, 3, 3}, std::move(layers));
    // Tap 0 is offset (-1,-1): out(y,x) = in(y-1, x-1).
    auto& w = *m.layer(0).params();
    w.assign(9, 0.0);
    w[0] = 1.0;
    std::vector<double> in = {1, 2, 3, 4, 5, 6, 7, 8, 9};
    const auto& out = m.forward(in);
    std::vector<double> expect = {0, 0, 0, 0, 1, 2, 0, 4, 5};
    for (std::size_t i = 0; i < 9; ++i) REQUIRE(out[i] == expect[i]);
}

TEST_CASE("conv doubling weights doubles the output") {
    std::vector<std::unique_ptr<Layer>> layers;
    layers.push_back(make_conv3x3(1, 3));
    Model m("conv", {1, 5, 5}, std::move(layers));
    init_weights(m, 5);
    std::vector<double> in = random_input(6, 25);
    std::vector<double> once = m.forward(in);
    for (double& w : *m.layer(0).params()) w *= 2.0;
    std::vector<double> twice = m.forward(in);
    for (std::size_t i = 0; i < once.size(); ++i)
        REQUIRE(twice[i] == doctest::Approx(2.0 * once[i]).epsilon(1e-14));
}

TEST_CASE("maxpool ceil mode keeps partial windows") {
    std::vector<std::unique_ptr<Layer>> layers;
    layers.push_back(make_maxpool2());
    Model m("pool", {1, 3, 3}, std::move(layers));
    const auto& out = m.forward({1, 2, 3, 4, 5, 6, 7, 8, 9});
    REQUIRE(out.size() == 4);  // ceil(3/2) = 2 per side
    CHECK(out[0] == 5.0);
    CHECK(out[1] == 6.0);
    CHECK(out[2] == 8.0);
    CHECK(out[3] == 9.0);
}

TEST_CASE("maxpool backward routes to the first maximum on ties") {
    // A ones-kernel conv over a constant 2x2 image makes all four pool
    // candidates equal; the conv weight gradient reveals which position
    // received the credit.
    std::vector<std::unique_ptr<Layer>> layers;
    layers.push_back(make_conv3x3(1, 1));
    layers.push_back(make_maxpool2());
    Model m("cp", {1, 2, 2}, std::move(layers));
    m.layer(0).params()->assign(9, 1.0);
    const auto& out = m.forward({7.0, 7.0, 7.0, 7.0});
    REQUIRE(out.size() == 1);
    CHECK(out[0] == 28.0);
    m.zero_grads();
    m.backward({5.0});
    // Credit lands on conv output (0,0); dW_t = 5 * in(dy, dx) with zero pad.
    std::vector<double> expect = {0, 0, 0, 0, 35, 35, 0, 35, 35};
    const auto& g = *m.layer(0).grads();
    REQUIRE(g.size() == 9);
    for (std::size_t i = 0; i < 9; ++i) REQUIRE(g[i] == expect[i]);
}

TEST_CASE("relu clamps negatives and passes positives") {
    std::vector<std::unique_ptr<Layer>> layers;
    layers.push_back(make_relu());
    Model m("r", {1, 1, 4}, std::move(layers));
    const auto& out = m.forward({-2.0, 0.0, 0.5, 3.0});
    CHECK(out[0] == 0.0);
    CHECK(out[1] == 0.0);
    CHECK(out[2] == 0.5);
    CHECK(out[3] == 3.0);
}

TEST_CASE("dense is a plain matvec") {
    std::vector<std::unique_ptr<Layer>> layers;
    layers.push_back(make_dense(2));
    Model m("d", {1, 1, 3}, std::move(layers));
    *m.layer(0).params() = {1.0, 2.0, 3.0, 4.0, 5.0, 6.0};  // rows of W
    const auto& out = m.forward({1.0, 1.0, 2.0});
    REQUIRE(out.size() == 2);
    CHECK(out[0] == doctest::Approx(1 + 2 + 6).epsilon(1e-15));
    CHECK(out[1] == doctest::Approx(4 + 5 + 12).epsilon(1e-15));
}

TEST_CASE("softmax cross entropy values and gradient") {
    std::vector<double> d;
    CHECK(softmax_ce({0.0, 0.0}, 0, &d) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(d[0] == doctest::Approx(-0.5).epsilon(1e-15));
    CHECK(d[1] == doctest::Approx(0.5).epsilon(1e-15));

    CHECK(softmax_ce({20.0, -20.0}, 0) < 1e-8);
    CHECK(softmax_ce({1000.0, 0.0}, 1) == doctest::Approx(1000.0).epsilon(1e-12));
    CHECK(std::isfinite(softmax_ce({1000.0, 900.0}, 0)));

    CHECK_THROWS_AS(softmax_ce({1.0, 2.0}, 2), config_error);
    CHECK_THROWS_AS(softmax_ce({1.0, 2.0}, -1), config_error);
    CHECK_THROWS_AS(softmax_ce({}, 0), config_error);
}

TEST_CASE("softmax gradient sums to zero and matches probabilities") {
    std::vector<double> logits = {0.3, -1.2};
    std::vector<double> d;
    double loss = softmax_ce(logits, 1, &d);
    double p0 = std::exp(0.3) / (std::exp(0.3) + std::exp(-1.2));
    CHECK(loss == doctest::Approx(-std::log(1.0 - p0)).epsilon(1e-12));
    CHECK(d[0] == doctest::Approx(p0).epsilon(1e-12));
    CHECK(d[1] == doctest::Approx(-p0).epsilon(1e-12));  // p1 - 1
    CHECK(d[0] + d[1] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("adam first steps follow the closed form") {
    Model m = tiny_dense_model();
    auto& w = *m.layer(0).params();
    w[0] = 0.0;

    // d(loss)/dw = dlogit * x.
    m.forward({2.0});
    m.zero_grads();
    m.backward({3.0});
    CHECK((*m.layer(0).grads())[0] == doctest::Approx(6.0).epsilon(1e-15));

    double lr = 0.01, g = 6.0;
    m.adam_step(lr);
    double expect1 = -lr * g / (std::abs(g) + 1e-8);
    CHECK(w[0] == doctest::Approx(expect1).epsilon(1e-12));

    // Second step with the same raw gradient: bias-corrected moments still
    // reduce to g / |g| because m and v see identical histories.
    m.zero_grads();
    m.forward({2.0});
    m.backward({3.0});
    m.adam_step(lr);
    CHECK(w[0] == doctest::Approx(2.0 * expect1).epsilon(1e-10));
}

TEST_CASE("adam with zero gradient leaves parameters unchanged") {
    Model m = tiny_dense_model();
    auto& w = *m.layer(0).params();
    w[0] = 1.25;
    m.forward({1.0});
    m.zero_grads();
    m.adam_step(0.1);
    CHECK(w[0] == 1.25);
}

TEST_CASE("adam grad_scale applies the batch mean") {
    Model a = tiny_dense_model(), b = tiny_dense_model();
    for (Model* m : {&a, &b}) {
        (*m->layer(0).params())[0] = 0.0;
        m->forward({2.0});
        m->zero_grads();
    }
    a.backward({3.0});
    a.backward({3.0});  // accumulates twice
    a.adam_step(0.01, 0.5);
    b.backward({3.0});
    b.adam_step(0.01, 1.0);
    CHECK((*a.layer(0).params())[0] == doctest::Approx((*b.layer(0).params())[0]).epsilon(1e-15));
}

TEST_CASE("adam converges on a 1-d quadratic") {
    // Drive the raw update: gradient of f(w) = (w - 5)^2 is 2(w - 5).
    Model m = tiny_dense_model();
    auto& w = *m.layer(0).params();
    auto& g = *m.layer(0).grads();
    w[0] = 0.0;
    for (int step = 0; step < 400; ++step) {
        g[0] = 2.0 * (w[0] - 5.0);
        m.adam_step(0.05);
    }
    CHECK(std::abs(w[0] - 5.0) < 0.5);
}

TEST_CASE("backward before forward is a state error") {
    Model m = build_net2(12);
    init_weights(m, 3);
    CHECK_THROWS_AS(m.backward({1.0, -1.0}), state_error);
    CHECK_THROWS_AS(m.forward_from(0), state_error);
}

TEST_CASE("forward input size is validated") {
    Model m = build_net2(12);
    CHECK_THROWS_AS(m.forward(std::vector<double>(100, 0.0)), config_error);
}

TEST_CASE("init_weights is seeded, bounded and layer-ordered") {
    Model a = build_net2(20), b = build_net2(20), c = build_net2(20);
    init_weights(a, 9);
    init_weights(b, 9);
    init_weights(c, 10);
    bool any_diff = false;
    for (int i = 0; i < a.layer_count(); ++i) {
        auto* pa = a.layer(i).params();
        if (!pa) continue;
        auto* pb = b.layer(i).params();
        auto* pc = c.layer(i).params();
        double limit = std::sqrt(6.0 / double(a.layer(i).fan_in() + a.layer(i).fan_out()));
        for (std::size_t k = 0; k < pa->size(); ++k) {
            REQUIRE((*pa)[k] == (*pb)[k]);
            if ((*pa)[k] != (*pc)[k]) any_diff = true;
            REQUIRE(std::abs((*pa)[k]) <= limit);
        }
    }
    CHECK(any_diff);
}

TEST_CASE("forward determinism") {
    Model a = build_net4(33), b = build_net4(33);
    init_weights(a, 123);
    init_weights(b, 123);
    std::vector<double> in = random_input(55, 33 * 33);
    const auto& la = a.forward(in);
    const auto& lb = b.forward(in);
    REQUIRE(la.size() == lb.size());
    for (std::size_t i = 0; i < la.size(); ++i) REQUIRE(la[i] == lb[i]);
}

TEST_CASE("forward_from resumes correctly after a weight change") {
    Model m = build_net2(16);
    init_weights(m, 21);
    std::vector<double> in = random_input(22, 16 * 16);
    m.forward(in);
    // Perturb a dense weight (layer 4) and resume from there.
    (*m.layer(4).params())[7] += 0.25;
    std::vector<double> resumed = m.forward_from(4);
    std::vector<double> fresh = m.forward(in);
    REQUIRE(resumed.size() == fresh.size());
    for (std::size_t i = 0; i < fresh.size(); ++i) REQUIRE(resumed[i] == fresh[i]);
}

TEST_CASE("quantization is float32 rounding and idempotent") {
    Model m = build_net2(12);
    init_weights(m, 31);
    Model ref = build_net2(12);
    init_weights(ref, 31);
    quantize_weights_single(m);
    for (int i = 0; i < m.layer_count(); ++i) {
        auto* p = m.layer(i).params();
        if (!p) continue;
        auto* q = ref.layer(i).params();
        for (std::size_t k = 0; k < p->size(); ++k)
            REQUIRE((*p)[k] == double(float((*q)[k])));
    }
    Model again = build_net2(12);
    init_weights(again, 31);
    quantize_weights_single(again);
    quantize_weights_single(again);
    for (int i = 0; i < m.layer_count(); ++i) {
        auto* p = m.layer(i).params();
        if (!p) continue;
        auto* q = again.layer(i).params();
        for (std::size_t k = 0; k < p->size(); ++k) REQUIRE((*p)[k] == (*q)[k]);
    }
}

TEST_CASE("checkpoint round trip preserves weights, arch and seed") {
    Model m = build_net2(14);
    init_weights(m, 404);
    std::string p = (fs::temp_directory_path() / "hfc_nn_ckpt.bin").string();
    save_model(m, p, 404);
    std::uint64_t seed = 0;
    Model back = load_model(p, &seed);
    CHECK(seed == 404);
    CHECK(back.arch() == "net2");
    CHECK((back.input_shape() == Shape3{1, 14, 14}));
    std::vector<double> in = random_input(1, 14 * 14);
    std::vector<double> la = m.forward(in);
    std::vector<double> lb = back.forward(in);
    for (std::size_t i = 0; i < la.size(); ++i) REQUIRE(la[i] == lb[i]);
    fs::remove(p);
}

TEST_CASE("checkpoint rejects corruption with distinct messages") {
    Model m = build_net2(12);
    init_weights(m, 1);
    std::string p = (fs::temp_directory_path() / "hfc_nn_bad.bin").string();
    save_model(m, p);
    std::ifstream in(p, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();

    auto rewrite = [&](const std::string& b) {
        std::ofstream out(p, std::ios::binary | std::ios::trunc);
        out.write(b.data(), std::streamsize(b.size()));
    };

    std::string bad = bytes;
    bad[0] = 'X';
    rewrite(bad);
    CHECK_THROWS_WITH_AS(load_model(p), doctest::Contains("not a model checkpoint"), parse_error);

    rewrite(bytes.substr(0, bytes.size() - 12));
    CHECK_THROWS_WITH_AS(load_model(p), doctest::Contains("truncated"), parse_error);

    rewrite(bytes + std::string(4, '\0'));
    CHECK_THROWS_WITH_AS(load_model(p), doctest::Contains("trailing"), parse_error);

    bad = bytes;
    bad[8] = 9;
    rewrite(bad);
    CHECK_THROWS_WITH_AS(load_model(p), doctest::Contains("version"), parse_error);
    fs::remove(p);
}

TEST_CASE("gradient check passes on small instances of both architectures") {
    // Seeds chosen away from relu kinks; see the acceptance suite for the
    // full-size sweep.
    {
        Model m = build_net2(12);
        init_weights(m, 2001);
        GradCheckReport rep = gradient_check(m, random_input(3001, 12 * 12), 1);
        CHECK(rep.params_checked == m.param_count());
        CHECK(rep.max_rel_err <= 1e-4);
    }
    {
        Model m = build_net4(16);
        init_weights(m, 2002);
        GradCheckReport rep = gradient_check(m, random_input(3002, 16 * 16), 0);
        CHECK(rep.params_checked == m.param_count());
        CHECK(rep.max_rel_err <= 1e-4);
    }
}

TEST_CASE("gradient check flags a corrupted analytic gradient") {
    Model m = build_net2(12);
    init_weights(m, 2003);
    int head = m.layer_count() - 1;
    GradCheckReport rep = gradient_check(m, random_input(3003, 12 * 12), 1, 1e-5, 1e-6, head, 3,
                                         head);
    CHECK(rep.max_rel_err > 1e-2);
    CHECK(rep.worst_layer == head);
    CHECK(rep.worst_index == 3);
}
