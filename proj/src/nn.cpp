#include "hfc/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string_view>

#include "hfc/common.hpp"

namespace hfc {

namespace {

class Conv3x3 final : public Layer {
public:
    Conv3x3(int in_ch, int out_ch) : in_ch_(in_ch), out_ch_(out_ch) {
        if (in_ch < 1 || out_ch < 1)
            throw config_error("conv3x3: channel counts must be positive");
        w_.assign(std::size_t(out_ch) * std::size_t(in_ch) * 9, 0.0);
        g_.assign(w_.size(), 0.0);
    }

    const char* kind() const override { return "conv3x3"; }

    Shape3 configure(Shape3 in) override {
        if (in.c != in_ch_)
            throw config_error("conv3x3: expected " + std::to_string(in_ch_) +
                               " input channels, got " + std::to_string(in.c));
        if (in.h < 1 || in.w < 1) throw config_error("conv3x3: empty spatial extent");
        h_ = in.h;
        wid_ = in.w;
        return {out_ch_, h_, wid_};
    }

    void forward(const double* in, double* out) override {
        std::size_t plane = std::size_t(h_) * std::size_t(wid_);
        std::fill(out, out + std::size_t(out_ch_) * plane, 0.0);
        for (int o = 0; o < out_ch_; ++o) {
            double* outp = out + std::size_t(o) * plane;
            for (int i = 0; i < in_ch_; ++i) {
                const double* inp = in + std::size_t(i) * plane;
                const double* k9 = w_.data() + (std::size_t(o) * std::size_t(in_ch_) + std::size_t(i)) * 9;
                for (int t = 0; t < 9; ++t) {
                    int dy = t / 3 - 1, dx = t % 3 - 1;
                    double wv = k9[t];
                    int y0 = std::max(0, -dy), y1 = std::min(h_, h_ - dy);
                    int x0 = std::max(0, -dx), x1 = std::min(wid_, wid_ - dx);
                    for (int y = y0; y < y1; ++y) {
                        const double* src = inp + std::size_t(y + dy) * std::size_t(wid_) + dx;
                        double* dst = outp + std::size_t(y) * std::size_t(wid_);
                        for (int x = x0; x < x1; ++x) dst[x] += wv * src[x];
                    }
                }
            }
        }
    }

    void backward(const double* in, const double* dout, double* din) override {
        std::size_t plane = std::size_t(h_) * std::size_t(wid_);
        for (int o = 0; o < out_ch_; ++o) {
            const double* doutp = dout + std::size_t(o) * plane;
            for (int i = 0; i < in_ch_; ++i) {
                const double* inp = in + std::size_t(i) * plane;
                double* g9 = g_.data() + (std::size_t(o) * std::size_t(in_ch_) + std::size_t(i)) * 9;
                for (int t = 0; t < 9; ++t) {
                    int dy = t / 3 - 1, dx = t % 3 - 1;
                    int y0 = std::max(0, -dy), y1 = std::min(h_, h_ - dy);
                    int x0 = std::max(0, -dx), x1 = std::min(wid_, wid_ - dx);
                    double acc = 0.0;
                    for (int y = y0; y < y1; ++y) {
                        const double* src = inp + std::size_t(y + dy) * std::size_t(wid_) + dx;
                        const double* go = doutp + std::size_t(y) * std::size_t(wid_);
                        for (int x = x0; x < x1; ++x) acc += go[x] * src[x];
                    }
                    g9[t] += acc;
                }
            }
        }
        if (!din) return;
        std::fill(din, din + std::size_t(in_ch_) * plane, 0.0);
        for (int o = 0; o < out_ch_; ++o) {
            const double* doutp = dout + std::size_t(o) * plane;
            for (int i = 0; i < in_ch_; ++i) {
                double* dinp = din + std::size_t(i) * plane;
                const double* k9 = w_.data() + (std::size_t(o) * std::size_t(in_ch_) + std::size_t(i)) * 9;
                for (int t = 0; t < 9; ++t) {
                    int dy = t / 3 - 1, dx = t % 3 - 1;
                    double wv = k9[t];
                    int y0 = std::max(0, -dy), y1 = std::min(h_, h_ - dy);
                    int x0 = std::max(0, -dx), x1 = std::min(wid_, wid_ - dx);
                    for (int y = y0; y < y1; ++y) {
                        double* dst = dinp + std::size_t(y + dy) * std::size_t(wid_) + dx;
                        const double* go = doutp + std::size_t(y) * std::size_t(wid_);
                        for (int x = x0; x < x1; ++x) dst[x] += wv * go[x];
                    }
                }
            }
        }
    }

    std::vector<double>* params() override { return &w_; }
    std::vector<double>* grads() override { return &g_; }
    std::size_t fan_in() const override { return std::size_t(in_ch_) * 9; }
    std::size_t fan_out() const override { return std::size_t(out_ch_) * 9; }

private:
    int in_ch_, out_ch_;
    int h_ = 0, wid_ = 0;
    std::vector<double> w_, g_;
};

class Relu final : public Layer {
public:
    const char* kind() const override { return "relu"; }
    Shape3 configure(Shape3 in) override {
        n_ = in.count();
        return in;
    }
    void forward(const double* in, double* out) override {
        for (std::size_t i = 0; i < n_; ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
    }
    // Subgradient 0 at the kink.
    void backward(const double* in, const double* dout, double* din) override {
        if (!din) return;
        for (std::size_t i = 0; i < n_; ++i) din[i] = in[i] > 0.0 ? dout[i] : 0.0;
    }

private:
    std::size_t n_ = 0;
};

class MaxPool2 final : public Layer {
public:
    const char* kind() const override { return "maxpool2"; }

    Shape3 configure(Shape3 in) override {
        c_ = in.c;
        h_ = in.h;
        w_ = in.w;
        oh_ = (h_ + 1) / 2;
        ow_ = (w_ + 1) / 2;
        argmax_.assign(std::size_t(c_) * std::size_t(oh_) * std::size_t(ow_), 0);
        return {c_, oh_, ow_};
    }

    void forward(const double* in, double* out) override {
        std::size_t o = 0;
        for (int c = 0; c < c_; ++c) {
            const double* plane = in + std::size_t(c) * std::size_t(h_) * std::size_t(w_);
            for (int oy = 0; oy < oh_; ++oy) {
                int y1 = std::min(2 * oy + 2, h_);
                for (int ox = 0; ox < ow_; ++ox, ++o) {
                    int x1 = std::min(2 * ox + 2, w_);
                    double best = plane[std::size_t(2 * oy) * std::size_t(w_) + std::size_t(2 * ox)];
                    std::size_t arg = std::size_t(2 * oy) * std::size_t(w_) + std::size_t(2 * ox);
                    for (int y = 2 * oy; y < y1; ++y) {
                        for (int x = 2 * ox; x < x1; ++x) {
                            std::size_t idx = std::size_t(y) * std::size_t(w_) + std::size_t(x);
                            if (plane[idx] > best) {  // ties keep the first in scan order
                                best = plane[idx];
                                arg = idx;
                            }
                        }
                    }
                    out[o] = best;
                    argmax_[o] = std::size_t(c) * std::size_t(h_) * std::size_t(w_) + arg;
                }
            }
        }
    }

    void backward(const double*, const double* dout, double* din) override {
        if (!din) return;
        std::fill(din, din + std::size_t(c_) * std::size_t(h_) * std::size_t(w_), 0.0);
        for (std::size_t o = 0; o < argmax_.size(); ++o) din[argmax_[o]] += dout[o];
    }

private:
    int c_ = 0, h_ = 0, w_ = 0, oh_ = 0, ow_ = 0;
    std::vector<std::size_t> argmax_;
};

class Flatten final : public Layer {
public:
    const char* kind() const override { return "flatten"; }
    Shape3 configure(Shape3 in) override {
        n_ = in.count();
        return {int(n_), 1, 1};
    }
    void forward(const double* in, double* out) override { std::memcpy(out, in, n_ * sizeof(double)); }
    void backward(const double*, const double* dout, double* din) override {
        if (din) std::memcpy(din, dout, n_ * sizeof(double));
    }

private:
    std::size_t n_ = 0;
};

class Dense final : public Layer {
public:
    explicit Dense(int out_features) : out_(out_features) {
        if (out_features < 1) throw config_error("dense: out_features must be positive");
    }

    const char* kind() const override { return "dense"; }

    Shape3 configure(Shape3 in) override {
        in_ = in.count();
        if (in_ == 0) throw config_error("dense: empty input");
        w_.assign(std::size_t(out_) * in_, 0.0);
        g_.assign(w_.size(), 0.0);
        return {out_, 1, 1};
    }

    void forward(const double* in, double* out) override {
        for (int k = 0; k < out_; ++k) {
            const double* row = w_.data() + std::size_t(k) * in_;
            double acc = 0.0;
            for (std::size_t d = 0; d < in_; ++d) acc += row[d] * in[d];
            out[k] = acc;
        }
    }

    void backward(const double* in, const double* dout, double* din) override {
        for (int k = 0; k < out_; ++k) {
            double gk = dout[k];
            double* grow = g_.data() + std::size_t(k) * in_;
            for (std::size_t d = 0; d < in_; ++d) grow[d] += gk * in[d];
        }
        if (!din) return;
        std::fill(din, din + in_, 0.0);
        for (int k = 0; k < out_; ++k) {
            double gk = dout[k];
            const double* row = w_.data() + std::size_t(k) * in_;
            for (std::size_t d = 0; d < in_; ++d) din[d] += gk * row[d];
        }
    }

    std::vector<double>* params() override { return &w_; }
    std::vector<double>* grads() override { return &g_; }
    std::size_t fan_in() const override { return in_; }
    std::size_t fan_out() const override { return std::size_t(out_); }

private:
    int out_;
    std::size_t in_ = 0;
    std::vector<double> w_, g_;
};

}  // namespace

std::unique_ptr<Layer> make_conv3x3(int in_channels, int out_channels) {
    return std::make_unique<Conv3x3>(in_channels, out_channels);
}
std::unique_ptr<Layer> make_relu() { return std::make_unique<Relu>(); }
std::unique_ptr<Layer> make_maxpool2() { return std::make_unique<MaxPool2>(); }
std::unique_ptr<Layer> make_flatten() { return std::make_unique<Flatten>(); }
std::unique_ptr<Layer> make_dense(int out_features) { return std::make_unique<Dense>(out_features); }

Model::Model(std::string arch, Shape3 input, std::vector<std::unique_ptr<Layer>> layers)
    : arch_(std::move(arch)), layers_(std::move(layers)) {
    if (input.c < 1 || input.h < 1 || input.w < 1) throw config_error("model: bad input shape");
    if (layers_.empty()) throw config_error("model: no layers");
    shapes_.push_back(input);
    for (auto& l : layers_) shapes_.push_back(l->configure(shapes_.back()));
    acts_.resize(shapes_.size());
    dacts_.resize(shapes_.size());
    for (std::size_t i = 0; i < shapes_.size(); ++i) {
        acts_[i].assign(shapes_[i].count(), 0.0);
        dacts_[i].assign(shapes_[i].count(), 0.0);
    }
    adam_.resize(layers_.size());
    reset_adam();
}

std::vector<int> Model::spatial_trace() const {
    std::vector<int> trace{shapes_.front().h};
    for (std::size_t i = 0; i < layers_.size(); ++i)
        if (std::string_view(layers_[i]->kind()) == "maxpool2") trace.push_back(shapes_[i + 1].h);
    return trace;
}

std::size_t Model::param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) {
        auto* p = const_cast<Layer&>(*l).params();
        if (p) n += p->size();
    }
    return n;
}

std::size_t Model::core_param_count() const {
    std::size_t n = 0;
    for (std::size_t c : core_layer_param_counts()) n += c;
    return n;
}

std::vector<std::size_t> Model::core_layer_param_counts() const {
    std::vector<std::size_t> counts;
    for (const auto& l : layers_) {
        auto* p = const_cast<Layer&>(*l).params();
        if (p) counts.push_back(p->size());
    }
    if (!counts.empty()) counts.pop_back();  // drop the classification head
    return counts;
}

double Model::core_size_kib(bool single_precision) const {
    return double(core_param_count()) * (single_precision ? 4.0 : 8.0) / 1024.0;
}

const std::vector<double>& Model::forward(const std::vector<double>& input) {
    if (input.size() != shapes_.front().count())
        throw config_error("model: input size " + std::to_string(input.size()) + ", expected " +
                           std::to_string(shapes_.front().count()));
    acts_.front() = input;
    has_forward_ = true;
    return forward_from(0);
}

const std::vector<double>& Model::forward_from(int first_layer) {
    if (!has_forward_) throw state_error("model: forward_from requires a prior full forward");
    if (first_layer < 0 || first_layer >= layer_count())
        throw config_error("model: layer index out of range");
    for (std::size_t i = std::size_t(first_layer); i < layers_.size(); ++i)
        layers_[i]->forward(acts_[i].data(), acts_[i + 1].data());
    return acts_.back();
}

void Model::zero_grads() {
    for (auto& l : layers_)
        if (auto* g = l->grads()) std::fill(g->begin(), g->end(), 0.0);
}

void Model::backward(const std::vector<double>& dlogits) {
    if (!has_forward_) throw state_error("model: backward called before any forward pass");
    if (dlogits.size() != shapes_.back().count())
        throw config_error("model: gradient size does not match logits");
    dacts_.back() = dlogits;
    for (int i = layer_count() - 1; i >= 0; --i)
        layers_[std::size_t(i)]->backward(acts_[std::size_t(i)].data(),
                                          dacts_[std::size_t(i) + 1].data(),
                                          i > 0 ? dacts_[std::size_t(i)].data() : nullptr);
}

void Model::adam_step(double lr, double grad_scale) {
    ++adam_t_;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    double c1 = 1.0 - std::pow(b1, double(adam_t_));
    double c2 = 1.0 - std::pow(b2, double(adam_t_));
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        auto* p = layers_[i]->params();
        if (!p) continue;
        auto* g = layers_[i]->grads();
        AdamState& st = adam_[i];
        for (std::size_t k = 0; k < p->size(); ++k) {
            double gk = (*g)[k] * grad_scale;
            st.m[k] = b1 * st.m[k] + (1.0 - b1) * gk;
            st.v[k] = b2 * st.v[k] + (1.0 - b2) * gk * gk;
            (*p)[k] -= lr * (st.m[k] / c1) / (std::sqrt(st.v[k] / c2) + eps);
        }
    }
}

void Model::reset_adam() {
    adam_t_ = 0;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        auto* p = layers_[i]->params();
        if (!p) continue;
        adam_[i].m.assign(p->size(), 0.0);
        adam_[i].v.assign(p->size(), 0.0);
    }
}

Model build_net4(int input_side) {
    if (input_side < 1) throw config_error("build_net4: input side must be positive");
    std::vector<std::unique_ptr<Layer>> layers;
    layers.push_back(make_conv3x3(1, 4));
    layers.push_back(make_relu());
    layers.push_back(make_maxpool2());
    layers.push_back(make_conv3x3(4, 8));
    layers.push_back(make_relu());
    layers.push_back(make_maxpool2());
    layers.push_back(make_conv3x3(8, 16));
    layers.push_back(make_relu());
    layers.push_back(make_maxpool2());
    layers.push_back(make_flatten());
    layers.push_back(make_dense(32));
    layers.push_back(make_relu());
    layers.push_back(make_dense(2));
    return Model("net4", {1, input_side, input_side}, std::move(layers));
}

Model build_net2(int input_side) {
    if (input_side < 1) throw config_error("build_net2: input side must be positive");
    std::vector<std::unique_ptr<Layer>> layers;
    layers.push_back(make_conv3x3(1, 4));
    layers.push_back(make_relu());
    layers.push_back(make_maxpool2());
    layers.push_back(make_flatten());
    layers.push_back(make_dense(8));
    layers.push_back(make_relu());
    layers.push_back(make_dense(2));
    return Model("net2", {1, input_side, input_side}, std::move(layers));
}

Model build_model(const std::string& arch, int input_side) {
    if (arch == "net4") return build_net4(input_side);
    if (arch == "net2") return build_net2(input_side);
    throw config_error("unknown architecture '" + arch + "' (expected net4 or net2)");
}

void init_weights(Model& model, std::uint64_t seed) {
    Rng rng(seed);
    for (int i = 0; i < model.layer_count(); ++i) {
        Layer& l = model.layer(i);
        auto* p = l.params();
        if (!p) continue;
        double limit = std::sqrt(6.0 / double(l.fan_in() + l.fan_out()));
        for (double& w : *p) w = rng.uniform(-limit, limit);
    }
    model.zero_grads();
    model.reset_adam();
}

void quantize_weights_single(Model& model) {
    for (int i = 0; i < model.layer_count(); ++i)
        if (auto* p = model.layer(i).params())
            for (double& w : *p) w = double(float(w));
}

double softmax_ce(const std::vector<double>& logits, int label, std::vector<double>* dlogits) {
    if (logits.empty()) throw config_error("softmax_ce: empty logits");
    if (label < 0 || std::size_t(label) >= logits.size())
        throw config_error("softmax_ce: label out of range");
    double m = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double l : logits) sum += std::exp(l - m);
    double lse = m + std::log(sum);
    if (dlogits) {
        dlogits->resize(logits.size());
        for (std::size_t k = 0; k < logits.size(); ++k)
            (*dlogits)[k] = std::exp(logits[k] - m) / sum - (std::size_t(label) == k ? 1.0 : 0.0);
    }
    return lse - logits[std::size_t(label)];
}

namespace {

void put_bytes(std::string& out, const void* p, std::size_t n) {
    out.append(static_cast<const char*>(p), n);
}

void put_u64(std::string& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = (unsigned char)(v >> (8 * i));
    put_bytes(out, b, 8);
}

void put_i32(std::string& out, std::int32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = (unsigned char)(std::uint32_t(v) >> (8 * i));
    put_bytes(out, b, 4);
}

std::uint64_t get_u64(const std::string& s, std::size_t off) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t((unsigned char)s[off + std::size_t(i)]) << (8 * i);
    return v;
}

std::int32_t get_i32(const std::string& s, std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t((unsigned char)s[off + std::size_t(i)]) << (8 * i);
    return std::int32_t(v);
}

constexpr char kModelMagic[8] = {'H', 'F', 'C', 'M', 'O', 'D', 'E', 'L'};

}  // namespace

void save_model(const Model& model, const std::string& path, std::uint64_t seed) {
    std::string out;
    put_bytes(out, kModelMagic, 8);
    out.push_back(char(1));  // version
    if (model.arch().size() > 255) throw config_error("save_model: architecture name too long");
    out.push_back(char((unsigned char)model.arch().size()));
    out.append(model.arch());
    put_u64(out, seed);
    Shape3 in = model.input_shape();
    put_i32(out, in.c);
    put_i32(out, in.h);
    put_i32(out, in.w);
    std::vector<const std::vector<double>*> blocks;
    for (int i = 0; i < model.layer_count(); ++i)
        if (auto* p = const_cast<Model&>(model).layer(i).params()) blocks.push_back(p);
    put_i32(out, std::int32_t(blocks.size()));
    for (const auto* b : blocks) {
        put_u64(out, b->size());
        for (double v : *b) put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open " + path + " for writing");
    f.write(out.data(), std::streamsize(out.size()));
    if (!f) throw io_error("failed writing " + path);
}

Model load_model(const std::string& path, std::uint64_t* seed_out) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open model " + path);
    std::string s((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (s.size() < 10 || std::memcmp(s.data(), kModelMagic, 8) != 0)
        throw parse_error(path + ": not a model checkpoint");
    if (s[8] != 1) throw parse_error(path + ": unsupported checkpoint version");
    std::size_t off = 9;
    std::size_t alen = (unsigned char)s[off++];
    if (off + alen + 24 > s.size()) throw parse_error(path + ": truncated checkpoint header");
    std::string arch = s.substr(off, alen);
    off += alen;
    std::uint64_t seed = get_u64(s, off);
    off += 8;
    if (seed_out) *seed_out = seed;
    std::int32_t c = get_i32(s, off), h = get_i32(s, off + 4), w = get_i32(s, off + 8);
    std::int32_t nblocks = get_i32(s, off + 12);
    off += 16;
    if (c != 1 || h < 1 || h != w) throw parse_error(path + ": unsupported input shape");
    Model model = [&] {
        try {
            return build_model(arch, h);
        } catch (const config_error& e) {
            throw parse_error(path + ": " + e.what());
        }
    }();
    std::vector<std::vector<double>*> blocks;
    for (int i = 0; i < model.layer_count(); ++i)
        if (auto* p = model.layer(i).params()) blocks.push_back(p);
    if (std::size_t(nblocks) != blocks.size())
        throw parse_error(path + ": parameter block count mismatch");
    for (auto* b : blocks) {
        if (off + 8 > s.size()) throw parse_error(path + ": truncated checkpoint");
        std::uint64_t n = get_u64(s, off);
        off += 8;
        if (n != b->size()) throw parse_error(path + ": parameter block size mismatch");
        if (off + 8 * n > s.size()) throw parse_error(path + ": truncated checkpoint");
        for (std::uint64_t k = 0; k < n; ++k, off += 8)
            (*b)[std::size_t(k)] = std::bit_cast<double>(get_u64(s, off));
    }
    if (off != s.size()) throw parse_error(path + ": trailing bytes after checkpoint");
    return model;
}

GradCheckReport gradient_check(Model& model, const std::vector<double>& input, int label,
                               double epsilon, double tau, int corrupt_layer,
                               std::size_t corrupt_index, int only_layer) {
    if (!(epsilon > 0.0) || !(tau > 0.0))
        throw config_error("gradient_check: epsilon and tau must be positive");
    model.forward(input);
    model.zero_grads();
    std::vector<double> dlogits;
    softmax_ce(model.logits(), label, &dlogits);
    model.backward(dlogits);

    std::vector<std::vector<double>> analytic(std::size_t(model.layer_count()));
    for (int i = 0; i < model.layer_count(); ++i)
        if (auto* g = model.layer(i).grads()) analytic[std::size_t(i)] = *g;

    GradCheckReport rep;
    for (int li = 0; li < model.layer_count(); ++li) {
        auto* p = model.layer(li).params();
        if (!p || (only_layer >= 0 && li != only_layer)) continue;
        for (std::size_t k = 0; k < p->size(); ++k) {
            double old = (*p)[k];
            (*p)[k] = old + epsilon;
            double lp = softmax_ce(model.forward_from(li), label, nullptr);
            (*p)[k] = old - epsilon;
            double lm = softmax_ce(model.forward_from(li), label, nullptr);
            (*p)[k] = old;
            double fd = (lp - lm) / (2.0 * epsilon);
            double an = analytic[std::size_t(li)][k];
            if (li == corrupt_layer && k == corrupt_index) an += std::max(1.0, std::abs(an));
            double err = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), tau});
            ++rep.params_checked;
            if (err > rep.max_rel_err) {
                rep.max_rel_err = err;
                rep.worst_layer = li;
                rep.worst_index = k;
                rep.worst_analytic = an;
                rep.worst_fd = fd;
            }
        }
        model.forward_from(li);  // restore downstream activations to clean weights
    }
    return rep;
}

}  // namespace hfc
