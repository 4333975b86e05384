// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#pragma once

#include "ddlink/cmatrix.hpp"
#include "ddlink/complex_ops.hpp"
#include "ddlink/rng.hpp"
#include "ddlink/tensor.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace ddlink {

/// Architecture hyperparameters of the precoder networks. The convolutional
/// front end is shared by the predictive network and the perfect-CSI
/// baseline: 2 filters of 3x3x2 with size-preserving padding, ReLU, 2x2 max
/// pooling with stride 2, flatten in H x W x C scan order.
struct NetConfig {
    int m = 8;
    int n = 4;
    int k = 32;      // precoder output columns
    int tau = 5;     // history depth (predictive network only)
    int hidden = 32; // LSTM state size per layer
    int conv_filters = 2;
    int conv_kernel = 3;
    int pool = 2;
    int mod_order = 4;
    double power_budget = 32.0;

    int grid_size() const { return m * n; }
    int pooled_side() const { return grid_size() / pool; }
    int flatten_size() const { return pooled_side() * pooled_side() * conv_filters; }
    int output_size() const { return 2 * k * grid_size(); }

    void validate() const {
        if (m < 1 || n < 1) throw ConfigError("network: m, n must be >= 1");
        if (k < 1 || k > grid_size()) throw ConfigError("network: k must satisfy 1 <= k <= M*N");
        if (tau < 1) throw ConfigError("network: tau must be >= 1");
        if (hidden < 1) throw ConfigError("network: hidden size must be >= 1");
        if (conv_kernel % 2 == 0) throw ConfigError("network: conv kernel must be odd");
        if (pool < 1 || grid_size() / pool < 1) throw ConfigError("network: pool window too large");
        if (power_budget <= 0.0) throw ConfigError("network: power budget must be > 0");
        if (mod_order != 4 && mod_order != 16 && mod_order != 64)
            throw ConfigError("network: unsupported modulation order");
    }

    bool operator==(const NetConfig&) const = default;
};

struct NamedTensor {
    std::string name;
    ad::Tensor tensor;
};

inline const char* kArchPredictive = "clstm-precoder";
inline const char* kArchBaseline = "cnn-precoder";

/// Named parameter set in a fixed canonical order (the order fixes weight
/// initialization draws, optimizer updates, and checkpoint layout).
struct NetworkParams {
    NetConfig cfg;
    std::string arch;
    std::vector<NamedTensor> tensors;

    const ad::Tensor& at(const std::string& name) const {
        for (const auto& t : tensors)
            if (t.name == name) return t.tensor;
        throw ConfigError("network parameter '" + name + "' not found");
    }
    ad::Tensor& at(const std::string& name) {
        for (auto& t : tensors)
            if (t.name == name) return t.tensor;
        throw ConfigError("network parameter '" + name + "' not found");
    }

    /// Copy whose tensors are registered as leaves on the given tape.
    NetworkParams taped_copy(ad::Tape& tape) const {
        NetworkParams out;
        out.cfg = cfg;
        out.arch = arch;
        out.tensors.reserve(tensors.size());
        for (const auto& t : tensors) out.tensors.push_back({t.name, tape.variable(t.tensor)});
        return out;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& t : tensors) n += t.tensor.size();
        return n;
    }
};

namespace detail {

inline ad::Tensor glorot_uniform(ad::Shape shape, int fan_in, int fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::vector<double> data(ad::numel(shape));
    for (auto& v : data) v = rng.uniform(-limit, limit);
    return ad::Tensor(std::move(shape), std::move(data));
}

inline void push_lstm_params(NetworkParams& p, const std::string& prefix, int input, int hidden,
                             Rng& rng) {
    const char* gates[] = {"f", "i", "o", "g"};
    for (const char* g : gates)
        p.tensors.push_back({prefix + ".w" + g,
                             glorot_uniform(ad::Shape{hidden, input}, input, hidden, rng)});
    for (const char* g : gates)
        p.tensors.push_back({prefix + ".u" + g,
                             glorot_uniform(ad::Shape{hidden, hidden}, hidden, hidden, rng)});
    for (const char* g : gates) {
        // Forget gate bias starts at 1 so early training does not flush state.
        const double b0 = (g[0] == 'f') ? 1.0 : 0.0;
        p.tensors.push_back({prefix + ".b" + g, ad::Tensor::full(ad::Shape{hidden, 1}, b0)});
    }
}

inline void push_conv_params(NetworkParams& p, const NetConfig& cfg, Rng& rng) {
    const int kk = cfg.conv_kernel;
    const int receptive = kk * kk * 2;
    p.tensors.push_back({"conv.w",
                         glorot_uniform(ad::Shape{cfg.conv_filters, kk, kk, 2},
                                        receptive, kk * kk * cfg.conv_filters, rng)});
    p.tensors.push_back({"conv.b", ad::Tensor::zeros(ad::Shape{cfg.conv_filters})});
}

inline void push_fc_params(NetworkParams& p, const NetConfig& cfg, int input, Rng& rng) {
    p.tensors.push_back({"fc.w",
                         glorot_uniform(ad::Shape{cfg.output_size(), input},
                                        input, cfg.output_size(), rng)});
    p.tensors.push_back({"fc.b", ad::Tensor::zeros(ad::Shape{cfg.output_size(), 1})});
}

} // namespace detail

/// Predictive precoder network: conv front end per history step, two stacked
/// LSTM layers, affine head, power normalization.
inline NetworkParams init_predictive_params(const NetConfig& cfg, Rng& rng) {
    cfg.validate();
    NetworkParams p;
    p.cfg = cfg;
    p.arch = kArchPredictive;
    detail::push_conv_params(p, cfg, rng);
    detail::push_lstm_params(p, "lstm1", cfg.flatten_size(), cfg.hidden, rng);
    detail::push_lstm_params(p, "lstm2", cfg.hidden, cfg.hidden, rng);
    detail::push_fc_params(p, cfg, cfg.hidden, rng);
    return p;
}

/// Perfect-CSI baseline: one conv layer, one pooling layer, flatten, one
/// affine layer, then the same power-normalized complex assembly.
inline NetworkParams init_baseline_params(const NetConfig& cfg, Rng& rng) {
    cfg.validate();
    NetworkParams p;
    p.cfg = cfg;
    p.arch = kArchBaseline;
    detail::push_conv_params(p, cfg, rng);
    detail::push_fc_params(p, cfg, cfg.flatten_size(), rng);
    return p;
}

// ---------------------------------------------------------------------------
// Packing
// ---------------------------------------------------------------------------

/// Real/imaginary planes of one complex matrix as an MN x MN x 2 tensor
/// (plane 0 = real, plane 1 = imaginary).
inline ad::Tensor pack_channel(const CMatrix& h) {
    const int rows = h.rows(), cols = h.cols();
    std::vector<double> data(static_cast<std::size_t>(rows) * cols * 2);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            const std::size_t base = (static_cast<std::size_t>(r) * cols + c) * 2;
            data[base] = h(r, c).real();
            data[base + 1] = h(r, c).imag();
        }
    return ad::Tensor(ad::Shape{rows, cols, 2}, std::move(data));
}

/// Stack tau estimated channels, oldest first, into tau x MN x MN x 2.
inline ad::Tensor pack_history(const std::vector<CMatrix>& estimates) {
    if (estimates.empty()) throw ShapeError("pack_history: no input matrices");
    const int mn = estimates.front().rows();
    for (const auto& h : estimates)
        if (h.rows() != mn || h.cols() != mn)
            throw ShapeError("pack_history: all matrices must be MN x MN");
    const int tau = static_cast<int>(estimates.size());
    std::vector<double> data(static_cast<std::size_t>(tau) * mn * mn * 2);
    std::size_t at = 0;
    for (const auto& h : estimates)
        for (int r = 0; r < mn; ++r)
            for (int c = 0; c < mn; ++c) {
                data[at++] = h(r, c).real();
                data[at++] = h(r, c).imag();
            }
    return ad::Tensor(ad::Shape{tau, mn, mn, 2}, std::move(data));
}

/// Inverse of pack_history (lossless).
inline std::vector<CMatrix> unpack_history(const ad::Tensor& t) {
    if (t.rank() != 4 || t.dim(3) != 2) throw ShapeError("unpack_history: expected tau x MN x MN x 2");
    const int tau = t.dim(0), rows = t.dim(1), cols = t.dim(2);
    const auto& v = t.values();
    std::vector<CMatrix> out;
    out.reserve(static_cast<std::size_t>(tau));
    std::size_t at = 0;
    for (int s = 0; s < tau; ++s) {
        CMatrix h(rows, cols);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) {
                h(r, c) = {v[at], v[at + 1]};
                at += 2;
            }
        out.push_back(std::move(h));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Forward passes
// ---------------------------------------------------------------------------

struct LstmWeights {
    const ad::Tensor &wf, &wi, &wo, &wg;
    const ad::Tensor &uf, &ui, &uo, &ug;
    const ad::Tensor &bf, &bi, &bo, &bg;
};

inline LstmWeights lstm_weights(const NetworkParams& p, const std::string& prefix) {
    return {p.at(prefix + ".wf"), p.at(prefix + ".wi"), p.at(prefix + ".wo"), p.at(prefix + ".wg"),
            p.at(prefix + ".uf"), p.at(prefix + ".ui"), p.at(prefix + ".uo"), p.at(prefix + ".ug"),
            p.at(prefix + ".bf"), p.at(prefix + ".bi"), p.at(prefix + ".bo"), p.at(prefix + ".bg")};
}

struct LstmState {
    ad::Tensor h;
    ad::Tensor c;

    static LstmState zero(int hidden) {
        return {ad::Tensor::zeros(ad::Shape{hidden, 1}), ad::Tensor::zeros(ad::Shape{hidden, 1})};
    }
};

/// Standard forget/input/output-gate cell with tanh candidate:
///   f,i,o = sigmoid(W x + U h + b);  g = tanh(W x + U h + b)
///   c' = f c + i g;  h' = o tanh(c')
inline LstmState lstm_cell(const LstmWeights& w, const ad::Tensor& x, const LstmState& st) {
    using namespace ad;
    auto gate = [&](const Tensor& wx, const Tensor& uh, const Tensor& b) {
        return add(add(matmul(wx, x), matmul(uh, st.h)), b);
    };
    Tensor f = sigmoid(gate(w.wf, w.uf, w.bf));
    Tensor i = sigmoid(gate(w.wi, w.ui, w.bi));
    Tensor o = sigmoid(gate(w.wo, w.uo, w.bo));
    Tensor g = tanh(gate(w.wg, w.ug, w.bg));
    Tensor c = add(mul(f, st.c), mul(i, g));
    Tensor h = mul(o, tanh(c));
    return {h, c};
}

namespace detail {

/// Conv -> ReLU -> max pool -> flatten (column vector) for one MN x MN x 2 slab.
inline ad::Tensor conv_features(const NetworkParams& p, const ad::Tensor& slab) {
    using namespace ad;
    Tensor c = relu(conv2d(slab, p.at("conv.w"), p.at("conv.b")));
    Tensor pooled = max_pool2d(c, p.cfg.pool);
    return reshape(pooled, Shape{p.cfg.flatten_size(), 1});
}

/// Scale a 2MN x K real block to Frobenius norm sqrt(P0) and split it into
/// the real (top MN rows) and imaginary (bottom MN rows) parts of the
/// complex precoder. A zero pre-normalization block has no direction to
/// scale and is reported as a degenerate normalization.
inline ad::CMat assemble_precoder(const NetworkParams& p, const ad::Tensor& head_out) {
    using namespace ad;
    const int mn = p.cfg.grid_size();
    Tensor block = reshape(head_out, Shape{2 * mn, p.cfg.k});
    Tensor norm = sqrt(reduce_sum(mul(block, block)));
    if (norm.value() <= 0.0)
        throw NumericError("precoder normalization degenerate: zero pre-normalization output");
    Tensor scaled = mul(block, scale(reciprocal(norm), std::sqrt(p.cfg.power_budget)));
    return CMat(slice_rows(scaled, 0, mn), slice_rows(scaled, mn, 2 * mn));
}

} // namespace detail

/// Predictive forward pass: per history step conv features feed a two-layer
/// LSTM (layer 1 emits at every step, layer 2 is read at the final step),
/// then the affine head and power-normalized complex assembly. Works both
/// detached (pure inference) and with tape-registered parameters (training).
inline ad::CMat predictive_forward(const NetworkParams& p, const ad::Tensor& history) {
    using namespace ad;
    if (p.arch != kArchPredictive)
        throw ConfigError("predictive_forward: parameter set has architecture '" + p.arch + "'");
    const int mn = p.cfg.grid_size();
    if (history.rank() != 4 || history.dim(0) != p.cfg.tau || history.dim(1) != mn ||
        history.dim(2) != mn || history.dim(3) != 2)
        throw ShapeError("predictive_forward: history must be tau x MN x MN x 2, got " +
                         shape_str(history.shape()));

    const LstmWeights l1 = lstm_weights(p, "lstm1");
    const LstmWeights l2 = lstm_weights(p, "lstm2");
    LstmState s1 = LstmState::zero(p.cfg.hidden);
    LstmState s2 = LstmState::zero(p.cfg.hidden);
    for (int t = 0; t < p.cfg.tau; ++t) {
        Tensor x = ddlink::detail::conv_features(p, take_plane(history, t));
        s1 = lstm_cell(l1, x, s1);
        s2 = lstm_cell(l2, s1.h, s2);
    }
    Tensor head = add(matmul(p.at("fc.w"), s2.h), p.at("fc.b"));
    return ddlink::detail::assemble_precoder(p, head);
}

/// Perfect-CSI baseline forward pass on the current-frame channel
/// (accepts MN x MN x 2 or 1 x MN x MN x 2).
inline ad::CMat baseline_forward(const NetworkParams& p, const ad::Tensor& channel) {
    using namespace ad;
    if (p.arch != kArchBaseline)
        throw ConfigError("baseline_forward: parameter set has architecture '" + p.arch + "'");
    Tensor slab = channel;
    if (slab.rank() == 4) {
        if (slab.dim(0) != 1) throw ShapeError("baseline_forward: leading axis must be 1");
        slab = take_plane(slab, 0);
    }
    const int mn = p.cfg.grid_size();
    if (slab.rank() != 3 || slab.dim(0) != mn || slab.dim(1) != mn || slab.dim(2) != 2)
        throw ShapeError("baseline_forward: channel must be MN x MN x 2");
    Tensor features = ddlink::detail::conv_features(p, slab);
    Tensor head = add(matmul(p.at("fc.w"), features), p.at("fc.b"));
    return ddlink::detail::assemble_precoder(p, head);
}

/// ||P||_F^2 of a (possibly taped) complex precoder.
inline double precoder_power(const ad::CMat& p) {
    double s = 0.0;
    for (double v : p.re.values()) s += v * v;
    for (double v : p.im.values()) s += v * v;
    return s;
}

} // namespace ddlink
