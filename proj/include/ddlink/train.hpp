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

#include "ddlink/checkpoint.hpp"
#include "ddlink/data.hpp"
#include "ddlink/link.hpp"
#include "ddlink/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace ddlink {

struct TrainConfig {
    int batch = 64;
    double learning_rate = 1e-3;
    int max_iterations = 600;
    int patience = 20;       // validation evaluations without improvement
    double val_fraction = 0.1;
    int eval_every = 10;     // iterations between validation evaluations
    std::uint64_t seed = 1;
    double noise_var = 0.01; // sigma^2 the cost is evaluated at
    Equalizer kind = Equalizer::mmse;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    void validate() const {
        if (batch < 1) throw ConfigError("train: batch must be >= 1");
        if (learning_rate < 0.0) throw ConfigError("train: learning rate must be >= 0");
        if (max_iterations < 0) throw ConfigError("train: iterations must be >= 0");
        if (patience < 1) throw ConfigError("train: patience must be >= 1");
        if (val_fraction <= 0.0 || val_fraction >= 1.0)
            throw ConfigError("train: validation fraction must lie in (0, 1)");
        if (eval_every < 1) throw ConfigError("train: eval_every must be >= 1");
        if (noise_var <= 0.0) throw ConfigError("train: noise variance must be > 0");
    }
};

struct LossRow {
    std::uint64_t iteration = 0;
    double train_cost = 0.0;
    double val_cost = 0.0;
    bool has_val = false;
};

struct TrainResult {
    NetworkParams best;          // parameters at the best validation cost
    Checkpoint last;             // resumable state (params + optimizer moments)
    std::vector<LossRow> history;
    double initial_cost = 0.0;   // validation cost before the first update
    double final_cost = 0.0;     // validation cost of the returned parameters
    double best_val = std::numeric_limits<double>::infinity();
    std::uint64_t iterations_run = 0;
    bool aborted_non_finite = false;
};

namespace detail {

/// Cost of one example on the differentiable route. The predictive network
/// consumes the estimated history and equalizes with the current-frame
/// estimate; the perfect-CSI baseline sees the true channel on both sides.
inline ad::Tensor example_cost(const NetworkParams& taped, const SequenceExample& ex,
                               const TrainConfig& tc) {
    if (taped.arch == kArchPredictive) {
        ad::CMat p = predictive_forward(taped, ex.history);
        return analytic_fer_t(ex.h_true, ex.h_est, p, tc.noise_var, taped.cfg.mod_order, tc.kind);
    }
    ad::CMat p = baseline_forward(taped, pack_channel(ex.h_true));
    return analytic_fer_t(ex.h_true, ex.h_true, p, tc.noise_var, taped.cfg.mod_order, tc.kind);
}

/// Deterministic Fisher-Yates permutation of 0..n-1 under a derived stream.
inline std::vector<int> permutation(int n, const Rng& base, std::uint64_t tag, std::uint64_t salt) {
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    Rng rng = base.stream(tag, salt);
    for (int i = n - 1; i > 0; --i)
        std::swap(idx[static_cast<std::size_t>(i)],
                  idx[static_cast<std::size_t>(rng.uniform_int(0, i))]);
    return idx;
}

} // namespace detail

/// Mean closed-form FER of a parameter set over dataset examples (plain
/// evaluation route, no tape). Singular zero-forcing draws count as FER 1.
inline double mean_analytic_fer(const NetworkParams& params, const TrajectoryDataset& ds,
                                const std::vector<int>& indices, double noise_var,
                                Equalizer kind) {
    if (indices.empty()) throw ConfigError("mean_analytic_fer: no examples selected");
    double sum = 0.0;
    for (int i : indices) {
        const SequenceExample ex = ds.materialize(i);
        ad::CMat p_t = params.arch == kArchPredictive
                           ? predictive_forward(params, ex.history)
                           : baseline_forward(params, pack_channel(ex.h_true));
        const Precoder p{to_cmatrix(p_t), params.cfg.power_budget};
        const CMatrix& h_eq = params.arch == kArchPredictive ? ex.h_est : ex.h_true;
        double fer;
        try {
            fer = analytic_fer(ex.h_true, h_eq, p, noise_var, params.cfg.mod_order, kind);
        } catch (const SingularMatrixError&) {
            fer = 1.0;
        }
        sum += fer;
    }
    return sum / static_cast<double>(indices.size());
}

/// Mean closed-form FER of a fixed precoder (e.g. identity) over examples.
inline double mean_analytic_fer_fixed(const Precoder& p, const TrajectoryDataset& ds,
                                      const std::vector<int>& indices, double noise_var,
                                      int order, Equalizer kind) {
    if (indices.empty()) throw ConfigError("mean_analytic_fer_fixed: no examples selected");
    double sum = 0.0;
    for (int i : indices) {
        const SequenceExample ex = ds.materialize(i);
        double fer;
        try {
            fer = analytic_fer(ex.h_true, ex.h_est, p, noise_var, order, kind);
        } catch (const SingularMatrixError&) {
            fer = 1.0;
        }
        sum += fer;
    }
    return sum / static_cast<double>(indices.size());
}

/// Unsupervised training: minimize the mean closed-form FER over minibatches
/// by backpropagation with per-parameter first/second moment estimates
/// (decays 0.9/0.999, epsilon 1e-8). The batch schedule is a pure function
/// of (seed, iteration), so a run resumed from a checkpoint reproduces the
/// unbroken run exactly. Returns the best-validation parameters; a
/// non-finite cost aborts with the last finite state.
inline TrainResult train(const TrajectoryDataset& ds, const NetworkParams& initial,
                         const TrainConfig& tc, const TrainingState* resume = nullptr) {
    tc.validate();
    initial.cfg.validate();
    if (ds.size() < 2) throw ConfigError("train: dataset needs at least 2 sequences");
    if (initial.arch == kArchPredictive && ds.tau != initial.cfg.tau)
        throw ConfigError("train: dataset history depth does not match the network");

    const Rng base(tc.seed);

    // Deterministic validation split.
    const std::vector<int> split = detail::permutation(ds.size(), base, 0x5117u, 0);
    int n_val = static_cast<int>(std::lround(tc.val_fraction * ds.size()));
    n_val = std::clamp(n_val, 1, ds.size() - 1);
    const std::vector<int> val_idx(split.begin(), split.begin() + n_val);
    const std::vector<int> train_idx(split.begin() + n_val, split.end());
    const int n_train = static_cast<int>(train_idx.size());
    const int batches_per_epoch = (n_train + tc.batch - 1) / tc.batch;

    // Batch for a 1-based iteration number: slot within a per-epoch shuffle.
    auto batch_indices = [&](std::uint64_t iter) {
        const std::uint64_t b = iter - 1;
        const std::uint64_t epoch = b / static_cast<std::uint64_t>(batches_per_epoch);
        const int slot = static_cast<int>(b % static_cast<std::uint64_t>(batches_per_epoch));
        const std::vector<int> order = detail::permutation(n_train, base, 0xBA7C4u, epoch);
        const int lo = slot * tc.batch;
        const int hi = std::min(n_train, lo + tc.batch);
        std::vector<int> out;
        out.reserve(static_cast<std::size_t>(hi - lo));
        for (int i = lo; i < hi; ++i) out.push_back(train_idx[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]);
        return out;
    };

    NetworkParams params = initial;
    TrainingState opt;
    if (resume) {
        opt = *resume;
    } else {
        for (const auto& t : params.tensors) {
            opt.moment1.push_back({t.name, ad::Tensor::zeros(t.tensor.shape())});
            opt.moment2.push_back({t.name, ad::Tensor::zeros(t.tensor.shape())});
        }
        opt.best_validation = std::numeric_limits<double>::infinity();
    }

    TrainResult res;
    res.initial_cost = mean_analytic_fer(params, ds, val_idx, tc.noise_var, tc.kind);
    res.best = params;
    res.best_val = resume ? opt.best_validation : res.initial_cost;
    if (!resume) opt.best_validation = res.best_val;

    int evals_since_improve = 0;
    std::uint64_t iter = opt.iteration;
    const std::uint64_t stop_at = opt.iteration + static_cast<std::uint64_t>(tc.max_iterations);

    while (iter < stop_at) {
        ++iter;
        const std::vector<int> bidx = batch_indices(iter);

        double train_cost;
        try {
            ad::Tape tape;
            NetworkParams taped = params.taped_copy(tape);
            ad::Tensor cost;
            for (std::size_t i = 0; i < bidx.size(); ++i) {
                ad::Tensor c = detail::example_cost(taped, ds.materialize(bidx[i]), tc);
                cost = i == 0 ? c : ad::add(cost, c);
            }
            cost = ad::scale(cost, 1.0 / static_cast<double>(bidx.size()));
            train_cost = cost.value();
            if (!std::isfinite(train_cost)) throw NumericError("training cost is not finite");

            ad::Gradients grads = tape.backward(cost);

            // Moment-estimate update in canonical tensor order. The bias
            // correction uses the global iteration count, which survives
            // checkpoint resume because the moments do too.
            const double t_num = static_cast<double>(iter);
            const double bc1 = 1.0 - std::pow(tc.beta1, t_num);
            const double bc2 = 1.0 - std::pow(tc.beta2, t_num);
            for (std::size_t p = 0; p < params.tensors.size(); ++p) {
                const ad::Tensor g = grads.wrt(taped.tensors[p].tensor);
                const auto& gv = g.values();
                std::vector<double> m = opt.moment1[p].tensor.values();
                std::vector<double> v = opt.moment2[p].tensor.values();
                std::vector<double> w = params.tensors[p].tensor.values();
                for (std::size_t j = 0; j < gv.size(); ++j) {
                    m[j] = tc.beta1 * m[j] + (1.0 - tc.beta1) * gv[j];
                    v[j] = tc.beta2 * v[j] + (1.0 - tc.beta2) * gv[j] * gv[j];
                    const double mhat = m[j] / bc1;
                    const double vhat = v[j] / bc2;
                    w[j] -= tc.learning_rate * mhat / (std::sqrt(vhat) + tc.epsilon);
                }
                opt.moment1[p].tensor = ad::Tensor(g.shape(), std::move(m));
                opt.moment2[p].tensor = ad::Tensor(g.shape(), std::move(v));
                params.tensors[p].tensor = ad::Tensor(g.shape(), std::move(w));
            }
        } catch (const NumericError&) {
            res.aborted_non_finite = true;
            --iter;
            break;
        }

        LossRow row;
        row.iteration = iter;
        row.train_cost = train_cost;

        const bool last_iter = iter == stop_at;
        if (iter % static_cast<std::uint64_t>(tc.eval_every) == 0 || last_iter) {
            const double val = mean_analytic_fer(params, ds, val_idx, tc.noise_var, tc.kind);
            row.val_cost = val;
            row.has_val = true;
            if (val < opt.best_validation) {
                opt.best_validation = val;
                res.best = params;
                evals_since_improve = 0;
            } else {
                ++evals_since_improve;
            }
            res.history.push_back(row);
            if (evals_since_improve >= tc.patience) break;
        } else {
            res.history.push_back(row);
        }
    }

    opt.iteration = iter;
    res.iterations_run = iter - (resume ? resume->iteration : 0);
    res.best_val = opt.best_validation;
    res.final_cost = mean_analytic_fer(res.best, ds, val_idx, tc.noise_var, tc.kind);
    res.last.params = params;
    res.last.seed = tc.seed;
    res.last.training = opt;
    return res;
}

} // namespace ddlink
