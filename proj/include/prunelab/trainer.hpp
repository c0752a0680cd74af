#pragma once

#include <functional>
#include <map>
#include <vector>

#include "prunelab/dataset.hpp"
#include "prunelab/mask.hpp"
#include "prunelab/model.hpp"
#include "prunelab/sgd.hpp"

namespace prunelab {

// The training algorithm and everything that makes it reproducible. The
// order seed fully determines batch composition; no other randomness enters
// a training run.
struct TrainRecipe {
    double lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 0.0;
    int epochs = 20;
    int batch_size = 64;
    uint64_t order_seed = 0;
    std::vector<int> checkpoint_epochs;
    // stop once train loss improved by less than min_delta over the last
    // `window` epochs
    bool early_stop = true;
    double early_stop_min_delta = 1e-4;
    int early_stop_window = 3;

    void validate() const {
        if (lr <= 0.0) throw ConfigError("recipe: lr must be positive");
        if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("recipe: momentum must be in [0,1)");
        if (weight_decay < 0.0) throw ConfigError("recipe: weight_decay must be >= 0");
        if (epochs < 0) throw ConfigError("recipe: epochs must be >= 0");
        if (batch_size <= 0) throw ConfigError("recipe: batch_size must be positive");
        if (early_stop_window <= 0) throw ConfigError("recipe: early_stop_window must be positive");
        for (int k : checkpoint_epochs)
            if (k < 0 || k > epochs)
                throw ConfigError("recipe: checkpoint epoch " + std::to_string(k) +
                                  " outside [0, epochs]");
    }
};

struct TrainResult {
    ModelState state;                      // weights at the end of training
    std::map<int, ModelState> checkpoints;  // end-of-epoch snapshots (0 = init)
    std::vector<double> epoch_losses;      // mean train loss per completed epoch
    int epochs_run = 0;
    bool early_stopped = false;
};

struct TrainHooks {
    // called after every SGD step with the step index (0-based, counted
    // across epochs) and the current parameters
    std::function<void(int64_t step, const ModelState&)> on_step;
};

// Deterministic masked training: same init, mask, data, and recipe give a
// bit-identical final state.
inline TrainResult train(const ModelState& init, const SparsityMask& mask,
                         const LabeledDataset& data, const TrainRecipe& recipe,
                         const TrainHooks& hooks = {}) {
    recipe.validate();
    data.validate();
    mask.validate();
    if (mask.size() != init.param_count())
        throw ConfigError("train: mask not aligned to parameters");

    TrainResult res;
    res.state = init;
    mask.apply(res.state.params);
    res.state.epoch_tag = 0;
    if (std::count(recipe.checkpoint_epochs.begin(), recipe.checkpoint_epochs.end(), 0) > 0)
        res.checkpoints[0] = res.state;

    MomentumBuffer buf = MomentumBuffer::zeros(init.param_count());
    const int64_t n = data.size();
    int min_epochs = 0;
    for (int k : recipe.checkpoint_epochs) min_epochs = std::max(min_epochs, k);

    int64_t step = 0;
    for (int epoch = 0; epoch < recipe.epochs; ++epoch) {
        EpochOrder order = epoch_order(n, recipe.order_seed, epoch);
        double loss_sum = 0.0;
        for (int64_t start = 0; start < n; start += recipe.batch_size) {
            int64_t end = std::min(n, start + recipe.batch_size);
            std::vector<int64_t> idx(order.permutation.begin() + start,
                                     order.permutation.begin() + end);
            auto [batch, labels] = data.gather(idx);
            double loss = 0.0;
            std::vector<float> grad;
            try {
                grad = loss_grad(res.state, batch, labels, &loss);
            } catch (const NumericError& e) {
                throw NumericError("training diverged at epoch " + std::to_string(epoch) +
                                       ", batch offset " + std::to_string(start) + ": " + e.what(),
                                   e.layer_index);
            }
            loss_sum += loss * static_cast<double>(end - start);
            if (recipe.weight_decay > 0.0)
                for (size_t i = 0; i < grad.size(); ++i)
                    grad[i] += static_cast<float>(recipe.weight_decay) * res.state.params[i];
            sgd_step(res.state, grad, mask, recipe.lr, recipe.momentum, buf);
            if (hooks.on_step) {
                res.state.epoch_tag = epoch;  // still inside this epoch
                hooks.on_step(step, res.state);
            }
            ++step;
        }
        res.state.epoch_tag = epoch + 1;
        res.epoch_losses.push_back(loss_sum / static_cast<double>(n));
        res.epochs_run = epoch + 1;
        if (std::count(recipe.checkpoint_epochs.begin(), recipe.checkpoint_epochs.end(), epoch + 1))
            res.checkpoints[epoch + 1] = res.state;

        const int w = recipe.early_stop_window;
        if (recipe.early_stop && res.epochs_run > w && res.epochs_run >= min_epochs + 1) {
            double before = res.epoch_losses[static_cast<size_t>(res.epochs_run - 1 - w)];
            double now = res.epoch_losses[static_cast<size_t>(res.epochs_run - 1)];
            if (before - now < recipe.early_stop_min_delta) {
                res.early_stopped = true;
                break;
            }
        }
    }
    return res;
}

// Mean loss over the whole dataset in a fixed batch order (no shuffling), so
// repeated evaluations are bit-identical.
inline double eval_loss(const ModelState& state, const LabeledDataset& data, int batch_size = 256) {
    const int64_t n = data.size();
    double total = 0.0;
    for (int64_t start = 0; start < n; start += batch_size) {
        int64_t end = std::min(n, start + batch_size);
        std::vector<int64_t> idx(static_cast<size_t>(end - start));
        for (int64_t i = start; i < end; ++i) idx[static_cast<size_t>(i - start)] = i;
        auto [batch, labels] = data.gather(idx);
        Graph g;
        NodeId p = g.constant(Tensor({state.param_count()}, state.params));
        NodeId logits = build_forward(g, state.arch, p, g.constant(batch));
        NodeId loss = g.ce_loss(logits, std::make_shared<std::vector<int64_t>>(labels));
        total += static_cast<double>(g.val(loss).values[0]) * static_cast<double>(end - start);
    }
    return total / static_cast<double>(n);
}

// Fraction of argmax-correct predictions; ties resolve to the lowest index.
inline double eval_accuracy(const ModelState& state, const LabeledDataset& data,
                            int batch_size = 256) {
    const int64_t n = data.size();
    int64_t correct = 0;
    for (int64_t start = 0; start < n; start += batch_size) {
        int64_t end = std::min(n, start + batch_size);
        std::vector<int64_t> idx(static_cast<size_t>(end - start));
        for (int64_t i = start; i < end; ++i) idx[static_cast<size_t>(i - start)] = i;
        auto [batch, labels] = data.gather(idx);
        Tensor logits = predict_logits(state, batch);
        for (int64_t r = 0; r < logits.shape[0]; ++r) {
            int64_t best = 0;
            for (int64_t c = 1; c < logits.shape[1]; ++c)
                if (logits.at(r, c) > logits.at(r, best)) best = c;
            if (best == labels[static_cast<size_t>(r)]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(n);
}

// Gradient of the mean loss over the full dataset, batched in fixed order.
inline std::vector<float> dataset_grad(const ModelState& state, const LabeledDataset& data,
                                       int batch_size = 256) {
    const int64_t n = data.size();
    std::vector<double> acc(state.params.size(), 0.0);
    for (int64_t start = 0; start < n; start += batch_size) {
        int64_t end = std::min(n, start + batch_size);
        std::vector<int64_t> idx(static_cast<size_t>(end - start));
        for (int64_t i = start; i < end; ++i) idx[static_cast<size_t>(i - start)] = i;
        auto [batch, labels] = data.gather(idx);
        std::vector<float> g = loss_grad(state, batch, labels);
        double w = static_cast<double>(end - start);
        for (size_t i = 0; i < g.size(); ++i) acc[i] += w * static_cast<double>(g[i]);
    }
    std::vector<float> out(acc.size());
    for (size_t i = 0; i < acc.size(); ++i)
        out[i] = static_cast<float>(acc[i] / static_cast<double>(n));
    return out;
}

// Hessian-vector product of the full-dataset loss, central difference of
// dataset_grad with the same step rule as the batch version.
inline std::vector<float> hvp_dataset(const ModelState& state, const LabeledDataset& data,
                                      const std::vector<float>& v, int batch_size = 256) {
    ModelState probe = state;
    return hvp_fd(
        [&](const std::vector<float>& p) {
            probe.params = p;
            return dataset_grad(probe, data, batch_size);
        },
        state.params, v);
}

}  // namespace prunelab
