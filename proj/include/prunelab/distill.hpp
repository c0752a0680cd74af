#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "prunelab/dataset.hpp"
#include "prunelab/trainer.hpp"

namespace prunelab {

struct DistillConfig {
    int64_t ipc = 10;
    int outer_steps = 200;   // pixel updates
    int inner_unroll = 5;    // student SGD steps per outer step
    double syn_lr = 1.0;     // learning rate on synthetic pixels
    int match_horizon = 1;   // teacher snapshots ahead to match
    enum class InitMode : uint8_t { kRandomReal, kNoise } init_mode = InitMode::kRandomReal;

    void validate() const {
        if (ipc < 1) throw ConfigError("distill: ipc must be >= 1");
        if (outer_steps < 0) throw ConfigError("distill: outer_steps must be >= 0");
        if (inner_unroll < 1) throw ConfigError("distill: inner_unroll must be >= 1");
        if (match_horizon < 1) throw ConfigError("distill: match_horizon must be >= 1");
        if (syn_lr <= 0.0) throw ConfigError("distill: syn_lr must be positive");
    }
};

inline std::string init_mode_name(DistillConfig::InitMode m) {
    return m == DistillConfig::InitMode::kRandomReal ? "random-real" : "noise";
}

// Teacher parameter snapshots at fixed SGD-step intervals.
struct TrajectoryBank {
    struct Snapshot {
        int64_t step;
        std::vector<float> params;
    };
    struct Trajectory {
        uint64_t seed;
        std::vector<Snapshot> snapshots;  // ascending step, starts at 0
    };
    Arch arch;
    TrainRecipe recipe;  // the recipe the teachers (and students) train with
    std::vector<Trajectory> trajectories;

    uint64_t content_hash() const {
        uint64_t h = fnv1a64(arch.describe());
        for (const auto& t : trajectories) {
            h = fnv1a64(&t.seed, sizeof(t.seed), h);
            for (const auto& s : t.snapshots) {
                h = fnv1a64(&s.step, sizeof(s.step), h);
                h = fnv1a64(s.params.data(), s.params.size() * sizeof(float), h);
            }
        }
        return h;
    }
};

// Trains one teacher per seed on real data, snapshotting the flat parameters
// every `snapshot_interval` steps (plus init and the final step).
inline TrajectoryBank record_teachers(const LabeledDataset& real_data, const Arch& arch,
                                      const TrainRecipe& recipe,
                                      const std::vector<uint64_t>& seeds,
                                      int64_t snapshot_interval) {
    if (seeds.empty()) throw ConfigError("record_teachers: need at least one seed");
    if (snapshot_interval < 1) throw ConfigError("record_teachers: snapshot_interval must be >= 1");
    TrajectoryBank bank;
    bank.arch = arch;
    bank.recipe = recipe;
    SparsityMask dense = make_dense_mask(arch);
    for (uint64_t seed : seeds) {
        TrajectoryBank::Trajectory traj;
        traj.seed = seed;
        ModelState init = init_state(arch, seed);
        traj.snapshots.push_back({0, init.params});
        TrainRecipe r = recipe;
        r.order_seed = mix_key(recipe.order_seed, 0x74656163, seed);  // "teac"
        TrainHooks hooks;
        hooks.on_step = [&](int64_t step, const ModelState& s) {
            if ((step + 1) % snapshot_interval == 0)
                traj.snapshots.push_back({step + 1, s.params});
        };
        TrainResult res;
        try {
            res = train(init, dense, real_data, r, hooks);
        } catch (const NumericError& e) {
            throw NumericError("teacher seed " + std::to_string(seed) + " diverged: " + e.what(),
                               e.layer_index);
        }
        if (traj.snapshots.back().params != res.state.params) {
            int64_t last = traj.snapshots.back().step;
            traj.snapshots.push_back({last + 1, res.state.params});
        }
        bank.trajectories.push_back(std::move(traj));
    }
    return bank;
}

// Builds `steps` taped SGD steps from theta_start on the objective returned
// by make_loss, then the normalized distance to theta_target:
//   || theta_final - target ||^2 / || theta_start - target ||^2.
// The whole construction stays on one tape, so a reverse pass from the
// returned loss yields exact gradients through the unroll.
template <typename LossBuilder>
inline NodeId unroll_trajectory_loss(Graph& g, NodeId theta_start,
                                     const std::vector<float>& theta_target, int steps, double lr,
                                     LossBuilder&& make_loss, NodeId* theta_final_out = nullptr) {
    const std::vector<float>& start_vals = g.val(theta_start).values;
    if (start_vals.size() != theta_target.size())
        throw ConfigError("unroll: start/target parameter counts differ");
    double denom = 0.0;
    for (size_t i = 0; i < theta_target.size(); ++i) {
        double d = static_cast<double>(start_vals[i]) - static_cast<double>(theta_target[i]);
        denom += d * d;
    }
    if (denom < 1e-12) throw NumericError("unroll: start and target coincide");

    NodeId theta = theta_start;
    for (int u = 0; u < steps; ++u) {
        NodeId loss = make_loss(g, theta);
        std::vector<NodeId> grads = g.backward(loss);
        NodeId gtheta = grads[static_cast<size_t>(theta)];
        if (gtheta == kNoNode) continue;  // objective ignores theta
        theta = g.sub(theta, g.scale(gtheta, lr));
    }
    if (theta_final_out) *theta_final_out = theta;
    NodeId diff = g.sub(theta, g.constant(Tensor({static_cast<int64_t>(theta_target.size())},
                                                 theta_target)));
    return g.scale(g.sum_all(g.mul(diff, diff)), 1.0 / denom);
}

struct DistillReport {
    std::vector<double> outer_losses;  // trajectory loss per outer step (nan = skipped)
    int skipped_pairs = 0;
};

// Optimizes a class-balanced synthetic set so that short training runs on it
// track the recorded teacher trajectories. Labels are fixed; pixels are
// clamped to [0, 1] after every update.
inline LabeledDataset distill(const LabeledDataset& real_data, const TrajectoryBank& bank,
                              const DistillConfig& config, uint64_t distill_seed,
                              DistillReport* report = nullptr) {
    config.validate();
    real_data.validate();
    if (bank.trajectories.empty()) throw ConfigError("distill: empty trajectory bank");
    for (const auto& t : bank.trajectories)
        if (t.snapshots.size() < 2)
            throw ConfigError("distill: trajectory for seed " + std::to_string(t.seed) +
                              " has fewer than 2 snapshots");

    const int64_t classes = real_data.class_count;
    const Shape fshape = real_data.feature_shape();
    const int64_t row_sz = shape_numel(fshape);
    const int64_t syn_n = classes * config.ipc;

    // synthetic init: labels in class blocks, pixels from real rows or noise
    LabeledDataset syn;
    syn.role = Role::kSynthetic;
    syn.ipc = config.ipc;
    syn.class_count = classes;
    Shape syn_shape = fshape;
    syn_shape.insert(syn_shape.begin(), syn_n);
    syn.features = Tensor(syn_shape);
    syn.labels.resize(static_cast<size_t>(syn_n));
    Rng init_rng(mix_key(distill_seed, 0x696e6974));  // "init"
    int64_t row = 0;
    for (int64_t c = 0; c < classes; ++c) {
        std::vector<int64_t> pool;
        for (int64_t i = 0; i < real_data.size(); ++i)
            if (real_data.labels[static_cast<size_t>(i)] == c) pool.push_back(i);
        if (config.init_mode == DistillConfig::InitMode::kRandomReal &&
            static_cast<int64_t>(pool.size()) < config.ipc)
            throw ConfigError("distill: class " + std::to_string(c) + " has " +
                              std::to_string(pool.size()) + " real examples, need ipc=" +
                              std::to_string(config.ipc));
        for (int64_t j = 0; j < config.ipc; ++j, ++row) {
            syn.labels[static_cast<size_t>(row)] = c;
            float* dst = &syn.features.values[static_cast<size_t>(row * row_sz)];
            if (config.init_mode == DistillConfig::InitMode::kRandomReal) {
                int64_t pick = static_cast<int64_t>(init_rng.next_below(pool.size() - static_cast<size_t>(j)));
                std::swap(pool[static_cast<size_t>(pick)], pool[pool.size() - 1 - static_cast<size_t>(j)]);
                int64_t src_row = pool[pool.size() - 1 - static_cast<size_t>(j)];
                const float* src = &real_data.features.values[static_cast<size_t>(src_row * row_sz)];
                std::copy(src, src + row_sz, dst);
            } else {
                for (int64_t d = 0; d < row_sz; ++d)
                    dst[d] = static_cast<float>(init_rng.next_double());
            }
        }
    }

    auto labels_shared = std::make_shared<std::vector<int64_t>>(syn.labels);
    Rng pick_rng(mix_key(distill_seed, 0x70616972));  // "pair"
    for (int outer = 0; outer < config.outer_steps; ++outer) {
        const auto& traj =
            bank.trajectories[pick_rng.next_below(bank.trajectories.size())];
        int64_t max_start = static_cast<int64_t>(traj.snapshots.size()) - 1 - config.match_horizon;
        if (max_start < 0)
            throw ConfigError("distill: match_horizon " + std::to_string(config.match_horizon) +
                              " exceeds trajectory depth " + std::to_string(traj.snapshots.size()));
        int64_t j = static_cast<int64_t>(pick_rng.next_below(static_cast<uint64_t>(max_start) + 1));
        const auto& snap_start = traj.snapshots[static_cast<size_t>(j)];
        const auto& snap_target = traj.snapshots[static_cast<size_t>(j + config.match_horizon)];

        double denom = 0.0;
        for (size_t i = 0; i < snap_start.params.size(); ++i) {
            double d = static_cast<double>(snap_start.params[i]) -
                       static_cast<double>(snap_target.params[i]);
            denom += d * d;
        }
        if (denom < 1e-12) {  // teacher stalled between these snapshots
            if (report) {
                report->outer_losses.push_back(std::nan(""));
                report->skipped_pairs++;
            }
            continue;
        }

        Graph g;
        NodeId pixels = g.leaf(syn.features, /*requires_grad=*/true);
        NodeId theta0 = g.leaf(
            Tensor({static_cast<int64_t>(snap_start.params.size())}, snap_start.params),
            /*requires_grad=*/true);
        NodeId traj_loss = unroll_trajectory_loss(
            g, theta0, snap_target.params, config.inner_unroll, bank.recipe.lr,
            [&](Graph& gr, NodeId theta) {
                NodeId logits = build_forward(gr, bank.arch, theta, pixels);
                return gr.ce_loss(logits, labels_shared);
            });
        double loss_val = static_cast<double>(g.val(traj_loss).values[0]);
        if (!std::isfinite(loss_val))
            throw NumericError("distill: non-finite trajectory loss at outer step " +
                               std::to_string(outer));
        if (report) report->outer_losses.push_back(loss_val);

        std::vector<NodeId> grads = g.backward(traj_loss);
        NodeId gx = grads[static_cast<size_t>(pixels)];
        if (gx == kNoNode) continue;
        const Tensor& gxv = g.val(gx);
        for (size_t i = 0; i < syn.features.values.size(); ++i) {
            float v = syn.features.values[i] -
                      static_cast<float>(config.syn_lr) * gxv.values[i];
            syn.features.values[i] = std::min(1.0f, std::max(0.0f, v));
        }
    }
    syn.validate();
    return syn;
}

struct EvalStats {
    double mean = 0.0;
    double stddev = 0.0;
    std::vector<double> per_seed;
};

// Trains fresh students on the synthetic set alone and scores them on real
// held-out data.
inline EvalStats eval_distillate(const LabeledDataset& syn_data, const LabeledDataset& real_eval,
                                 const Arch& arch, const TrainRecipe& recipe,
                                 const std::vector<uint64_t>& student_seeds) {
    if (syn_data.role != Role::kSynthetic)
        throw ConfigError("eval_distillate: dataset must have the synthetic role");
    if (student_seeds.empty()) throw ConfigError("eval_distillate: need at least one student seed");
    SparsityMask dense = make_dense_mask(arch);
    EvalStats stats;
    for (uint64_t seed : student_seeds) {
        ModelState init = init_state(arch, seed);
        TrainRecipe r = recipe;
        r.order_seed = mix_key(recipe.order_seed, 0x73747564, seed);  // "stud"
        TrainResult res = train(init, dense, syn_data, r);
        stats.per_seed.push_back(eval_accuracy(res.state, real_eval));
    }
    double sum = 0.0;
    for (double a : stats.per_seed) sum += a;
    stats.mean = sum / static_cast<double>(stats.per_seed.size());
    double var = 0.0;
    for (double a : stats.per_seed) var += (a - stats.mean) * (a - stats.mean);
    stats.stddev = stats.per_seed.size() > 1
                       ? std::sqrt(var / static_cast<double>(stats.per_seed.size() - 1))
                       : 0.0;
    return stats;
}

}  // namespace prunelab
