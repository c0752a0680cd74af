#pragma once

#include <cstdlib>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "prunelab/dataset.hpp"
#include "prunelab/mask.hpp"
#include "prunelab/trainer.hpp"

namespace prunelab {

// Worker count for embarrassingly parallel loss evaluations. Absent or
// invalid env means serial. Results are always reduced in index order, so
// the worker count never changes any output.
inline int worker_count() {
    const char* env = std::getenv("PRUNELAB_WORKERS");
    if (!env) return 1;
    int n = std::atoi(env);
    return n > 1 ? n : 1;
}

template <typename F>
inline void parallel_for(int64_t n, F&& f) {
    int workers = worker_count();
    if (workers <= 1 || n < 2) {
        for (int64_t i = 0; i < n; ++i) f(i);
        return;
    }
    workers = static_cast<int>(std::min<int64_t>(workers, n));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&, w]() {
            for (int64_t i = w; i < n; i += workers) f(i);
        });
    for (auto& t : pool) t.join();
}

// Straight-line blend of two parameter vectors: (1 - alpha) a + alpha b.
// Coordinates that are zero in both endpoints stay exactly zero.
inline ModelState interpolate(const ModelState& a, const ModelState& b, double alpha) {
    if (!(a.arch == b.arch)) throw ConfigError("interpolate: architecture mismatch");
    ModelState out = a;
    for (size_t i = 0; i < out.params.size(); ++i)
        out.params[i] = static_cast<float>((1.0 - alpha) * static_cast<double>(a.params[i]) +
                                           alpha * static_cast<double>(b.params[i]));
    return out;
}

// Midpoint loss above the endpoint mean, floored at zero. Negative values
// mean "connected" and carry no extra information for the stability ratio.
inline double barrier_height(const std::vector<double>& losses, const std::vector<double>& alphas) {
    if (losses.size() != alphas.size())
        throw ConfigError("barrier_height: losses and alphas differ in length");
    auto find = [&](double a) {
        for (size_t i = 0; i < alphas.size(); ++i)
            if (std::fabs(alphas[i] - a) < 1e-9) return losses[i];
        throw ConfigError("barrier_height: grid is missing alpha = " + std::to_string(a));
    };
    double l0 = find(0.0), lh = find(0.5), l1 = find(1.0);
    return std::max(0.0, lh - 0.5 * (l0 + l1));
}

struct InstabilityReport {
    std::vector<double> alphas;
    std::vector<double> losses;       // full-train-set loss at each alpha
    double endpoint_acc_a = 0.0;      // test accuracy of the alpha=0 branch
    double endpoint_acc_b = 0.0;
    double barrier = 0.0;
    double sparsity = 0.0;
    std::string method_tag;           // dense / imp / synthetic
    uint64_t order_seed_a = 0;
    uint64_t order_seed_b = 0;
};

// Trains two copies of (init * mask) that differ only in data order, then
// measures the train loss along the straight line between them. Equal order
// seeds are allowed as the degenerate control (identical branches, zero
// barrier).
inline InstabilityReport lmc_study(const ModelState& init, const SparsityMask& mask,
                                   const LabeledDataset& real_train, const LabeledDataset& real_test,
                                   const TrainRecipe& recipe, uint64_t order_seed_1,
                                   uint64_t order_seed_2, int alpha_steps,
                                   const std::string& method_tag = "") {
    if (alpha_steps < 3) throw ConfigError("lmc_study: alpha_steps must be >= 3");
    if (alpha_steps % 2 == 0)
        throw ConfigError("lmc_study: alpha_steps must be odd so the grid includes 0.5");

    auto branch = [&](uint64_t seed) {
        TrainRecipe r = recipe;
        r.order_seed = seed;
        try {
            return train(init, mask, real_train, r).state;
        } catch (const NumericError& e) {
            throw NumericError("lmc branch with order seed " + std::to_string(seed) + ": " +
                                   e.what(),
                               e.layer_index);
        }
    };
    ModelState a = branch(order_seed_1);
    ModelState b = branch(order_seed_2);

    InstabilityReport rep;
    rep.method_tag = method_tag;
    rep.sparsity = mask.sparsity();
    rep.order_seed_a = order_seed_1;
    rep.order_seed_b = order_seed_2;
    rep.alphas.resize(static_cast<size_t>(alpha_steps));
    rep.losses.resize(static_cast<size_t>(alpha_steps));
    for (int i = 0; i < alpha_steps; ++i)
        rep.alphas[static_cast<size_t>(i)] =
            static_cast<double>(i) / static_cast<double>(alpha_steps - 1);
    parallel_for(alpha_steps, [&](int64_t i) {
        rep.losses[static_cast<size_t>(i)] =
            eval_loss(interpolate(a, b, rep.alphas[static_cast<size_t>(i)]), real_train);
    });
    rep.endpoint_acc_a = eval_accuracy(a, real_test);
    rep.endpoint_acc_b = eval_accuracy(b, real_test);
    rep.barrier = barrier_height(rep.losses, rep.alphas);
    return rep;
}

struct LandscapeGrid {
    std::vector<float> basis_u;  // unit vector along (b - a)
    std::vector<float> basis_v;  // unit vector orthogonal to u
    std::vector<double> u_coords;  // grid coordinates along u (absolute units)
    std::vector<double> v_coords;
    std::vector<double> losses;  // row-major [v index][u index]
    double endpoint_a_u = 0.0, endpoint_a_v = 0.0;
    double endpoint_b_u = 0.0, endpoint_b_v = 0.0;

    double loss_at(int64_t vi, int64_t ui) const {
        return losses[static_cast<size_t>(vi * static_cast<int64_t>(u_coords.size()) + ui)];
    }
};

// Two-dimensional slice through the span of two trained endpoints: u points
// from a to b, v is a seeded random direction orthonormalized against u with
// masked coordinates zeroed first. The grid covers both endpoints plus
// `margin` of slack on every side. loss_fn is evaluated at every grid point.
inline LandscapeGrid landscape_grid_fn(const ModelState& trained_a, const ModelState& trained_b,
                                       const SparsityMask& mask, int64_t grid_n, double margin,
                                       uint64_t direction_seed,
                                       const std::function<double(const ModelState&)>& loss_fn) {
    if (!(trained_a.arch == trained_b.arch)) throw ConfigError("landscape_grid: arch mismatch");
    if (grid_n < 2) throw ConfigError("landscape_grid: grid_n must be >= 2");
    if (margin < 0.0) throw ConfigError("landscape_grid: margin must be >= 0");
    const size_t p = trained_a.params.size();
    if (mask.bits.size() != p) throw ConfigError("landscape_grid: mask not aligned");

    std::vector<double> diff(p);
    double norm2 = 0.0;
    for (size_t i = 0; i < p; ++i) {
        diff[i] = static_cast<double>(trained_b.params[i]) - static_cast<double>(trained_a.params[i]);
        norm2 += diff[i] * diff[i];
    }
    double dist = std::sqrt(norm2);
    if (dist < 1e-9)
        throw ConfigError("landscape_grid: endpoints coincide (|b - a| = " + std::to_string(dist) +
                          "); the plane is degenerate");

    LandscapeGrid grid;
    grid.basis_u.resize(p);
    for (size_t i = 0; i < p; ++i) grid.basis_u[i] = static_cast<float>(diff[i] / dist);

    Rng rng(mix_key(direction_seed, 0x67726964));  // "grid"
    std::vector<double> v(p);
    for (int attempt = 0;; ++attempt) {
        if (attempt >= 10) throw NumericError("landscape_grid: could not build a second basis vector");
        for (size_t i = 0; i < p; ++i) v[i] = mask.bits[i] ? rng.normal() : 0.0;
        double du = 0.0;
        for (size_t i = 0; i < p; ++i) du += v[i] * static_cast<double>(grid.basis_u[i]);
        double vnorm2 = 0.0;
        for (size_t i = 0; i < p; ++i) {
            v[i] -= du * static_cast<double>(grid.basis_u[i]);
            vnorm2 += v[i] * v[i];
        }
        if (vnorm2 > 1e-18) {
            double vnorm = std::sqrt(vnorm2);
            grid.basis_v.resize(p);
            for (size_t i = 0; i < p; ++i) grid.basis_v[i] = static_cast<float>(v[i] / vnorm);
            break;
        }
    }

    auto linspace = [](double lo, double hi, int64_t n) {
        std::vector<double> xs(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i)
            xs[static_cast<size_t>(i)] =
                lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
        return xs;
    };
    grid.u_coords = linspace(-margin * dist, (1.0 + margin) * dist, grid_n);
    grid.v_coords = linspace(-(0.5 + margin) * dist, (0.5 + margin) * dist, grid_n);
    grid.endpoint_a_u = 0.0;
    grid.endpoint_a_v = 0.0;
    grid.endpoint_b_u = dist;
    grid.endpoint_b_v = 0.0;

    grid.losses.assign(static_cast<size_t>(grid_n * grid_n), 0.0);
    parallel_for(grid_n * grid_n, [&](int64_t flat) {
        int64_t vi = flat / grid_n, ui = flat % grid_n;
        double s = grid.u_coords[static_cast<size_t>(ui)];
        double t = grid.v_coords[static_cast<size_t>(vi)];
        ModelState point = trained_a;
        for (size_t i = 0; i < p; ++i)
            point.params[i] = static_cast<float>(static_cast<double>(trained_a.params[i]) +
                                                 s * static_cast<double>(grid.basis_u[i]) +
                                                 t * static_cast<double>(grid.basis_v[i]));
        grid.losses[static_cast<size_t>(flat)] = loss_fn(point);
    });
    return grid;
}

inline LandscapeGrid landscape_grid(const ModelState& trained_a, const ModelState& trained_b,
                                    const SparsityMask& mask, const LabeledDataset& real_train,
                                    int64_t grid_n, double margin, uint64_t direction_seed) {
    return landscape_grid_fn(trained_a, trained_b, mask, grid_n, margin, direction_seed,
                             [&](const ModelState& s) { return eval_loss(s, real_train); });
}

enum class HessianEstimator : uint8_t { kExactTiny, kHutchinson };

inline std::string estimator_name(HessianEstimator e) {
    return e == HessianEstimator::kExactTiny ? "exact-tiny" : "hutchinson";
}

struct HessianSummary {
    double min = 0.0, max = 0.0, mean = 0.0, stddev = 0.0, mean_abs = 0.0;
    HessianEstimator estimator = HessianEstimator::kHutchinson;
    int probe_count = 0;
    int64_t surviving = 0;
    std::vector<double> diagonal;  // per surviving coordinate, in index order
};

inline HessianSummary summarize_diagonal(std::vector<double> diag, HessianEstimator est,
                                         int probes) {
    HessianSummary s;
    s.estimator = est;
    s.probe_count = probes;
    s.surviving = static_cast<int64_t>(diag.size());
    if (diag.empty()) throw ConfigError("hessian summary: no surviving coordinates");
    s.min = s.max = diag[0];
    double sum = 0.0, sum_abs = 0.0;
    for (double d : diag) {
        s.min = std::min(s.min, d);
        s.max = std::max(s.max, d);
        sum += d;
        sum_abs += std::fabs(d);
    }
    s.mean = sum / static_cast<double>(diag.size());
    s.mean_abs = sum_abs / static_cast<double>(diag.size());
    double var = 0.0;
    for (double d : diag) var += (d - s.mean) * (d - s.mean);
    s.stddev = std::sqrt(var / static_cast<double>(diag.size()));
    s.diagonal = std::move(diag);
    return s;
}

// Diagonal estimation against any Hessian-vector product. exact-tiny probes
// every surviving coordinate with a basis vector; hutchinson averages v * Hv
// over Rademacher probes restricted to the surviving support.
inline HessianSummary hessian_diag_fn(
    const std::function<std::vector<float>(const std::vector<float>&)>& hvp_fn, size_t p,
    const std::vector<int64_t>& surviving, HessianEstimator estimator, int probe_count,
    uint64_t probe_seed) {
    if (surviving.empty()) throw ConfigError("hessian_diag: no surviving coordinates");

    if (estimator == HessianEstimator::kExactTiny) {
        std::vector<double> diag(surviving.size(), 0.0);
        parallel_for(static_cast<int64_t>(surviving.size()), [&](int64_t si) {
            std::vector<float> e(p, 0.0f);
            e[static_cast<size_t>(surviving[static_cast<size_t>(si)])] = 1.0f;
            std::vector<float> hv = hvp_fn(e);
            diag[static_cast<size_t>(si)] =
                static_cast<double>(hv[static_cast<size_t>(surviving[static_cast<size_t>(si)])]);
        });
        return summarize_diagonal(std::move(diag), estimator, static_cast<int>(surviving.size()));
    }

    if (probe_count < 1) throw ConfigError("hessian_diag: probe_count must be >= 1");
    std::vector<std::vector<float>> probes(static_cast<size_t>(probe_count));
    Rng rng(mix_key(probe_seed, 0x68757463));  // "hutc"
    for (auto& v : probes) {
        v.assign(p, 0.0f);
        for (int64_t i : surviving) v[static_cast<size_t>(i)] = rng.rademacher();
    }
    std::vector<std::vector<double>> partial(static_cast<size_t>(probe_count));
    parallel_for(probe_count, [&](int64_t pi) {
        const std::vector<float>& v = probes[static_cast<size_t>(pi)];
        std::vector<float> hv = hvp_fn(v);
        std::vector<double>& acc = partial[static_cast<size_t>(pi)];
        acc.resize(surviving.size());
        for (size_t si = 0; si < surviving.size(); ++si) {
            size_t i = static_cast<size_t>(surviving[si]);
            acc[si] = static_cast<double>(v[i]) * static_cast<double>(hv[i]);
        }
    });
    std::vector<double> diag(surviving.size(), 0.0);
    for (const auto& acc : partial)
        for (size_t si = 0; si < surviving.size(); ++si) diag[si] += acc[si];
    for (double& d : diag) d /= static_cast<double>(probe_count);
    return summarize_diagonal(std::move(diag), estimator, probe_count);
}

// Diagonal of the training-loss Hessian over the surviving coordinates of a
// masked model. exact-tiny is guarded to small models.
inline HessianSummary hessian_diag(const ModelState& state, const SparsityMask& mask,
                                   const LabeledDataset& real_train, HessianEstimator estimator,
                                   int probe_count, int batch_size, uint64_t probe_seed) {
    if (mask.bits.size() != state.params.size())
        throw ConfigError("hessian_diag: mask not aligned to state");
    if (estimator == HessianEstimator::kExactTiny && state.param_count() > 5000)
        throw ConfigError("hessian_diag: exact-tiny is limited to 5000 parameters (model has " +
                          std::to_string(state.param_count()) + "); use the hutchinson estimator");
    std::vector<int64_t> surviving;
    for (size_t i = 0; i < mask.bits.size(); ++i)
        if (mask.bits[i]) surviving.push_back(static_cast<int64_t>(i));
    return hessian_diag_fn(
        [&](const std::vector<float>& v) { return hvp_dataset(state, real_train, v, batch_size); },
        state.params.size(), surviving, estimator, probe_count, probe_seed);
}

struct ComparisonPoint {
    double performance_ratio = 0.0;  // synthetic accuracy / imp accuracy
    double stability_ratio = 0.0;    // synthetic barrier / imp barrier
    bool stability_degenerate = false;  // imp barrier below resolution
    double sparsity = 0.0;
    CompressionRatio compression{0, 0, 0.0};
    int iteration = 0;
};

inline constexpr double kBarrierResolution = 1e-6;
inline constexpr double kStabilitySentinel = 100.0;

// One scatter point per sparsity checkpoint: how a synthetic subnetwork
// performs and how stable it is relative to the imp subnetwork at the same
// sparsity. An imp barrier below resolution makes the ratio undefined; it is
// reported as a capped sentinel (or 1 when both barriers vanish) with the
// degenerate flag set.
inline ComparisonPoint compare_at(double syn_acc, double imp_acc, double syn_barrier,
                                  double imp_barrier, double sparsity,
                                  const CompressionRatio& compression, int iteration) {
    if (imp_acc <= 0.0) throw ConfigError("compare: imp accuracy must be positive");
    ComparisonPoint c;
    c.iteration = iteration;
    c.sparsity = sparsity;
    c.compression = compression;
    c.performance_ratio = syn_acc / imp_acc;
    if (imp_barrier < kBarrierResolution) {
        c.stability_degenerate = true;
        c.stability_ratio = (syn_barrier < kBarrierResolution) ? 1.0 : kStabilitySentinel;
    } else {
        c.stability_ratio = syn_barrier / imp_barrier;
    }
    return c;
}

}  // namespace prunelab
