#pragma once

#include <cstdio>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "prunelab/prune.hpp"
#include "prunelab/trainer.hpp"

namespace prunelab {

enum class PruneMethod : uint8_t { kImp, kDistilled, kCombined };

inline std::string method_name(PruneMethod m) {
    switch (m) {
        case PruneMethod::kImp: return "imp";
        case PruneMethod::kDistilled: return "distilled";
        case PruneMethod::kCombined: return "combined";
    }
    return "?";
}

struct PruneSchedule {
    double fraction_per_iter = 0.2;
    int iterations = 0;
    PruneMethod method = PruneMethod::kImp;
    int rewind_epoch = 0;
    bool per_layer = false;  // ablation: per-segment instead of global thresholding

    void validate() const {
        if (fraction_per_iter <= 0.0 || fraction_per_iter >= 1.0)
            throw ConfigError("schedule: fraction_per_iter must be in (0, 1)");
        if (iterations < 0) throw ConfigError("schedule: iterations must be >= 0");
        if (rewind_epoch < 0) throw ConfigError("schedule: rewind_epoch must be >= 0");
    }
};

// One row of a pruning run: the mask trained at this iteration plus the
// metrics of the model that represents it on real data.
struct IterationEntry {
    int iteration = 0;        // 0 = dense
    std::string phase;        // "main", or "syn"/"imp" in the combined pipeline
    double sparsity = 0.0;    // prunable-coordinate sparsity of the mask
    double train_loss = 0.0;  // full real-train-set loss after training
    double test_acc = 0.0;
    SparsityMask mask;
};

struct PruneRunRecord {
    std::vector<IterationEntry> entries;
    std::string inner_loop_role;  // dataset role(s) the pruning model trained on
    int phase_boundary = -1;      // last "syn" iteration in the combined pipeline
    uint64_t init_seed = 0;
    uint64_t order_seed = 0;

    const IterationEntry& at_iteration(int i) const {
        for (const auto& e : entries)
            if (e.iteration == i) return e;
        throw ArtifactError("record has no iteration " + std::to_string(i));
    }
};

// Continuation point for an interrupted run: everything the next iteration
// needs, reconstructed from the run directory.
struct PipelineResume {
    std::vector<IterationEntry> entries;
    ModelState prune_source;  // weights the next prune examines
    ModelState reference;     // rewind target
};

struct PipelineHooks {
    // called after each completed iteration; prune_source is the state the
    // next iteration will prune, reference the rewind target (stable after
    // iteration 0)
    std::function<void(const PruneRunRecord& so_far, const ModelState& prune_source,
                       const ModelState& reference)>
        on_iteration;
};

// Per-iteration data order: one stream per (base order seed, iteration).
inline uint64_t iteration_order_seed(uint64_t order_seed, int iteration) {
    return mix_key(order_seed, 0x69746572, static_cast<uint64_t>(iteration));  // "iter"
}

namespace detail {

struct PipelinePlan {
    const LabeledDataset* inner_syn = nullptr;  // inner-loop set for syn-phase iterations
    const LabeledDataset* real_train = nullptr;
    const LabeledDataset* real_test = nullptr;
    int syn_iterations = 0;  // iterations 0..syn_iterations train on syn data
    int total_iterations = 0;
    bool tag_phases = false;  // combined pipeline labels entries syn/imp
    double fraction = 0.2;
    bool per_layer = false;
    int rewind_epoch = 0;
};

inline PruneRunRecord run_pipeline(const ModelState& init, const TrainRecipe& base_recipe,
                                   const PipelinePlan& plan, const PipelineHooks& hooks,
                                   const PipelineResume* resume) {
    base_recipe.validate();
    plan.real_train->validate();
    plan.real_test->validate();
    if (plan.rewind_epoch > 0 && plan.rewind_epoch > base_recipe.epochs)
        throw ConfigError("rewind epoch " + std::to_string(plan.rewind_epoch) +
                          " exceeds the epoch budget " + std::to_string(base_recipe.epochs));

    PruneRunRecord record;
    record.init_seed = init.init_seed;
    record.order_seed = base_recipe.order_seed;
    record.phase_boundary = plan.tag_phases ? plan.syn_iterations : -1;
    if (plan.syn_iterations >= plan.total_iterations && !plan.tag_phases && plan.inner_syn)
        record.inner_loop_role = role_name(plan.inner_syn->role);
    else if (plan.inner_syn)
        record.inner_loop_role =
            role_name(plan.inner_syn->role) + "," + role_name(plan.real_train->role);
    else
        record.inner_loop_role = role_name(plan.real_train->role);

    SparsityMask mask = make_dense_mask(init.arch);
    ModelState prune_source;
    ModelState reference = init;
    reference.epoch_tag = 0;
    int start_iter = 0;
    if (resume) {
        record.entries = resume->entries;
        prune_source = resume->prune_source;
        reference = resume->reference;
        start_iter = static_cast<int>(record.entries.size());
        if (start_iter > 0) mask = record.entries.back().mask;
    }

    for (int iter = start_iter; iter <= plan.total_iterations; ++iter) {
        const bool syn_phase = plan.inner_syn != nullptr && iter <= plan.syn_iterations;
        const LabeledDataset& inner = syn_phase ? *plan.inner_syn : *plan.real_train;

        TrainRecipe recipe = base_recipe;
        recipe.order_seed = iteration_order_seed(base_recipe.order_seed, iter);
        if (iter == 0 && plan.rewind_epoch > 0)
            recipe.checkpoint_epochs.push_back(plan.rewind_epoch);

        if (iter > 0)
            mask = plan.per_layer ? magnitude_prune_per_layer(prune_source, mask, plan.fraction)
                                  : magnitude_prune(prune_source, mask, plan.fraction);

        ModelState start = (iter == 0) ? init : rewind(prune_source, reference, mask);

        TrainResult trained;
        try {
            trained = train(start, mask, inner, recipe);
        } catch (const NumericError& e) {
            throw NumericError("pruning iteration " + std::to_string(iter) + ": " + e.what(),
                               e.layer_index);
        }
        if (iter == 0) {
            if (plan.rewind_epoch > 0) {
                auto it = trained.checkpoints.find(plan.rewind_epoch);
                if (it == trained.checkpoints.end())
                    throw ConfigError("dense run did not reach rewind epoch " +
                                      std::to_string(plan.rewind_epoch));
                reference = it->second;
            } else {
                reference = init;
                reference.epoch_tag = 0;
            }
        }

        // Masks found on synthetic data are scored by retraining on real data.
        ModelState metric_model = trained.state;
        if (syn_phase) {
            TrainResult retrained;
            try {
                retrained = train(start, mask, *plan.real_train, recipe);
            } catch (const NumericError& e) {
                throw NumericError("pruning iteration " + std::to_string(iter) +
                                       " (real retrain): " + e.what(),
                                   e.layer_index);
            }
            metric_model = retrained.state;
        }

        IterationEntry entry;
        entry.iteration = iter;
        entry.phase = plan.tag_phases ? (iter <= plan.syn_iterations ? "syn" : "imp") : "main";
        entry.sparsity = mask.sparsity();
        entry.train_loss = eval_loss(metric_model, *plan.real_train);
        entry.test_acc = eval_accuracy(metric_model, *plan.real_test);
        entry.mask = mask;
        record.entries.push_back(entry);

        // What the next prune examines: the syn-trained weights inside the
        // syn phase, the real-trained weights once the imp phase begins.
        if (syn_phase && iter == plan.syn_iterations && plan.tag_phases)
            prune_source = metric_model;
        else
            prune_source = trained.state;

        if (hooks.on_iteration) hooks.on_iteration(record, prune_source, reference);
    }
    return record;
}

}  // namespace detail

// Iterative magnitude pruning with weight rewinding. rewind_epoch = 0 rewinds
// to initialization; k > 0 rewinds to the dense run's end-of-epoch-k weights.
inline PruneRunRecord run_imp(const ModelState& init, const LabeledDataset& real_train,
                              const LabeledDataset& real_test, const TrainRecipe& recipe,
                              const PruneSchedule& schedule, const PipelineHooks& hooks = {},
                              const PipelineResume* resume = nullptr) {
    schedule.validate();
    if (schedule.method != PruneMethod::kImp)
        throw ConfigError("run_imp: schedule method must be imp");
    detail::PipelinePlan plan;
    plan.real_train = &real_train;
    plan.real_test = &real_test;
    plan.syn_iterations = -1;
    plan.total_iterations = schedule.iterations;
    plan.fraction = schedule.fraction_per_iter;
    plan.per_layer = schedule.per_layer;
    plan.rewind_epoch = schedule.rewind_epoch;
    return detail::run_pipeline(init, recipe, plan, hooks, resume);
}

// Same loop with the inner training on a distilled set; recorded metrics come
// from retraining each mask on real data.
inline PruneRunRecord run_distilled_pruning(const ModelState& init, const LabeledDataset& syn_data,
                                            const LabeledDataset& real_train,
                                            const LabeledDataset& real_test,
                                            const TrainRecipe& recipe, const PruneSchedule& schedule,
                                            const PipelineHooks& hooks = {},
                                            const PipelineResume* resume = nullptr) {
    schedule.validate();
    if (schedule.method != PruneMethod::kDistilled)
        throw ConfigError("run_distilled_pruning: schedule method must be distilled");
    if (syn_data.role != Role::kSynthetic)
        throw ConfigError("run_distilled_pruning: inner-loop data must have the synthetic role");
    if (schedule.rewind_epoch != 0)
        throw ConfigError("run_distilled_pruning: rewinds to initialization only");
    syn_data.validate();
    detail::PipelinePlan plan;
    plan.inner_syn = &syn_data;
    plan.real_train = &real_train;
    plan.real_test = &real_test;
    plan.syn_iterations = schedule.iterations;
    plan.total_iterations = schedule.iterations;
    plan.fraction = schedule.fraction_per_iter;
    plan.per_layer = schedule.per_layer;
    plan.rewind_epoch = 0;
    return detail::run_pipeline(init, recipe, plan, hooks, resume);
}

// Distilled pruning for syn_iters iterations to stabilize the mask, then
// plain IMP (still rewinding to initialization) continuing from it.
inline PruneRunRecord run_combined(const ModelState& init, const LabeledDataset& syn_data,
                                   const LabeledDataset& real_train, const LabeledDataset& real_test,
                                   const TrainRecipe& recipe, int syn_iters,
                                   const PruneSchedule& imp_schedule,
                                   const PipelineHooks& hooks = {},
                                   const PipelineResume* resume = nullptr) {
    imp_schedule.validate();
    if (syn_iters < 1) throw ConfigError("run_combined: syn_iters must be >= 1");
    if (imp_schedule.rewind_epoch != 0)
        throw ConfigError("run_combined: the imp phase rewinds to initialization only");
    if (syn_data.role != Role::kSynthetic)
        throw ConfigError("run_combined: synthetic-phase data must have the synthetic role");
    syn_data.validate();
    detail::PipelinePlan plan;
    plan.inner_syn = &syn_data;
    plan.real_train = &real_train;
    plan.real_test = &real_test;
    plan.syn_iterations = syn_iters;
    plan.total_iterations = syn_iters + imp_schedule.iterations;
    plan.tag_phases = true;
    plan.fraction = imp_schedule.fraction_per_iter;
    plan.per_layer = imp_schedule.per_layer;
    plan.rewind_epoch = 0;
    return detail::run_pipeline(init, recipe, plan, hooks, resume);
}

// ---- record persistence: masks + trained states per iteration, CSV, progress ----

inline std::string record_csv(const std::vector<IterationEntry>& entries) {
    std::string csv = "iteration,sparsity,train_loss,test_acc,phase\n";
    char buf[160];
    for (const auto& e : entries) {
        std::snprintf(buf, sizeof(buf), "%d,%.10g,%.10g,%.10g,%s\n", e.iteration, e.sparsity,
                      e.train_loss, e.test_acc, e.phase.c_str());
        csv += buf;
    }
    return csv;
}

inline void save_state(const fs::path& prefix, const ModelState& state) {
    nlohmann::json meta;
    meta["init_seed"] = state.init_seed;
    meta["epoch_tag"] = state.epoch_tag;
    meta["arch_hash"] = hex64(state.arch.hash());
    meta["param_count"] = state.param_count();
    atomic_write(fs::path(prefix.string() + ".json"), meta.dump(2) + "\n");
    atomic_write_vec(fs::path(prefix.string() + ".f32"), state.params);
}

inline ModelState load_state(const fs::path& prefix, const Arch& arch) {
    nlohmann::json meta =
        nlohmann::json::parse(read_file(fs::path(prefix.string() + ".json")), nullptr, false);
    if (meta.is_discarded()) throw FormatError(prefix.string() + ".json: unparseable JSON");
    if (meta.at("arch_hash").get<std::string>() != hex64(arch.hash()))
        throw FormatError(prefix.string() + ": architecture hash mismatch");
    ModelState s;
    s.arch = arch;
    s.init_seed = meta.at("init_seed").get<uint64_t>();
    s.epoch_tag = meta.at("epoch_tag").get<int>();
    s.params = read_vec<float>(fs::path(prefix.string() + ".f32"));
    if (s.param_count() != arch.param_count())
        throw FormatError(prefix.string() + ": parameter count mismatch");
    return s;
}

inline std::string iter_name(int i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d", i);
    return buf;
}

// Persists one completed iteration. progress.json is written last and acts
// as the commit point for resume.
inline void persist_iteration(const fs::path& dir, const PruneRunRecord& record,
                              const ModelState& prune_source, const ModelState& reference) {
    fs::create_directories(dir / "masks");
    fs::create_directories(dir / "states");
    const IterationEntry& e = record.entries.back();
    save_mask(dir / "masks" / ("mask_" + iter_name(e.iteration) + ".bin"), e.mask,
              prune_source.arch.hash());
    save_state(dir / "states" / "prune_source", prune_source);
    if (e.iteration == 0) save_state(dir / "states" / "reference", reference);
    atomic_write(dir / "record.csv", record_csv(record.entries));
    nlohmann::json prog;
    prog["completed_iterations"] = static_cast<int>(record.entries.size());
    prog["phase_boundary"] = record.phase_boundary;
    prog["inner_loop_role"] = record.inner_loop_role;
    prog["init_seed"] = record.init_seed;
    prog["order_seed"] = record.order_seed;
    atomic_write(dir / "progress.json", prog.dump(2) + "\n");
}

// Rebuilds the continuation point from a run directory, or nullopt when the
// directory holds no completed iteration.
inline std::optional<PipelineResume> load_resume(const fs::path& dir, const Arch& arch) {
    if (!fs::exists(dir / "progress.json")) return std::nullopt;
    nlohmann::json prog = nlohmann::json::parse(read_file(dir / "progress.json"), nullptr, false);
    if (prog.is_discarded()) throw FormatError((dir / "progress.json").string() + ": unparseable");
    int completed = prog.at("completed_iterations").get<int>();
    if (completed == 0) return std::nullopt;

    PipelineResume r;
    r.prune_source = load_state(dir / "states" / "prune_source", arch);
    r.reference = load_state(dir / "states" / "reference", arch);

    // Entries are rebuilt from the CSV plus the mask files.
    std::string csv = read_file(dir / "record.csv");
    size_t pos = csv.find('\n');
    if (pos == std::string::npos) throw FormatError("record.csv: missing header");
    ++pos;
    while (pos < csv.size() && static_cast<int>(r.entries.size()) < completed) {
        size_t eol = csv.find('\n', pos);
        std::string line = csv.substr(pos, eol - pos);
        pos = (eol == std::string::npos) ? csv.size() : eol + 1;
        if (line.empty()) continue;
        IterationEntry e;
        char phase[32] = {0};
        if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%31s", &e.iteration, &e.sparsity,
                        &e.train_loss, &e.test_acc, phase) != 5)
            throw FormatError("record.csv: bad row '" + line + "'");
        e.phase = phase;
        e.mask = load_mask(dir / "masks" / ("mask_" + iter_name(e.iteration) + ".bin"));
        r.entries.push_back(std::move(e));
    }
    if (static_cast<int>(r.entries.size()) != completed)
        throw FormatError("record.csv holds fewer rows than progress.json claims");
    return r;
}

}  // namespace prunelab
