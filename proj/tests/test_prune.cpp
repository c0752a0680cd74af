#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "prunelab/prune.hpp"
#include "prunelab/rng.hpp"

using namespace prunelab;

namespace {

// Flat single-segment fixture with every coordinate prunable.
ModelState flat_state(std::vector<float> w) {
    ModelState s;
    s.arch.input_shape = {static_cast<int64_t>(w.size())};
    s.params = std::move(w);
    return s;
}

SparsityMask flat_mask(int64_t n) {
    SparsityMask m;
    m.bits.assign(static_cast<size_t>(n), 1);
    m.partition = {{"w", 0, n, true, 0}};
    return m;
}

// Sort-based oracle: full stable sort on (|w|, index), keep everything past
// the first k.
std::set<int64_t> oracle_pruned_set(const std::vector<float>& w, const std::vector<uint8_t>& bits,
                                    double fraction) {
    std::vector<int64_t> idx;
    for (int64_t i = 0; i < static_cast<int64_t>(w.size()); ++i)
        if (bits[static_cast<size_t>(i)]) idx.push_back(i);
    std::stable_sort(idx.begin(), idx.end(), [&](int64_t a, int64_t b) {
        double wa = std::fabs(static_cast<double>(w[static_cast<size_t>(a)]));
        double wb = std::fabs(static_cast<double>(w[static_cast<size_t>(b)]));
        if (wa != wb) return wa < wb;
        return a < b;
    });
    int64_t k = static_cast<int64_t>(fraction * static_cast<double>(idx.size()));
    return std::set<int64_t>(idx.begin(), idx.begin() + k);
}

}  // namespace

TEST(SparsityAfter, ScheduleIdentity) {
    EXPECT_DOUBLE_EQ(sparsity_after(0.2, 0), 0.0);
    EXPECT_NEAR(sparsity_after(0.2, 8), 0.83222784, 1e-8);
    EXPECT_NEAR(sparsity_after(0.2, 4), 0.5904, 1e-10);
    EXPECT_NEAR(sparsity_after(0.2, 9), 0.865782272, 1e-9);
    EXPECT_THROW(sparsity_after(0.2, -1), ConfigError);
}

TEST(MagnitudePrune, GlobalArgmin) {
    ModelState s = flat_state({0.5f, -0.1f, 0.3f, -0.9f, 0.05f});
    SparsityMask m = flat_mask(5);
    SparsityMask out = magnitude_prune(s, m, 0.2);
    std::vector<uint8_t> expect = {1, 1, 1, 1, 0};
    EXPECT_EQ(out.bits, expect);
}

TEST(MagnitudePrune, FractionZeroIsIdentity) {
    ModelState s = flat_state({0.5f, -0.1f, 0.3f});
    SparsityMask m = flat_mask(3);
    SparsityMask out = magnitude_prune(s, m, 0.0);
    EXPECT_EQ(out.bits, m.bits);
    EXPECT_THROW(magnitude_prune(s, m, 1.0), ConfigError);
    EXPECT_THROW(magnitude_prune(s, m, -0.1), ConfigError);
}

TEST(MagnitudePrune, TwoRoundsMatchSortOracle) {
    Rng rng(1234);
    std::vector<float> w(1000);
    for (auto& x : w) x = static_cast<float>(rng.uniform(-1.0, 1.0));
    ModelState s = flat_state(w);
    SparsityMask m = flat_mask(1000);

    SparsityMask m1 = magnitude_prune(s, m, 0.2);
    SparsityMask m2 = magnitude_prune(s, m1, 0.2);
    EXPECT_EQ(m2.prunable_surviving(), 640);
    EXPECT_TRUE(m2.nested_in(m1));
    EXPECT_TRUE(m1.nested_in(m));

    // survivors are exactly the 640 largest magnitudes
    auto pruned_once = oracle_pruned_set(w, m.bits, 0.2);
    std::set<int64_t> total_expected = pruned_once;
    auto second = oracle_pruned_set(w, m1.bits, 0.2);
    total_expected.insert(second.begin(), second.end());
    for (int64_t i = 0; i < 1000; ++i)
        EXPECT_EQ(m2.bits[static_cast<size_t>(i)] == 0, total_expected.count(i) == 1) << i;
}

TEST(MagnitudePrune, TieBreaksByAscendingIndex) {
    ModelState s = flat_state({0.5f, 0.1f, 0.1f, 0.1f, 0.9f});
    SparsityMask m = flat_mask(5);
    SparsityMask out = magnitude_prune(s, m, 0.4);  // k = 2, three tied at 0.1
    std::vector<uint8_t> expect = {1, 0, 0, 1, 1};
    EXPECT_EQ(out.bits, expect);
}

TEST(MagnitudePrune, RandomTrialsMatchOracle) {
    Rng rng(777);
    for (int trial = 0; trial < 60; ++trial) {
        int64_t n = 50 + static_cast<int64_t>(rng.next_below(200));
        std::vector<float> w(static_cast<size_t>(n));
        for (auto& x : w) {
            x = static_cast<float>(rng.uniform(-1.0, 1.0));
            if (rng.next_below(10) == 0) x = 0.25f;  // inject ties
        }
        ModelState s = flat_state(w);
        SparsityMask m = flat_mask(n);
        // random starting mask
        for (auto& b : m.bits) b = rng.next_below(4) ? 1 : 0;
        double fraction = rng.uniform(0.05, 0.6);
        auto expect = oracle_pruned_set(w, m.bits, fraction);
        SparsityMask out = magnitude_prune(s, m, fraction);
        for (int64_t i = 0; i < n; ++i) {
            bool was = m.bits[static_cast<size_t>(i)];
            bool now = out.bits[static_cast<size_t>(i)];
            if (!was)
                EXPECT_FALSE(now);
            else
                EXPECT_EQ(!now, expect.count(i) == 1);
        }
    }
}

TEST(MagnitudePrune, BiasesAreNeverPruned) {
    Arch arch = make_mlp(4, {8}, 2);
    ModelState s = init_state(arch, 5);
    SparsityMask m = make_dense_mask(arch);
    SparsityMask out = magnitude_prune(s, m, 0.5);
    for (const auto& seg : out.partition)
        if (!seg.prunable)
            for (int64_t i = seg.offset; i < seg.offset + seg.count; ++i)
                EXPECT_EQ(out.bits[static_cast<size_t>(i)], 1);
    out.validate();
}

TEST(Rewind, DenseMaskRestoresReference) {
    Arch arch = make_mlp(4, {6}, 2);
    ModelState ref = init_state(arch, 9);
    ModelState trained = ref;
    for (auto& p : trained.params) p += 1.0f;
    trained.epoch_tag = 12;
    ModelState back = rewind(trained, ref, make_dense_mask(arch));
    EXPECT_EQ(back.params, ref.params);
    EXPECT_EQ(back.epoch_tag, ref.epoch_tag);
}

TEST(Rewind, MaskedLayerIsExactlyZero) {
    Arch arch = make_mlp(4, {6}, 2);
    ModelState ref = init_state(arch, 9);
    SparsityMask m = make_dense_mask(arch);
    const ParamSegment& seg = m.partition[0];
    for (int64_t i = seg.offset; i < seg.offset + seg.count; ++i)
        m.bits[static_cast<size_t>(i)] = 0;
    ModelState out = rewind(ref, ref, m);
    for (int64_t i = seg.offset; i < seg.offset + seg.count; ++i)
        EXPECT_EQ(out.params[static_cast<size_t>(i)], 0.0f);
}

TEST(Rewind, MatchesElementwiseProductOracle) {
    Rng rng(4242);
    Arch arch = make_mlp(6, {10}, 3);
    ModelState ref = init_state(arch, 31);
    ModelState trained = init_state(arch, 32);
    SparsityMask m = make_dense_mask(arch);
    for (const auto& seg : m.partition)
        if (seg.prunable)
            for (int64_t i = seg.offset; i < seg.offset + seg.count; ++i)
                m.bits[static_cast<size_t>(i)] = rng.next_below(2) ? 1 : 0;
    ModelState out = rewind(trained, ref, m);
    // independent elementwise product; + 0.0f folds -0 into +0 so the byte
    // hashes are comparable
    std::vector<float> expect(ref.params.size());
    for (size_t i = 0; i < expect.size(); ++i)
        expect[i] = ref.params[i] * static_cast<float>(m.bits[i]) + 0.0f;
    EXPECT_EQ(fnv1a64(out.params), fnv1a64(expect));
}

TEST(Rewind, ArchMismatchRejected) {
    ModelState a = init_state(make_mlp(4, {6}, 2), 1);
    ModelState b = init_state(make_mlp(4, {7}, 2), 1);
    EXPECT_THROW(rewind(a, b, make_dense_mask(b.arch)), ConfigError);
}

TEST(MaskFile, RoundTripAndValidation) {
    Arch arch = make_mlp(5, {4}, 2);
    ModelState s = init_state(arch, 3);
    SparsityMask m = magnitude_prune(s, make_dense_mask(arch), 0.3);
    fs::path path = fs::temp_directory_path() / "prunelab_mask.bin";
    save_mask(path, m, arch.hash(), "run-123");
    uint64_t hash = 0;
    SparsityMask back = load_mask(path, &hash);
    EXPECT_EQ(back.bits, m.bits);
    EXPECT_EQ(hash, arch.hash());
    EXPECT_NEAR(back.density(), m.density(), 1e-12);

    std::string raw = read_file(path);
    raw[0] = 'X';
    atomic_write(path, raw);
    EXPECT_THROW(load_mask(path), FormatError);
    fs::remove(path);
}
