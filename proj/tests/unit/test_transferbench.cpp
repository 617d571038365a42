#include "prefstream/error.hpp"
#include "prefstream/transferbench.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>

namespace prefstream {
namespace {

using testing::make_history;
using testing::mock_endpoint;
using testing::random_history;
using testing::TempDir;

std::vector<double> random_unit(std::mt19937_64& rng, std::size_t dim) {
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> v(dim);
    double norm = 0.0;
    for (double& x : v) {
        x = n(rng);
        norm += x * x;
    }
    for (double& x : v) x /= std::sqrt(norm);
    return v;
}

TEST(Matching, SelfPairsComeFirstWithSimilarityOne) {
    std::mt19937_64 rng(1);
    std::vector<std::string> ids;
    std::vector<std::vector<double>> emb;
    for (int i = 0; i < 1000; ++i) {
        ids.push_back("user" + std::to_string(i));
        emb.push_back(random_unit(rng, 16));
    }
    const auto m = match_embeddings(ids, emb, ids, emb, 1000);
    ASSERT_EQ(m.pairs.size(), 1000u);
    for (const auto& p : m.pairs) {
        EXPECT_EQ(p.user_a, p.user_b);
        EXPECT_NEAR(p.similarity, 1.0, 1e-12);
    }
    EXPECT_TRUE(m.repeated_users.empty());

    TargetTable targets;
    for (const auto& id : ids) targets[id] = {InteractionTriple{0, std::nullopt, "p " + id, "n " + id}};
    const auto swapped = swap_targets(m.pairs, targets, targets);
    ASSERT_EQ(swapped.size(), 2000u);
    for (const auto& t : swapped) {
        EXPECT_EQ(t.history_ref, t.target_ref);
        EXPECT_EQ(t.target, targets.at(t.history_ref).front());
    }
}

TEST(Matching, ExhaustiveThreeByThree) {
    const std::vector<std::string> a{"a0", "a1", "a2"};
    const std::vector<std::string> b{"b0", "b1", "b2"};
    const std::vector<std::vector<double>> ea{{1, 0}, {0, 1}, {0.6, 0.8}};
    const std::vector<std::vector<double>> eb{{1, 0}, {0.8, 0.6}, {0, 1}};
    const auto m = match_embeddings(a, ea, b, eb, 50);
    ASSERT_EQ(m.pairs.size(), 9u);
    std::set<std::pair<std::string, std::string>> seen;
    for (std::size_t i = 0; i < m.pairs.size(); ++i) {
        const auto& p = m.pairs[i];
        seen.emplace(p.user_a, p.user_b);
        const auto ia = static_cast<std::size_t>(p.user_a[1] - '0');
        const auto ib = static_cast<std::size_t>(p.user_b[1] - '0');
        EXPECT_NEAR(p.similarity, ea[ia][0] * eb[ib][0] + ea[ia][1] * eb[ib][1], 1e-15);
        if (i) {
            EXPECT_GE(m.pairs[i - 1].similarity, p.similarity);
        }
    }
    EXPECT_EQ(seen.size(), 9u);
    EXPECT_EQ(m.pairs[0].similarity, 1.0);
    EXPECT_EQ(m.repeated_users.size(), 6u);

    const auto top2 = match_embeddings(a, ea, b, eb, 2);
    ASSERT_EQ(top2.pairs.size(), 2u);
    EXPECT_EQ(top2.pairs[0], (UserPair{"a0", "b0", 1.0}));
    EXPECT_EQ(top2.pairs[1], (UserPair{"a1", "b2", 1.0}));
    EXPECT_THROW(match_embeddings(a, ea, b, eb, 0), ContractError);
}

TEST(Matching, EmbedsRenderedHistories) {
    ModelClient embedder(mock_endpoint(Role::Embedder), std::make_shared<ScriptedMock>());
    std::vector<UserHistory> hs{make_history("x", 4), make_history("y", 4), make_history("z", 4)};
    const auto m = match_users(hs, hs, embedder, 3, 2);
    ASSERT_EQ(m.pairs.size(), 3u);
    for (const auto& p : m.pairs) {
        EXPECT_EQ(p.user_a, p.user_b);
        EXPECT_NEAR(p.similarity, 1.0, 1e-12);
    }
}

TEST(Swap, ProvenanceNamesBothSides) {
    TargetTable ta{{"a", {InteractionTriple{3, std::nullopt, "pa", "na"}, InteractionTriple{4, std::nullopt, "pa2", "na2"}}}};
    TargetTable tb{{"b", {InteractionTriple{5, "ctx", "pb", "nb"}}}};
    Telemetry t;
    const std::vector<UserPair> pairs{{"a", "b", 0.9}, {"a", "ghost", 0.5}};
    const auto out = swap_targets(pairs, ta, tb, &t);
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(out[0].history_ref, "a");
    EXPECT_EQ(out[0].target_ref, "b");
    EXPECT_EQ(out[0].origin, "b->a");
    EXPECT_EQ(out[0].target.chosen, "pb");
    EXPECT_EQ(out[1].history_ref, "b");
    EXPECT_EQ(out[1].origin, "a->b");
    EXPECT_EQ(out[1].target.chosen, "pa");
    EXPECT_NE(out[0].origin, out[1].origin);
    EXPECT_EQ(t.get("pairs_without_targets"), 1);
    for (const auto& inst : out) {
        const auto back = transfer_instance_from_json(to_json(inst));
        EXPECT_EQ(back.target, inst.target);
        EXPECT_EQ(back.origin, inst.origin);
    }
}

TEST(Swap, ReadTargetsRequiresPairs) {
    TempDir dir;
    write_jsonl(dir / "t.jsonl", {Json{{"user_id", "u"}, {"chosen", "p"}, {"rejected", "n"}}});
    const auto t = read_targets(dir / "t.jsonl");
    ASSERT_EQ(t.at("u").size(), 1u);
    write_jsonl(dir / "bad.jsonl", {Json{{"user_id", "u"}, {"chosen", "p"}}});
    EXPECT_THROW(read_targets(dir / "bad.jsonl"), ValidationError);
}

TEST(Injection, CountRoundsHalfUp) {
    EXPECT_EQ(injected_count(0.0, 10), 0u);
    EXPECT_EQ(injected_count(0.5, 10), 10u);
    EXPECT_EQ(injected_count(0.2, 10), 3u);
    EXPECT_EQ(injected_count(0.2, 6), 2u);
    EXPECT_EQ(injected_count(0.1, 9), 1u);
    EXPECT_THROW(injected_count(1.0, 10), ConfigError);
    EXPECT_THROW(injected_count(-0.1, 10), ConfigError);
}

TEST(Injection, ZeroIntensityIsNoOp) {
    const auto p = make_history("p", 8);
    const auto out = inject_secondary(p, make_history("d", 8), {0.0, 4});
    EXPECT_EQ(out.history, p);
    EXPECT_EQ(out.requested, 0u);
}

TEST(Injection, KeepsBothOrdersAndReverses) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 0.9);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto primary = random_history(rng, "p", 1 + rng() % 15);
        const auto donor = random_history(rng, "d", 1 + rng() % 15);
        const NoiseConfig cfg{u(rng), rng()};
        const auto out = inject_secondary(primary, donor, cfg);
        const std::size_t n = primary.size();
        const std::size_t m = std::min(injected_count(cfg.intensity, n), donor.size());
        ASSERT_EQ(out.history.size(), n + m);
        ASSERT_EQ(out.origins.size(), n + m);

        std::vector<InteractionTriple> from_primary;
        std::int64_t last_donor = -1;
        std::size_t donor_seen = 0;
        for (std::size_t i = 0; i < out.history.size(); ++i) {
            EXPECT_EQ(out.history.triples[i].index, static_cast<std::int64_t>(i));
            if (out.origins[i].from_donor) {
                ++donor_seen;
                EXPECT_GT(out.origins[i].source_index, last_donor);
                last_donor = out.origins[i].source_index;
            } else {
                from_primary.push_back(out.history.triples[i]);
            }
        }
        EXPECT_EQ(donor_seen, m);
        ASSERT_EQ(from_primary.size(), n);
        for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(from_primary[i].chosen, primary.triples[i].chosen);
        EXPECT_EQ(remove_injected(out), primary);
        EXPECT_NO_THROW(validate(out.history));
    }
}

TEST(Injection, CorpusNeverPairsAUserWithItself) {
    std::vector<UserHistory> users;
    for (int i = 0; i < 12; ++i) users.push_back(make_history("u" + std::to_string(i), 6));
    users.push_back(make_history("tiny", 1));
    Telemetry t;
    const auto out = inject_corpus(users, users, {0.5, 3}, &t);
    ASSERT_EQ(out.size(), users.size());
    for (std::size_t i = 0; i < users.size(); ++i) {
        EXPECT_NE(out[i].donor_id, users[i].user_id);
        EXPECT_EQ(out[i].history.user_id, users[i].user_id);
        const auto prov = provenance_json(out[i]);
        EXPECT_EQ(prov["origins"].size(), out[i].history.size());
    }
    std::size_t clamped = 0;
    for (const auto& o : out) clamped += o.donor_id == "tiny" ? 1 : 0;
    EXPECT_EQ(t.get("clamped_injections"), static_cast<std::int64_t>(clamped));
    EXPECT_EQ(inject_corpus(users, users, {0.5, 3}, nullptr).front().history, out.front().history);
    EXPECT_THROW(inject_corpus({users[0]}, {users[0]}, {0.5, 3}), ContractError);
}

} // namespace
} // namespace prefstream
