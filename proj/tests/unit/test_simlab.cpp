#include "prefstream/error.hpp"
#include "prefstream/prompts.hpp"
#include "prefstream/simlab.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

namespace prefstream::simlab {
namespace {

using prefstream::testing::sim_client;
using prefstream::testing::TempDir;

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

double margin_of(const std::vector<double>& latent, const InteractionTriple& t) {
    const auto p = parse_item(t.chosen);
    const auto n = parse_item(*t.rejected);
    double m = 0.0;
    for (std::size_t i = 0; i < latent.size(); ++i) m += latent[i] * ((*p)[i] - (*n)[i]);
    return m;
}

Population small_population(std::uint64_t seed, std::size_t users = 30) {
    SimConfig c;
    c.seed = seed;
    c.n_users = users;
    return gen_population(c);
}

TEST(Items, RenderParseRoundTrip) {
    const std::vector<double> f{0.125, -1.0, 0.333333};
    const auto text = render_item(f);
    EXPECT_EQ(text, "<item:0.125,-1,0.333333>");
    EXPECT_EQ(parse_item(text), f);
    EXPECT_FALSE(parse_item("<item:1,x>"));
    EXPECT_FALSE(parse_item("item:1,2"));
    const auto found = find_item_texts("a <item:1,2> b <item:3,4>");
    ASSERT_EQ(found.size(), 2u);
    EXPECT_EQ(found[1], "<item:3,4>");
}

TEST(Items, LastEstimateWins) {
    const auto text = "old " + render_estimate(std::vector<double>{1, 0}) + " new " +
                      render_estimate(std::vector<double>{0, 1});
    EXPECT_EQ(find_estimate(text), (std::vector<double>{0, 1}));
    EXPECT_FALSE(find_estimate("nothing here"));
}

TEST(Vectors, NormalizeAndDot) {
    EXPECT_DOUBLE_EQ(dot(std::vector<double>{1, 2}, std::vector<double>{3, 4}), 11.0);
    EXPECT_THROW(dot(std::vector<double>{1}, std::vector<double>{1, 2}), ContractError);
    EXPECT_THROW(normalized({0.0, 0.0}), DomainError);
    const auto u = normalized({3.0, 4.0});
    EXPECT_DOUBLE_EQ(u[0], 0.6);
}

TEST(Population, EveryPairRespectsTheMargin) {
    const auto pop = small_population(1, 50);
    ASSERT_EQ(pop.users.size(), 50u);
    for (std::size_t u = 0; u < pop.users.size(); ++u) {
        const auto& latent = pop.users[u].latent;
        EXPECT_NEAR(std::sqrt(dot(latent, latent)), 1.0, 1e-12);
        EXPECT_EQ(pop.histories[u].size(), pop.config.history_len);
        for (const auto& t : pop.histories[u].triples) EXPECT_GE(margin_of(latent, t), pop.config.pair_margin);
    }
    const SimWorld world(pop);
    for (const auto& t : pop.targets) {
        const auto& latent = *world.latent(t.user_id);
        EXPECT_GE(margin_of(latent, t.triple), pop.config.pair_margin);
        EXPECT_GE(t.triple.index, static_cast<std::int64_t>(pop.config.history_len));
    }
    EXPECT_EQ(pop.targets.size(), 50u * pop.config.eval_targets);
    EXPECT_EQ(pop.scores.size(), 50u * pop.config.history_len);
}

TEST(Population, FixedSeedIsByteIdentical) {
    TempDir a;
    TempDir b;
    write_population(a.path(), small_population(7));
    write_population(b.path(), small_population(7));
    for (const auto* f : {"histories.jsonl", "ground_truth.jsonl", "targets.jsonl", "scores.jsonl"}) {
        EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
    }
    TempDir c;
    write_population(c.path(), small_population(8));
    EXPECT_NE(slurp(a / "histories.jsonl"), slurp(c / "histories.jsonl"));
}

TEST(Population, OracleJudgeIsConfidentAtTheMargin) {
    const auto pop = small_population(3, 100);
    double total = 0.0;
    std::size_t n = 0;
    for (std::size_t u = 0; u < pop.users.size(); ++u) {
        for (const auto& t : pop.histories[u].triples) {
            total += scripted_judge(pop.users[u].latent, *parse_item(t.chosen), *parse_item(*t.rejected), 8.0);
            ++n;
        }
    }
    const double bound = 1.0 / (1.0 + std::exp(-8.0 * 0.5));
    EXPECT_NEAR(bound, 0.982, 1e-3);
    EXPECT_GE(total / static_cast<double>(n), bound);
}

TEST(ScriptedJudge, HandValuesAndSymmetries) {
    const std::vector<double> est{1.0, 0.0};
    EXPECT_NEAR(scripted_judge(est, std::vector<double>{0.5, 0.0}, std::vector<double>{0.0, 0.0}, 8.0),
                1.0 / (1.0 + std::exp(-4.0)), 1e-15);
    EXPECT_DOUBLE_EQ(scripted_judge(est, std::vector<double>{0.2, 0.7}, std::vector<double>{0.2, -0.3}, 8.0), 0.5);
    EXPECT_DOUBLE_EQ(scripted_judge(est, std::vector<double>{0.9, 0.0}, std::vector<double>{0.0, 0.0}, 0.0), 0.5);
    EXPECT_DOUBLE_EQ(scripted_judge(est, std::vector<double>{0.3, 0.1}, std::vector<double>{0.3, 0.1}, 8.0), 0.5);
}

TEST(World, LoadMatchesInMemory) {
    const auto pop = small_population(4, 5);
    TempDir dir;
    write_population(dir.path(), pop);
    const auto loaded = SimWorld::load(dir.path());
    const SimWorld direct(pop);
    for (const auto& u : pop.users) EXPECT_EQ(*loaded->latent(u.user_id), *direct.latent(u.user_id));
    const auto& h = pop.histories[2];
    EXPECT_EQ(loaded->owner_of(render_history(h.triples)), h.user_id);
    EXPECT_FALSE(loaded->owner_of("no items"));
}

TEST(SimBackendOptions, RejectsUnknownJudgeMode) {
    EXPECT_THROW(SimBackendOptions::from_json(Json{{"judge_mode", "psychic"}}), ConfigError);
    EXPECT_THROW(SimBackendOptions::from_json(Json{{"quality", 1.5}}), ConfigError);
    const auto o = SimBackendOptions::from_json(Json{{"judge_mode", "oracle"}, {"kappa", 2}});
    EXPECT_EQ(o.judge_mode, JudgeMode::Oracle);
    EXPECT_DOUBLE_EQ(o.kappa, 2.0);
}

/// Mean judge reward on held-out targets of summaries written at `quality`.
double mean_reward(const Population& pop, std::shared_ptr<const SimWorld> world, double quality, int samples) {
    auto gen = scripted_generator(world, quality, 99);
    double total = 0.0;
    int n = 0;
    for (std::size_t u = 0; u < pop.histories.size(); ++u) {
        const auto prompt = render_generation_prompt(std::nullopt, render_history(pop.histories[u].triples));
        for (int s = 0; s < samples; ++s) {
            const auto est = gen->generation_estimate(prompt, static_cast<std::uint64_t>(s));
            for (const auto& t : pop.targets) {
                if (t.user_id != pop.users[u].user_id) continue;
                total += scripted_judge(est, *parse_item(t.triple.chosen), *parse_item(*t.triple.rejected), 8.0);
                ++n;
            }
        }
    }
    return total / n;
}

TEST(Generator, RewardIsMonotoneInQuality) {
    const auto pop = small_population(5, 50);
    auto world = std::make_shared<const SimWorld>(pop);
    double previous = -1.0;
    for (double q : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        const double r = mean_reward(pop, world, q, 2);
        EXPECT_GE(r, previous) << "quality " << q;
        previous = r;
    }
}

TEST(Generator, QualityZeroIsChance) {
    const auto pop = small_population(6, 50);
    auto world = std::make_shared<const SimWorld>(pop);
    // 50 users x 10 samples x 2 targets = 1000 trials.
    EXPECT_NEAR(mean_reward(pop, world, 0.0, 10), 0.5, 0.05);
}

TEST(Generator, QualityOneCarriesTheLatent) {
    const auto pop = small_population(7, 3);
    auto world = std::make_shared<const SimWorld>(pop);
    auto gen = scripted_generator(world, 1.0, 1);
    const auto prompt = render_generation_prompt(std::nullopt, render_history(pop.histories[1].triples));
    const auto est = gen->generation_estimate(prompt, 0);
    for (std::size_t i = 0; i < est.size(); ++i) EXPECT_NEAR(est[i], pop.users[1].latent[i], 1e-12);
    auto adversary = scripted_generator(world, 0.0, 1, true);
    const auto neg = adversary->generation_estimate(prompt, 0);
    for (std::size_t i = 0; i < neg.size(); ++i) EXPECT_NEAR(neg[i], -pop.users[1].latent[i], 1e-12);
}

TEST(SimJudge, DebiasedProbabilityComplementsUnderSwap) {
    const auto pop = small_population(8, 10);
    auto world = std::make_shared<const SimWorld>(pop);
    SimBackendOptions o;
    o.kappa = 8.0;
    auto judge = sim_client(Role::Judge, world, o);
    const auto persona = "aligned with " + render_estimate(pop.users[0].latent);
    for (const auto& t : pop.histories[0].triples) {
        const double p = judge->judge_pair(persona, t.context, t.chosen, *t.rejected, true).prob_first;
        const double q = judge->judge_pair(persona, t.context, *t.rejected, t.chosen, true).prob_first;
        EXPECT_LT(std::abs(p + q - 1.0), 1e-12);
        EXPECT_GT(p, 0.98);
    }
}

TEST(SimJudge, PositionBiasIsRemovedByDebiasing) {
    const auto pop = small_population(9, 2);
    auto world = std::make_shared<const SimWorld>(pop);
    SimBackendOptions o;
    o.judge_mode = JudgeMode::PositionBiased;
    o.position_bias = 0.9;
    auto judge = sim_client(Role::Judge, world, o);
    const auto& t = pop.histories[0].triples[0];
    EXPECT_NEAR(judge->judge_pair("x", std::nullopt, t.chosen, *t.rejected, false).prob_first, 0.9, 1e-12);
    EXPECT_NEAR(judge->judge_pair("x", std::nullopt, t.chosen, *t.rejected, true).prob_first, 0.5, 1e-12);
}

TEST(SimEmbedding, SameUserHistoriesAreClose) {
    const auto pop = small_population(10, 2);
    auto world = std::make_shared<const SimWorld>(pop);
    SimBackend backend(world, {});
    const auto a = backend.embed(render_history(pop.histories[0].triples));
    double dot_self = 0.0;
    for (double x : a) dot_self += x * x;
    EXPECT_GT(dot_self, 0.0);
    const auto b = backend.embed(render_history(pop.histories[0].triples));
    EXPECT_EQ(a, b);
}

} // namespace
} // namespace prefstream::simlab
