#include "prefstream/error.hpp"
#include "prefstream/evalharness.hpp"
#include "prefstream/streamer.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

namespace prefstream {
namespace {

using testing::make_history;
using testing::mock_endpoint;
using testing::sim_client;
using testing::TempDir;

/// Replies with a fixed text.
class FixedReply final : public Backend {
public:
    explicit FixedReply(std::string text) : text_(std::move(text)) {}
    ChatCompletion chat(const ChatRequest&) override { return {text_, std::nullopt}; }
    std::string describe() const override { return "fixed"; }

private:
    std::string text_;
};

/// Knows which item is good: picks whichever position holds the "good" item.
class Omniscient final : public Backend {
public:
    ChatCompletion chat(const ChatRequest& request) override {
        const auto good = request.prompt.rfind("good thing");
        const auto bad = request.prompt.rfind("bad thing");
        return {selection_reply(good < bad ? Selection::A : Selection::B), std::nullopt};
    }
    std::string describe() const override { return "omniscient"; }
};

std::vector<EvalInstance> instances(std::size_t n) {
    std::vector<EvalInstance> out;
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back({"u" + std::to_string(i % 5), std::nullopt, "good thing " + std::to_string(i),
                       "bad thing " + std::to_string(i)});
    }
    return out;
}

std::map<std::string, std::string> summaries() {
    std::map<std::string, std::string> out;
    for (int u = 0; u < 5; ++u) out["u" + std::to_string(u)] = "enjoys things";
    return out;
}

TEST(Evaluate, AlwaysAWithFixedPositionsIsPerfect) {
    ModelClient down(mock_endpoint(Role::Judge), std::make_shared<FixedReply>(selection_reply(Selection::A)));
    EvalOptions o;
    o.randomize_positions = false;
    const auto r = evaluate_selection(instances(20), summaries(), down, o);
    EXPECT_EQ(r.n, 20u);
    EXPECT_EQ(r.correct, 20u);
    EXPECT_DOUBLE_EQ(r.accuracy, 1.0);
    EXPECT_EQ(r.predicted_a, 20u);
}

TEST(Evaluate, AlwaysAWithRandomPositionsScoresTheUnswapped) {
    ModelClient down(mock_endpoint(Role::Judge), std::make_shared<FixedReply>(selection_reply(Selection::A)));
    const auto r = evaluate_selection(instances(200), summaries(), down);
    std::size_t unswapped = 0;
    for (const auto& d : r.details) unswapped += d.swapped ? 0 : 1;
    EXPECT_EQ(r.correct, unswapped);
    EXPECT_GT(unswapped, 60u);
    EXPECT_LT(unswapped, 140u);
}

TEST(Evaluate, OmniscientReaderIsPerfect) {
    ModelClient down(mock_endpoint(Role::Judge), std::make_shared<Omniscient>());
    const auto r = evaluate_selection(instances(100), summaries(), down, {}, 4);
    EXPECT_DOUBLE_EQ(r.accuracy, 1.0);
    EXPECT_GT(r.predicted_a, 0u);
    EXPECT_GT(r.predicted_b, 0u);
}

TEST(Evaluate, MalformedRepliesAreParseFailures) {
    ModelClient down(mock_endpoint(Role::Judge), std::make_shared<FixedReply>("I honestly like both of them."));
    const auto r = evaluate_selection(instances(20), summaries(), down);
    EXPECT_EQ(r.parse_failures, 20u);
    EXPECT_EQ(r.correct, 0u);
    EXPECT_DOUBLE_EQ(r.accuracy, 0.0);
    EXPECT_NE(format_report(r).find("parse failures"), std::string::npos);
}

TEST(Evaluate, MissingSummariesAndBackendErrorsCountAsWrong) {
    ScriptedMockOptions o;
    o.error_if_contains = "good thing 3";
    ModelClient down(mock_endpoint(Role::Judge), std::make_shared<ScriptedMock>(o));
    auto s = summaries();
    s.erase("u1");
    Telemetry t;
    const auto r = evaluate_selection(instances(10), s, down, {}, 1, &t);
    EXPECT_EQ(r.missing_summaries, 2u);
    EXPECT_EQ(r.backend_failures, 1u);
    EXPECT_EQ(r.n, 10u);
    EXPECT_LE(r.correct, 7u);
    EXPECT_EQ(t.get("evaluated"), 10);
}

TEST(Evaluate, RescoreReproducesTheReport) {
    ModelClient down(mock_endpoint(Role::Judge), std::make_shared<ScriptedMock>());
    const auto r = evaluate_selection(instances(50), summaries(), down, {7, true, "tag"});
    const auto back = eval_report_from_json(to_json(r));
    EXPECT_EQ(to_json(rescore(back)).dump(), to_json(r).dump());
    const auto again = evaluate_selection(instances(50), summaries(), down, {7, true, "tag"}, 3);
    EXPECT_EQ(to_json(again).dump(), to_json(r).dump());
}

TEST(Evaluate, ReadsInstancesAndSummaryFiles) {
    TempDir dir;
    write_jsonl(dir / "i.jsonl",
                {Json{{"user_id", "a"}, {"chosen", "x"}, {"rejected", "y"}},
                 Json{{"history_ref", "b"}, {"target_ref", "a"}, {"target", {{"index", 0}, {"chosen", "p"}, {"rejected", "q"}}}}});
    const auto inst = read_eval_instances(dir / "i.jsonl");
    ASSERT_EQ(inst.size(), 2u);
    EXPECT_EQ(inst[1].user_id, "b");
    EXPECT_EQ(inst[1].chosen, "p");
    write_jsonl(dir / "s.jsonl", {Json{{"user_id", "a"}, {"text", "old"}}, Json{{"user_id", "a"}, {"summary", "new"}}});
    EXPECT_EQ(read_summaries(dir / "s.jsonl").at("a"), "new");
    write_jsonl(dir / "bad.jsonl", {Json{{"user_id", "a"}, {"chosen", "x"}, {"rejected", "x"}}});
    EXPECT_THROW(read_eval_instances(dir / "bad.jsonl"), ValidationError);
}

TEST(Protocols, OneChunkStreamingMatchesFullHistory) {
    ModelClient gen(mock_endpoint(Role::Generator), std::make_shared<ScriptedMock>());
    ModelClient down(mock_endpoint(Role::Judge), std::make_shared<ScriptedMock>());
    std::vector<UserHistory> hs;
    std::vector<EvalInstance> inst;
    for (int u = 0; u < 6; ++u) {
        hs.push_back(make_history("u" + std::to_string(u), 7));
        inst.push_back({hs.back().user_id, std::nullopt, "fresh a " + std::to_string(u), "fresh b " + std::to_string(u)});
    }
    const auto cmp = compare_protocols(hs, inst, gen, down, {}, 1);
    EXPECT_EQ(cmp.full_summaries, cmp.streaming_summaries);
    EXPECT_EQ(to_json(cmp.full).dump(), to_json(cmp.streaming).dump());
    const auto two = compare_protocols(hs, inst, gen, down, {}, 2);
    EXPECT_NE(two.full_summaries, two.streaming_summaries);
}

TEST(Protocols, AccuracyTracksSummaryQuality) {
    simlab::SimConfig c;
    c.seed = 12;
    c.n_users = 100;
    const auto pop = simlab::gen_population(c);
    auto world = std::make_shared<const simlab::SimWorld>(pop);
    std::vector<EvalInstance> inst;
    for (const auto& t : pop.targets) inst.push_back({t.user_id, t.triple.context, t.triple.chosen, *t.triple.rejected});
    simlab::SimBackendOptions judge_opts;
    judge_opts.logprobs = false;
    auto down = sim_client(Role::Judge, world, judge_opts);

    double previous = -1.0;
    for (double q : {0.0, 0.5, 1.0}) {
        ModelClient gen(mock_endpoint(Role::Generator, "mock:simlab"), simlab::scripted_generator(world, q, 4));
        std::map<std::string, std::string> s;
        for (const auto& h : pop.histories) s[h.user_id] = infer_full(gen, h).text;
        const auto r = evaluate_selection(inst, s, *down, {1, true, "simlab"}, 2);
        EXPECT_EQ(r.parse_failures, 0u);
        EXPECT_GT(r.accuracy, previous) << "quality " << q;
        previous = r.accuracy;
    }
    EXPECT_GT(previous, 0.85);
}

} // namespace
} // namespace prefstream
