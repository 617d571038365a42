// Runs every acceptance criterion once and prints one PASS/FAIL line each.
// Exit status is nonzero when any criterion fails or overruns its time limit.

#include "prefstream/curriculum.hpp"
#include "prefstream/evalharness.hpp"
#include "prefstream/mock_backend.hpp"
#include "prefstream/prompts.hpp"
#include "prefstream/rlengine.hpp"
#include "prefstream/simlab.hpp"
#include "prefstream/streamer.hpp"
#include "prefstream/synthpipe.hpp"
#include "prefstream/transferbench.hpp"

#include "oracles.hpp"
#include "test_support.hpp"

#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>

namespace prefstream::acceptance {
namespace {

using testing::make_history;
using testing::mock_endpoint;
using testing::random_history;
using testing::sim_client;
using testing::TempDir;

/// Collects failed expectations for one criterion.
class Check {
public:
    void expect(bool condition, const std::string& what) {
        if (condition) return;
        ++failures_;
        if (notes_.size() < 5) notes_.push_back(what);
    }
    void near(double actual, double expected, double tol, const std::string& what) {
        std::ostringstream s;
        s.precision(17);
        s << what << ": got " << actual << ", want " << expected << " +- " << tol;
        expect(std::abs(actual - expected) <= tol, s.str());
    }
    void note(std::string text) { info_.push_back(std::move(text)); }

    bool ok() const { return failures_ == 0; }
    std::string summary() const {
        std::string out;
        for (const auto& n : notes_) out += (out.empty() ? "" : "; ") + n;
        if (failures_ > notes_.size()) out += "; +" + std::to_string(failures_ - notes_.size()) + " more";
        for (const auto& i : info_) out += (out.empty() ? "" : "; ") + i;
        return out;
    }

private:
    std::size_t failures_ = 0;
    std::vector<std::string> notes_;
    std::vector<std::string> info_;
};

struct Criterion {
    int id;
    std::string name;
    double limit_seconds;
    std::function<void(Check&)> run;
};

std::string fmt_double(double x) {
    std::ostringstream s;
    s.precision(4);
    s << x;
    return s.str();
}

// 1 -------------------------------------------------------------------------
void reward_math(Check& c) {
    const RewardSets immediate{{0.6, 0.3}, {0.8, 0.4}};
    const auto r = cumulative_rewards(0, immediate, 0.5);
    c.near(r.initial[0], 0.9, 1e-12, "selected initial reward");
    c.expect(r.initial[1] == 0.3, "unselected initial keeps its immediate reward");
    c.expect(r.updated == immediate.updated, "updated rewards equal immediate rewards");

    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t g = 1 + rng() % 8;
        RewardSets s;
        for (std::size_t i = 0; i < g; ++i) {
            s.initial.push_back(u(rng));
            s.updated.push_back(u(rng));
        }
        for (auto credit : {FutureCredit::SelectedOnly, FutureCredit::AllInitials}) {
            const auto zero = cumulative_rewards(rng() % g, s, 0.0, credit);
            c.expect(zero.initial == s.initial && zero.updated == s.updated, "gamma 0 reproduces immediate rewards");
        }
    }
}

// 2 -------------------------------------------------------------------------
void advantage_normalization(Check& c) {
    c.expect(advantages(std::vector<double>{0.0, 1.0}) == std::vector<double>{-1.0, 1.0}, "{0,1} -> {-1,+1}");
    c.expect(advantages(std::vector<double>{0.7, 0.7, 0.7, 0.7}) == std::vector<double>(4, 0.0),
             "zero-variance group gives zeros");
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_real_distribution<double> shift(-5.0, 5.0);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> g(2 + rng() % 15);
        for (double& x : g) x = u(rng);
        const auto a = advantages(g);
        c.near(std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(a.size()), 0.0, 1e-9, "group mean");
        const double k = shift(rng);
        std::vector<double> moved = g;
        for (double& x : moved) x += k;
        const auto b = advantages(moved);
        for (std::size_t i = 0; i < a.size(); ++i) c.near(b[i], a[i], 1e-9, "shifted advantage");
    }
}

// 3 -------------------------------------------------------------------------
TrainingRecord record(std::vector<double> old, double advantage) { return {"p", "r", std::move(old), advantage, "g"}; }

void surrogate_loss_checks(Check& c) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> adv(2 + rng() % 10);
        for (double& a : adv) a = n(rng);
        const auto centered = advantages(adv);
        std::vector<TrainingRecord> batch;
        std::vector<std::vector<double>> same;
        for (double a : centered) {
            std::vector<double> lp(1 + rng() % 12);
            for (double& x : lp) x = -std::abs(n(rng));
            same.push_back(lp);
            batch.push_back(record(std::move(lp), a));
        }
        c.near(surrogate_loss(batch, same), 0.0, 1e-9, "ratio-1 loss on centered advantages");
    }

    const std::vector<TrainingRecord> up{record({std::log(0.5)}, 1.0)};
    c.near(surrogate_loss(up, std::vector<std::vector<double>>{{std::log(0.75)}}), -1.2, 1e-12,
           "positive advantage clipped above");
    const std::vector<TrainingRecord> down{record({std::log(0.5)}, -1.0)};
    c.near(surrogate_loss(down, std::vector<std::vector<double>>{{std::log(0.25)}}), 0.8, 1e-12,
           "negative advantage clipped below");

    const std::vector<TrainingRecord> two{record({-0.7, -1.3}, 0.6)};
    const std::vector<std::vector<double>> at{{-0.65, -1.38}};
    const auto grad = surrogate_loss_gradient(two, at);
    const double h = 1e-6;
    for (std::size_t t = 0; t < 2; ++t) {
        auto plus = at;
        auto minus = at;
        plus[0][t] += h;
        minus[0][t] -= h;
        const double numeric = (surrogate_loss(two, plus) - surrogate_loss(two, minus)) / (2 * h);
        c.near(grad[0][t], numeric, 1e-3, "finite-difference gradient");
    }
}

// 4 -------------------------------------------------------------------------
void curriculum_pruning(Check& c) {
    std::mt19937_64 rng(4);
    const auto scores = oracle::random_scores(rng, 10000, 400);
    for (const auto* name : {"amazon", "mind", "alignx"}) {
        const auto config = prune_preset(name);
        std::set<oracle::Key> got;
        for (const auto& s : prune(scores, config)) got.emplace(s.user_id, s.index);
        const auto want = oracle::brute_force_prune(scores, config);
        c.expect(got == want, std::string(name) + ": pruned set differs from the sort-and-slice oracle");
        c.note(std::string(name) + " kept " + std::to_string(got.size()));
    }
}

// 5 -------------------------------------------------------------------------
void synthesis_filters(Check& c) {
    simlab::SimConfig sc;
    sc.seed = 5;
    sc.n_users = 200;
    const auto pop = simlab::gen_population(sc);
    auto world = std::make_shared<const simlab::SimWorld>(pop);
    simlab::SimBackendOptions judge_opts;
    judge_opts.kappa = 8.0;
    auto judge = sim_client(Role::Judge, world, judge_opts);
    ModelClient faithful(mock_endpoint(Role::Generator, "mock:simlab"), simlab::scripted_generator(world, 1.0, 5));
    ModelClient adversary(mock_endpoint(Role::Generator, "mock:simlab"),
                          simlab::scripted_generator(world, 0.0, 5, true));

    SynthConfig config;
    std::size_t passed = 0;
    std::size_t rejected = 0;
    std::size_t total_good = 0;
    std::size_t total_bad = 0;
    for (const auto& h : pop.histories) {
        std::map<std::int64_t, double> all_tractable;
        for (const auto& t : h.triples) all_tractable[t.index] = 1.0;
        const auto picked = select_targets(h, {0, h.size()}, all_tractable, config);
        if (is_skip(picked)) {
            c.expect(false, "no targets for " + h.user_id);
            continue;
        }
        const auto& targets = std::get<TargetSet>(picked);
        auto good = std::get<std::vector<ProfileCandidate>>(generate_candidates(h, targets, std::nullopt, faithful, 1));
        auto bad = std::get<std::vector<ProfileCandidate>>(generate_candidates(h, targets, std::nullopt, adversary, 1));
        (void)validate_candidates(good, targets, *judge, 0);
        (void)validate_candidates(bad, targets, *judge, 0);
        for (const auto& g : good) passed += g.validated ? 1 : 0;
        for (const auto& b : bad) rejected += b.validated ? 0 : 1;
        total_good += good.size();
        total_bad += bad.size();
    }
    const double pass_rate = static_cast<double>(passed) / static_cast<double>(total_good);
    const double reject_rate = static_cast<double>(rejected) / static_cast<double>(total_bad);
    c.expect(pass_rate >= 0.9, "quality-1 pass rate " + fmt_double(pass_rate));
    c.expect(reject_rate >= 0.9, "adversarial rejection rate " + fmt_double(reject_rate));
    c.note("pass " + fmt_double(pass_rate) + ", reject " + fmt_double(reject_rate));

    const auto& user = pop.users[0];
    const auto persona = "aligned with " + simlab::render_estimate(user.latent);
    std::vector<InteractionTriple> five(pop.histories[0].triples.begin(), pop.histories[0].triples.begin() + 5);
    auto flip = [](InteractionTriple t) {
        std::swap(t.chosen, *t.rejected);
        return t;
    };
    auto one_wrong = five;
    one_wrong[0] = flip(one_wrong[0]);
    auto two_wrong = one_wrong;
    two_wrong[1] = flip(two_wrong[1]);
    const auto at_08 = user_level_filter(persona, one_wrong, *judge, 0.8);
    const auto at_06 = user_level_filter(persona, two_wrong, *judge, 0.8);
    c.expect(!is_skip(at_08) && std::abs(std::get<double>(at_08) - 0.8) < 1e-12, "accuracy 0.8 is accepted");
    c.expect(is_skip(at_06), "accuracy 0.6 is rejected");
}

// 6 -------------------------------------------------------------------------
class RecordingBackend final : public Backend {
public:
    explicit RecordingBackend(std::shared_ptr<Backend> inner) : inner_(std::move(inner)) {}
    ChatCompletion chat(const ChatRequest& request) override {
        {
            std::lock_guard lock(mu_);
            prompts.push_back(request.prompt);
        }
        return inner_->chat(request);
    }
    std::vector<double> score(std::string_view prompt, std::string_view response) override {
        return inner_->score(prompt, response);
    }
    std::string describe() const override { return "recording"; }
    std::vector<std::string> prompts;

private:
    std::mutex mu_;
    std::shared_ptr<Backend> inner_;
};

void no_leakage(Check& c) {
    simlab::SimConfig sc;
    sc.seed = 6;
    sc.n_users = 100;
    sc.history_len = 18;
    const auto pop = simlab::gen_population(sc);
    auto world = std::make_shared<const simlab::SimWorld>(pop);

    SynthConfig config;
    config.tau_tract = 0.0;
    config.segments = 2;
    std::size_t checked = 0;
    for (const auto& h : pop.histories) {
        std::map<std::int64_t, double> scores;
        for (const auto& t : h.triples) scores[t.index] = 1.0;
        const auto bounds = near_equal_boundaries(h.size(), config.segments);
        for (const auto& seg : segment(h, bounds)) {
            const auto picked = select_targets(h, seg, scores, config);
            if (is_skip(picked)) continue;
            const auto& set = std::get<TargetSet>(picked);
            for (const auto& target : set.targets) {
                const auto prompt = target_prompt(h, set, target, std::nullopt);
                const auto sections = parse_generation_prompt(prompt);
                if (!sections) {
                    c.expect(false, "unparseable generation prompt");
                    continue;
                }
                for (const auto& other : set.targets) {
                    c.expect(sections->history.find(other.chosen) == std::string::npos &&
                                 sections->history.find(*other.rejected) == std::string::npos,
                             "target item rendered in the history block");
                    c.expect(prompt.find(render_triple(other)) == std::string::npos, "labeled target triple in prompt");
                }
                auto swapped = target;
                std::swap(swapped.chosen, *swapped.rejected);
                auto swapped_set = set;
                for (auto& t : swapped_set.targets) {
                    if (t.index == target.index) t = swapped;
                }
                c.expect(target_prompt(h, swapped_set, swapped, std::nullopt) == prompt,
                         "prompt depends on which target item was chosen");
                ++checked;
            }
        }
    }

    auto recorder = std::make_shared<RecordingBackend>(simlab::scripted_generator(world, 1.0, 6));
    ModelClient generator(mock_endpoint(Role::Generator, "mock:simlab"), recorder);
    simlab::SimBackendOptions jo;
    auto judge = sim_client(Role::Judge, world, jo);
    Telemetry t;
    TractScores scores;
    for (const auto& h : pop.histories) {
        for (const auto& tr : h.triples) scores[h.user_id][tr.index] = 1.0;
    }
    const auto records = synthesize_sft(pop.histories, scores, {generator, *judge, generator}, config, 1, t);
    std::size_t scanned = 0;
    for (const auto& p : recorder->prompts) {
        if (classify_prompt(p) != PromptKind::TargetedGeneration) continue;
        const auto sections = parse_generation_prompt(p);
        if (!sections || !sections->target) {
            c.expect(false, "targeted prompt without a target section");
            continue;
        }
        for (const auto item : simlab::find_item_texts(*sections->target)) {
            c.expect(sections->history.find(item) == std::string::npos, "pipeline prompt leaks its target");
        }
        ++scanned;
    }
    c.expect(checked > 0 && scanned > 0, "nothing was scanned");
    c.expect(!records.empty(), "pipeline produced no records");
    c.note(std::to_string(checked) + " target prompts, " + std::to_string(scanned) + " pipeline prompts");
}

// 7 -------------------------------------------------------------------------
void streaming_composition(Check& c) {
    ModelClient a(mock_endpoint(Role::Generator), std::make_shared<ScriptedMock>());
    ModelClient b(mock_endpoint(Role::Generator), std::make_shared<ScriptedMock>());
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        const auto h = random_history(rng, "u" + std::to_string(trial), 2 + rng() % 20);
        const std::size_t cut = 1 + rng() % (h.size() - 1);
        StreamState s;
        s = update(a, h, s, {0, cut}, trial);
        s = update(a, h, s, {cut, h.size()}, trial);
        const std::vector<std::size_t> bounds{cut, h.size()};
        const auto streamed = infer_streaming_at(b, h, bounds, trial);
        c.expect(to_json(s).dump() == to_json(streamed).dump(), "two updates differ from streaming");
        c.expect(streamed.lineage.size() == 2, "lineage length");
    }
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng() % 16;
        const auto h = random_history(rng, "f", n);
        std::set<std::size_t> cuts{n};
        const std::size_t k = rng() % n;
        while (cuts.size() < k + 1) cuts.insert(1 + rng() % n);
        const std::vector<std::size_t> bounds(cuts.begin(), cuts.end());
        StreamState s;
        std::size_t frontier = 0;
        std::size_t start = 0;
        for (std::size_t end : bounds) {
            s = update(a, h, s, {start, end});
            c.expect(s.consumed_until > frontier, "frontier did not advance");
            frontier = s.consumed_until;
            start = end;
        }
        c.expect(s.lineage.size() == bounds.size(), "lineage length equals chunk count");
        c.expect(frontier == n, "frontier ends at the history length");
    }
}

// 8 -------------------------------------------------------------------------
void transfer_builders(Check& c) {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> nd(0.0, 1.0);
    auto unit = [&](std::size_t dim) {
        std::vector<double> v(dim);
        double norm = 0.0;
        for (double& x : v) {
            x = nd(rng);
            norm += x * x;
        }
        for (double& x : v) x /= std::sqrt(norm);
        return v;
    };
    std::vector<std::string> ids_a;
    std::vector<std::string> ids_b;
    std::vector<std::vector<double>> emb_a;
    std::vector<std::vector<double>> emb_b;
    TargetTable ta;
    TargetTable tb;
    for (int i = 0; i < 1200; ++i) {
        ids_a.push_back("a" + std::to_string(i));
        ids_b.push_back("b" + std::to_string(i));
        emb_a.push_back(unit(16));
        emb_b.push_back(unit(16));
        ta[ids_a.back()] = {InteractionTriple{0, std::nullopt, "pa" + std::to_string(i), "na" + std::to_string(i)}};
        tb[ids_b.back()] = {InteractionTriple{0, std::nullopt, "pb" + std::to_string(i), "nb" + std::to_string(i)}};
    }
    const auto match = match_embeddings(ids_a, emb_a, ids_b, emb_b, 1000);
    c.expect(match.pairs.size() == 1000, "top_k pairs");
    const auto swapped = swap_targets(match.pairs, ta, tb);
    c.expect(swapped.size() == 2000, "swapped instances: " + std::to_string(swapped.size()));

    const std::vector<std::string> a3{"x0", "x1", "x2"};
    const std::vector<std::string> b3{"y0", "y1", "y2"};
    std::vector<std::vector<double>> ea;
    std::vector<std::vector<double>> eb;
    for (int i = 0; i < 3; ++i) {
        ea.push_back(unit(4));
        eb.push_back(unit(4));
    }
    std::vector<UserPair> exhaustive;
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            double s = 0.0;
            for (std::size_t d = 0; d < 4; ++d) s += ea[i][d] * eb[j][d];
            exhaustive.push_back({a3[i], b3[j], s});
        }
    }
    std::sort(exhaustive.begin(), exhaustive.end(), [](const UserPair& x, const UserPair& y) {
        return std::tie(y.similarity, x.user_a, x.user_b) < std::tie(x.similarity, y.user_a, y.user_b);
    });
    c.expect(match_embeddings(a3, ea, b3, eb, 9).pairs == exhaustive, "3x3 matching differs from enumeration");

    std::uniform_real_distribution<double> u(0.0, 0.9);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto primary = random_history(rng, "p", 1 + rng() % 20);
        const auto donor = random_history(rng, "d", 1 + rng() % 20);
        const auto out = inject_secondary(primary, donor, {u(rng), rng()});
        std::vector<std::string> kept;
        std::int64_t last = -1;
        bool donor_order = true;
        for (std::size_t i = 0; i < out.history.size(); ++i) {
            if (out.origins[i].from_donor) {
                donor_order = donor_order && out.origins[i].source_index > last;
                last = out.origins[i].source_index;
            } else {
                kept.push_back(out.history.triples[i].chosen);
            }
        }
        std::vector<std::string> original;
        for (const auto& t : primary.triples) original.push_back(t.chosen);
        c.expect(kept == original, "primary order broken");
        c.expect(donor_order, "donor order broken");
        c.expect(remove_injected(out) == primary, "injection is not reversible");
    }
    const auto p = make_history("p", 9);
    c.expect(inject_secondary(p, make_history("d", 9), {0.0, 1}).history == p, "intensity 0 changed the history");
}

// 9 -------------------------------------------------------------------------
void judge_debias(Check& c) {
    auto judge = testing::scripted_client(Role::Judge);
    double worst = 0.0;
    for (int i = 0; i < 500; ++i) {
        const auto x = "item x" + std::to_string(i);
        const auto y = "item y" + std::to_string(i * 7);
        const double p = judge->judge_pair("likes things", std::nullopt, x, y, true).prob_first;
        const double q = judge->judge_pair("likes things", std::nullopt, y, x, true).prob_first;
        worst = std::max(worst, std::abs(p + q - 1.0));
    }
    c.expect(worst < 1e-12, "swap complement off by " + fmt_double(worst));
    c.near(label_share(-0.1, -2.4), 0.9089, 1e-4, "softmax over label logprobs");
    ScriptedMockOptions o;
    o.label_logprobs = std::make_pair(-0.1, -2.4);
    auto fixed = testing::scripted_client(Role::Judge, o);
    c.near(fixed->judge_pair("s", std::nullopt, "a", "b", false).prob_first, 0.9089, 1e-4, "judge reply extraction");
}

// 10 ------------------------------------------------------------------------
void learning_signal(Check& c) {
    simlab::SimConfig sc;
    sc.seed = 10;
    sc.n_users = 100;
    const auto pop = simlab::gen_population(sc);
    auto world = std::make_shared<const simlab::SimWorld>(pop);

    std::vector<SampleScore> scores;
    for (const auto& s : pop.scores) {
        const auto f = score_sample(floor_probability(s.strong_p), floor_probability(s.weak_p));
        scores.push_back({s.user_id, s.index, f.s_tract, f.s_learn});
    }
    Telemetry t;
    const auto instances = build_rl_instances(pop.histories, scores, CurriculumConfig{}, t);
    std::vector<EvalInstance> eval;
    for (const auto& e : pop.targets) eval.push_back({e.user_id, e.triple.context, e.triple.chosen, *e.triple.rejected});

    simlab::SimBackendOptions reward_opts;
    auto reward_judge = sim_client(Role::Judge, world, reward_opts);
    simlab::SimBackendOptions reader_opts;
    reader_opts.logprobs = false;
    auto reader = sim_client(Role::Judge, world, reader_opts);

    double last_reward = -1.0;
    double last_accuracy = -1.0;
    std::string trace;
    TempDir dir;
    for (double q : {0.0, 0.5, 1.0}) {
        ModelClient policy(mock_endpoint(Role::Policy, "mock:simlab"), simlab::scripted_generator(world, q, 10));
        RolloutConfig rc;
        rc.group_size = 4;
        rc.seed = 10;
        const auto trees = run_rollouts(instances, pop.histories, policy, *reward_judge, rc, 2, t);
        double reward = 0.0;
        std::size_t n = 0;
        for (const auto& tree : trees) {
            for (const auto* set : {&tree.immediate.initial, &tree.immediate.updated}) {
                reward += std::accumulate(set->begin(), set->end(), 0.0);
                n += set->size();
            }
        }
        reward /= static_cast<double>(n);

        std::map<std::string, std::string> summaries;
        for (const auto& h : pop.histories) summaries[h.user_id] = infer_full(policy, h, 10).text;
        const auto report = evaluate_selection(eval, summaries, *reader, {10, true, "simlab"}, 2);

        c.expect(reward > last_reward, "mean reward not increasing at quality " + fmt_double(q));
        c.expect(report.accuracy > last_accuracy, "accuracy not increasing at quality " + fmt_double(q));
        last_reward = reward;
        last_accuracy = report.accuracy;
        trace += (trace.empty() ? "" : ", ") + ("q" + fmt_double(q) + ": r=" + fmt_double(reward) + " acc=" +
                                                fmt_double(report.accuracy));

        const auto batch = export_batch(trees);
        const auto path = dir / ("batch" + fmt_double(q) + ".jsonl");
        write_batch(path, batch);
        const auto back = read_batch(path);
        std::mt19937_64 rng(11);
        std::normal_distribution<double> jitter(0.0, 0.1);
        std::vector<std::vector<double>> fresh;
        for (const auto& r : batch) {
            auto lp = r.old_logprobs;
            for (double& x : lp) x += jitter(rng);
            fresh.push_back(std::move(lp));
        }
        c.near(surrogate_loss(back, fresh), surrogate_loss(batch, fresh), 1e-9, "loss after batch round trip");
    }
    c.note(trace);
}

} // namespace
} // namespace prefstream::acceptance

int main() {
    using namespace prefstream::acceptance;
    spdlog::set_level(spdlog::level::warn);
    const std::vector<Criterion> criteria{
        {1, "reward math", 1.0, reward_math},
        {2, "advantage normalization", 1.0, advantage_normalization},
        {3, "clipped surrogate loss", 5.0, surrogate_loss_checks},
        {4, "curriculum pruning oracle", 10.0, curriculum_pruning},
        {5, "synthesis filters", 60.0, synthesis_filters},
        {6, "no target leakage", 10.0, no_leakage},
        {7, "streaming composition", 10.0, streaming_composition},
        {8, "transfer builders", 30.0, transfer_builders},
        {9, "judge debiasing", 1.0, judge_debias},
        {10, "end-to-end learning signal", 120.0, learning_signal},
    };
    int failed = 0;
    for (const auto& cr : criteria) {
        Check check;
        const auto start = std::chrono::steady_clock::now();
        try {
            cr.run(check);
        } catch (const std::exception& e) {
            check.expect(false, std::string("threw: ") + e.what());
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_time = seconds < cr.limit_seconds;
        const bool pass = check.ok() && in_time;
        failed += pass ? 0 : 1;
        std::cout << (pass ? "PASS" : "FAIL") << "  " << cr.id << ". " << cr.name << "  (" << fmt_double(seconds)
                  << " s, limit " << cr.limit_seconds << " s)";
        if (!in_time) std::cout << "  over time limit";
        const auto detail = check.summary();
        if (!detail.empty()) std::cout << "  " << detail;
        std::cout << std::endl;
    }
    std::cout << (failed ? std::to_string(failed) + " criteria failed" : "all criteria passed") << std::endl;
    return failed ? 1 : 0;
}
