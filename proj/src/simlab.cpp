#include "prefstream/simlab.hpp"

#include "prefstream/error.hpp"
#include "prefstream/hashing.hpp"
#include "prefstream/mock_backend.hpp"
#include "prefstream/prompts.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>

namespace prefstream::simlab {

namespace {

constexpr std::string_view kItemOpen = "<item:";
constexpr std::string_view kEstimateOpen = "<estimate:";
constexpr double kFeatureScale = 1e6;

double quantize(double x) { return std::round(x * kFeatureScale) / kFeatureScale; }

std::string render_vector(std::string_view open, std::span<const double> v) {
    std::string out(open);
    char buf[32];
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        const auto res = std::to_chars(buf, buf + sizeof buf, v[i]);
        out.append(buf, res.ptr);
    }
    out += '>';
    return out;
}

std::optional<std::vector<double>> parse_vector(std::string_view open, std::string_view text) {
    if (!text.starts_with(open) || !text.ends_with(">")) return std::nullopt;
    std::string_view body = text.substr(open.size(), text.size() - open.size() - 1);
    std::vector<double> out;
    while (!body.empty()) {
        double x = 0.0;
        const auto res = std::from_chars(body.data(), body.data() + body.size(), x);
        if (res.ec != std::errc{}) return std::nullopt;
        out.push_back(x);
        body.remove_prefix(static_cast<std::size_t>(res.ptr - body.data()));
        if (body.empty()) break;
        if (body.front() != ',') return std::nullopt;
        body.remove_prefix(1);
        if (body.empty()) return std::nullopt;
    }
    if (out.empty()) return std::nullopt;
    return out;
}

std::vector<std::string_view> find_tagged(std::string_view open, std::string_view text) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while ((pos = text.find(open, pos)) != std::string_view::npos) {
        const auto close = text.find('>', pos);
        if (close == std::string_view::npos) break;
        out.push_back(text.substr(pos, close - pos + 1));
        pos = close + 1;
    }
    return out;
}

std::vector<double> quantized_unit(std::mt19937_64& rng, std::size_t dim) {
    // Re-normalizing after rounding keeps the norm within 1e-6 of one.
    auto v = random_unit(rng, dim);
    for (double& x : v) x = quantize(x);
    return v;
}

std::vector<double> diff(std::span<const double> a, std::span<const double> b) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

Json vec_json(std::span<const double> v) { return Json(std::vector<double>(v.begin(), v.end())); }

} // namespace

void SimConfig::check() const {
    if (dim < 2) throw ConfigError("simlab dimension must be at least 2");
    if (history_len < 4) throw ConfigError("simlab history_len must be at least 4");
    if (n_users == 0) throw ConfigError("simlab needs at least one user");
    if (!(pair_margin >= 0.0) || pair_margin >= 1.5) throw ConfigError("pair_margin must lie in [0, 1.5)");
    if (weak_quality < 0.0 || weak_quality > 1.0) throw ConfigError("weak_quality must lie in [0, 1]");
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw ContractError("dimension mismatch: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

std::vector<double> normalized(std::vector<double> v) {
    const double n = std::sqrt(dot(v, v));
    if (n == 0.0 || !std::isfinite(n)) throw DomainError("cannot normalize a zero vector");
    for (double& x : v) x /= n;
    return v;
}

std::vector<double> random_unit(std::mt19937_64& rng, std::size_t dim) {
    std::normal_distribution<double> normal;
    for (;;) {
        std::vector<double> v(dim);
        for (double& x : v) x = normal(rng);
        if (dot(v, v) > 1e-12) return normalized(std::move(v));
    }
}

double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

SyntheticItem make_item(std::vector<double> features) {
    SyntheticItem item;
    item.rendered_text = render_item(features);
    item.features = std::move(features);
    return item;
}

std::string render_item(std::span<const double> features) { return render_vector(kItemOpen, features); }

std::optional<std::vector<double>> parse_item(std::string_view text) { return parse_vector(kItemOpen, trim(text)); }

std::vector<std::string_view> find_item_texts(std::string_view text) { return find_tagged(kItemOpen, text); }

std::string render_estimate(std::span<const double> estimate) {
    std::vector<double> q(estimate.begin(), estimate.end());
    for (double& x : q) x = quantize(x);
    return render_vector(kEstimateOpen, q);
}

std::optional<std::vector<double>> find_estimate(std::string_view text) {
    const auto found = find_tagged(kEstimateOpen, text);
    if (found.empty()) return std::nullopt;
    return parse_vector(kEstimateOpen, found.back());
}

double scripted_judge(std::span<const double> estimate, std::span<const double> item_p,
                      std::span<const double> item_n, double kappa) {
    if (item_p.size() != item_n.size()) throw ContractError("item dimension mismatch");
    return sigmoid(kappa * dot(estimate, diff(item_p, item_n)));
}

Population gen_population(const SimConfig& config) {
    config.check();
    Population pop;
    pop.config = config;
    const std::size_t total = config.history_len + config.eval_targets;
    for (std::size_t u = 0; u < config.n_users; ++u) {
        SyntheticUser user;
        user.user_id = config.user_prefix + std::to_string(u);
        user.seed = derive_seed(config.seed, static_cast<std::uint64_t>(u));
        std::mt19937_64 rng(user.seed);
        user.latent = random_unit(rng, config.dim);
        std::mt19937_64 weak_rng(derive_seed(user.seed, "weak"));
        const auto weak_noise = random_unit(weak_rng, config.dim);
        std::vector<double> weak(config.dim);
        for (std::size_t i = 0; i < config.dim; ++i) {
            weak[i] = config.weak_quality * user.latent[i] + (1.0 - config.weak_quality) * weak_noise[i];
        }
        weak = normalized(std::move(weak));

        UserHistory history{user.user_id, config.dataset_tag, {}};
        for (std::size_t k = 0; k < total; ++k) {
            std::vector<double> a;
            std::vector<double> b;
            double margin = 0.0;
            do {
                a = quantized_unit(rng, config.dim);
                b = quantized_unit(rng, config.dim);
                margin = dot(user.latent, diff(a, b));
            } while (std::abs(margin) < config.pair_margin);
            if (margin < 0) std::swap(a, b);

            InteractionTriple t;
            t.index = static_cast<std::int64_t>(k);
            if (config.with_context) t.context = "session " + std::to_string(k);
            t.chosen = render_item(a);
            t.rejected = render_item(b);
            if (k < config.history_len) {
                const auto d = diff(a, b);
                pop.scores.push_back({user.user_id, t.index, sigmoid(config.strong_kappa * dot(user.latent, d)),
                                      sigmoid(config.weak_kappa * dot(weak, d))});
                history.triples.push_back(std::move(t));
            } else {
                pop.targets.push_back({user.user_id, std::move(t)});
            }
        }
        pop.histories.push_back(std::move(history));
        pop.users.push_back(std::move(user));
    }
    return pop;
}

Json to_json(const EvalTarget& t) {
    Json j = prefstream::to_json(t.triple);
    j["user_id"] = t.user_id;
    return j;
}

EvalTarget eval_target_from_json(const Json& j) {
    EvalTarget t;
    t.user_id = j.at("user_id").get<std::string>();
    t.triple = triple_from_json(j);
    return t;
}

std::vector<EvalTarget> read_eval_targets(const std::filesystem::path& path) {
    std::vector<EvalTarget> out;
    for (const auto& j : read_jsonl(path)) out.push_back(eval_target_from_json(j));
    return out;
}

void write_population(const std::filesystem::path& dir, const Population& pop) {
    std::filesystem::create_directories(dir);
    write_histories(dir / "histories.jsonl", pop.histories);

    std::vector<Json> truth;
    for (const auto& u : pop.users) truth.push_back(Json{{"user_id", u.user_id}, {"latent", vec_json(u.latent)}, {"seed", u.seed}});
    write_jsonl(dir / "ground_truth.jsonl", truth);

    std::vector<Json> targets;
    for (const auto& t : pop.targets) targets.push_back(to_json(t));
    write_jsonl(dir / "targets.jsonl", targets);

    std::vector<Json> scores;
    for (const auto& s : pop.scores) {
        scores.push_back(Json{{"user_id", s.user_id}, {"index", s.index}, {"strong_p", s.strong_p}, {"weak_p", s.weak_p}});
    }
    write_jsonl(dir / "scores.jsonl", scores);
}

SimWorld::SimWorld(const Population& pop) : dim_(pop.config.dim) {
    for (const auto& u : pop.users) latents_[u.user_id] = u.latent;
    for (const auto& h : pop.histories) {
        for (const auto& t : h.triples) add_items(h.user_id, t);
    }
    for (const auto& t : pop.targets) add_items(t.user_id, t.triple);
}

std::shared_ptr<const SimWorld> SimWorld::load(const std::filesystem::path& dir) {
    auto world = std::make_shared<SimWorld>();
    for (const auto& j : read_jsonl(dir / "ground_truth.jsonl")) {
        auto latent = j.at("latent").get<std::vector<double>>();
        if (world->dim_ == 0) world->dim_ = latent.size();
        if (latent.size() != world->dim_) throw ValidationError("ground truth latents differ in dimension");
        world->latents_[j.at("user_id").get<std::string>()] = std::move(latent);
    }
    for (const auto& h : read_histories(dir / "histories.jsonl")) {
        for (const auto& t : h.triples) world->add_items(h.user_id, t);
    }
    if (std::filesystem::exists(dir / "targets.jsonl")) {
        for (const auto& t : read_eval_targets(dir / "targets.jsonl")) world->add_items(t.user_id, t.triple);
    }
    return world;
}

void SimWorld::add_items(const std::string& user_id, const InteractionTriple& t) {
    item_owner_.emplace(t.chosen, user_id);
    if (t.rejected) item_owner_.emplace(*t.rejected, user_id);
}

const std::vector<double>* SimWorld::latent(std::string_view user_id) const {
    const auto it = latents_.find(std::string(user_id));
    return it == latents_.end() ? nullptr : &it->second;
}

std::optional<std::string> SimWorld::owner_of(std::string_view text) const {
    std::map<std::string, std::size_t> votes;
    for (auto item : find_item_texts(text)) {
        const auto it = item_owner_.find(std::string(item));
        if (it != item_owner_.end()) ++votes[it->second];
    }
    std::optional<std::string> best;
    std::size_t best_votes = 0;
    for (const auto& [user, n] : votes) {
        if (n > best_votes) {
            best = user;
            best_votes = n;
        }
    }
    return best;
}

SimBackendOptions SimBackendOptions::from_json(const Json& j) {
    SimBackendOptions o;
    if (!j.is_object()) return o;
    o.quality = j.value("quality", o.quality);
    o.adversarial = j.value("adversarial", o.adversarial);
    o.kappa = j.value("kappa", o.kappa);
    o.position_bias = j.value("position_bias", o.position_bias);
    o.seed = j.value("seed", o.seed);
    o.logprobs = j.value("logprobs", o.logprobs);
    if (j.contains("const_logprob") && !j["const_logprob"].is_null()) o.const_logprob = j["const_logprob"].get<double>();
    const auto mode = j.value("judge_mode", std::string("summary"));
    if (mode == "summary") o.judge_mode = JudgeMode::Summary;
    else if (mode == "oracle") o.judge_mode = JudgeMode::Oracle;
    else if (mode == "position_biased") o.judge_mode = JudgeMode::PositionBiased;
    else throw ConfigError("unknown simlab judge_mode '" + mode + "'");
    if (o.quality < 0.0 || o.quality > 1.0) throw ConfigError("simlab quality must lie in [0, 1]");
    if (o.position_bias < 0.0 || o.position_bias > 1.0) throw ConfigError("position_bias must lie in [0, 1]");
    return o;
}

SimBackend::SimBackend(std::shared_ptr<const SimWorld> world, SimBackendOptions options)
    : world_(std::move(world)), options_(std::move(options)) {
    if (!world_ || world_->dim() == 0) throw ConfigError("simlab backend needs a loaded world");
}

std::vector<double> SimBackend::noise(std::string_view prompt, std::uint64_t sample_seed) const {
    std::mt19937_64 rng(derive_seed(derive_seed(options_.seed, fnv1a64(prompt)), sample_seed));
    return random_unit(rng, world_->dim());
}

std::vector<double> SimBackend::generation_estimate(std::string_view prompt, std::uint64_t sample_seed) const {
    const auto sections = parse_generation_prompt(prompt);
    std::string evidence = sections ? sections->history + "\n" + sections->target.value_or("") : std::string(prompt);
    const auto owner = world_->owner_of(evidence);
    const std::vector<double>* latent = owner ? world_->latent(*owner) : nullptr;

    std::vector<double> fresh;
    if (latent && options_.adversarial) {
        fresh = *latent;
        for (double& x : fresh) x = -x;
    } else {
        const auto n = noise(prompt, sample_seed);
        if (!latent) {
            fresh = n;
        } else {
            fresh.resize(n.size());
            for (std::size_t i = 0; i < n.size(); ++i) {
                fresh[i] = options_.quality * (*latent)[i] + (1.0 - options_.quality) * n[i];
            }
            if (dot(fresh, fresh) < 1e-12) fresh = n;
            fresh = normalized(std::move(fresh));
        }
    }

    if (sections) {
        if (auto prior = find_estimate(sections->past_summary); prior && prior->size() == fresh.size()) {
            std::vector<double> combined(fresh.size());
            for (std::size_t i = 0; i < fresh.size(); ++i) combined[i] = (*prior)[i] + fresh[i];
            if (dot(combined, combined) > 1e-12) return normalized(std::move(combined));
        }
    }
    return fresh;
}

double SimBackend::judge_probability(std::string_view prompt) const {
    if (options_.judge_mode == JudgeMode::PositionBiased) return options_.position_bias;
    const auto sections = parse_judge_prompt(prompt);
    if (!sections) return 0.5;
    const auto a = parse_item(sections->item_a);
    const auto b = parse_item(sections->item_b);
    if (!a || !b || a->size() != b->size()) return 0.5;

    std::optional<std::vector<double>> estimate;
    if (options_.judge_mode == JudgeMode::Oracle) {
        const auto owner = world_->owner_of(sections->item_a + "\n" + sections->item_b);
        if (owner) {
            if (const auto* latent = world_->latent(*owner)) estimate = *latent;
        }
    } else {
        estimate = find_estimate(sections->persona);
    }
    if (!estimate || estimate->size() != a->size()) return 0.5;
    return scripted_judge(*estimate, *a, *b, options_.kappa);
}

ChatCompletion SimBackend::chat(const ChatRequest& request) {
    const auto& prompt = request.prompt;
    switch (classify_prompt(prompt)) {
    case PromptKind::Judge: {
        const double p = judge_probability(prompt);
        if (options_.logprobs && request.logprobs) return judge_completion(p);
        const double u = unit_interval(derive_seed(derive_seed(options_.seed, fnv1a64(prompt)), request.seed));
        return ChatCompletion{selection_reply(u < p ? Selection::A : Selection::B), std::nullopt};
    }
    case PromptKind::Merge: {
        std::vector<double> sum(world_->dim(), 0.0);
        std::size_t used = 0;
        for (const auto& c : parse_merge_prompt(prompt)) {
            if (auto est = find_estimate(c.summary); est && est->size() == sum.size()) {
                for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += (*est)[i];
                ++used;
            }
        }
        if (used == 0 || dot(sum, sum) < 1e-12) sum = noise(prompt, request.seed);
        std::string text = "<think>Merged " + std::to_string(used) + " candidate profiles.</think>\n" +
                           "The user favors items aligned with " + render_estimate(normalized(std::move(sum))) + ".";
        if (!request.logprobs) return ChatCompletion{std::move(text), std::nullopt};
        return scripted_completion(options_.seed, prompt, std::move(text), options_.const_logprob);
    }
    case PromptKind::Generation:
    case PromptKind::TargetedGeneration: {
        const auto sections = parse_generation_prompt(prompt);
        const auto n_items = sections ? find_item_texts(sections->history).size() : 0;
        const bool has_prior = sections && find_estimate(sections->past_summary).has_value();
        std::string text = "<think>Read " + std::to_string(n_items) + " items" +
                           (has_prior ? " on top of the prior profile" : "") + ".</think>\n" +
                           "The user favors items aligned with " +
                           render_estimate(generation_estimate(prompt, request.seed)) + ".";
        if (!request.logprobs) return ChatCompletion{std::move(text), std::nullopt};
        return scripted_completion(options_.seed, prompt, std::move(text), options_.const_logprob);
    }
    case PromptKind::Unknown: break;
    }
    return ChatCompletion{"No preference information.", std::nullopt};
}

std::vector<double> SimBackend::score(std::string_view prompt, std::string_view response) {
    return scripted_token_logprobs(options_.seed, prompt, response, options_.const_logprob);
}

std::vector<double> SimBackend::embed(std::string_view text) {
    std::vector<double> sum(world_->dim(), 0.0);
    bool any = false;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        const auto items = find_item_texts(text.substr(start, end - start));
        if (!items.empty()) {
            if (auto first = parse_item(items[0]); first && first->size() == sum.size()) {
                for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += (*first)[i];
                any = true;
                if (items.size() > 1) {
                    if (auto second = parse_item(items[1]); second && second->size() == sum.size()) {
                        for (std::size_t i = 0; i < sum.size(); ++i) sum[i] -= (*second)[i];
                    }
                }
            }
        }
        start = end + 1;
    }
    if (!any || dot(sum, sum) < 1e-12) return hashed_embedding(text, world_->dim());
    return normalized(std::move(sum));
}

std::shared_ptr<SimBackend> scripted_generator(std::shared_ptr<const SimWorld> world, double quality,
                                               std::uint64_t seed, bool adversarial) {
    if (quality < 0.0 || quality > 1.0) throw ContractError("generator quality must lie in [0, 1]");
    SimBackendOptions o;
    o.quality = quality;
    o.seed = seed;
    o.adversarial = adversarial;
    return std::make_shared<SimBackend>(std::move(world), o);
}

} // namespace prefstream::simlab
