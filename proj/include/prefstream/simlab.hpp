#pragma once

#include "prefstream/backend.hpp"
#include "prefstream/core.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace prefstream::simlab {

// Synthetic users with a hidden unit preference vector. Items are feature
// vectors rendered as "<item:f1,f2,...>" so every scripted component can read
// them back exactly; summaries carry "<estimate:...>" for the same reason.

struct SimConfig {
    std::uint64_t seed = 0;
    std::size_t n_users = 50;
    std::size_t dim = 8;
    std::size_t history_len = 12;
    double pair_margin = 0.5;
    std::size_t eval_targets = 2;  // held-out pairs per user, indexed after the history
    double strong_kappa = 4.0;     // sharpness of the sidecar's strong scorer
    double weak_kappa = 4.0;
    double weak_quality = 0.3;     // how much of the latent the weak scorer sees
    bool with_context = true;
    std::string dataset_tag = "simlab";
    std::string user_prefix = "u";

    void check() const;
};

struct SyntheticUser {
    std::string user_id;
    std::vector<double> latent;  // unit L2 norm
    std::uint64_t seed = 0;
};

struct SyntheticItem {
    std::vector<double> features;
    std::string rendered_text;
};

struct EvalTarget {
    std::string user_id;
    InteractionTriple triple;
};

struct ScoreRow {
    std::string user_id;
    std::int64_t index = 0;
    double strong_p = 0.5;
    double weak_p = 0.5;
};

struct Population {
    SimConfig config;
    std::vector<SyntheticUser> users;
    std::vector<UserHistory> histories;
    std::vector<EvalTarget> targets;
    std::vector<ScoreRow> scores;
};

// Vector helpers.
double dot(std::span<const double> a, std::span<const double> b);
std::vector<double> normalized(std::vector<double> v);
std::vector<double> random_unit(std::mt19937_64& rng, std::size_t dim);
double sigmoid(double x);

SyntheticItem make_item(std::vector<double> features);
std::string render_item(std::span<const double> features);
std::optional<std::vector<double>> parse_item(std::string_view text);
/// Every "<item:...>" occurrence in order of appearance.
std::vector<std::string_view> find_item_texts(std::string_view text);

std::string render_estimate(std::span<const double> estimate);
std::optional<std::vector<double>> find_estimate(std::string_view text);

Population gen_population(const SimConfig& config);

/// sigma(kappa * estimate . (p - n)).
double scripted_judge(std::span<const double> estimate, std::span<const double> item_p,
                      std::span<const double> item_n, double kappa);

// Files written by simlab-gen.
void write_population(const std::filesystem::path& dir, const Population& population);
Json to_json(const EvalTarget& t);
EvalTarget eval_target_from_json(const Json& j);
std::vector<EvalTarget> read_eval_targets(const std::filesystem::path& path);

/// Ground truth as the scripted backends see it: latents plus item ownership.
class SimWorld {
public:
    SimWorld() = default;
    explicit SimWorld(const Population& population);
    static std::shared_ptr<const SimWorld> load(const std::filesystem::path& dir);

    std::size_t dim() const { return dim_; }
    const std::vector<double>* latent(std::string_view user_id) const;
    /// User owning most of the items mentioned in `text` (ties: smallest id).
    std::optional<std::string> owner_of(std::string_view text) const;

private:
    void add_items(const std::string& user_id, const InteractionTriple& t);

    std::size_t dim_ = 0;
    std::unordered_map<std::string, std::vector<double>> latents_;
    std::unordered_map<std::string, std::string> item_owner_;
};

enum class JudgeMode { Summary, Oracle, PositionBiased };

struct SimBackendOptions {
    double quality = 1.0;      // 1: summaries carry the exact latent; 0: a random direction
    bool adversarial = false;  // summaries carry the negated latent
    JudgeMode judge_mode = JudgeMode::Summary;
    double kappa = 8.0;
    double position_bias = 0.9;
    std::uint64_t seed = 0;
    bool logprobs = true;
    std::optional<double> const_logprob;

    static SimBackendOptions from_json(const Json& j);
};

/// Scripted generator, merger, judge, scorer and embedder over a SimWorld.
/// Every reply is a pure function of (options, world, request content).
class SimBackend final : public Backend {
public:
    SimBackend(std::shared_ptr<const SimWorld> world, SimBackendOptions options);

    ChatCompletion chat(const ChatRequest& request) override;
    std::vector<double> score(std::string_view prompt, std::string_view response) override;
    std::vector<double> embed(std::string_view text) override;
    std::string describe() const override { return "mock:simlab"; }

    const SimBackendOptions& options() const { return options_; }

    /// The estimate a generation prompt would produce (exposed for tests).
    std::vector<double> generation_estimate(std::string_view prompt, std::uint64_t sample_seed) const;
    double judge_probability(std::string_view prompt) const;

private:
    std::vector<double> noise(std::string_view prompt, std::uint64_t sample_seed) const;

    std::shared_ptr<const SimWorld> world_;
    SimBackendOptions options_;
};

/// A generator backend of the given quality.
std::shared_ptr<SimBackend> scripted_generator(std::shared_ptr<const SimWorld> world, double quality,
                                               std::uint64_t seed, bool adversarial = false);

} // namespace prefstream::simlab
