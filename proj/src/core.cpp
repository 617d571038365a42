#include "prefstream/core.hpp"

#include "prefstream/error.hpp"
#include "prefstream/hashing.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

namespace prefstream {

PreferenceSummary make_summary(std::string text, std::optional<std::string> reasoning,
                               std::optional<std::string> parent_id, HistorySegment covers,
                               std::size_t token_count) {
    if (text.empty()) throw ContractError("preference summary text must be non-empty");
    PreferenceSummary s;
    std::string key = parent_id.value_or("") + '\x1f' + std::to_string(covers.start) + ':' +
                      std::to_string(covers.end) + '\x1f' + text;
    s.id = hex64(fnv1a64(key));
    s.text = std::move(text);
    s.reasoning = std::move(reasoning);
    s.parent_id = std::move(parent_id);
    s.covers = covers;
    s.token_count = token_count;
    return s;
}

void validate(const UserHistory& history) {
    if (history.triples.empty()) {
        throw ValidationError("history '" + history.user_id + "' has no triples");
    }
    std::optional<std::int64_t> prev;
    for (const auto& t : history.triples) {
        if (t.index < 0) throw ValidationError("negative triple index in '" + history.user_id + "'");
        if (prev && t.index <= *prev) {
            throw ValidationError("triple indices not strictly increasing in '" + history.user_id + "' at " +
                                  std::to_string(t.index));
        }
        if (t.chosen.empty()) {
            throw ValidationError("empty chosen item at index " + std::to_string(t.index) + " in '" +
                                  history.user_id + "'");
        }
        if (t.rejected && *t.rejected == t.chosen) {
            throw ValidationError("rejected equals chosen at index " + std::to_string(t.index) + " in '" +
                                  history.user_id + "'");
        }
        prev = t.index;
    }
}

std::vector<HistorySegment> segment(const UserHistory& history, std::span<const std::size_t> boundaries) {
    if (boundaries.empty()) throw ValidationError("segment boundaries are empty");
    std::vector<HistorySegment> out;
    out.reserve(boundaries.size());
    std::size_t start = 0;
    for (std::size_t b : boundaries) {
        if (b <= start) throw ValidationError("segment boundaries must be strictly increasing and positive");
        out.push_back({start, b});
        start = b;
    }
    if (start > history.size()) {
        throw ValidationError("last boundary " + std::to_string(start) + " exceeds history length " +
                              std::to_string(history.size()));
    }
    return out;
}

std::vector<std::size_t> near_equal_boundaries(std::size_t n, std::size_t parts) {
    if (parts == 0 || parts > n) {
        throw ContractError("cannot split " + std::to_string(n) + " items into " + std::to_string(parts) + " chunks");
    }
    const std::size_t step = n / parts;
    std::vector<std::size_t> out;
    for (std::size_t i = 1; i < parts; ++i) out.push_back(i * step);
    out.push_back(n);
    return out;
}

UserHistory strip_negatives(const UserHistory& history) {
    UserHistory out = history;
    for (auto& t : out.triples) t.rejected.reset();
    return out;
}

std::span<const InteractionTriple> slice(const UserHistory& history, HistorySegment seg) {
    if (seg.start > seg.end || seg.end > history.size()) {
        throw ContractError("segment [" + std::to_string(seg.start) + "," + std::to_string(seg.end) +
                            ") out of range for history of length " + std::to_string(history.size()));
    }
    return std::span<const InteractionTriple>(history.triples).subspan(seg.start, seg.size());
}

std::optional<std::size_t> position_of(const UserHistory& history, std::int64_t index) {
    auto it = std::lower_bound(history.triples.begin(), history.triples.end(), index,
                               [](const InteractionTriple& t, std::int64_t i) { return t.index < i; });
    if (it == history.triples.end() || it->index != index) return std::nullopt;
    return static_cast<std::size_t>(it - history.triples.begin());
}

std::vector<std::string> lint_duplicates(const UserHistory& history) {
    std::map<std::string, std::vector<std::int64_t>> seen;
    for (const auto& t : history.triples) {
        seen[t.chosen].push_back(t.index);
        if (t.rejected) seen[*t.rejected].push_back(t.index);
    }
    std::vector<std::string> warnings;
    for (const auto& [item, where] : seen) {
        if (where.size() < 2) continue;
        std::ostringstream msg;
        msg << "user '" << history.user_id << "': item repeated " << where.size() << " times (indices";
        for (auto i : where) msg << ' ' << i;
        msg << ')';
        warnings.push_back(msg.str());
    }
    return warnings;
}

Json to_json(const InteractionTriple& t) {
    Json j;
    j["index"] = t.index;
    if (t.context) j["context"] = *t.context;
    j["chosen"] = t.chosen;
    if (t.rejected) j["rejected"] = *t.rejected;
    return j;
}

Json to_json(const UserHistory& h) {
    Json triples = Json::array();
    for (const auto& t : h.triples) triples.push_back(to_json(t));
    return Json{{"user_id", h.user_id}, {"dataset_tag", h.dataset_tag}, {"triples", std::move(triples)}};
}

Json to_json(const HistorySegment& s) { return Json::array({s.start, s.end}); }

Json to_json(const PreferenceSummary& s) {
    Json j{{"id", s.id}, {"text", s.text}, {"covers", to_json(s.covers)}, {"token_count", s.token_count}};
    if (s.reasoning) j["reasoning"] = *s.reasoning;
    if (s.parent_id) j["parent_id"] = *s.parent_id;
    return j;
}

namespace {

std::optional<std::string> optional_text(const Json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    auto s = it->get<std::string>();
    if (s.empty()) return std::nullopt;
    return s;
}

} // namespace

InteractionTriple triple_from_json(const Json& j) {
    InteractionTriple t;
    try {
        t.index = j.at("index").get<std::int64_t>();
        t.context = optional_text(j, "context");
        t.chosen = j.at("chosen").get<std::string>();
        t.rejected = optional_text(j, "rejected");
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("bad triple: ") + e.what());
    }
    return t;
}

UserHistory history_from_json(const Json& j) {
    UserHistory h;
    try {
        const auto& id = j.at("user_id");
        h.user_id = id.is_string() ? id.get<std::string>() : id.dump();
        h.dataset_tag = j.value("dataset_tag", std::string{});
        for (const auto& t : j.at("triples")) h.triples.push_back(triple_from_json(t));
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("bad history record: ") + e.what());
    }
    validate(h);
    return h;
}

HistorySegment segment_from_json(const Json& j) {
    if (!j.is_array() || j.size() != 2) throw ValidationError("segment must be [start, end]");
    HistorySegment s{j[0].get<std::size_t>(), j[1].get<std::size_t>()};
    if (s.start >= s.end) throw ValidationError("segment must satisfy start < end");
    return s;
}

PreferenceSummary summary_from_json(const Json& j) {
    PreferenceSummary s;
    try {
        s.id = j.value("id", std::string{});
        s.text = j.at("text").get<std::string>();
        s.reasoning = optional_text(j, "reasoning");
        s.parent_id = optional_text(j, "parent_id");
        s.covers = segment_from_json(j.at("covers"));
        s.token_count = j.value("token_count", std::size_t{0});
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("bad summary record: ") + e.what());
    }
    if (s.text.empty()) throw ValidationError("summary text is empty");
    return s;
}

std::vector<Json> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path.string());
    std::vector<Json> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(Json::parse(line));
        } catch (const nlohmann::json::parse_error& e) {
            throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

void write_text_atomic(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out << content;
        if (!out) throw Error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

void write_jsonl(const std::filesystem::path& path, const std::vector<Json>& records) {
    std::string content;
    for (const auto& r : records) {
        content += r.dump();
        content += '\n';
    }
    write_text_atomic(path, content);
}

std::vector<UserHistory> read_histories(const std::filesystem::path& path) {
    std::vector<UserHistory> out;
    for (const auto& j : read_jsonl(path)) out.push_back(history_from_json(j));
    return out;
}

void write_histories(const std::filesystem::path& path, const std::vector<UserHistory>& histories) {
    std::vector<Json> records;
    records.reserve(histories.size());
    for (const auto& h : histories) records.push_back(to_json(h));
    write_jsonl(path, records);
}

} // namespace prefstream
