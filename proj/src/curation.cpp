#include "tlv/curation.hpp"

#include "tlv/error.hpp"
#include "tlv/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <regex>
#include <set>

namespace tlv {

using nlohmann::json;

// ---------------------------------------------------------------------------
// prompt pools

namespace {

PromptPool read_pool(const json& j, const char* key, Granularity g, const std::filesystem::path& path) {
    if (!j.contains(key) || !j.at(key).is_array()) {
        throw ConfigError(path.string() + ": missing prompt pool '" + key + "'");
    }
    PromptPool pool{g, {}};
    for (const auto& p : j.at(key)) {
        if (!p.is_string() || p.get<std::string>().empty()) {
            throw ConfigError(path.string() + ": pool '" + key + "' holds a non-string or empty prompt");
        }
        pool.prompts.push_back(p.get<std::string>());
    }
    if (pool.prompts.size() != kPromptPoolSize) {
        throw ConfigError(path.string() + ": pool '" + key + "' has " + std::to_string(pool.prompts.size()) +
                          " prompts, expected " + std::to_string(kPromptPoolSize));
    }
    return pool;
}

} // namespace

PromptPools load_prompt_pools(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open prompt pools: " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    for (const auto& [key, _] : j.items()) {
        if (key != "sentence" && key != "phrase") throw ConfigError(path.string() + ": unknown pool '" + key + "'");
    }
    return {read_pool(j, "sentence", Granularity::sentence, path), read_pool(j, "phrase", Granularity::phrase, path)};
}

std::filesystem::path default_prompt_pools_path() { return std::filesystem::path(TLV_DATA_DIR) / "prompt_pools.json"; }

const std::string& sample_prompt(const PromptPool& pool, std::uint64_t seed, std::uint64_t index) {
    if (pool.prompts.empty()) throw ConfigError("prompt pool is empty");
    Rng rng(derive_seed(seed, "prompt", index));
    return pool.prompts[rng.below(pool.prompts.size())];
}

// ---------------------------------------------------------------------------
// pattern filter

std::string to_string(Defect d) {
    switch (d) {
    case Defect::multilanguage: return "multilanguage";
    case Defect::special_marker: return "special_marker";
    case Defect::redundancy: return "redundancy";
    }
    return "unknown";
}

bool FilterReport::has(Defect d) const { return std::find(defects.begin(), defects.end(), d) != defects.end(); }

namespace {

// Decodes one code point at `i`; malformed sequences yield U+FFFD over one byte.
char32_t decode_utf8(std::string_view s, std::size_t i, std::size_t& length) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    int n = 0;
    char32_t cp = 0;
    if (b0 < 0x80) {
        length = 1;
        return b0;
    } else if ((b0 & 0xE0) == 0xC0) {
        n = 1;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        n = 2;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        n = 3;
        cp = b0 & 0x07;
    } else {
        length = 1;
        return 0xFFFD;
    }
    if (i + n >= s.size()) {
        length = 1;
        return 0xFFFD;
    }
    for (int k = 1; k <= n; ++k) {
        const auto b = static_cast<unsigned char>(s[i + k]);
        if ((b & 0xC0) != 0x80) {
            length = 1;
            return 0xFFFD;
        }
        cp = (cp << 6) | (b & 0x3F);
    }
    length = static_cast<std::size_t>(n) + 1;
    return cp;
}

bool allowed_code_point(char32_t cp) {
    if (cp < 0x80) return cp >= 0x20 || cp == '\t' || cp == '\n' || cp == '\r';
    switch (cp) {
    // Typographic punctuation common in English text.
    case 0x00A0: // no-break space
    case 0x2013: // en dash
    case 0x2014: // em dash
    case 0x2018:
    case 0x2019:
    case 0x201C:
    case 0x201D:
    case 0x2026: // ellipsis
        return true;
    default: return false;
    }
}

void scan_multilanguage(std::string_view s, std::vector<DefectSpan>& spans) {
    std::size_t i = 0;
    constexpr auto none = std::string_view::npos;
    std::size_t run_start = none;
    while (i < s.size()) {
        std::size_t len = 1;
        const char32_t cp = decode_utf8(s, i, len);
        if (!allowed_code_point(cp)) {
            if (run_start == none) run_start = i;
        } else if (run_start != none) {
            spans.push_back({Defect::multilanguage, run_start, i});
            run_start = none;
        }
        i += len;
    }
    if (run_start != none) spans.push_back({Defect::multilanguage, run_start, s.size()});
}

void scan_special_markers(std::string_view sv, std::vector<DefectSpan>& spans) {
    static const std::regex inline_markers(R"(\*+|`+|</?[A-Za-z][A-Za-z0-9-]*(?:\s[^<>]*)?/?>)");
    static const std::regex line_markers(
        R"((?:^|\n)[ \t]*((?:ai|assistant|user|system|human|model|gpt-?4v?|gemini)[ \t]*:|#{1,6}[ \t]))",
        std::regex::ECMAScript | std::regex::icase);
    const std::string s(sv);
    for (auto it = std::sregex_iterator(s.begin(), s.end(), inline_markers); it != std::sregex_iterator(); ++it) {
        const auto pos = static_cast<std::size_t>(it->position(0));
        spans.push_back({Defect::special_marker, pos, pos + static_cast<std::size_t>(it->length(0))});
    }
    for (auto it = std::sregex_iterator(s.begin(), s.end(), line_markers); it != std::sregex_iterator(); ++it) {
        const auto pos = static_cast<std::size_t>(it->position(1));
        spans.push_back({Defect::special_marker, pos, pos + static_cast<std::size_t>(it->length(1))});
    }
}

struct Word {
    std::string text;
    std::size_t begin, end;
};

std::vector<Word> words_of(std::string_view s, std::size_t offset = 0) {
    std::vector<Word> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && !std::isalnum(static_cast<unsigned char>(s[i]))) ++i;
        const std::size_t b = i;
        std::string w;
        while (i < s.size() && (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '\'')) {
            w += static_cast<char>(std::tolower(static_cast<unsigned char>(s[i])));
            ++i;
        }
        if (!w.empty()) out.push_back({std::move(w), offset + b, offset + i});
    }
    return out;
}

void scan_redundancy(std::string_view s, std::vector<DefectSpan>& spans) {
    // Sentences end at runs of terminal punctuation.
    std::set<std::string> seen;
    std::size_t start = 0;
    while (start < s.size()) {
        std::size_t end = s.find_first_of(".!?", start);
        end = end == std::string_view::npos ? s.size() : s.find_first_not_of(".!?", end);
        if (end == std::string_view::npos) end = s.size();
        const auto words = words_of(s.substr(start, end - start), start);
        if (!words.empty()) {
            std::string norm;
            for (const auto& w : words) norm += (norm.empty() ? "" : " ") + w.text;
            if (!seen.insert(norm).second) spans.push_back({Defect::redundancy, words.front().begin, end});
        }
        start = end;
    }

    constexpr std::size_t shingle = 6;
    const auto words = words_of(s);
    std::map<std::string, std::vector<std::size_t>> occurrences;
    for (std::size_t i = 0; i + shingle <= words.size(); ++i) {
        std::string key;
        for (std::size_t k = 0; k < shingle; ++k) key += words[i + k].text + " ";
        occurrences[key].push_back(i);
    }
    for (const auto& [_, at] : occurrences) {
        if (at.size() < 3) continue;
        for (auto i : at) spans.push_back({Defect::redundancy, words[i].begin, words[i + shingle - 1].end});
    }
}

} // namespace

FilterReport pattern_filter(std::string_view description, std::string id) {
    FilterReport r;
    r.id = std::move(id);
    scan_multilanguage(description, r.spans);
    scan_special_markers(description, r.spans);
    scan_redundancy(description, r.spans);
    std::sort(r.spans.begin(), r.spans.end(), [](const DefectSpan& a, const DefectSpan& b) {
        return std::tie(a.begin, a.end, a.defect) < std::tie(b.begin, b.end, b.defect);
    });
    r.spans.erase(std::unique(r.spans.begin(), r.spans.end(),
                              [](const DefectSpan& a, const DefectSpan& b) {
                                  return a.begin == b.begin && a.end == b.end && a.defect == b.defect;
                              }),
                  r.spans.end());
    std::set<Defect> kinds;
    for (const auto& sp : r.spans) kinds.insert(sp.defect);
    r.defects.assign(kinds.begin(), kinds.end());
    r.flagged = !r.defects.empty();
    return r;
}

// ---------------------------------------------------------------------------
// mocks

JudgeVerdict MockJudge::judge(const Sample& sample) const {
    const auto vocabulary = attribute_words(sample.labels.material);
    const std::string text = sample.sentence_description + " " + sample.joined_phrases();
    std::set<std::string> present;
    for (const auto& w : words_of(text)) present.insert(w.text);
    for (const auto& v : vocabulary) {
        if (present.count(v)) return {true, "mentions '" + v + "'"};
    }
    return {false, "no attribute of class '" + material_lexicon()[sample.labels.material].name + "' is mentioned"};
}

std::string MockGenerator::generate(const Sample& sample, const std::string& prompt) const {
    if (prompt.empty()) throw ValidationError("generator prompt is empty");
    const auto words = attribute_words(sample.labels.material);
    // words: name, hard/soft, rough/smooth, attributes...
    if (granularity_ == Granularity::phrase) {
        std::string out;
        for (std::size_t i = 1; i < words.size(); ++i) out += (i > 1 ? ", " : "") + words[i];
        return out;
    }
    std::string out = "This " + words[0] + " feels " + words[1] + " and " + words[2];
    for (std::size_t i = 3; i < words.size(); ++i) out += (i == 3 ? ", " : " and ") + words[i];
    return out + ".";
}

JudgeVerdict judge_consistency(const Sample& sample, const JudgeClient& client) { return client.judge(sample); }

// ---------------------------------------------------------------------------
// curation

CurationResult curate(const Dataset& dataset, const JudgeClient& client, const std::filesystem::path& queue_path) {
    std::vector<const Sample*> records;
    for (const auto& s : dataset.samples) records.push_back(&s);
    std::sort(records.begin(), records.end(), [](const Sample* a, const Sample* b) { return a->id < b->id; });

    CurationResult out;
    for (const Sample* s : records) {
        FilterReport report = pattern_filter(s->sentence_description, s->id);
        const JudgeVerdict verdict = judge_consistency(*s, client);
        if (report.flagged || !verdict.consistent) {
            out.queue.push_back(
                {s->id, s->sentence_description, report.defects, report.spans, verdict.consistent, verdict.rationale});
        } else {
            out.clean_ids.push_back(s->id);
        }
        out.reports.push_back(std::move(report));
    }
    if (!queue_path.empty()) write_correction_queue(queue_path, out.queue);
    return out;
}

void write_correction_queue(const std::filesystem::path& path, const std::vector<QueueEntry>& queue) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path.string());
    for (const auto& e : queue) {
        json defects = json::array(), spans = json::array();
        for (auto d : e.defects) defects.push_back(to_string(d));
        for (const auto& sp : e.spans) spans.push_back({{"defect", to_string(sp.defect)}, {"begin", sp.begin}, {"end", sp.end}});
        f << json{{"id", e.id},           {"description", e.description}, {"defects", defects},
                  {"spans", spans},       {"consistent", e.consistent},   {"rationale", e.rationale}}
                 .dump()
          << '\n';
    }
}

} // namespace tlv
