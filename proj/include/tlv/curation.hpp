#pragma once

#include "tlv/data_model.hpp"

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace tlv {

// ---------------------------------------------------------------------------
// prompt pools

enum class Granularity { sentence, phrase };

struct PromptPool {
    Granularity granularity = Granularity::sentence;
    std::vector<std::string> prompts;
};

struct PromptPools {
    PromptPool sentence;
    PromptPool phrase;
};

inline constexpr std::size_t kPromptPoolSize = 16;

// Expects {"sentence": [16 strings], "phrase": [16 strings]}.
PromptPools load_prompt_pools(const std::filesystem::path& path);
std::filesystem::path default_prompt_pools_path();

// Seeded uniform draw; throws ConfigError on an empty pool.
const std::string& sample_prompt(const PromptPool& pool, std::uint64_t seed, std::uint64_t index);

// ---------------------------------------------------------------------------
// pattern filter

enum class Defect { multilanguage, special_marker, redundancy };
std::string to_string(Defect defect);

// Byte range [begin, end) into the filtered description.
struct DefectSpan {
    Defect defect;
    std::size_t begin = 0;
    std::size_t end = 0;
};

struct FilterReport {
    std::string id;
    bool flagged = false;
    std::vector<Defect> defects; // sorted, unique
    std::vector<DefectSpan> spans;

    bool has(Defect d) const;
};

FilterReport pattern_filter(std::string_view description, std::string id = {});

// ---------------------------------------------------------------------------
// judge and generator clients

struct JudgeVerdict {
    bool consistent = false;
    std::string rationale;
};

class JudgeClient {
public:
    virtual ~JudgeClient() = default;
    virtual JudgeVerdict judge(const Sample& sample) const = 0;
};

// Consistent iff the description mentions one of the class's lexicon words.
class MockJudge final : public JudgeClient {
public:
    JudgeVerdict judge(const Sample& sample) const override;
};

struct HttpResponse {
    bool ok = false; // transport-level success
    int status = 0;
    std::string body;
    std::string error;
};

struct HttpJudgeOptions {
    std::string url;
    std::string token;
    std::string model;
    int attempts = 3;
    std::chrono::milliseconds initial_backoff{500};
    std::chrono::seconds timeout{60};
};

// Chat-completion shaped JSON over HTTP. Retries transport failures and
// 429/5xx replies with exponential backoff; an unparseable reply raises
// JudgeProtocolError carrying the raw body.
class HttpJudgeClient final : public JudgeClient {
public:
    using Transport = std::function<HttpResponse(const std::string& request_body)>;

    explicit HttpJudgeClient(HttpJudgeOptions options);
    // Replaces the network call; used to exercise the retry and parsing paths.
    HttpJudgeClient(HttpJudgeOptions options, Transport transport);

    JudgeVerdict judge(const Sample& sample) const override;
    std::string request_body(const Sample& sample) const;
    static JudgeVerdict parse_reply(const std::string& body);

private:
    HttpJudgeOptions options_;
    Transport transport_;
};

// HttpJudgeClient configured from JUDGE_URL, JUDGE_TOKEN, JUDGE_MODEL, or a
// MockJudge when JUDGE_URL is unset.
std::unique_ptr<JudgeClient> make_judge_from_env();

JudgeVerdict judge_consistency(const Sample& sample, const JudgeClient& client);

class GeneratorClient {
public:
    virtual ~GeneratorClient() = default;
    virtual std::string generate(const Sample& sample, const std::string& prompt) const = 0;
};

// Renders a description from the class lexicon; the prompt only selects the
// granularity of the output.
class MockGenerator final : public GeneratorClient {
public:
    explicit MockGenerator(Granularity granularity) : granularity_(granularity) {}
    std::string generate(const Sample& sample, const std::string& prompt) const override;

private:
    Granularity granularity_;
};

// ---------------------------------------------------------------------------
// curation

struct QueueEntry {
    std::string id;
    std::string description;
    std::vector<Defect> defects;
    std::vector<DefectSpan> spans;
    bool consistent = true;
    std::string rationale;
};

struct CurationResult {
    std::vector<std::string> clean_ids; // sorted
    std::vector<QueueEntry> queue;      // sorted by id
    std::vector<FilterReport> reports;  // one per input record, sorted by id
};

// Filters each record's sentence description, asks the judge about every
// record and queues anything flagged or inconsistent. Records are never
// modified or dropped. When queue_path is set, the queue is written as JSONL.
CurationResult curate(const Dataset& dataset, const JudgeClient& client,
                      const std::filesystem::path& queue_path = {});

void write_correction_queue(const std::filesystem::path& path, const std::vector<QueueEntry>& queue);

} // namespace tlv
