#include "test_util.hpp"

#include "tlv/curation.hpp"
#include "tlv/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdlib>
#include <map>
#include <set>

using namespace tlv;
using test_util::TempDir;

namespace {

bool has_defect(const FilterReport& r, Defect d) {
    return std::find(r.defects.begin(), r.defects.end(), d) != r.defects.end();
}

// Marks a fixed set of ids inconsistent.
class ListJudge final : public JudgeClient {
public:
    explicit ListJudge(std::set<std::string> bad) : bad_(std::move(bad)) {}
    JudgeVerdict judge(const Sample& s) const override { return {!bad_.count(s.id), "listed"}; }

private:
    std::set<std::string> bad_;
};

std::string chat_reply(const std::string& content) {
    return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}}.dump();
}

HttpJudgeOptions fast_options() {
    HttpJudgeOptions o;
    o.url = "http://judge.invalid/v1/chat/completions";
    o.model = "test-model";
    o.initial_backoff = std::chrono::milliseconds(1);
    return o;
}

Sample one_sample() {
    SyntheticConfig c;
    c.num_samples = 4;
    return generate_synthetic(c).samples.front();
}

} // namespace

TEST_CASE("prompt pools ship with sixteen prompts each") {
    const PromptPools pools = load_prompt_pools(default_prompt_pools_path());
    CHECK(pools.sentence.prompts.size() == kPromptPoolSize);
    CHECK(pools.phrase.prompts.size() == kPromptPoolSize);
    CHECK(pools.sentence.granularity == Granularity::sentence);
    CHECK(pools.phrase.granularity == Granularity::phrase);
}

TEST_CASE("prompt pools with the wrong size are rejected") {
    TempDir dir("pools");
    std::ofstream(dir / "pools.json") << R"({"sentence": ["a"], "phrase": ["b"]})";
    CHECK_THROWS_AS(load_prompt_pools(dir / "pools.json"), ConfigError);
}

TEST_CASE("prompt sampling is deterministic and uniform") {
    const PromptPools pools = load_prompt_pools(default_prompt_pools_path());
    CHECK(&sample_prompt(pools.sentence, 3, 17) == &sample_prompt(pools.sentence, 3, 17));

    std::map<const std::string*, int> counts;
    for (std::uint64_t i = 0; i < 16000; ++i) ++counts[&sample_prompt(pools.sentence, 12345, i)];
    REQUIRE(counts.size() == 16);
    for (const auto& [prompt, n] : counts) CHECK(std::abs(n - 1000) <= 120);

    PromptPool single{Granularity::phrase, {"only prompt"}};
    for (std::uint64_t i = 0; i < 20; ++i) CHECK(sample_prompt(single, i, i) == "only prompt");
    CHECK_THROWS_AS(sample_prompt(PromptPool{Granularity::phrase, {}}, 0, 0), ConfigError);
}

TEST_CASE("pattern filter examples") {
    CHECK_FALSE(pattern_filter("a cool, smooth metal surface").flagged);

    const std::string foreign = "the surface feels 光滑 and cool";
    const auto r = pattern_filter(foreign, "x1");
    CHECK(r.id == "x1");
    CHECK(r.flagged);
    CHECK(r.defects == std::vector<Defect>{Defect::multilanguage});
    REQUIRE(r.spans.size() == 1);
    CHECK(foreign.substr(r.spans[0].begin, r.spans[0].end - r.spans[0].begin) == "光滑");

    const auto red = pattern_filter("It feels rough. It feels rough.");
    CHECK(red.defects == std::vector<Defect>{Defect::redundancy});
}

TEST_CASE("pattern filter rule families") {
    for (const char* marked : {"AI: the plate is cold", "a **hard** shell", "`code` remnant", "```json",
                               "smooth <br> surface", "cold surface</p>", "assistant: feels soft",
                               "## Description\nsoft", "text\nUser: hello"}) {
        CAPTURE(marked);
        CHECK(has_defect(pattern_filter(marked), Defect::special_marker));
    }
    for (const char* clean : {"a 3 < 4 comparison", "soft - yet firm", "it \xe2\x80\x94 feels smooth",
                              "the \xe2\x80\x9cgrainy\xe2\x80\x9d texture", "cold 2.5 mm ridges",
                              "the mood: calm and smooth"}) {
        CAPTURE(clean);
        CHECK_FALSE(pattern_filter(clean).flagged);
    }
    CHECK(has_defect(pattern_filter("caf\xc3\xa9 table"), Defect::multilanguage));
    CHECK(has_defect(pattern_filter("bad \xff byte"), Defect::multilanguage));

    const auto shingle = pattern_filter("soft and warm to the touch, then soft and warm to the touch, "
                                        "again soft and warm to the touch");
    CHECK(has_defect(shingle, Defect::redundancy));
    CHECK_FALSE(pattern_filter("soft and warm to the touch, then soft and warm to the touch").flagged);
}

TEST_CASE("pattern filter spans stay in bounds and reports are idempotent") {
    SyntheticConfig c;
    c.num_samples = 120;
    c.corruption_rate = 0.5;
    c.seed = 3;
    const Dataset ds = generate_synthetic(c);
    for (const auto& s : ds.samples) {
        const auto r = pattern_filter(s.sentence_description, s.id);
        CHECK(r.flagged == !r.defects.empty());
        CHECK(std::is_sorted(r.defects.begin(), r.defects.end()));
        for (const auto& span : r.spans) {
            CHECK(span.begin < span.end);
            CHECK(span.end <= s.sentence_description.size());
        }
        const auto again = pattern_filter(s.sentence_description, s.id);
        CHECK(again.defects == r.defects);
    }
}

TEST_CASE("mock judge checks lexicon words") {
    Sample s = one_sample();
    CHECK(MockJudge().judge(s).consistent);
    s.sentence_description = "an object";
    s.phrase_descriptions = {"object", "thing"};
    const auto v = judge_consistency(s, MockJudge());
    CHECK_FALSE(v.consistent);
    CHECK_FALSE(v.rationale.empty());
}

TEST_CASE("http judge builds a chat request and parses replies") {
    std::string seen;
    HttpJudgeClient client(fast_options(), [&](const std::string& body) {
        seen = body;
        return HttpResponse{true, 200, chat_reply("```json\n{\"consistent\": false, \"rationale\": \"too soft\"}\n```"), ""};
    });
    const auto v = client.judge(one_sample());
    CHECK_FALSE(v.consistent);
    CHECK(v.rationale == "too soft");
    const auto req = nlohmann::json::parse(seen);
    CHECK(req.at("model") == "test-model");
    CHECK(req.at("messages").size() == 2);
    const std::string url = req.at("messages")[1].at("content")[1].at("image_url").at("url");
    CHECK(url.rfind("data:image/png;base64,", 0) == 0);
}

TEST_CASE("http judge raises protocol errors with the raw reply") {
    const std::string raw = chat_reply("I think it is consistent.");
    HttpJudgeClient client(fast_options(), [&](const std::string&) { return HttpResponse{true, 200, raw, ""}; });
    try {
        client.judge(one_sample());
        FAIL("expected JudgeProtocolError");
    } catch (const JudgeProtocolError& e) {
        CHECK(e.raw_reply() == raw);
    }
    CHECK_THROWS_AS(HttpJudgeClient::parse_reply("not json"), JudgeProtocolError);
}

TEST_CASE("http judge retries transient failures") {
    int calls = 0;
    HttpJudgeClient failing(fast_options(), [&](const std::string&) {
        ++calls;
        return HttpResponse{false, 0, "", "connection refused"};
    });
    CHECK_THROWS_AS(failing.judge(one_sample()), TransportError);
    CHECK(calls == 3);

    calls = 0;
    HttpJudgeClient recovering(fast_options(), [&](const std::string&) {
        ++calls;
        if (calls < 3) return HttpResponse{true, calls == 1 ? 503 : 429, "busy", ""};
        return HttpResponse{true, 200, chat_reply(R"({"consistent": true, "rationale": "ok"})"), ""};
    });
    CHECK(recovering.judge(one_sample()).consistent);
    CHECK(calls == 3);

    calls = 0;
    HttpJudgeClient rejected(fast_options(), [&](const std::string&) {
        ++calls;
        return HttpResponse{true, 401, "unauthorized", ""};
    });
    CHECK_THROWS_AS(rejected.judge(one_sample()), TransportError);
    CHECK(calls == 1);
}

TEST_CASE("judge selection from the environment") {
    ::unsetenv("JUDGE_URL");
    CHECK(dynamic_cast<MockJudge*>(make_judge_from_env().get()) != nullptr);
    ::setenv("JUDGE_URL", "http://127.0.0.1:9/v1/chat/completions", 1);
    ::unsetenv("JUDGE_MODEL");
    CHECK_THROWS_AS(make_judge_from_env(), ConfigError);
    ::setenv("JUDGE_MODEL", "m", 1);
    CHECK(dynamic_cast<HttpJudgeClient*>(make_judge_from_env().get()) != nullptr);
    ::unsetenv("JUDGE_URL");
    ::unsetenv("JUDGE_MODEL");
}

TEST_CASE("mock generator follows the requested granularity") {
    const Sample s = one_sample();
    const std::string sentence = MockGenerator(Granularity::sentence).generate(s, "describe");
    const std::string phrase = MockGenerator(Granularity::phrase).generate(s, "list");
    CHECK_FALSE(pattern_filter(sentence).flagged);
    Sample generated = s;
    generated.sentence_description = sentence;
    generated.phrase_descriptions.clear();
    CHECK(MockJudge().judge(generated).consistent);
    CHECK(phrase.find(',') != std::string::npos);
}

TEST_CASE("clean corpus yields an empty queue") {
    SyntheticConfig c;
    c.num_samples = 64;
    const Dataset ds = generate_synthetic(c);
    const auto result = curate(ds, MockJudge());
    CHECK(result.queue.empty());
    CHECK(result.clean_ids.size() == 64);
}

TEST_CASE("curation queues exactly the tagged records") {
    TempDir dir("curate");
    SyntheticConfig c;
    c.num_samples = 64;
    c.corruption_rate = 0.25;
    const Dataset ds = generate_synthetic(c);
    const auto result = curate(ds, MockJudge(), dir / "queue.jsonl");
    std::set<std::string> queued;
    for (const auto& e : result.queue) queued.insert(e.id);
    std::set<std::string> tagged;
    for (const auto& [id, kind] : ds.manifest.corruptions) tagged.insert(id);
    CHECK(tagged.size() == 16);
    CHECK(queued == tagged);

    std::ifstream in(dir / "queue.jsonl");
    std::string line;
    std::size_t lines = 0;
    while (std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line);
        for (const char* key : {"id", "description", "defects", "rationale"}) CHECK(j.contains(key));
        ++lines;
    }
    CHECK(lines == 16);
}

TEST_CASE("curation queue is the union of flagged and inconsistent") {
    SyntheticConfig c;
    c.num_samples = 64;
    c.corruption_rate = 0.25;
    const Dataset ds = generate_synthetic(c);
    std::set<std::string> flagged;
    for (const auto& [id, kind] : ds.manifest.corruptions) flagged.insert(id);
    std::set<std::string> bad;
    for (std::size_t i = 0; i < ds.samples.size(); i += 5) bad.insert(ds.samples[i].id);
    std::set<std::string> expected = flagged;
    expected.insert(bad.begin(), bad.end());

    const auto result = curate(ds, ListJudge(bad));
    CHECK(result.queue.size() == expected.size());
    std::set<std::string> all;
    for (const auto& e : result.queue) CHECK(all.insert(e.id).second);
    for (const auto& id : result.clean_ids) CHECK(all.insert(id).second);
    CHECK(all.size() == ds.samples.size());
    CHECK(std::is_sorted(result.clean_ids.begin(), result.clean_ids.end()));
}
