#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "tlv/curation.hpp"
#include "tlv/error.hpp"
#include "tlv/image.hpp"

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <thread>

namespace tlv {

using nlohmann::json;

namespace {

constexpr const char* kJudgeInstruction =
    "You check tactile descriptions against the image of the touched object. Decide whether the description's "
    "tactile attributes (hardness, roughness, texture) are consistent with what the image shows. Reply with only "
    "a JSON object: {\"consistent\": true or false, \"rationale\": \"one short sentence\"}.";

struct ParsedUrl {
    std::string origin; // scheme://host[:port]
    std::string path;
};

ParsedUrl parse_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("JUDGE_URL must be absolute: '" + url + "'");
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

HttpJudgeClient::Transport network_transport(const HttpJudgeOptions& options) {
    return [options](const std::string& body) {
        const ParsedUrl url = parse_url(options.url);
        httplib::Client client(url.origin);
        client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(options.timeout));
        client.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(options.timeout));
        httplib::Headers headers;
        if (!options.token.empty()) headers.emplace("Authorization", "Bearer " + options.token);
        HttpResponse out;
        auto res = client.Post(url.path, headers, body, "application/json");
        if (!res) {
            out.error = httplib::to_string(res.error());
            return out;
        }
        out.ok = true;
        out.status = res->status;
        out.body = res->body;
        return out;
    };
}

std::string strip_fences(std::string s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    s = s.substr(first);
    if (s.rfind("```", 0) == 0) {
        const auto nl = s.find('\n');
        const auto close = s.rfind("```");
        if (nl != std::string::npos && close != std::string::npos && close > nl) s = s.substr(nl + 1, close - nl - 1);
    }
    return s;
}

} // namespace

HttpJudgeClient::HttpJudgeClient(HttpJudgeOptions options)
    : options_(std::move(options)), transport_(network_transport(options_)) {
    parse_url(options_.url);
}

HttpJudgeClient::HttpJudgeClient(HttpJudgeOptions options, Transport transport)
    : options_(std::move(options)), transport_(std::move(transport)) {
    if (options_.attempts < 1) throw ConfigError("judge attempts must be at least 1");
}

std::string HttpJudgeClient::request_body(const Sample& sample) const {
    const auto png = encode_png(sample.vision_image);
    const std::string image_url =
        "data:image/png;base64," + httplib::detail::base64_encode(std::string(png.begin(), png.end()));
    const std::string text = "Sentence description: " + sample.sentence_description +
                             "\nPhrase description: " + sample.joined_phrases();
    json body{{"model", options_.model},
              {"temperature", 0},
              {"messages",
               json::array({{{"role", "system"}, {"content", kJudgeInstruction}},
                            {{"role", "user"},
                             {"content", json::array({{{"type", "text"}, {"text", text}},
                                                      {{"type", "image_url"}, {"image_url", {{"url", image_url}}}}})}}})}};
    return body.dump();
}

JudgeVerdict HttpJudgeClient::parse_reply(const std::string& body) {
    try {
        const json reply = json::parse(body);
        const std::string content = reply.at("choices").at(0).at("message").at("content").get<std::string>();
        const json verdict = json::parse(strip_fences(content));
        JudgeVerdict out;
        out.consistent = verdict.at("consistent").get<bool>();
        if (verdict.contains("rationale")) out.rationale = verdict.at("rationale").get<std::string>();
        return out;
    } catch (const json::exception& e) {
        throw JudgeProtocolError(std::string("unparseable judge reply: ") + e.what(), body);
    }
}

JudgeVerdict HttpJudgeClient::judge(const Sample& sample) const {
    const std::string body = request_body(sample);
    auto backoff = options_.initial_backoff;
    std::string last_error;
    for (int attempt = 1; attempt <= options_.attempts; ++attempt) {
        const HttpResponse res = transport_(body);
        if (res.ok && res.status >= 200 && res.status < 300) return parse_reply(res.body);
        if (res.ok && res.status != 429 && res.status < 500) {
            throw TransportError("judge endpoint answered HTTP " + std::to_string(res.status) + ": " + res.body);
        }
        last_error = res.ok ? "HTTP " + std::to_string(res.status) : res.error;
        if (attempt < options_.attempts) {
            std::this_thread::sleep_for(backoff);
            backoff *= 2;
        }
    }
    throw TransportError("judge endpoint failed after " + std::to_string(options_.attempts) +
                         " attempts: " + last_error);
}

std::unique_ptr<JudgeClient> make_judge_from_env() {
    const char* url = std::getenv("JUDGE_URL");
    if (!url || !*url) return std::make_unique<MockJudge>();
    HttpJudgeOptions options;
    options.url = url;
    if (const char* token = std::getenv("JUDGE_TOKEN")) options.token = token;
    if (const char* model = std::getenv("JUDGE_MODEL")) options.model = model;
    if (options.model.empty()) throw ConfigError("JUDGE_MODEL must be set when JUDGE_URL is set");
    return std::make_unique<HttpJudgeClient>(std::move(options));
}

} // namespace tlv
