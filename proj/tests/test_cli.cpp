#include "test_util.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <sys/wait.h>

using test_util::TempDir;

namespace {

struct Result {
    int code = -1;
    std::string output;
};

Result run(const std::string& args) {
    const std::string cmd = std::string(TLV_CLI_PATH) + " " + args + " 2>&1";
    Result r;
    FILE* pipe = ::popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.output.append(buf, n);
    const int status = ::pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

// Small enough that a training run takes well under a second.
void write_tiny_config(const test_util::fs::path& path, const test_util::fs::path& data) {
    std::ofstream(path) << "[data]\npath = \"" << data.string() << "\"\n"
                        << "[model]\nimage_size = 16\npatch_size = 8\ndepth = 1\nwidth = 16\nheads = 2\n"
                        << "embed_dim = 8\ntext_depth = 1\ntext_width = 16\ntext_heads = 2\nvocab_size = 256\n"
                        << "max_text_len = 24\nlora_rank = 2\nlora_alpha = 4.0\n"
                        << "[train]\nbatch_size = 8\nepochs = 1\nwarmup_steps = 2\nseed = 3\n";
}

} // namespace

TEST_CASE("help lists every subcommand and exits zero") {
    const auto top = run("--help");
    CHECK(top.code == 0);
    for (const char* sub : {"gen", "filter", "curate", "train", "probe", "zeroshot", "grasp", "ablate-scale",
                            "ablate-curriculum", "project"}) {
        CAPTURE(sub);
        CHECK(top.output.find(sub) != std::string::npos);
        const auto help = run(std::string(sub) + " --help");
        CHECK(help.code == 0);
        CHECK(help.output.find("--out") != std::string::npos);
    }
    const auto gen = run("gen --help");
    CHECK(gen.output.find("--seed") != std::string::npos);
    CHECK(gen.output.find("256") != std::string::npos);
    CHECK(run("--version").code == 0);
}

TEST_CASE("usage and validation errors exit one, runtime failures exit two") {
    TempDir dir("cli_errors");
    CHECK(run("frobnicate").code == 1);
    CHECK(run("gen --bogus-flag").code == 1);
    CHECK(run("").code == 1);
    CHECK(run("gen --m 25 --out " + (dir / "d").string()).code == 1);
    CHECK(run("probe --checkpoint " + (dir / "missing.bin").string() + " --out " + (dir / "o").string()).code == 1);
}

TEST_CASE("gen, filter, curate and train wire through to files") {
    TempDir dir("cli_flow");
    const auto data = dir / "data";
    const auto gen = run("gen --m 4 --n 64 --seed 7 --image-size 16 --corruption-rate 0.25 --out " + data.string());
    REQUIRE(gen.code == 0);
    CHECK(test_util::fs::exists(data / "manifest.json"));
    CHECK(test_util::fs::exists(data / "records.jsonl"));
    CHECK(test_util::fs::exists(data / "run_manifest.json"));

    REQUIRE(run("curate --data " + data.string() + " --out " + (dir / "cur").string()).code == 0);
    std::ifstream queue(dir / "cur" / "correction_queue.jsonl");
    std::string line;
    int queued = 0;
    while (std::getline(queue, line)) ++queued;
    CHECK(queued == 16);

    const auto filter = run("filter --text \"It feels rough. It feels rough.\" --out " + (dir / "flt").string());
    CHECK(filter.code == 0);

    write_tiny_config(dir / "cfg.toml", data);
    std::string csv[2];
    for (int i = 0; i < 2; ++i) {
        const auto out = dir / ("train" + std::to_string(i));
        const auto r = run("train --config " + (dir / "cfg.toml").string() + " --no-curriculum --out " + out.string());
        REQUIRE(r.code == 0);
        csv[i] = test_util::read_file(out / "metrics.csv");
        const auto manifest = nlohmann::json::parse(test_util::read_file(out / "run_manifest.json"));
        CHECK(manifest.at("command") == "train");
        CHECK(manifest.at("config").at("train").at("schedule").at("enabled") == false);
        CHECK(manifest.at("seed") == 3);
        CHECK(manifest.contains("tool_version"));
        CHECK(manifest.contains("wall_clock_seconds"));
    }
    CHECK_FALSE(csv[0].empty());
    CHECK(csv[0] == csv[1]);

    const auto probe = run("probe --config " + (dir / "cfg.toml").string() + " --checkpoint " +
                           (dir / "train0" / "checkpoint.bin").string() + " --task hard_soft --out " +
                           (dir / "probe").string());
    CHECK(probe.code == 0);
    CHECK(test_util::fs::exists(dir / "probe" / "probe_report.json"));

    const auto bad = run("probe --config " + (dir / "cfg.toml").string() + " --checkpoint " +
                         (dir / "cfg.toml").string() + " --out " + (dir / "bad").string());
    CHECK(bad.code == 2);
}
