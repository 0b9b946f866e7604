#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>

#include "doctest.h"

#include "contextfed/dutycycle.hpp"
#include "contextfed/embed.hpp"
#include "contextfed/json_io.hpp"
#include "contextfed/synth.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
namespace cf = contextfed;

namespace {

struct Result {
  int code = -1;
  std::string out, err;
};

const fs::path& workdir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "contextfed_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string at(const std::string& name) { return (workdir() / name).string(); }

Result cli(const std::string& args) {
  const std::string out = at("stdout.txt"), err = at("stderr.txt");
  const std::string cmd = std::string("'") + CONTEXTFED_CLI + "' " + args + " >'" + out + "' 2>'" + err + "'";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = cf::read_file(out);
  r.err = cf::read_file(err);
  return r;
}

}  // namespace

TEST_CASE("cli: configuration errors exit 1 with one line") {
  const auto missing = at("nope.json");
  auto r = cli("run --config '" + missing + "' --out '" + at("o") + "'");
  CHECK(r.code == 1);
  CHECK(r.err.rfind("error: ", 0) == 0);
  CHECK(r.err.find(missing) != std::string::npos);
  CHECK(r.err.find('\n') == r.err.size() - 1);

  cf::write_file(at("empty_sources.json"), R"({"method": "fedtherapist", "sources": []})");
  r = cli("validate-config --config '" + at("empty_sources.json") + "'");
  CHECK(r.code == 1);
  CHECK(r.err.find("sources") != std::string::npos);

  cf::write_file(at("typo.json"), R"({"metod": "fl_text"})");
  r = cli("validate-config --config '" + at("typo.json") + "'");
  CHECK(r.code == 1);
  CHECK(r.err == "error: config: metod: unknown field\n");

  cf::write_file(at("ok.json"), R"({"method": "cl_nontext"})");
  r = cli("validate-config --config '" + at("ok.json") + "'");
  CHECK(r.code == 0);
  CHECK(r.out == "ok\n");

  CHECK(cli("").code == 1);
  CHECK(cli("synth --seed 1").code == 1);
  CHECK(cli("embed --mode word2vec --in x --out y").code != 0);
}

TEST_CASE("cli: runtime errors exit 2") {
  cf::write_file(at("bad_timeline.csv"), "minute,conversation,idle,charging\n0,1,1\n");
  const auto r = cli("dutycycle --timeline '" + at("bad_timeline.csv") + "' --out '" + at("t.json") + "'");
  CHECK(r.code == 2);
  CHECK(r.err.rfind("error: ", 0) == 0);
}

TEST_CASE("cli: synth is deterministic and loadable") {
  REQUIRE(cli("synth --seed 9 --users 4 --days 2 --out '" + at("a.jsonl") + "'").code == 0);
  REQUIRE(cli("synth --seed 9 --users 4 --days 2 --out '" + at("b.jsonl") + "'").code == 0);
  REQUIRE(cli("synth --seed 10 --users 4 --days 2 --out '" + at("c.jsonl") + "'").code == 0);
  const auto a = cf::read_file(at("a.jsonl"));
  CHECK(a == cf::read_file(at("b.jsonl")));
  CHECK(a != cf::read_file(at("c.jsonl")));
  const auto cohort = cf::synth::load_cohort(at("a.jsonl"));
  CHECK(cohort.clients.size() == 4);
  CHECK(cohort.days == 2);
  CHECK(cli("synth --seed 9 --users 1 --out '" + at("d.jsonl") + "'").code == 1);
}

TEST_CASE("cli: prep reproduces the golden file") {
  const std::string dir = CONTEXTFED_FIXTURE_DIR;
  REQUIRE(cli("prep --in '" + dir + "/prep_raw.txt' --out '" + at("prep.txt") + "'").code == 0);
  // The CLI reads "tabs<TAB>..." as id<TAB>text and keeps the id.
  auto got = cf::read_file(at("prep.txt"));
  const auto tab = got.find("tabs\tand more tabs\n");
  REQUIRE(tab != std::string::npos);
  got[tab + 4] = ' ';
  CHECK(got == cf::read_file(dir + "/prep_expected.txt"));

  cf::write_file(at("ids.txt"), "s1\tGood Morning!! lol\n");
  REQUIRE(cli("prep --in '" + at("ids.txt") + "' --out '" + at("ids_out.txt") + "'").code == 0);
  CHECK(cf::read_file(at("ids_out.txt")) == "s1\tgood morning laughing out loud\n");
}

TEST_CASE("cli: embed writes a loadable store") {
  cf::write_file(at("tokens.txt"), "a\tthe cat sat\nb\tthe dog ran\n");
  REQUIRE(cli("embed --in '" + at("tokens.txt") + "' --out '" + at("h.jsonl") + "' --dim 8 --seed 3").code == 0);
  const auto h = cf::embed::load_embeddings(at("h.jsonl"));
  CHECK(h.dim == 8);
  CHECK(h.vectors.at("a") == cf::embed::hash_embed({"the", "cat", "sat"}, 8, 3));

  REQUIRE(cli("embed --mode tfidf --in '" + at("tokens.txt") + "' --out '" + at("t.jsonl") + "' --dim 50").code == 0);
  const auto t = cf::embed::load_embeddings(at("t.jsonl"));
  CHECK(t.vectors.size() == 2);
  CHECK(cli("embed --in '" + at("tokens.txt") + "' --out '" + at("z.jsonl") + "' --dim 0").code == 1);
}

TEST_CASE("cli: samples, file embeddings and run") {
  cf::write_file(at("exp.json"), R"({"method": "fedtherapist", "seeds": [5], "threads": 1,
    "fl": {"rounds": 3}, "embedding": {"dim": 8},
    "cohort": {"num_users": 4, "days": 2, "speech_words_per_day": 80, "keyboard_words_per_day": 40}})");
  REQUIRE(cli("samples --config '" + at("exp.json") + "' --out '" + at("samples.txt") + "'").code == 0);
  const auto samples = cf::read_file(at("samples.txt"));
  CHECK_FALSE(samples.empty());

  auto r = cli("run --config '" + at("exp.json") + "' --out '" + at("run_hash") + "'");
  REQUIRE(r.code == 0);
  CHECK(r.out.rfind("fedtherapist depression auroc: ", 0) == 0);
  for (const char* f : {"report.json", "report.csv", "summary.csv", "manifest.json"}) {
    CAPTURE(f);
    CHECK(fs::exists(workdir() / "run_hash" / f));
  }

  // The external embedding path: embed the listed chunks, then run from the file.
  REQUIRE(cli("embed --in '" + at("samples.txt") + "' --out '" + at("emb.jsonl") + "' --dim 8 --seed 7").code == 0);
  auto j = nlohmann::json::parse(cf::read_file(at("exp.json")));
  j["embedding"] = {{"kind", "file"}, {"path", at("emb.jsonl")}, {"dim", 8}};
  cf::write_file(at("exp_file.json"), j.dump());
  REQUIRE(cli("run --config '" + at("exp_file.json") + "' --out '" + at("run_file") + "'").code == 0);
  CHECK(cf::read_file(at("run_file/report.json")) == cf::read_file(at("run_hash/report.json")));
}

TEST_CASE("cli: dutycycle trace") {
  std::string csv = "minute,conversation,idle,charging\n";
  for (int m = 0; m < 60; ++m) csv += std::to_string(m) + ",0,0,0\n";
  cf::write_file(at("quiet.csv"), csv);
  REQUIRE(cli("dutycycle --timeline '" + at("quiet.csv") + "' --out '" + at("trace.json") + "'").code == 0);
  const auto trace = nlohmann::json::parse(cf::read_file(at("trace.json")));
  CHECK(trace["probe_minutes"] == 15);
  CHECK(trace["recorded_minutes"] == 15);
  CHECK(trace["processed"].empty());
}
