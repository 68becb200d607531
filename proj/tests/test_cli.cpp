#include "doctest.h"
#include "json.hpp"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const fs::path kDir = fs::temp_directory_path() / "cdist_test_cli";

int cli(const std::string& args) {
  const std::string cmd = std::string(CDIST_BIN) + " " + args + " > " + (kDir / "stdout.txt").string() + " 2> " +
                          (kDir / "stderr.txt").string();
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

fs::path write(const std::string& name, const std::string& text) {
  const fs::path p = kDir / name;
  std::ofstream(p) << text;
  return p;
}

std::string read(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("cli exit codes and artifacts") {
  fs::remove_all(kDir);
  fs::create_directories(kDir);

  CHECK(cli("bench --out " + (kDir / "bench").string()) == 0);
  const auto report = nlohmann::json::parse(read(kDir / "bench" / "report.json"));
  CHECK(report["schema_version"] == 1);
  CHECK(report["params_ratio"].get<double>() >= 14.0);
  CHECK(fs::exists(kDir / "bench" / "config.resolved.json"));

  CHECK(cli("bench --config " + write("bad.json", R"({"surprise": true})").string() + " --out x") == 2);
  CHECK(cli("bench --config " + write("broken.json", "{").string() + " --out x") == 2);
  CHECK(cli("bench --config " + (kDir / "missing.json").string()) == 2);
  CHECK(cli("bench") == 2);  // no output directory
  CHECK(cli("") == 2);
  CHECK(cli("stylize --config " + write("st.json", R"({"checkpoints": ["nope"], "content": "a.png", "style": "b.png"})").string() +
            " --out " + (kDir / "st").string()) == 3);
  CHECK(cli("train-decoder --config " +
            write("div.json", R"({"arch": {"layout": [[4]]}, "hyperparams": {"max_steps": 5, "batch_size": 2, "learning_rate": 1e300}, "corpus": {"samples": 2}})")
                .string() +
            " --out " + (kDir / "div").string()) == 4);
  CHECK(fs::exists(kDir / "div" / "last_good" / "manifest.json"));
  CHECK(cli("--help") == 0);
}

void write_ppm(const fs::path& p, int h, int w, int seed) {
  std::ofstream f(p, std::ios::binary);
  f << "P6\n" << w << " " << h << "\n255\n";
  for (int i = 0; i < h * w * 3; ++i) f.put(static_cast<char>((i * 37 + seed * 101 + (i / (3 * w)) * 13) % 256));
}

TEST_CASE("cli train, distill, stylize, gatys and eval chain") {
  write_ppm(kDir / "c.ppm", 12, 10, 1);
  write_ppm(kDir / "s.ppm", 8, 8, 2);

  const std::string td = write("td.json", R"({"arch": {"layout": [[4], [8]]}, "hyperparams": {"max_steps": 4, "batch_size": 2}, "corpus": {"samples": 4}})").string();
  REQUIRE(cli("train-decoder --config " + td + " --seed 2 --deterministic --out " + (kDir / "td").string()) == 0);
  CHECK(fs::exists(kDir / "td" / "checkpoint" / "manifest.json"));
  CHECK(fs::exists(kDir / "td" / "metrics.jsonl"));

  const std::string ds = write("ds.json", R"({"decoder_checkpoint": "td/checkpoint", "hyperparams": {"max_steps": 3, "batch_size": 2}, "corpus": {"samples": 4}, "eval_corpus": {"samples": 2}})").string();
  REQUIRE(cli("distill --config " + ds + " --out " + (kDir / "ds").string()) == 0);
  const auto dr = nlohmann::json::parse(read(kDir / "ds" / "report.json"));
  CHECK(dr["student_params"].get<int>() < dr["teacher_params"].get<int>());

  const std::string st = write("st.json", R"({"checkpoints": ["ds/checkpoint"], "content": "c.ppm", "style": "s.ppm", "alpha": 0.0, "also_reconstruct": true})").string();
  REQUIRE(cli("stylize --config " + st + " --out " + (kDir / "st0").string()) == 0);
  CHECK(read(kDir / "st0" / "stylized.png") == read(kDir / "st0" / "reconstruction.png"));
  const auto sr = nlohmann::json::parse(read(kDir / "st0" / "report.json"));
  CHECK(sr["height"] == 12);
  CHECK(sr["width"] == 10);

  const std::string g = write("g.json", R"({"content": "c.ppm", "style": "s.ppm", "iterations": 3, "arch": {"layout": [[4], [8]]}})").string();
  REQUIRE(cli("gatys --config " + g + " --out " + (kDir / "g").string()) == 0);
  const auto gr = nlohmann::json::parse(read(kDir / "g" / "report.json"));
  CHECK(gr["final_loss"].get<double>() <= gr["initial_loss"].get<double>());
  CHECK(fs::exists(kDir / "g" / "loss_history.csv"));

  fs::create_directories(kDir / "same");
  fs::copy_file(kDir / "st0" / "stylized.png", kDir / "same" / "a.png");
  const std::string ev = write("ev.json", R"({"stylized_dir": "same", "style_dir": "same", "arch": {"layout": [[4], [8]]}})").string();
  REQUIRE(cli("eval --config " + ev + " --out " + (kDir / "ev").string()) == 0);
  const auto er = nlohmann::json::parse(read(kDir / "ev" / "report.json"));
  CHECK(er["mean"]["Conv1"].get<double>() == 0.0);
  CHECK(er["mean"]["Conv2"].get<double>() == 0.0);
}
