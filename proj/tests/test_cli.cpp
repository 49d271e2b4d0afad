#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "mfhg/image_io.hpp"
#include "mfhg/network.hpp"

using namespace mfhg;
namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(MFHG_CLI_PATH) + " " + args +
                          " >cli_stdout.txt 2>cli_stderr.txt";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

int count_files(const fs::path& dir, const std::string& ext) {
  int n = 0;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ext) ++n;
  return n;
}

}  // namespace

TEST_CASE("synth writes the promised file set") {
  TempDir dir("tmp_cli_synth");
  CHECK(run("synth --out " + dir.path.string() +
            " --count 0 --width 24 --height 24") == 0);
  CHECK(slurp(dir.path / "manifest.jsonl").empty());

  CHECK(run("synth --out " + dir.path.string() +
            " --count 5 --width 24 --height 24 --objects 2 --seed 3") == 0);
  CHECK(count_files(dir.path, ".png") == 20);  // a, b, truth, target per example
  std::istringstream manifest(slurp(dir.path / "manifest.jsonl"));
  int lines = 0;
  std::string line;
  while (std::getline(manifest, line)) ++lines;
  CHECK(lines == 5);
}

TEST_CASE("synth is bitwise reproducible") {
  TempDir a("tmp_cli_synth_a"), b("tmp_cli_synth_b");
  const std::string flags =
      " --count 3 --width 24 --height 24 --objects 2 --seed 11 --sigma-low 2";
  CHECK(run("synth --out " + a.path.string() + flags) == 0);
  CHECK(run("synth --out " + b.path.string() + flags) == 0);
  for (const auto& entry : fs::directory_iterator(a.path)) {
    const fs::path twin = b.path / entry.path().filename();
    REQUIRE(fs::exists(twin));
    CHECK(slurp(entry.path()) == slurp(twin));
  }
}

TEST_CASE("train writes checkpoint and trace; epochs=0 keeps the init") {
  TempDir dir("tmp_cli_train");
  CHECK(run("train --out " + dir.path.string() +
            " --count 4 --width 16 --height 16 --objects 2 --seed 5"
            " --head seg --epochs 0 --depth 2 --channels 4") == 0);
  CHECK(fs::exists(dir.path / "model.mfhg"));
  CHECK(slurp(dir.path / "loss_trace.csv") == "epoch,mean_loss\n");

  const Parameters loaded =
      load_checkpoint((dir.path / "model.mfhg").string());
  Rng rng(5);
  const Parameters expected = init_parameters(loaded.config, rng);
  CHECK(loaded.weights == expected.weights);  // untouched initialization
}

TEST_CASE("train rejects incompatible head/loss pairs") {
  TempDir dir("tmp_cli_train_bad");
  CHECK(run("train --out " + dir.path.string() +
            " --count 2 --head seg --loss nps --epochs 1") == 1);
  CHECK(run("train --out " + dir.path.string() +
            " --count 2 --head reg --loss bce --epochs 1") == 1);
}

TEST_CASE("train emits one trace row per epoch") {
  TempDir dir("tmp_cli_train_rows");
  CHECK(run("train --out " + dir.path.string() +
            " --count 4 --width 16 --height 16 --objects 2 --seed 6"
            " --head reg --loss nps --epochs 3 --batch 2 --lr 1e-4"
            " --depth 1 --channels 4 --sigma-low 2") == 0);
  std::istringstream trace(slurp(dir.path / "loss_trace.csv"));
  std::string line;
  int rows = 0;
  std::getline(trace, line);
  CHECK(line == "epoch,mean_loss");
  while (std::getline(trace, line)) ++rows;
  CHECK(rows == 3);
}

TEST_CASE("fuse strategies and burst arity") {
  TempDir dir("tmp_cli_fuse");
  CHECK(run("synth --out " + dir.path.string() +
            " --count 2 --width 24 --height 24 --objects 2 --seed 7") == 0);
  const std::string a = (dir.path / "ex_0000_a.png").string();
  const std::string b = (dir.path / "ex_0000_b.png").string();
  const std::string c = (dir.path / "ex_0001_a.png").string();
  const std::string out = (dir.path / "fused.png").string();

  CHECK(run("fuse " + a + " " + b + " --strategy dummy-a --out " + out) == 0);
  CHECK(slurp(out) == slurp(a));

  CHECK(run("fuse " + a + " " + b + " " + c + " --strategy average --out " +
            out) == 0);
  CHECK(fs::exists(out));

  CHECK(run("fuse " + a + " --strategy average --out " + out) == 1);
  CHECK(run("fuse " + a + " " + b + " --out " + out) == 1);  // model, no ckpt
  CHECK(run("fuse " + a + " " + b + " --checkpoint " + a + " --out " + out) ==
        2);  // a png is not a checkpoint
}

TEST_CASE("fuse with a reg checkpoint and nearest post-processing") {
  TempDir dir("tmp_cli_fuse_near");
  CHECK(run("synth --out " + dir.path.string() +
            " --count 1 --width 16 --height 16 --objects 1 --seed 21") == 0);
  HourglassConfig cfg{.depth = 1, .base_channels = 4, .head = Head::Reg};
  Rng rng(22);
  const Parameters params = init_parameters(cfg, rng);
  const std::string ckpt = (dir.path / "reg.mfhg").string();
  save_checkpoint(params, ckpt);
  const std::string a = (dir.path / "ex_0000_a.png").string();
  const std::string b = (dir.path / "ex_0000_b.png").string();
  const std::string out = (dir.path / "near.png").string();
  CHECK(run("fuse " + a + " " + b + " --checkpoint " + ckpt + " --near --out " +
            out) == 0);
  // every fused pixel must be one of the source pixels
  const Image fused = load_png(out);
  const Image ia = load_png(a), ib = load_png(b);
  for (int y = 0; y < fused.height(); ++y)
    for (int x = 0; x < fused.width(); ++x) {
      const bool from_a = fused.at(y, x, 0) == ia.at(y, x, 0) &&
                          fused.at(y, x, 1) == ia.at(y, x, 1) &&
                          fused.at(y, x, 2) == ia.at(y, x, 2);
      const bool from_b = fused.at(y, x, 0) == ib.at(y, x, 0) &&
                          fused.at(y, x, 1) == ib.at(y, x, 1) &&
                          fused.at(y, x, 2) == ib.at(y, x, 2);
      CHECK((from_a || from_b));
    }
}

TEST_CASE("synth with an empty file source is a config error") {
  TempDir img("tmp_cli_synth_noimg"), msk("tmp_cli_synth_nomsk");
  TempDir out("tmp_cli_synth_noout");
  CHECK(run("synth --out " + out.path.string() + " --count 2 --images " +
            img.path.string() + " --masks " + msk.path.string()) == 1);
}

TEST_CASE("fuse rejects mismatched burst dimensions") {
  TempDir dir("tmp_cli_fuse_dims");
  CHECK(run("synth --out " + dir.path.string() +
            " --count 1 --width 24 --height 24 --objects 1 --seed 8") == 0);
  TempDir dir2("tmp_cli_fuse_dims2");
  CHECK(run("synth --out " + dir2.path.string() +
            " --count 1 --width 32 --height 32 --objects 1 --seed 8") == 0);
  CHECK(run("fuse " + (dir.path / "ex_0000_a.png").string() + " " +
            (dir2.path / "ex_0000_b.png").string() + " --strategy average" +
            " --out " + (dir.path / "f.png").string()) == 1);
}

TEST_CASE("eval handles empty manifests, references and missing files") {
  TempDir dir("tmp_cli_eval");
  const std::string manifest = (dir.path / "records.jsonl").string();
  const std::string csv = (dir.path / "metrics.csv").string();
  std::ofstream(manifest).close();
  CHECK(run("eval --manifest " + manifest + " --out " + csv) == 0);
  CHECK(slurp(csv) == "pair_id,fuser,ssim,q_mi,q_te,q_ncie,q_g,q_s\n");

  CHECK(run("synth --out " + dir.path.string() +
            " --count 1 --width 24 --height 24 --objects 2 --seed 9") == 0);
  {
    std::ofstream m(manifest);
    // fused equals the reference: ssim column must be exactly 1
    m << R"({"a":"ex_0000_a.png","b":"ex_0000_b.png",)"
      << R"("f":"ex_0000_truth.png","ref":"ex_0000_truth.png"})" << "\n";
  }
  CHECK(run("eval --manifest " + manifest + " --out " + csv) == 0);
  const std::string text = slurp(csv);
  CHECK(text.find(",1,") != std::string::npos);  // ssim == 1 exactly

  {
    std::ofstream m(manifest);
    m << R"({"a":"ex_0000_a.png","b":"nope.png","f":"ex_0000_truth.png"})"
      << "\n";
  }
  CHECK(run("eval --manifest " + manifest + " --out " + csv) == 1);
}

TEST_CASE("eval bias study emits the flagged table") {
  TempDir dir("tmp_cli_bias");
  CHECK(run("synth --out " + dir.path.string() +
            " --count 3 --width 32 --height 32 --objects 2 --seed 10"
            " --sigma-low 2.5") == 0);
  const std::string manifest = (dir.path / "bias.jsonl").string();
  {
    std::ofstream m(manifest);
    for (int i = 0; i < 3; ++i) {
      char rec[256];
      std::snprintf(rec, sizeof(rec),
                    "{\"a\":\"ex_%04d_a.png\",\"b\":\"ex_%04d_b.png\","
                    "\"ref\":\"ex_%04d_truth.png\"}\n",
                    i, i, i);
      m << rec;
    }
  }
  const std::string csv = (dir.path / "bias.csv").string();
  CHECK(run("eval --manifest " + manifest + " --out " + csv + " --bias") == 0);
  std::istringstream rows(slurp(csv));
  std::string line;
  int n = 0;
  while (std::getline(rows, line)) ++n;
  CHECK(n == 1 + 3 * 3);  // header + pairs x fusers
}

TEST_CASE("bench reports positive, size-monotone timings") {
  TempDir dir("tmp_cli_bench");
  HourglassConfig cfg{.depth = 2, .base_channels = 4, .head = Head::Seg};
  Rng rng(14);
  const Parameters params = init_parameters(cfg, rng);
  const std::string ckpt = (dir.path / "model.mfhg").string();
  save_checkpoint(params, ckpt);
  const std::string csv = (dir.path / "bench.csv").string();
  CHECK(run("bench --checkpoint " + ckpt +
            " --sizes 16,64 --repeat 2 --out " + csv) == 0);
  std::istringstream rows(slurp(csv));
  std::string header, line;
  std::getline(rows, header);
  CHECK(header == "size,mean_seconds");
  std::vector<std::pair<int, double>> timings;
  while (std::getline(rows, line)) {
    int s;
    double t;
    if (std::sscanf(line.c_str(), "%d,%lf", &s, &t) == 2)
      timings.emplace_back(s, t);
  }
  REQUIRE(timings.size() == 2);
  CHECK(timings[0].second > 0.0);
  CHECK(timings[1].second > 0.0);
  CHECK(timings[1].second >= timings[0].second);  // 64 >= 16
}

TEST_CASE("config files feed flags and reject unknown keys") {
  TempDir dir("tmp_cli_config");
  const std::string cfg_path = (dir.path / "run.cfg").string();
  {
    std::ofstream cfg(cfg_path);
    cfg << "count=2\nwidth=24\nheight=24\nobjects=1\nseed=15\n";
  }
  CHECK(run("synth --out " + dir.path.string() + " --config " + cfg_path) ==
        0);
  CHECK(count_files(dir.path, ".png") == 8);

  {
    std::ofstream cfg(cfg_path);
    cfg << "count=2\nbogus_key=1\n";
  }
  CHECK(run("synth --out " + dir.path.string() + " --config " + cfg_path) ==
        1);
}

TEST_CASE("unwritable output directory exits with the io code") {
  CHECK(run("synth --out /proc/definitely_not_writable --count 1") == 2);
}
