#include <catch2/catch_amalgamated.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;

namespace {

const std::string kCli = BSC_CLI_PATH;

int run(const std::string& args) {
  const std::string cmd = kCli + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

fs::path work_dir() {
  const auto p = fs::temp_directory_path() / "bsc_cli_tests";
  return p;
}

}  // namespace

TEST_CASE("cli basics: help and usage errors") {
  REQUIRE(run("--help") == 0);
  REQUIRE(run("synth --help") == 0);
  REQUIRE(run("--no-such-flag") == 2);
  REQUIRE(run("synth --bogus 1 --out /tmp/x") == 2);
  REQUIRE(run("") == 2);  // missing subcommand
}

TEST_CASE("cli end-to-end mini pipeline") {
  const auto dir = work_dir();
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string d = dir.string();

  // 1. synthesize a tiny corpus (train + val + test in one manifest)
  REQUIRE(run("synth --out " + d + "/corpus --n 12 --count-min 0 --count-max 25 --seed 5") == 0);
  REQUIRE(fs::exists(dir / "corpus/manifest.tsv"));
  REQUIRE(fs::exists(dir / "corpus/synth.config.txt"));
  REQUIRE(run("validate-manifest --manifest " + d + "/corpus/manifest.tsv") == 0);

  // 2. train a slim segmenter for one epoch
  REQUIRE(run("train-ssnet --manifest " + d + "/corpus/manifest.tsv --split all --out " + d +
              "/ssnet.ckpt --epochs 1 --lr 0.01 --width-mult 0.05 --seed 3") == 0);
  REQUIRE(fs::exists(dir / "ssnet.ckpt"));
  REQUIRE(fs::exists(dir / "ssnet.ckpt.config.txt"));

  // 3. attention kinds demand a segmenter: configuration error, exit 1
  REQUIRE(run("train-counter --kind gwap --train " + d + "/corpus/manifest.tsv --out " + d +
              "/g.ckpt --train-split all --epochs 1") == 1);

  // 4. train a counter for two epochs
  REQUIRE(run("train-counter --kind gwap --train " + d + "/corpus/manifest.tsv --train-split all --out " +
              d + "/gwap.ckpt --ssnet " + d + "/ssnet.ckpt --epochs 2 --seed 4 --workers 2") == 0);
  REQUIRE(fs::exists(dir / "gwap.ckpt"));

  // 5. evaluate on the same manifest
  REQUIRE(run("eval --model " + d + "/gwap.ckpt --manifest " + d + "/corpus/manifest.tsv --split all "
              "--out-dir " + d + "/report") == 0);
  REQUIRE(fs::exists(dir / "report/residuals_raw.tsv"));
  REQUIRE(fs::exists(dir / "report/bands_rounded.tsv"));
  REQUIRE(fs::exists(dir / "report/summary.txt"));
  REQUIRE(fs::exists(dir / "report/eval.config.txt"));

  // 6. segment one tile
  const auto manifest_line = [&] {
    std::ifstream f(dir / "corpus/manifest.tsv");
    std::string line;
    std::getline(f, line);  // header
    std::getline(f, line);
    return line.substr(0, line.find('\t'));
  }();
  REQUIRE(run("segment --ssnet " + d + "/ssnet.ckpt --image " + d + "/corpus/images/" + manifest_line +
              ".ppm --out-prob " + d + "/prob.pgm --out-float " + d + "/prob.f32") == 0);
  REQUIRE(fs::exists(dir / "prob.pgm"));
  REQUIRE(fs::exists(dir / "prob.f32"));

  // 7. grid counting + heat map on a 672x672 composite (2x2 cells)
  REQUIRE(run("synth --out " + d + "/big --n 1 --count-min 10 --count-max 10 --size 672 --seed 9 "
              "--split test --prefix big") == 0);
  REQUIRE(run("count-tile --model " + d + "/gwap.ckpt --image " + d + "/big/images/big_000000.ppm "
              "--out-table " + d + "/cells.tsv --cell 336 --workers 2") == 0);
  REQUIRE(fs::exists(dir / "cells.tsv"));
  REQUIRE(run("render --table " + d + "/cells.tsv --image " + d + "/big/images/big_000000.ppm --out " +
              d + "/heat.ppm --series " + d + "/series.tsv") == 0);
  REQUIRE(fs::exists(dir / "heat.ppm"));
  REQUIRE(fs::exists(dir / "series.tsv"));

  // repeated invocation emits a byte-identical cell table
  REQUIRE(run("count-tile --model " + d + "/gwap.ckpt --image " + d + "/big/images/big_000000.ppm "
              "--out-table " + d + "/cells2.tsv --cell 336 --workers 1") == 0);
  std::ifstream a(dir / "cells.tsv"), b(dir / "cells2.tsv");
  const std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  const std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  REQUIRE(sa == sb);

  // unreadable image path in eval is a runtime error, exit 1
  REQUIRE(run("eval --model " + d + "/gwap.ckpt --manifest " + d + "/no-such.tsv") == 1);
}
