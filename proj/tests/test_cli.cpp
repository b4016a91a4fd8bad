// Runs the command-line tool end to end on a tiny configuration and checks
// its exit codes: 0 ok, 1 usage, 2 data.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

const fs::path& work_dir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "daft_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = std::string(DAFT_CLI_PATH) + " " + args + " >" + (work_dir() / "last.log").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

std::string path(const std::string& name) { return (work_dir() / name).string(); }

void write(const std::string& name, const std::string& text) { std::ofstream(path(name)) << text; }

const char* kTinyConfig = R"(
[run]
seed = 3
[data]
image_size = 8
n_per_class = 4
eval_per_class = 2
suite_per_class = 2
[teacher]
arch = cnn:3x8x8:2,2:4:2
steps = 3
batch_size = 8
[finetune]
steps = 2
batch_size = 8
epsilon = 0.1
pgd_steps = 2
[distill]
arch = cnn:3x8x8:2,2:4:2
steps = 3
batch_size = 8
)";

}  // namespace

TEST_CASE("cli: a tiny run succeeds end to end") {
  write("tiny.ini", kTinyConfig);
  const std::string cfg = " --config " + path("tiny.ini");
  REQUIRE(run("gen-data --kind train --out " + path("train.bin") + cfg) == 0);
  REQUIRE(run("gen-data --kind ood --out " + path("ood.bin") + cfg) == 0);
  CHECK(run("train --algo erm --data " + path("train.bin") + " --out " + path("erm.ckpt") + cfg) == 0);
  CHECK(fs::exists(path("erm.ckpt")));
  CHECK(run("train --algo af-smooth --data " + path("train.bin") + " --checkpoint " + path("erm.ckpt") + " --out " +
            path("af.ckpt") + cfg) == 0);
  CHECK(run("eval --data " + path("ood.bin") + " --checkpoint " + path("erm.ckpt") + cfg) == 0);
  CHECK(run("daft --data " + path("train.bin") + " --out " + path("run") + cfg) == 0);
  CHECK(fs::exists(path("run/student.ckpt")));
  write("a.txt", "0.8 0.82 0.79\n");
  write("b.txt", "0.7 0.75 0.71\n");
  CHECK(run("analyze --probe ttest --a " + path("a.txt") + " --b " + path("b.txt")) == 0);
  CHECK(run("analyze --probe features --data " + path("train.bin") + " --checkpoint " + path("erm.ckpt") + cfg) == 0);
}

TEST_CASE("cli: usage errors exit with 1") {
  CHECK(run("") == 1);
  CHECK(run("frobnicate") == 1);
  CHECK(run("train --data x.bin") == 1);  // --algo is required
  write("typo.ini", "[teacher]\nstpes = 3\n");
  CHECK(run("gen-data --out " + path("x.bin") + " --config " + path("typo.ini")) == 1);
  CHECK(run("gen-data --kind train") == 1);  // no --out
  CHECK(run("--help") == 0);
}

TEST_CASE("cli: unreadable or corrupt data exits with 2") {
  write("garbage.bin", "definitely not a dataset");
  CHECK(run("eval --data " + path("garbage.bin") + " --checkpoint " + path("erm.ckpt")) == 2);
  CHECK(run("eval --data " + path("missing.bin") + " --checkpoint " + path("erm.ckpt")) == 2);
  write("bad_numbers.txt", "0.5 zero\n");
  CHECK(run("analyze --probe ttest --a " + path("bad_numbers.txt") + " --b " + path("bad_numbers.txt")) == 2);
}
