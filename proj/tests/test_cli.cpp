#include "mpmri/mpt1.hpp"
#include "mpmri/qspace.hpp"
#include "mpmri/tsvd.hpp"

#include "test_util.hpp"

#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace mpmri;
namespace fs = std::filesystem;

namespace {

fs::path const kWork = fs::temp_directory_path() / "mpmri_test_cli";

std::string slurp(fs::path const &p)
{
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

struct Result
{
  int code = -1;
  std::string out, err;
};

Result run(std::string const &args)
{
  auto const out = kWork / "stdout.txt";
  auto const err = kWork / "stderr.txt";
  std::string const cmd = std::string(MPMRI_CLI) + " " + args + " >" + out.string() + " 2>" + err.string();
  int const status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

void write_file(fs::path const &p, std::string const &text)
{
  std::ofstream(p, std::ios::binary) << text;
}

struct Workdir
{
  Workdir()
  {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
  }
  ~Workdir() { fs::remove_all(kWork); }
};

std::string const kSmoke = MPMRI_SOURCE_DIR "/tests/data/smoke.cfg";

} // namespace

TEST_CASE("usage and config errors exit with status 2")
{
  Workdir w;
  CHECK(run("").code == 2);
  CHECK(run("frobnicate --out x").code == 2);
  CHECK(run("phantom gen").code == 2);

  write_file(kWork / "bad.cfg", "phantom.seed = 2\n# fine\nphantom.colour = red\n");
  auto const r = run("phantom gen --config " + (kWork / "bad.cfg").string() + " --out " + (kWork / "p").string());
  CHECK(r.code == 2);
  CHECK(r.err.find("bad.cfg:3: unknown key 'phantom.colour'") != std::string::npos);
  CHECK_FALSE(fs::exists(kWork / "p"));

  write_file(kWork / "badval.cfg", "train.epochs = many\n");
  CHECK(run("phantom gen --config " + (kWork / "badval.cfg").string() + " --out " + (kWork / "p").string()).code ==
        2);
}

TEST_CASE("malformed or missing tensors exit with status 2")
{
  Workdir w;
  save_tensor(kWork / "t.mpt", test::random_tensor({3, 3, 2, 2}, 1));
  auto bytes = slurp(kWork / "t.mpt");
  write_file(kWork / "short.mpt", bytes.substr(0, bytes.size() - 8));
  write_file(kWork / "magic.mpt", "MPT2" + bytes.substr(4));
  for (auto const *name : {"short.mpt", "magic.mpt"}) {
    auto const r = run("tsvd --in " + (kWork / name).string() + " --out " + (kWork / "s.mpt").string());
    CHECK(r.code == 2);
    CHECK(r.err.find(name) != std::string::npos);
  }
  CHECK(run("tsvd --in " + (kWork / "none.mpt").string() + " --out " + (kWork / "s.mpt").string()).code == 2);
  CHECK(run("fit dki --in " + kWork.string() + " --out " + (kWork / "f").string()).code == 2);
  CHECK(run("tsvd --in " + (kWork / "t.mpt").string() + " --drop 3 --out " + (kWork / "s.mpt").string()).code == 2);
}

TEST_CASE("tsvd writes the truncated spectrum and reconstruction")
{
  Workdir w;
  auto const t = test::random_tensor({5, 4, 3, 2}, 7);
  save_tensor(kWork / "t.mpt", t);
  auto const r = run("tsvd --in " + (kWork / "t.mpt").string() + " --drop 1 --out " + (kWork / "s.mpt").string() +
                     " --reconstruct " + (kWork / "r.mpt").string());
  REQUIRE(r.code == 0);
  auto const s = read_mpt1(kWork / "s.mpt");
  REQUIRE(s.dims == std::vector<std::uint64_t>{4, 3, 2});
  auto const full = test::oracle_spectrum(t);
  double dropped = 0.0;
  for (std::size_t ks = 0; ks < 3; ++ks) {
    for (std::size_t ln = 0; ln < 2; ++ln) {
      for (std::size_t i = 0; i < 4; ++i) {
        double const got = s.data[(i * 3 + ks) * 2 + ln];
        if (i == 3) {
          CHECK(got == 0.0);
          dropped += full.at(i, ks, ln) * full.at(i, ks, ln);
        } else {
          CHECK(std::abs(got - full.at(i, ks, ln)) < 1e-10 * (1.0 + full.at(i, ks, ln)));
        }
      }
    }
  }
  // S N ||t - t_k||^2 equals the discarded spectral energy.
  auto const rec = load_tensor(kWork / "r.mpt");
  double resid = 0.0;
  for (std::size_t i = 0; i < t.data().size(); ++i) {
    resid += (t.data()[i] - rec.data()[i]) * (t.data()[i] - rec.data()[i]);
  }
  CHECK(std::abs(6.0 * resid - dropped) < 1e-9 * dropped);
}

TEST_CASE("acquire reports the acceleration of the 18-direction scheme")
{
  Workdir w;
  write_file(kWork / "dense.cfg", "phantom.dims = 16,16,4\nscheme.dirs_per_shell = 90\nscheme.subsample_k = 6\n");
  auto const cfg = (kWork / "dense.cfg").string();
  REQUIRE(run("phantom gen --config " + cfg + " --out " + (kWork / "ph").string()).code == 0);
  auto const r = run("acquire --config " + cfg + " --in " + (kWork / "ph").string() + " --out " +
                     (kWork / "acq").string());
  REQUIRE(r.code == 0);
  CHECK(r.out.find("directions 18\n") != std::string::npos);
  CHECK(r.out.find("acceleration 15.0\n") != std::string::npos);
  auto const scheme = read_scheme_file((kWork / "acq" / "scheme.txt").string());
  CHECK(scheme.weighted_count() == 18);
  CHECK(load_tensor(kWork / "acq" / "dwi.mpt").dims().n == scheme.size());
}

TEST_CASE("pipeline subcommands chain through files")
{
  Workdir w;
  auto const dir = [](char const *n) { return (kWork / n).string(); };
  REQUIRE(run("phantom gen --config " + kSmoke + " --out " + dir("ph")).code == 0);
  REQUIRE(run("acquire --config " + kSmoke + " --in " + dir("ph") + " --out " + dir("acq")).code == 0);
  REQUIRE(run("noise add --config " + kSmoke + " --in " + dir("acq") + " --out " + dir("noisy")).code == 0);
  CHECK(slurp(kWork / "acq" / "dwi.mpt") != slurp(kWork / "noisy" / "dwi.mpt"));
  CHECK(fs::exists(kWork / "noisy" / "sigma.mpt"));
  REQUIRE(run("fit dki --config " + kSmoke + " --in " + dir("noisy") + " --out " + dir("dki")).code == 0);
  REQUIRE(run("fit noddi --config " + kSmoke + " --in " + dir("noisy") + " --out " + dir("noddi")).code == 0);
  CHECK(load_tensor(kWork / "dki" / "dki.mpt").dims().n == 4);
  CHECK(load_tensor(kWork / "noddi" / "noddi.mpt").dims().n == 3);
  auto const e = run("eval --config " + kSmoke + " --in " + dir("noisy") + " --pred " +
                     (kWork / "noddi" / "noddi.mpt").string() + " --out " + dir("ev"));
  REQUIRE(e.code == 0);
  CHECK(slurp(kWork / "ev" / "metrics.csv").find("maps,24,-,Viso,") != std::string::npos);

  // train needs a single arm.
  CHECK(run("train --config " + kSmoke + " --train " + dir("acq") + " --val " + dir("noisy") + " --out " + dir("m"))
            .code == 2);
  std::string one = slurp(kSmoke);
  for (auto const &[from, to] : {std::pair{"train.lambda_mode = none,fixed,nala", "train.lambda_mode = nala"},
                                 std::pair{"train.grouping = merged,per_parameter", "train.grouping = merged"},
                                 std::pair{"train.drop = 0,1", "train.drop = 1"}}) {
    auto const pos = one.find(from);
    REQUIRE(pos != std::string::npos);
    one.replace(pos, std::string(from).size(), to);
  }
  write_file(kWork / "one.cfg", one);
  auto const one_cfg = dir("one.cfg");
  auto const t = run("train --config " + one_cfg + " --train " + dir("acq") + " --val " + dir("noisy") + " --out " +
                     dir("m"));
  REQUIRE(t.code == 0);
  CHECK(slurp(kWork / "m" / "train_log.csv").starts_with("epoch,L_data_train,R_train,L_data_val,R_val,lambda\n"));
  REQUIRE(run("eval --config " + one_cfg + " --in " + dir("noisy") + " --model " + dir("m") + " --out " + dir("ev2"))
              .code == 0);
  CHECK(load_tensor(kWork / "ev2" / "pred.mpt").dims().n == 7);

  // Several training acquisitions.
  REQUIRE(run("train --config " + one_cfg + " --train " + dir("acq") + " --train " + dir("noisy") + " --val " +
              dir("noisy") + " --out " + dir("m2"))
              .code == 0);
  CHECK(slurp(kWork / "m2" / "head0_layer0_w.mpt") != slurp(kWork / "m" / "head0_layer0_w.mpt"));

  // A runaway learning rate is a numerical failure.
  auto div = one;
  div.replace(div.find("train.epochs = 2"), 16, "train.epochs = 8");
  write_file(kWork / "div.cfg", div + "train.lr = 50\n");
  CHECK(run("train --config " + dir("div.cfg") + " --train " + dir("acq") + " --val " + dir("noisy") + " --out " +
            dir("mdiv"))
            .code == 3);
}
