#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "doctest.h"
#include "vergescope/io.hpp"

using namespace vergescope;
namespace fs = std::filesystem;

#ifndef VERGESCOPE_CLI
#error "VERGESCOPE_CLI must point at the vergescope binary"
#endif

namespace {

struct Run {
  int status = 0;
  std::string out;
  std::string err;
};

struct Workspace {
  fs::path dir;
  Workspace() {
    dir = fs::temp_directory_path() / ("vergescope_cli_" + std::to_string(std::random_device{}()));
    fs::create_directories(dir);
  }
  ~Workspace() { fs::remove_all(dir); }

  Run run(const std::string& args, const std::string& stdin_text = "") const {
    const auto in = dir / "stdin.txt", out = dir / "stdout.txt", err = dir / "stderr.txt";
    io::write_text_file(in, stdin_text);
    const std::string cmd = std::string("\"") + VERGESCOPE_CLI + "\" " + args + " < \"" + in.string() + "\" > \"" +
                            out.string() + "\" 2> \"" + err.string() + "\"";
    Run r;
    const int raw = std::system(cmd.c_str());
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.out = io::read_text_file(out);
    r.err = io::read_text_file(err);
    return r;
  }

  std::string path(const std::string& name) const { return "\"" + (dir / name).string() + "\""; }
};

fs::path middle_gaze_file(const fs::path& dataset) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dataset / "gaze")) files.push_back(e.path().filename());
  REQUIRE_FALSE(files.empty());
  std::sort(files.begin(), files.end());
  return files[files.size() / 2];
}

synth::CohortConfig small_config(bool noiseless) {
  synth::CohortConfig cfg;
  cfg.design.participants = 3;
  cfg.design.repetitions = 3;
  if (noiseless) {
    cfg.noise = synth::NoiseModel::noiseless();
    cfg.subjective.participant_log_sd = cfg.subjective.report_log_sd = 0.0;
  }
  return cfg;
}

}  // namespace

TEST_CASE("zero-noise CLI chain reproduces configured parameters") {
  Workspace w;
  io::write_json_file(w.dir / "design.json", io::config_to_json(small_config(true)));
  REQUIRE(w.run("simulate --design " + w.path("design.json") + " --seed 11 --out " + w.path("ds")).status == 0);
  REQUIRE(w.run("preprocess --in " + w.path("ds") + " --out " + w.path("pp")).status == 0);
  REQUIRE(w.run("fit --gva-table " + w.path("pp/gva_table.csv") + " --out " + w.path("models.json")).status == 0);
  const auto r = w.run("analyze --gva-table " + w.path("pp/gva_table.csv") + " --models " + w.path("models.json") +
                       " --normalized --logratio --subjective " + w.path("pp/subjective.csv"));
  REQUIRE(r.status == 0);

  const auto ledger = io::read_json_file(w.dir / "ds/ledger.json");
  const auto models = io::models_from_json(io::read_json_file(w.dir / "models.json"));
  int checked = 0;
  for (const auto& m : models) {
    if (m.environment) continue;
    const auto& truth = ledger.at("participants").at(m.participant_id);
    CHECK(std::abs(m.intercept_deg - truth.at("intercept_implied").get<double>()) < 1e-9);
    CHECK(std::abs(m.slope_deg_per_diopter - truth.at("slope_implied").get<double>()) < 1e-9);
    ++checked;
  }
  CHECK(checked == 3);

  const auto report = io::Json::parse(r.out);
  CHECK(report.at("trials").at("retained") == report.at("trials").at("total"));
  CHECK(std::abs(report.at("environment_offsets").at("ar_minus_real").get<double>() + 0.8) < 1e-9);
  CHECK(std::abs(report.at("environment_offsets").at("vr_minus_real").get<double>() + 1.3) < 1e-9);
  for (const auto& m : report.at("log_ratio_means"))
    if (m.at("measure") == "subjective") {
      const double want = std::log(m.at("environment") == "AR" ? 1.17 : 1.377);
      CHECK(std::abs(m.at("mean").get<double>() - want) < 1e-8);
    }

  REQUIRE(w.run("report --analysis " + w.path("a.json") + " --out " + w.path("rep")).status != 0);
  io::write_text_file(w.dir / "a.json", r.out);
  const auto rep = w.run("report --analysis " + w.path("a.json") + " --out " + w.path("rep"));
  CHECK(rep.status == 0);
  CHECK(fs::exists(w.dir / "rep/tables.txt"));
  CHECK(fs::exists(w.dir / "rep/gva_by_depth.svg"));
  CHECK(io::read_text_file(w.dir / "rep/log_ratio.svg").rfind("<svg", 0) == 0);
}

TEST_CASE("outputs do not depend on the worker count") {
  Workspace w;
  io::write_json_file(w.dir / "design.json", io::config_to_json(small_config(false)));
  for (const char* t : {"1", "3"}) {
    const std::string ds = std::string("ds") + t, pp = std::string("pp") + t;
    REQUIRE(w.run(std::string("--threads ") + t + " simulate --design " + w.path("design.json") + " --seed 5 --out " +
                  w.path(ds))
                .status == 0);
    REQUIRE(w.run(std::string("--threads ") + t + " preprocess --in " + w.path(ds) + " --out " + w.path(pp)).status ==
            0);
  }
  CHECK(io::read_text_file(w.dir / "pp1/gva_table.csv") == io::read_text_file(w.dir / "pp3/gva_table.csv"));
  CHECK(io::read_text_file(w.dir / "pp1/validity.json") == io::read_text_file(w.dir / "pp3/validity.json"));
  const auto name = middle_gaze_file(w.dir / "ds1");
  CHECK(io::read_text_file(w.dir / "ds1/gaze" / name) == io::read_text_file(w.dir / "ds3/gaze" / name));
}

TEST_CASE("environment seed overrides the flag") {
  Workspace w;
  io::write_json_file(w.dir / "design.json", io::config_to_json(small_config(false)));
  setenv("VERGESCOPE_SEED", "42", 1);
  const auto r = w.run("simulate --design " + w.path("design.json") + " --seed 1 --out " + w.path("ds"));
  unsetenv("VERGESCOPE_SEED");
  REQUIRE(r.status == 0);
  CHECK(io::Json::parse(r.out).at("seed") == 42);
  CHECK(io::read_json_file(w.dir / "ds/ledger.json").at("seed") == 42);
}

TEST_CASE("estimate inverts the calibration line") {
  Workspace w;
  io::write_text_file(w.dir / "m.json", R"({"participant_id":"X","intercept_deg":17.5,"slope_deg_per_diopter":1.7})");
  const auto r = w.run("estimate --model " + w.path("m.json"), "t_s,gva_deg\n0,24.3\n0.005,18.35\n0.01,10\n");
  REQUIRE(r.status == 0);
  CHECK(r.out == "t_s,gva_deg,depth_m\n0,24.3,0.25\n0.005,18.35,2\n0.01,10,nan\n");

  const std::string row = "0,1,1,-0.0324,0,0,0.1,0,1,0.0324,0,0,-0.1,0,1\n";
  const auto s = w.run("estimate --stream --model " + w.path("m.json"), io::gaze_header() + "\n" + row);
  REQUIRE(s.status == 0);
  CHECK(s.out.rfind("t_s,gva_deg,depth_m\n0,11.42", 0) == 0);
}

TEST_CASE("failures exit nonzero with an error JSON") {
  Workspace w;
  auto check_error = [](const Run& r, const std::string& code) {
    CHECK(r.status != 0);
    const auto j = io::Json::parse(r.err);
    CHECK(j.at("error").at("code") == code);
    CHECK_FALSE(j.at("error").at("message").get<std::string>().empty());
  };
  check_error(w.run(""), "usage");
  check_error(w.run("simulate --out " + w.path("x")), "usage");
  check_error(w.run("fit --gva-table " + w.path("missing.csv")), "usage");
  io::write_text_file(w.dir / "bad.csv", "not,a,table\n");
  check_error(w.run("fit --gva-table " + w.path("bad.csv")), "parse");
  io::write_text_file(w.dir / "m.json", R"({"participant_id":"X","intercept_deg":17.5,"slope_deg_per_diopter":1.7})");
  check_error(w.run("estimate --model " + w.path("m.json"), "0,1,2\n"), "parse");
  io::write_text_file(w.dir / "cfg.json", R"({"noise":{"sample_noise":1}})");
  check_error(w.run("simulate --design " + w.path("cfg.json") + " --seed 1 --out " + w.path("y")), "parse");

  // a corrupt gaze file surfaces its line number
  synth::CohortConfig cfg;
  cfg.design.participants = 1;
  cfg.design.repetitions = 1;
  io::write_json_file(w.dir / "one.json", io::config_to_json(cfg));
  REQUIRE(w.run("simulate --design " + w.path("one.json") + " --seed 2 --out " + w.path("ds")).status == 0);
  const auto gaze = w.dir / "ds/gaze" / middle_gaze_file(w.dir / "ds");
  std::string text = io::read_text_file(gaze);
  const auto third = text.find('\n', text.find('\n', text.find('\n') + 1) + 1) + 1;
  const auto comma = text.find(',', third);
  const auto comma2 = text.find(',', comma + 1);
  text.replace(comma + 1, comma2 - comma - 1, "1.2");
  io::write_text_file(gaze, text);
  const auto r = w.run("preprocess --in " + w.path("ds") + " --out " + w.path("pp"));
  check_error(r, "parse");
  CHECK(r.err.find("line 4") != std::string::npos);
  CHECK(r.err.find("l_conf") != std::string::npos);
}
