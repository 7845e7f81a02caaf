#include <doctest.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace {

const char* cli_path() { return std::getenv("NHMECH_CLI"); }

struct RunResult {
  int exit_code = -1;
  std::string out;
};

RunResult run(const std::string& args) {
  RunResult r;
  std::string cmd = std::string(cli_path()) + " " + args + " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf;
  std::size_t got;
  while ((got = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), got);
  int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

} // namespace

TEST_CASE("cli runs end to end" * doctest::skip(cli_path() == nullptr)) {
  SUBCASE("simulate writes a trajectory and a summary") {
    RunResult r = run("simulate --builtin nonholonomic_particle --t-end 0.1 --step 0.001 "
                      "--output /tmp/nhmech_cli_traj.csv");
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("\"energy_drift\"") != std::string::npos);
    std::string csv = slurp("/tmp/nhmech_cli_traj.csv");
    CHECK(csv.rfind("t,q_1,q_2,q_3,u_1,u_2,u_3,v_1,v_2,v_3,E,lambda_1,E,p_y", 0) == 0);
    // 101 samples + header
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 102);
  }

  SUBCASE("usage errors exit 2") {
    CHECK(run("simulate --builtin nonholonomic_particle --step 0").exit_code == 2);
    CHECK(run("simulate").exit_code == 2);
    CHECK(run("noether NoSuchField --builtin nonholonomic_particle").exit_code == 2);
    CHECK(run("integral NoSuchIntegral --builtin nonholonomic_particle").exit_code == 2);
    CHECK(run("bogus_command").exit_code == 2);
    CHECK(run("simulate --builtin nonholonomic_particle --format yaml").exit_code == 2);
  }

  SUBCASE("missing scenario file exits 3") {
    CHECK(run("simulate --scenario /tmp/definitely_missing.json").exit_code == 3);
  }

  SUBCASE("verdict failures exit 1") {
    CHECK(run("noether Z_x --builtin nonholonomic_particle --t-end 0.2").exit_code == 1);
    CHECK(run("noether Z_y --builtin nonholonomic_particle --t-end 0.2").exit_code == 0);
  }

  SUBCASE("frame reports ranks and kernel dimensions") {
    RunResult r = run("frame --builtin nonholonomic_particle --samples 32");
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("\"derived_flag\"") != std::string::npos);

    RunResult plane = run("frame --builtin integrable_plane --samples 16");
    CHECK(plane.exit_code == 0);
  }

  SUBCASE("identical seeds give byte-identical outputs") {
    std::string args = "simulate --builtin chaplygin_sleigh --t-end 0.5 --step 0.001 --seed 11 "
                       "--output /tmp/nhmech_det_a.csv";
    RunResult a = run(args);
    std::string args2 = "simulate --builtin chaplygin_sleigh --t-end 0.5 --step 0.001 --seed 11 "
                        "--output /tmp/nhmech_det_b.csv";
    RunResult b = run(args2);
    CHECK(a.exit_code == 0);
    CHECK(b.exit_code == 0);
    CHECK(a.out == b.out);
    CHECK(slurp("/tmp/nhmech_det_a.csv") == slurp("/tmp/nhmech_det_b.csv"));

    RunResult n1 = run("noether Z_y --builtin nonholonomic_particle --t-end 0.2 --seed 5");
    RunResult n2 = run("noether Z_y --builtin nonholonomic_particle --t-end 0.2 --seed 5");
    CHECK(n1.out == n2.out);
  }

  SUBCASE("json trajectory format") {
    RunResult r = run("simulate --builtin nonholonomic_particle --t-end 0.01 --step 0.001 "
                      "--format json --output /tmp/nhmech_traj.json");
    CHECK(r.exit_code == 0);
    std::string body = slurp("/tmp/nhmech_traj.json");
    CHECK(body.find("\"header\"") != std::string::npos);
    CHECK(body.find("\"rows\"") != std::string::npos);
  }
}
