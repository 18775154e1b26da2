#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <limits>

#include "fixture_problems.hpp"
#include "qyoula/errors.hpp"
#include "qyoula/problem_file.hpp"
#include "random_models.hpp"

using namespace qyoula;
using qtest::Rng;

namespace {

std::string parse_error_of(const std::string& text) {
  try {
    parse_problem(text, "doc.yaml");
  } catch (const ParseError& e) {
    return e.what();
  }
  return "";
}

const char* kScalarPlant = R"(plant:
  abcd:
    A: [[[1, 0]]]
    B: [[[1, 0], [1, 0]]]
    C: [[[1, 0]], [[1, 0]]]
    D: [[[0, 0], [0, 0]], [[0, 0], [0, 0]]]
)";

}  // namespace

TEST_CASE("fixtures parse") {
  const ProblemFile demo = load_problem(qtest::fixture("scalar_demo.yaml"));
  CHECK(demo.modified_layout);
  CHECK(demo.has_partition);
  CHECK(demo.partition.n_r == 1);
  CHECK(demo.plant.states() == 1);
  CHECK(demo.gains.kind == GainPolicy::Kind::Assign);
  REQUIRE(demo.gains.targets.size() == 1);
  CHECK(demo.gains.targets[0] == cplx(-1.0, 0.0));
  CHECK_FALSE(demo.grid.has_value());
  CHECK(demo.order == 8);
  CHECK(demo.beta == 1.0);

  const ProblemFile cav = load_problem(qtest::fixture("cavity.yaml"));
  REQUIRE(cav.slh.has_value());
  CHECK(cav.plant.states() == 2);
  CHECK((cav.plant.A() + Mat::Identity(2, 2)).norm() < 1e-15);

  const ProblemFile bs = load_problem(qtest::fixture("beamsplitter_synthesis.yaml"));
  CHECK(bs.descent.max_iters == 200);
  CHECK(bs.descent.constraint_tol == 1e-6);
  CHECK(bs.order == 2);
  CHECK(bs.from_controller.has_value());
  CHECK(bs.w_in->states() == 2);
  CHECK(bs.gains.kind == GainPolicy::Kind::Zero);

  const ProblemFile ap = load_problem(qtest::fixture("allpass.yaml"));
  REQUIRE(ap.grid.has_value());
  CHECK(ap.grid->points == 61);
  CHECK(ap.grid->make().size() == 61);
}

TEST_CASE("parse errors carry line and column") {
  try {
    load_problem(qtest::fixture("malformed.yaml"));
    FAIL("no error");
  } catch (const ParseError& e) {
    const std::string what = e.what();
    CHECK(what.find("malformed.yaml:3:10") != std::string::npos);
    CHECK(what.find("plant.abcd.A") != std::string::npos);
  }

  const std::string unknown = parse_error_of(std::string(kScalarPlant) + "partiton: {}\n");
  CHECK(unknown.find("doc.yaml:7:1") != std::string::npos);
  CHECK(unknown.find("unknown key 'partiton'") != std::string::npos);

  const std::string syntax = parse_error_of("plant: [\n  abcd: {\n");
  CHECK(syntax.rfind("doc.yaml:", 0) == 0);

  CHECK(parse_error_of("grid: {points: 3}\n").find("missing key 'plant'") != std::string::npos);
  CHECK(parse_error_of(std::string(kScalarPlant) + "youla: {beta: -1}\n").find("beta must be positive") !=
        std::string::npos);
  CHECK(parse_error_of(std::string(kScalarPlant) + "youla: {order: two}\n").find("youla.order") !=
        std::string::npos);
  CHECK_THROWS_AS(load_problem("/nonexistent/problem.yaml"), ParseError);
  CHECK_THROWS_AS(parse_parameter("beta: 1\n"), ParseError);
}

TEST_CASE("parameter documents") {
  const YoulaParameter half = load_parameter(qtest::fixture("q_half.yaml"));
  CHECK(half.order() == 0);
  CHECK(half.coeff(0).norm() == 0.0);
  REQUIRE(half.offset().has_value());
  for (double w : {0.0, 1.0, 7.0}) {
    const cplx s{0.0, w};
    CHECK(std::abs(half.response(w)(0, 0) - (0.5 / (s + 2.0) + cplx(0.5, 0.25))) < 1e-15);
  }

  Rng rng(61);
  std::vector<Mat> coeffs;
  for (int k = 0; k <= 2; ++k) coeffs.push_back(rng.matrix(2, 2));
  YoulaParameter q(0.75, coeffs);
  q.set_offset(rng.stable_system(3, 2, 2, false));
  const YoulaParameter back = parse_parameter(emit_parameter(q));
  CHECK(back.beta() == q.beta());
  CHECK(back.order() == q.order());
  CHECK(back.pack() == q.pack());
  REQUIRE(back.offset().has_value());
  CHECK(back.offset()->A() == q.offset()->A());
  CHECK(back.offset()->D() == q.offset()->D());

  YoulaParameter stat(1.0, 1, 2, 2);
  stat.set_offset(StateSpace::gain(rng.matrix(2, 2)));
  const YoulaParameter sb = parse_parameter(emit_parameter(stat));
  REQUIRE(sb.offset().has_value());
  CHECK(sb.offset()->states() == 0);
  CHECK(sb.offset()->D() == stat.offset()->D());
}

TEST_CASE("number formatting") {
  CHECK(format_double(0.0) == "0");
  CHECK(format_double(1.0) == "1");
  CHECK(format_double(0.1) == "0.10000000000000001");
  CHECK(format_double(std::numeric_limits<double>::infinity()) == "inf");
  CHECK(format_double(-std::numeric_limits<double>::infinity()) == "-inf");
  CHECK(format_double(std::numeric_limits<double>::quiet_NaN()) == "nan");
  Rng rng(62);
  for (int i = 0; i < 200; ++i) {
    const double x = rng.normal() * std::pow(10.0, rng.integer(-20, 20));
    CHECK(std::strtod(format_double(x).c_str(), nullptr) == x);
  }
  CHECK(emit_matrix(Mat(0, 3)) == "[]");
  CHECK(emit_matrix(Mat{{cplx(1.0, -2.0)}}) == "[[[1, -2]]]");
}

TEST_CASE("atomic writes") {
  const std::filesystem::path dir =
      std::filesystem::temp_directory_path() / ("qyoula_io_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "out.txt").string();
  write_file_atomic(path, "first\n");
  CHECK(read_text(path) == "first\n");
  write_file_atomic(path, "second\n");
  CHECK(read_text(path) == "second\n");
  CHECK_FALSE(std::filesystem::exists(path + ".tmp"));
  CHECK_THROWS_AS(write_file_atomic((dir / "missing" / "x.txt").string(), "x"), Error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("named systems") {
  const std::filesystem::path path =
      std::filesystem::temp_directory_path() / ("qyoula_sys_" + std::to_string(::getpid()) + ".yaml");
  const StateSpace g = qtest::allpass(2.0);
  write_file_atomic(path.string(), "systems:\n  g:\n" + emit_abcd(g, 4));
  const auto systems = load_systems(path.string(), "systems");
  REQUIRE(systems.count("g") == 1);
  CHECK(systems.at("g").A() == g.A());
  CHECK(systems.at("g").C() == g.C());
  std::filesystem::remove(path);
}
