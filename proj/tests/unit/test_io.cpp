#include <cmath>
#include <cstring>
#include <sstream>
#include <string>

#include "doctest.h"
#include "sbtrans/errors.hpp"
#include "sbtrans/io.hpp"

using namespace sbtrans;

namespace {

bool bitwise_equal(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  return a.size() == 0 || std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

DrawArchive sample_archive() {
  DrawArchive a;
  a.model = "sblm";
  a.n = 3;
  a.d = 1;
  a.S = 2;
  a.seed = 42;
  a.config = canonical_config(R"({"draws": 2, "model": "sblm"})");
  a.config_hash = config_hash(a.config);
  a.theta.resize(2, 2);
  a.theta << 0.1, -1.0 / 3.0, std::nextafter(1.0, 2.0), -0.0;
  a.sigma.resize(2);
  a.sigma << 1e-300, 2.5;
  a.predictive.resize(2, 1);
  a.predictive << 3.0, 4.0;
  for (int s = 0; s < 2; ++s) {
    a.g_draws.emplace_back(std::vector<double>{0.0, 1.0, 2.0}, std::vector<double>{-1.0 + s, 0.0 + s, 1.0 + s},
                           std::vector<double>{1.0, 1.0, 1.0}, TailPolicy::Linear);
  }
  return a;
}

}  // namespace

TEST_CASE("csv with three rows and two columns") {
  std::istringstream in("y,x1\n1.5,2\n-3,4e-1\n0,7\n");
  const Dataset d = parse_csv(in, "y");
  CHECK(d.n() == 3);
  CHECK(d.d() == 1);
  CHECK(d.y[1] == -3.0);
  CHECK(d.X(1, 0) == 0.4);
  CHECK(d.covariate_names == std::vector<std::string>{"x1"});
}

TEST_CASE("csv column selection and crlf") {
  std::istringstream in("a,y,b\r\n1,2,3\r\n4,5,6\r\n");
  const Dataset d = parse_csv(in, "y", {"b", "a"});
  CHECK(d.X(0, 0) == 3.0);
  CHECK(d.X(1, 1) == 4.0);
  CHECK(d.y[1] == 5.0);
}

TEST_CASE("missing cell names its row and column") {
  std::istringstream in("y,x1\n1,2\n3,NA\n5,6\n");
  try {
    parse_csv(in, "y");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("row 2") != std::string::npos);
    CHECK(msg.find("\"x1\"") != std::string::npos);
  }
}

TEST_CASE("every bad row is reported") {
  std::istringstream in("y,x1\n,2\n3,4\n5,inf\n7\n");
  try {
    parse_csv(in, "y");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("row 1") != std::string::npos);
    CHECK(msg.find("row 3") != std::string::npos);
    CHECK(msg.find("row 4") != std::string::npos);
    CHECK(msg.find("row 2") == std::string::npos);
  }
}

TEST_CASE("empty input and unknown columns") {
  std::istringstream empty("");
  CHECK_THROWS_AS(parse_csv(empty, "y"), InputError);
  std::istringstream header_only("y,x\n");
  CHECK_THROWS_AS(parse_csv(header_only, "y"), InputError);
  std::istringstream in("y,x\n1,2\n");
  CHECK_THROWS_AS(parse_csv(in, "z"), InputError);
  CHECK_THROWS_AS(ingest_csv("/nonexistent/file.csv", "y"), InputError);
}

TEST_CASE("fnv1a64 reference values") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("config hash ignores formatting and key order") {
  const auto h1 = config_hash(R"({"b": 1, "a": [1, 2], "c": {"y": true, "x": "s"}})");
  const auto h2 = config_hash("{\n  \"c\": {\"x\":\"s\",\"y\":true},\n\"a\":[1,2],  \"b\":1}");
  CHECK(h1 == h2);
  CHECK(h1 != config_hash(R"({"b": 2, "a": [1, 2], "c": {"y": true, "x": "s"}})"));
  CHECK(h1 != config_hash(R"({"b": 1, "a": [2, 1], "c": {"y": true, "x": "s"}})"));
  CHECK_THROWS_AS(config_hash("[1, 2]"), ConfigError);
  CHECK_THROWS_AS(config_hash("{bad"), ConfigError);
}

TEST_CASE("archive round trip is bitwise") {
  const DrawArchive a = sample_archive();
  std::stringstream buf;
  write_archive(buf, a);
  const std::string bytes = buf.str();
  std::istringstream in(bytes);
  const DrawArchive b = read_archive(in);
  CHECK(b.model == a.model);
  CHECK(b.n == a.n);
  CHECK(b.d == a.d);
  CHECK(b.S == a.S);
  CHECK(b.seed == a.seed);
  CHECK(b.config == a.config);
  CHECK(b.config_hash == a.config_hash);
  CHECK(bitwise_equal(a.theta, b.theta));
  CHECK(bitwise_equal(a.sigma, b.sigma));
  CHECK(bitwise_equal(a.predictive, b.predictive));
  REQUIRE(b.g_draws.size() == 2);
  CHECK(b.g_draws[1].tails() == TailPolicy::Linear);
  CHECK(b.g_draws[1].forward(0.5) == a.g_draws[1].forward(0.5));
  CHECK(std::signbit(b.theta(1, 1)));

  std::stringstream again;
  write_archive(again, b);
  CHECK(again.str() == bytes);
}

TEST_CASE("archive rejects corruption") {
  std::stringstream buf;
  write_archive(buf, sample_archive());
  const std::string bytes = buf.str();

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  std::istringstream in1(bad_magic);
  CHECK_THROWS_AS(read_archive(in1), ParseError);

  std::string bad_version = bytes;
  bad_version[4] = 99;
  std::istringstream in2(bad_version);
  CHECK_THROWS_AS(read_archive(in2), ParseError);

  std::istringstream in3(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(read_archive(in3), ParseError);

  DrawArchive wrong_hash = sample_archive();
  wrong_hash.config_hash ^= 1;
  std::stringstream buf4;
  write_archive(buf4, wrong_hash);
  CHECK_THROWS_AS(read_archive(buf4), InputError);
}

TEST_CASE("summary csv rows") {
  Eigen::MatrixXd theta(1000, 2);
  Eigen::VectorXd sigma(1000);
  Eigen::MatrixXd pred(1000, 1);
  for (int s = 0; s < 1000; ++s) {
    theta(s, 0) = s;
    theta(s, 1) = -s;
    sigma[s] = 1.0;
    pred(s, 0) = s;
  }
  std::ostringstream out;
  write_summary_csv(out, theta, sigma, pred);
  std::istringstream lines(out.str());
  std::string line;
  std::vector<std::string> rows;
  while (std::getline(lines, line)) rows.push_back(line);
  REQUIRE(rows.size() == 5);
  CHECK(rows[0] == "quantity,index,mean,lower,upper");
  CHECK(rows[1].rfind("theta,0,499.5,", 0) == 0);
  CHECK(rows[3] == "sigma,0,1,1,1");
  CHECK(rows[4].rfind("predictive,0,499.5,", 0) == 0);
}

TEST_CASE("metrics writers") {
  MetricReport a;
  a.crps = 1.0;
  a.coverage = 0.9;
  MetricReport b;
  b.crps = 3.0;
  b.coverage = 0.8;
  std::ostringstream csv;
  write_metrics_csv(csv, {a, b});
  CHECK(csv.str() == "replicate,interval_width,coverage,crps,tpr,tnr,quantile_calibration\n0,,0.9,1,,,\n1,,0.8,3,,,\n");

  const std::string first = metrics_summary_json("beta", "sblm", {a, b});
  CHECK(first.find("\"crps\"") != std::string::npos);
  CHECK(first.find("\"tpr\"") == std::string::npos);
  const std::string merged = metrics_summary_json("beta", "blm", {a}, first);
  CHECK(merged.find("\"sblm\"") != std::string::npos);
  CHECK(merged.find("\"blm\"") != std::string::npos);
}
