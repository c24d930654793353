#include <doctest.h>

#include <cmath>
#include <string>

#include "satmetro/run_config.hpp"

using namespace satmetro;

namespace {

const std::filesystem::path kSource = SATMETRO_SOURCE_DIR;

const char *kMinimal = R"({
  "name": "tiny",
  "seed": 9,
  "schemes": [{"scheme": "SWM", "epsilon": 0.1, "extinction_ratio": "inf"}],
  "sweep": {"b_true": 0.01, "n_grid": [1e6, 1e7]}
})";

std::string replace(std::string text, const std::string &from, const std::string &to) {
  const auto pos = text.find(from);
  REQUIRE(pos != std::string::npos);
  return text.replace(pos, from.size(), to);
}

} // namespace

TEST_SUITE("run_config") {

TEST_CASE("log grid") {
  const auto g = log_grid(1e5, 1e11, 24);
  REQUIRE(g.size() == 24);
  CHECK(g.front() == 1e5);
  CHECK(g.back() == 1e11);
  for (std::size_t i = 1; i < g.size(); ++i)
    CHECK(std::log10(g[i] / g[i - 1]) == doctest::Approx(6.0 / 23));
  CHECK_THROWS(log_grid(1e5, 1e4, 3));
  CHECK_THROWS(log_grid(1e5, 1e6, 1));
}

TEST_CASE("shipped configs parse") {
  for (const char *name : {"fig3a.json", "fig3b.json", "fig5.json"}) {
    CAPTURE(name);
    const RunConfig c = load_config(kSource / "configs" / name);
    CHECK_FALSE(c.schemes.empty());
    CHECK(c.sweep.b_true > 0);
    CHECK_FALSE(c.sweep.n_grid.empty());
  }
  const RunConfig a = load_config(kSource / "configs" / "fig3a.json");
  CHECK(a.schemes.size() == 3);
  CHECK(a.sweep.n_grid.size() == 24);
  CHECK(a.sweep.frames == 300);
  CHECK(a.schemes[2].scheme == Scheme::BWM);
  CHECK(a.schemes[2].bias_order == 5);
  const RunConfig f5 = load_config(kSource / "configs" / "fig5.json");
  CHECK(f5.estimation_grid().size() == 9);
  CHECK(f5.estimation.batch_size == 60);
}

TEST_CASE("defaults") {
  const RunConfig c = parse_config(kMinimal);
  CHECK(c.seed == 9);
  CHECK(std::isinf(c.schemes[0].extinction_ratio));
  CHECK(c.sweep.frames == 300);
  CHECK(c.estimation_grid() == c.sweep.n_grid);
  CHECK(c.detector.pixel_count == DetectorModel{}.pixel_count);

  const RunConfig d = parse_config(replace(kMinimal, R"("n_grid": [1e6, 1e7])", R"("frames": 60)"));
  CHECK(d.sweep.n_grid == log_grid(1e5, 1e11, 24));

  const RunConfig n = parse_config(replace(kMinimal, R"("inf")", "null"));
  CHECK(std::isinf(n.schemes[0].extinction_ratio));
}

TEST_CASE("rejected configs") {
  CHECK_THROWS_AS(load_config(kSource / "tests" / "data" / "empty_schemes.json"), ConfigError);
  CHECK_THROWS_AS(load_config(kSource / "no-such-config.json"), ConfigError);
  CHECK_THROWS_AS(parse_config("{not json"), ConfigError);
  CHECK_THROWS_AS(parse_config(replace(kMinimal, R"("seed": 9,)", "")), ConfigError);
  CHECK_THROWS_AS(parse_config(replace(kMinimal, R"("seed": 9,)", R"("seed": -1,)")), ConfigError);
  CHECK_THROWS_AS(parse_config(replace(kMinimal, R"("name")", R"("nmae")")), ConfigError);
  CHECK_THROWS_AS(parse_config(replace(kMinimal, "[1e6, 1e7]", "[1e7, 1e6]")), ConfigError);
  CHECK_THROWS_AS(parse_config(replace(kMinimal, "[1e6, 1e7]", "[0, 1e6]")), ConfigError);
  CHECK_THROWS_AS(parse_config(replace(kMinimal, R"("b_true": 0.01)", R"("b_true": 0)")), ConfigError);
  CHECK_THROWS_AS(parse_config(replace(kMinimal, R"("SWM")", R"("XYZ")")), ConfigError);
  CHECK_THROWS_AS(parse_config(replace(kMinimal, "0.1", "-0.1")), ConfigError);
  CHECK_THROWS_AS(parse_config(replace(kMinimal, R"("inf")", "0.5")), ConfigError);
}

TEST_CASE("hash and round trip") {
  const RunConfig c = parse_config(kMinimal);
  RunConfig threaded = c;
  threaded.threads = 7;
  CHECK(threaded.hash() == c.hash());
  RunConfig other = c;
  other.detector.quantum_efficiency = 0.5;
  CHECK(other.hash() != c.hash());
  other = c;
  other.seed = 10;
  CHECK(other.hash() != c.hash());

  const RunConfig back = parse_config(c.to_json());
  CHECK(back.hash() == c.hash());
  CHECK(back.to_json() == c.to_json());
  const RunConfig a = load_config(kSource / "configs" / "fig3a.json");
  CHECK(parse_config(a.to_json()).hash() == a.hash());
}

TEST_CASE("scheme labels") {
  CHECK(scheme_label(SchemeConfig{Scheme::CM}) == "CM");
  CHECK(scheme_label(SchemeConfig{Scheme::BWM, 0.2, 5, 90000}) == "BWM(eps=0.2,m=5,ER=90000)");
}

} // TEST_SUITE
