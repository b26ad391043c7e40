#include <cmath>
#include <filesystem>
#include <limits>

#include "asmflow/commands.hpp"
#include "asmflow/error.hpp"
#include "doctest.h"

using namespace asmflow;
using namespace asmflow::app;
namespace fs = std::filesystem;

TEST_CASE("run config round-trips through JSON and rejects unknown keys") {
  RunConfig c;
  c.model.channels = 32;
  c.train.schedule = "cosine";
  c.train.warmup_steps = 7;
  c.sampler.order = 1;
  c.data.n_pieces = 3;
  c.seed = 42;
  const RunConfig back = run_from_json(to_json(c));
  CHECK(back.model == c.model);
  CHECK(back.data == c.data);
  CHECK(back.train.schedule == "cosine");
  CHECK(back.train.warmup_steps == 7);
  CHECK(back.sampler.order == 1);
  CHECK(back.seed == 42);

  json j = to_json(c);
  j["train"]["learning_rate"] = 1.0;
  CHECK_THROWS_AS(run_from_json(j), Error);
  json k = to_json(c);
  k["model"]["channels"] = "wide";
  CHECK_THROWS_AS(run_from_json(k), Error);
}

TEST_CASE("validation ties piece sizes to the model depth") {
  RunConfig c;
  CHECK_NOTHROW(c.validate());
  c.data.synthetic.min_piece_points = equinet::min_piece_points(c.model) - 1;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("summaries and labels") {
  CHECK(method_label({4, 10}) == "RK4, 10 steps");
  CHECK(method_label({1, 50}) == "RK1, 50 steps");

  const std::vector<ShapeMetric> m{{"a", 1.0, 0.1, 1.0}, {"b", 3.0, 0.3, 3.0}, {"c", 2.0, 0.2, 2.0}};
  const auto row = summarize("RK4, 10 steps", m);
  CHECK(row.shapes == 3);
  CHECK(row.mean_r == doctest::Approx(2.0));
  CHECK(row.median_r == 2.0);
  CHECK(row.median_t == doctest::Approx(0.2));
  CHECK(row.std_r == doctest::Approx(std::sqrt(2.0 / 3.0)));
  CHECK(row.seconds == doctest::Approx(2.0));
  CHECK(format_table({row}).find("| RK4, 10 steps | 3 |") != std::string::npos);

  // A diverged shape ranks worst instead of corrupting the order.
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<ShapeMetric> d{{"a", nan, nan, 0}, {"b", 5.0, 0.5, 0}, {"c", 1.0, 0.1, 0}, {"d", nan, nan, 0},
                             {"e", 3.0, 0.3, 0}};
  const auto drow = summarize("x", d);
  CHECK(drow.median_r == 5.0);
  CHECK(std::isnan(drow.mean_r));
}

TEST_CASE("predictions round-trip through pose files") {
  const fs::path dir = fs::temp_directory_path() / "asmflow_test_app_preds";
  fs::remove_all(dir);
  lie::Rng rng(5);
  const auto g = lie::sample_noise(3, {}, rng);
  write_predictions(dir, {{"shape_7", g, 0.0}});
  data::AssemblyRecord rec;
  rec.shape_id = "shape_7";
  const auto back = read_predictions(dir, {rec});
  REQUIRE(back.size() == 1);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK((back[0].poses[i].r.matrix() - g[i].r.matrix()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((back[0].poses[i].t - g[i].t).cwiseAbs().maxCoeff() < 1e-12);
  }
  rec.shape_id = "missing";
  CHECK_THROWS_AS(read_predictions(dir, {rec}), Error);
  fs::remove_all(dir);
}

TEST_CASE("loss curve is a standalone svg") {
  const auto svg = loss_curve_svg({{1, 10.0}, {2, 1.0}, {3, 0.5}}, "a < b");
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find("<polyline") != std::string::npos);
  CHECK(svg.find("a &lt; b") != std::string::npos);
  CHECK(loss_curve_svg({}, "empty").find("no data") != std::string::npos);
}
