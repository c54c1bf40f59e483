#include "rfanova/fit_io.hpp"
#include "rfanova/prediction.hpp"

#include "fixtures.hpp"

#include <doctest.h>

#include <sstream>

using namespace rfanova;

TEST_CASE("fit files round trip to identical predictions") {
  std::mt19937_64 rng(80);
  const auto data = fixture::random_dataset(rng, 2, 2, 6);
  for (Method method : {Method::kTP, Method::kGP, Method::kTPNoRandomEffect}) {
    FitConfig cfg;
    cfg.method = method;
    cfg.policy = ExecPolicy::kSerial;
    cfg.outer_max = 5;
    const ModelFit m = fit(data, cfg);
    std::stringstream ss;
    write_fit(m, ss);
    const ModelFit back = read_fit(ss);
    CHECK(back.method == m.method);
    CHECK(back.state.B == m.state.B);
    CHECK(back.state.etp.nu == m.state.etp.nu);
    CHECK(back.state.etp.sigma2 == m.state.etp.sigma2);
    CHECK(back.lambda == m.lambda);
    CHECK(back.objective_trace == m.objective_trace);
    CHECK(back.converged == m.converged);
    for (std::size_t i = 0; i < data.num_curves(); ++i) {
      const std::string& id = data.curves()[i].id;
      for (double t : {0.0, 0.41, 1.0}) {
        const PredictionResult a = predict(m, id, t), b = predict(back, id, t);
        CHECK(b.mean == doctest::Approx(a.mean).epsilon(1e-10));
        CHECK(b.variance == doctest::Approx(a.variance).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("unknown format or version is rejected") {
  std::stringstream wrong_version(R"({"format":"rfanova-fit","version":99})");
  CHECK_THROWS_AS(read_fit(wrong_version), VersionError);
  std::stringstream wrong_format(R"({"format":"other","version":1})");
  CHECK_THROWS_AS(read_fit(wrong_format), VersionError);
  std::stringstream broken("{not json");
  CHECK_THROWS_AS(read_fit(broken), SchemaError);
  CHECK_THROWS(load_fit("/nonexistent/fit.json"));
}
