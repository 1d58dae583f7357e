#include "doctest.h"
#include "icaunet/errors.hpp"
#include "icaunet/gradcheck.hpp"

using namespace icaunet;

TEST_CASE("every op and the tiny model pass the finite-difference suite") {
  const auto results = run_gradcheck();
  REQUIRE(results.size() == gradcheck_entry_names().size());
  for (const auto& r : results) CHECK_MESSAGE(r.passed(), r.name << " error " << r.max_rel_error);
  CHECK(results.back().end_to_end);
  CHECK(results.back().tolerance == kEndToEndTolerance);
}

TEST_CASE("a corrupted gradient fails only its entry") {
  for (const std::string name : {"conv3d", "end_to_end"}) {
    GradcheckOptions options;
    options.corrupt = name;
    for (const auto& r : run_gradcheck(options)) CHECK_MESSAGE(r.passed() == (r.name != name), r.name);
  }
  CHECK(parse_gradcheck_scale("small") == GradcheckScale::small);
  CHECK_THROWS_AS(parse_gradcheck_scale("huge"), ConfigError);
}
