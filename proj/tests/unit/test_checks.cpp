// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "kid/checks/checks.hpp"
#include "kid/num/tensor.hpp"

using namespace kid;

namespace {

const checks::CheckResult* find(const std::vector<checks::CheckResult>& rs, const std::string& name) {
  for (const auto& r : rs)
    if (r.name == name) return &r;
  return nullptr;
}

}  // namespace

TEST_CASE("parser, metric and template checks pass") {
  for (const auto& group : {checks::parser_checks(1), checks::metric_checks(1), checks::template_checks()}) {
    for (const auto& r : group) CHECK_MESSAGE(r.passed, r.name << ": " << r.detail);
  }
  const auto t = checks::template_checks();
  CHECK(t.size() == 6);
  // 14 + 91 + 364 + 1001 subsets.
  CHECK(find(t, "templates:categories-large")->detail.rfind("1470 label sets", 0) == 0);
}

TEST_CASE("gradient checks pass, and a corrupted op is named") {
  const auto clean = checks::gradient_checks(3);
  for (const auto& r : clean) CHECK_MESSAGE(r.passed, r.name << ": " << r.detail);
  REQUIRE(find(clean, "grad:relu"));

  num::testing::inject_backward_fault(num::OpKind::relu);
  const auto faulty = checks::gradient_checks(3);
  num::testing::clear_backward_fault();
  CHECK(!find(faulty, "grad:relu")->passed);
  CHECK(find(faulty, "grad:sigmoid")->passed);
  CHECK(!checks::all_passed(faulty));
}
