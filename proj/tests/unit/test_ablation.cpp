// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <memory>
#include <sstream>

#include "kid/data/synthetic.hpp"
#include "kid/eval/ablation.hpp"

using namespace kid;
using eval::Cell;
using knowledge::Format;

namespace {

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

eval::RunResult fake_run(const Cell& c, std::uint64_t seed, double value) {
  eval::RunResult r;
  r.cell = c;
  r.seed = seed;
  r.value = value;
  r.test.accuracy = value;
  return r;
}

}  // namespace

TEST_CASE("axis parsing") {
  eval::Axes a;
  eval::apply_axis(a, "n=0..5");
  CHECK(a.n == std::vector<std::size_t>{0, 1, 2, 3, 4, 5});
  eval::apply_axis(a, "n=0,2,5");
  CHECK(a.n == std::vector<std::size_t>{0, 2, 5});
  eval::apply_axis(a, "format=inline,appended");
  CHECK(a.format == std::vector<Format>{Format::inlined, Format::appended});
  eval::apply_axis(a, "mode=gen_only,dual,dual+knowledge");
  CHECK(a.mode.size() == 3);
  CHECK(eval::cartesian(a).size() == 3 * 2 * 3);
  CHECK_THROWS_AS(eval::apply_axis(a, "n=3..1"), eval::AblationError);
  CHECK_THROWS_AS(eval::apply_axis(a, "n=x"), eval::AblationError);
  CHECK_THROWS_AS(eval::apply_axis(a, "format=footnote"), eval::AblationError);
  CHECK_THROWS_AS(eval::apply_axis(a, "mode=triple"), eval::AblationError);
  CHECK_THROWS_AS(eval::apply_axis(a, "depth=2"), eval::AblationError);
  CHECK_THROWS_AS(eval::apply_axis(a, "n"), eval::AblationError);
}

TEST_CASE("grid validation") {
  eval::GridSpec g;
  CHECK_THROWS_AS(g.validate(), eval::AblationError);
  g.cells = {{1, Format::inlined, "dual"}};
  g.validate();
  g.cells.push_back({1, Format::inlined, "dual"});
  CHECK_THROWS_AS(g.validate(), eval::AblationError);
  g.cells = {{0, Format::inlined, "dual+knowledge"}};
  CHECK_THROWS_AS(g.validate(), eval::AblationError);
  g.cells = {{1, Format::inlined, "dual"}};
  g.seeds = {1, 1};
  CHECK_THROWS_AS(g.validate(), eval::AblationError);
  g.seeds = {0};
  g.metric = "recall";
  CHECK_THROWS_AS(g.validate(), eval::AblationError);
  CHECK(Cell{2, Format::appended, "gen_only"}.key() == "n=2,format=appended,mode=gen_only");
  CHECK(Cell{2, Format::appended, "dual+knowledge"}.train_mode() == train::TrainMode::dual);
}

TEST_CASE("single-cell grid gives one row per seed plus a summary row") {
  eval::GridSpec g;
  g.cells = {{1, Format::inlined, "dual"}};
  g.seeds = {0, 1, 2};
  const auto grid = eval::summarize(g, {fake_run(g.cells[0], 2, 0.9), fake_run(g.cells[0], 0, 0.7),
                                        fake_run(g.cells[0], 1, 0.8)});
  const auto rows = lines(grid.to_csv());
  REQUIRE(rows.size() == 1 + 3 + 1);
  CHECK(rows[0] == "n,format,mode,seed,metric,value");
  CHECK(rows[1] == "1,inline,dual,0,accuracy,0.69999999999999996");
  CHECK(rows[3].rfind("1,inline,dual,2,accuracy,", 0) == 0);
  CHECK(rows[4].rfind("1,inline,dual,mean,accuracy,", 0) == 0);
  const auto& s = grid.at(g.cells[0]);
  CHECK(s.values == std::vector<double>{0.7, 0.8, 0.9});
  CHECK(s.mean == doctest::Approx(0.8));
  CHECK(s.sd == doctest::Approx(0.1));
  CHECK(s.vs_reference.empty());
}

TEST_CASE("comparisons pair each cell with its reference cells") {
  eval::GridSpec g;
  const Cell n0{0, Format::inlined, "dual"}, n1{1, Format::inlined, "dual"};
  const Cell gen1{1, Format::inlined, "gen_only"}, app1{1, Format::appended, "dual"};
  g.cells = {n0, n1, gen1, app1};
  g.seeds = {0, 1, 2};
  std::vector<eval::RunResult> runs;
  const double base[3] = {0.5, 0.52, 0.48};
  for (std::uint64_t s = 0; s < 3; ++s) {
    runs.push_back(fake_run(n0, s, base[s]));
    runs.push_back(fake_run(n1, s, 0.9 + 0.01 * static_cast<double>(s)));
    runs.push_back(fake_run(gen1, s, 0.8 + 0.02 * static_cast<double>(s)));
    runs.push_back(fake_run(app1, s, 0.85));
  }
  const auto grid = eval::summarize(g, runs);
  const auto& s = grid.at(n1);
  REQUIRE(s.vs_reference.size() == 3);
  CHECK(s.vs_reference[0].reference == n0.key());
  CHECK(s.vs_reference[1].reference == gen1.key());
  CHECK(s.vs_reference[2].reference == app1.key());
  const auto direct = eval::paired_t_test(s.values, grid.at(n0).values);
  CHECK(s.vs_reference[0].test.t == direct.t);
  CHECK(s.vs_reference[0].test.p == direct.p);
  CHECK(grid.at(n0).vs_reference.empty());  // no gen_only or appended cell at n=0
  const auto j = grid.to_json();
  CHECK(j["cells"][1]["p_vs_reference"].contains(n0.key()));
  CHECK(j["cells"][1]["runs"].size() == 3);
  CHECK(!j["cells"][1]["runs"][0].contains("wall_seconds"));
  const auto plot = lines(grid.plot_csv());
  REQUIRE(plot.size() == 5);
  CHECK(plot[0] == "format,mode,n,mean,sd");
  CHECK(plot[1].rfind("inline,dual,0,", 0) == 0);
  CHECK(plot[2].rfind("inline,dual,1,", 0) == 0);
  CHECK(plot[3].rfind("inline,gen_only,1,", 0) == 0);
  CHECK(plot[4].rfind("appended,dual,1,", 0) == 0);
  CHECK_THROWS_AS(eval::summarize(g, {runs.begin(), runs.end() - 1}), eval::AblationError);
}

TEST_CASE("run_ablation trains every cell and seed") {
  data::SyntheticConfig sc;
  sc.n_train = 24;
  sc.n_val = 8;
  sc.n_test = 12;
  const auto d = data::generate_synthetic(sc);
  auto kb = std::make_shared<const data::KnowledgeBase>(d.kb);
  provider::OracleProvider oracle(kb);
  eval::AblationData data{d.train, d.val, d.test, data::synthetic_task()};
  eval::GridSpec g;
  g.cells = {{0, Format::inlined, "dual"}, {2, Format::appended, "cls_only"}};
  g.seeds = {3, 4};
  g.base.max_epochs = 1;
  g.base.max_len = 160;
  std::vector<std::string> seen;
  const auto grid = eval::run_ablation(g, data, oracle, [&](const eval::RunResult& r) {
    seen.push_back(r.cell.key() + "#" + std::to_string(r.seed));
  });
  CHECK(seen == std::vector<std::string>{"n=0,format=inline,mode=dual#3", "n=0,format=inline,mode=dual#4",
                                         "n=2,format=appended,mode=cls_only#3",
                                         "n=2,format=appended,mode=cls_only#4"});
  CHECK(grid.runs.size() == 4);
  for (const auto& r : grid.runs) {
    CHECK(r.test.n_samples == 12);
    CHECK(r.value == r.test.accuracy);
    CHECK(r.epochs_run == 1);
  }
  CHECK(lines(grid.to_csv()).size() == 1 + 2 * 3);

  // Same spec, same numbers.
  const auto again = eval::run_ablation(g, data, oracle);
  CHECK(again.to_json().dump() == grid.to_json().dump());
}

TEST_CASE("run_ablation failures name the cell") {
  data::SyntheticConfig sc;
  sc.n_train = 8;
  sc.n_val = 4;
  sc.n_test = 4;
  const auto d = data::generate_synthetic(sc);
  auto kb = std::make_shared<const data::KnowledgeBase>(d.kb);
  provider::OracleProvider oracle(kb);
  eval::AblationData data{d.train, d.val, d.test, data::synthetic_task()};
  eval::GridSpec g;
  g.cells = {{1, Format::inlined, "dual"}};
  g.seeds = {7};
  g.base.max_epochs = 1;
  g.base.max_len = 24;  // too short for the fixed prefix and the target
  try {
    eval::run_ablation(g, data, oracle);
    FAIL("expected AblationError");
  } catch (const eval::AblationError& e) {
    CHECK(std::string(e.what()).find("n=1,format=inline,mode=dual seed 7") != std::string::npos);
  }

  // A provider that knows none of the samples trips the failure threshold.
  provider::OracleProvider empty(std::make_shared<const data::KnowledgeBase>());
  g.base.max_len = 160;
  try {
    eval::run_ablation(g, data, empty);
    FAIL("expected AblationProviderError");
  } catch (const eval::AblationProviderError& e) {
    CHECK(std::string(e.what()).find("augmenting at n=1") != std::string::npos);
  }
}
