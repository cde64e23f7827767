// SPDX-License-Identifier: Apache-2.0
#include "kid/checks/checks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <set>

#include "kid/eval/metrics.hpp"
#include "kid/infer/templates.hpp"
#include "kid/knowledge/corpus.hpp"
#include "kid/knowledge/format.hpp"
#include "kid/model/grad_audit.hpp"
#include "kid/num/op_suite.hpp"

namespace kid::checks {

namespace kf = knowledge;

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

CheckResult result(std::string name, bool ok, std::string detail) {
  return {std::move(name), ok, std::move(detail)};
}

}  // namespace

bool all_passed(const std::vector<CheckResult>& results) {
  return std::all_of(results.begin(), results.end(), [](const CheckResult& r) { return r.passed; });
}

std::vector<CheckResult> gradient_checks(std::uint64_t seed) {
  std::vector<CheckResult> out;
  for (const auto& c : num::check_all_ops(seed)) {
    out.push_back(result("grad:" + c.op, c.report.pass, "max rel err " + num(c.report.max_rel_err)));
  }
  struct Case {
    model::HeadMode mode;
    bool training;
    bool multi;
    const char* name;
  };
  const Case cases[] = {{model::HeadMode::gen_only, false, false, "loss/gen/eval"},
                        {model::HeadMode::cls_only, false, false, "loss/cls/eval"},
                        {model::HeadMode::dual, false, false, "loss/dual/eval"},
                        {model::HeadMode::dual, true, false, "loss/dual/train"},
                        {model::HeadMode::dual, true, true, "loss/dual/train/multi-label"}};
  for (const auto& c : cases) {
    const auto cfg = model::toy_config(3, c.multi);
    model::DualHeadModel m(cfg, seed);
    const auto batch = model::toy_batch(cfg, seed + 1);
    const auto checks = model::check_loss_gradients(m, batch, c.mode, c.training);
    double worst = 0.0;
    std::string worst_param;
    bool ok = true;
    for (const auto& p : checks) {
      ok = ok && p.report.pass;
      if (p.report.max_rel_err >= worst) {
        worst = p.report.max_rel_err;
        worst_param = p.param;
      }
    }
    out.push_back(result(std::string("grad:") + c.name, ok,
                         std::to_string(checks.size()) + " tensors, max rel err " + num(worst) + " at " +
                             worst_param));
  }
  return out;
}

std::vector<CheckResult> parser_checks(std::uint64_t seed) {
  std::vector<CheckResult> out;
  std::mt19937_64 rng(seed);
  std::vector<kf::AugmentedText> texts;
  for (int i = 0; i < 100; ++i) texts.push_back(kf::corpus::random_augmented_text(rng));

  std::size_t bad_round = 0, bad_convert = 0, bad_trunc = 0;
  for (const auto& t : texts) {
    for (kf::Format f : {kf::Format::inlined, kf::Format::appended}) {
      const std::string s = kf::serialize(t, f);
      const auto parsed = kf::parse(s);
      if (kf::serialize(parsed, parsed.source_format) != s || kf::item_multiset(parsed) != kf::item_multiset(t)) {
        ++bad_round;
      }
      const auto other = kf::convert(parsed, f == kf::Format::inlined ? kf::Format::appended : kf::Format::inlined);
      if (kf::item_multiset(kf::parse(kf::serialize(other))) != kf::item_multiset(t)) ++bad_convert;
    }
    for (std::size_t n = 0; n <= 5; ++n) {
      const auto cut = kf::truncate_to_n(t, n);
      bool ok = cut.item_count() == std::min(n, t.item_count());
      const auto items = cut.items();
      for (std::size_t j = 0; j < items.size(); ++j) ok = ok && items[j].order_index == j;
      ok = ok && kf::serialize(kf::truncate_to_n(cut, n)) == kf::serialize(cut);
      if (!ok) ++bad_trunc;
    }
  }
  out.push_back(result("parser:round-trip", bad_round == 0, std::to_string(bad_round) + " of 200 differ"));
  out.push_back(result("parser:conversion", bad_convert == 0, std::to_string(bad_convert) + " of 200 differ"));
  out.push_back(result("parser:truncate", bad_trunc == 0, std::to_string(bad_trunc) + " of 600 off-contract"));

  const std::string one =
      "The image shows ⟨Pepe the Frog⟩ [an internet meme symbol often used by far-right groups], looking at...";
  const std::string two = "...mocking ⟨Ghotis⟩[a colloquial term for people from West Bengal] ...with "
                          "⟨Jio⟩[a telecom provider]...";
  bool ok = true;
  std::string detail = "ok";
  try {
    const auto a = kf::parse(one);
    const auto b = kf::parse(two);
    const auto ai = a.items();
    const auto bi = b.items();
    ok = ai.size() == 1 && ai[0].entity == "Pepe the Frog" &&
         ai[0].knowledge == "an internet meme symbol often used by far-right groups" && kf::serialize(a) == one &&
         bi.size() == 2 && bi[0].entity == "Ghotis" && bi[1].entity == "Jio" && bi[0].order_index == 0 &&
         bi[1].order_index == 1 && kf::item_multiset(kf::parse(kf::serialize(b))) == kf::item_multiset(b);
    if (!ok) detail = "reference strings parse to the wrong items";
  } catch (const std::exception& e) {
    ok = false;
    detail = e.what();
  }
  out.push_back(result("parser:reference-strings", ok, detail));
  return out;
}

std::vector<CheckResult> metric_checks(std::uint64_t seed) {
  std::vector<CheckResult> out;
  std::mt19937_64 rng(seed);

  // AUC against all (positive, negative) pairs; scores on a coarse grid so
  // ties are common.
  std::size_t auc_bad = 0, mono_bad = 0;
  for (int inst = 0; inst < 200; ++inst) {
    std::uniform_int_distribution<int> size(2, 100), grid(0, 8);
    const int n = size(rng);
    std::vector<double> s(static_cast<std::size_t>(n));
    std::vector<int> y(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      s[static_cast<std::size_t>(i)] = grid(rng) / 8.0;
      y[static_cast<std::size_t>(i)] = static_cast<int>(rng() % 2);
    }
    y[0] = 1;
    y[1] = 0;
    long long twice = 0, pairs = 0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (y[static_cast<std::size_t>(i)] != 1 || y[static_cast<std::size_t>(j)] != 0) continue;
        const double a = s[static_cast<std::size_t>(i)], b = s[static_cast<std::size_t>(j)];
        twice += a > b ? 2 : a == b ? 1 : 0;
        ++pairs;
      }
    const double oracle = static_cast<double>(twice) / static_cast<double>(2 * pairs);
    const double got = eval::auc(s, y);
    if (got != oracle) ++auc_bad;
    std::vector<double> warped(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) warped[i] = std::exp(3.0 * s[i]) - 7.0;
    if (eval::auc(warped, y) != got) ++mono_bad;
  }
  out.push_back(result("metrics:auc-pairwise", auc_bad == 0, std::to_string(auc_bad) + " of 200 differ"));
  out.push_back(result("metrics:auc-monotone", mono_bad == 0, std::to_string(mono_bad) + " of 200 differ"));

  // Every k x k confusion matrix with entries <= 3.
  auto confusion = [&](std::size_t k) {
    std::size_t bad = 0, total = 0;
    const std::size_t cells = k * k;
    std::size_t combos = 1;
    for (std::size_t i = 0; i < cells; ++i) combos *= 4;
    std::vector<std::size_t> m(cells);
    for (std::size_t code = 0; code < combos; ++code) {
      std::size_t c = code, count = 0;
      for (std::size_t i = 0; i < cells; ++i) {
        m[i] = c % 4;
        c /= 4;
        count += m[i];
      }
      if (count == 0) continue;
      std::vector<std::size_t> pred, gold;
      for (std::size_t g = 0; g < k; ++g)
        for (std::size_t p = 0; p < k; ++p)
          for (std::size_t r = 0; r < m[g * k + p]; ++r) {
            gold.push_back(g);
            pred.push_back(p);
          }
      double f1 = 0.0, diag = 0.0;
      for (std::size_t cl = 0; cl < k; ++cl) {
        double row = 0.0, col = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
          row += static_cast<double>(m[cl * k + j]);
          col += static_cast<double>(m[j * k + cl]);
        }
        const double tp = static_cast<double>(m[cl * k + cl]);
        diag += tp;
        f1 += row + col == 0.0 ? 0.0 : 2.0 * tp / (row + col);
      }
      f1 /= static_cast<double>(k);
      const double acc = diag / static_cast<double>(count);
      ++total;
      if (std::abs(eval::macro_f1(pred, gold, k) - f1) > 1e-12 || std::abs(eval::accuracy(pred, gold) - acc) > 1e-12) {
        ++bad;
      }
    }
    return std::pair{bad, total};
  };
  for (std::size_t k : {2, 3}) {
    const auto [bad, total] = confusion(k);
    out.push_back(result("metrics:confusion-" + std::to_string(k) + "x" + std::to_string(k), bad == 0,
                         std::to_string(bad) + " of " + std::to_string(total) + " differ"));
  }

  // Two-sided tail by Simpson integration of the t density.
  auto tail = [](double t, double df) {
    const double c = std::tgamma((df + 1) / 2) / (std::sqrt(df * M_PI) * std::tgamma(df / 2));
    auto f = [&](double x) { return c * std::pow(1 + x * x / df, -(df + 1) / 2); };
    const int n = 20000;
    const double h = std::abs(t) / n;
    double s = f(0) + f(std::abs(t));
    for (int i = 1; i < n; ++i) s += (i % 2 ? 4 : 2) * f(i * h);
    return 1.0 - 2.0 * s * h / 3.0;
  };
  const auto tt = eval::paired_t_test({1, 2, 3}, {0, 0, 0});
  const double oracle_p = tail(tt.t, 2.0);
  const bool t_ok = std::abs(tt.t - 2.0 * std::sqrt(3.0)) < 1e-12 && tt.df == 2 && std::abs(tt.p - oracle_p) < 1e-3;
  const auto swapped = eval::paired_t_test({0, 0, 0}, {1, 2, 3});
  out.push_back(result("metrics:t-test", t_ok && swapped.p == tt.p && swapped.t == -tt.t,
                       "t " + num(tt.t) + ", p " + num(tt.p) + " (oracle " + num(oracle_p) + ")"));
  return out;
}

std::vector<CheckResult> template_checks() {
  using data::TaskKind;
  using data::TemplateId;
  auto task = [](std::string name, TaskKind kind, std::vector<std::string> labels, TemplateId tid,
                 std::string arg = "", bool empty = false) {
    data::TaskSpec t;
    t.name = std::move(name);
    t.kind = kind;
    t.labels = std::move(labels);
    t.template_id = tid;
    t.template_arg = std::move(arg);
    t.allow_empty = empty;
    t.validate();
    return t;
  };
  std::vector<std::string> many;
  for (int i = 0; i < 14; ++i) many.push_back("class" + std::to_string(i));
  const std::vector<data::TaskSpec> tasks = {
      task("this_meme_is", TaskKind::binary, {"non-harmful", "harmful"}, TemplateId::this_meme_is),
      task("yes_no", TaskKind::binary, {"no", "yes"}, TemplateId::yes_no, "misogynous"),
      task("target", TaskKind::single_label, {"individual", "organization", "community", "society"},
           TemplateId::target),
      task("category", TaskKind::single_label, {"sexual", "political", "religious", "racial", "other"},
           TemplateId::category),
      task("categories", TaskKind::multi_label, {"shaming", "stereotype", "objectification", "violence", "other"},
           TemplateId::categories, "", true),
      task("categories-large", TaskKind::multi_label, many, TemplateId::categories)};

  std::vector<CheckResult> out;
  for (const auto& t : tasks) {
    std::vector<infer::LabelSet> space;
    if (!t.is_multi_label()) {
      for (std::size_t i = 0; i < t.n_classes(); ++i) space.push_back({i});
    } else {
      if (t.allow_empty) space.push_back({});
      // Subsets of size 1..4 in lexicographic order.
      std::vector<infer::LabelSet> frontier{{}};
      for (std::size_t size = 1; size <= infer::kMaxSubsetSize; ++size) {
        std::vector<infer::LabelSet> next;
        for (const auto& s : frontier)
          for (std::size_t i = s.empty() ? 0 : s.back() + 1; i < t.n_classes(); ++i) {
            auto e = s;
            e.push_back(i);
            next.push_back(e);
          }
        space.insert(space.end(), next.begin(), next.end());
        frontier = std::move(next);
      }
    }
    std::size_t bad = 0;
    std::set<std::string> texts;
    for (const auto& labels : space) {
      try {
        const std::string text = infer::render(t, labels);
        texts.insert(text);
        if (infer::decode(t, text) != labels || infer::render(t, infer::decode(t, text)) != text) ++bad;
      } catch (const std::exception&) {
        ++bad;
      }
    }
    const bool distinct = texts.size() == space.size();
    out.push_back(result("templates:" + t.name, bad == 0 && distinct,
                         std::to_string(space.size()) + " label sets, " + std::to_string(bad) + " broken" +
                             (distinct ? "" : ", renderings collide")));
  }
  return out;
}

}  // namespace kid::checks
