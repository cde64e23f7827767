// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <memory>
#include <thread>

#include "kid/data/synthetic.hpp"
#include "kid/infer/infer.hpp"
#include "kid/knowledge/format.hpp"

using namespace kid;
using data::TaskKind;
using data::TemplateId;
using infer::LabelSet;

namespace {

data::TaskSpec make_task(TaskKind kind, std::vector<std::string> labels, TemplateId tid, bool empty = false) {
  data::TaskSpec t;
  t.kind = kind;
  t.labels = std::move(labels);
  t.template_id = tid;
  t.allow_empty = empty;
  if (tid == TemplateId::yes_no) t.template_arg = "misogynous";
  t.validate();
  return t;
}

model::ModelConfig small_config(const data::TaskSpec& task) {
  model::ModelConfig c;
  c.d_model = 16;
  c.n_layers = 1;
  c.n_heads = 2;
  c.d_ff = 32;
  c.n_classes = task.n_classes();
  c.multi_label = task.is_multi_label();
  c.init_std = 0.1;
  return c;
}

struct Fixture {
  data::TaskSpec task = data::synthetic_task();
  data::SyntheticData d;
  std::vector<data::MemeSample> samples;  // aug_text filled with two items
  std::shared_ptr<const data::KnowledgeBase> kb;

  Fixture() {
    data::SyntheticConfig sc;
    sc.n_train = 6;
    sc.n_val = 0;
    sc.n_test = 0;
    d = data::generate_synthetic(sc);
    kb = std::make_shared<const data::KnowledgeBase>(d.kb);
    provider::OracleProvider oracle(kb);
    samples = provider::build_augmented_dataset(d.train, oracle, 2).samples;
  }
};

class CountingProvider : public provider::Provider {
 public:
  explicit CountingProvider(bool fail) : fail_(fail) {}
  provider::ProviderResponse augment(const provider::ProviderRequest&) override {
    ++calls;
    if (fail_) throw provider::TransportError("connection refused");
    return {knowledge::parse("A sign for ⟨Jio⟩[a telecom provider] on a wall."), "counting", false};
  }
  std::string name() const override { return "counting"; }
  int calls = 0;

 private:
  bool fail_;
};

infer::Prediction agreeing(bool agree) {
  infer::Prediction p;
  p.decided = {1};
  p.semantic = agree ? LabelSet{1} : LabelSet{0};
  return p;
}

}  // namespace

TEST_CASE("decide is argmax for single-label and thresholded for multi-label") {
  const auto target = make_task(TaskKind::single_label, {"a", "b", "c"}, TemplateId::target);
  CHECK(infer::decide(target, {0.2, 0.7, 0.1}, 0.5) == LabelSet{1});
  CHECK(infer::decide(target, {0.4, 0.2, 0.4}, 0.5) == LabelSet{0});  // first index on ties
  const auto multi = make_task(TaskKind::multi_label, {"a", "b", "c", "d"}, TemplateId::categories, true);
  CHECK(infer::decide(multi, {0.5, 0.49, 0.9, 0.0}, 0.5) == LabelSet{0, 2});
  CHECK(infer::decide(multi, {0.1, 0.1, 0.1, 0.1}, 0.5).empty());
  CHECK_THROWS_AS(infer::decide(target, {0.5, 0.5}, 0.5), infer::InferError);
}

TEST_CASE("templates decode the fixed phrasings") {
  const auto harm = make_task(TaskKind::binary, {"non-harmful", "harmful"}, TemplateId::this_meme_is);
  for (std::size_t i = 0; i < 2; ++i) CHECK(infer::decode(harm, infer::render(harm, {i})) == LabelSet{i});
  CHECK(infer::decode(harm, "This meme is harmful") == LabelSet{1});
  CHECK(infer::decode(harm, "This meme is non-harmful") == LabelSet{0});

  const auto target =
      make_task(TaskKind::single_label, {"Individual", "Organization", "Community", "Society"}, TemplateId::target);
  CHECK(infer::decode(target, "The target of this hateful meme is Organization") == LabelSet{1});

  const auto cats = make_task(TaskKind::multi_label, {"Shaming", "Stereotype", "Objectification", "Violence"},
                              TemplateId::categories);
  CHECK(infer::decode(cats, "Categories: Shaming, Violence") == LabelSet{0, 3});
  CHECK(infer::render(cats, {3, 0}) == "Categories: Shaming, Violence");
  CHECK_THROWS_AS(infer::render(cats, {}), infer::TemplateError);
  CHECK_THROWS_AS(infer::decode(cats, "Categories: Shaming, Shaming"), infer::TemplateError);
  CHECK_THROWS_AS(infer::decode(target, "The target of this hateful meme is nobody"), infer::TemplateError);

  const auto yn = make_task(TaskKind::binary, {"no", "yes"}, TemplateId::yes_no);
  CHECK(infer::render(yn, {1}) == "Yes, this meme is misogynous");
  CHECK(infer::decode(yn, "No, this meme is not misogynous") == LabelSet{0});
}

TEST_CASE("candidate sets: subsets for small label spaces, singletons beyond twelve") {
  const auto small = make_task(TaskKind::multi_label, {"a", "b", "c", "d", "e"}, TemplateId::categories);
  CHECK(infer::candidates(small).size() == 5 + 10 + 10 + 5);
  CHECK(!infer::uses_containment(small));
  std::vector<std::string> many;
  for (int i = 0; i < 13; ++i) many.push_back("c" + std::to_string(i));
  const auto large = make_task(TaskKind::multi_label, many, TemplateId::categories, true);
  CHECK(infer::uses_containment(large));
  const auto cands = infer::candidates(large);
  REQUIRE(cands.size() == 14);
  CHECK(cands[0].labels.empty());
}

TEST_CASE("choose_semantic picks the best rendering") {
  const auto target = make_task(TaskKind::single_label, {"a", "b", "c"}, TemplateId::target);
  const auto cands = infer::candidates(target);
  const auto s = infer::choose_semantic(target, cands, {-3.0, -1.0, -2.0}, std::nullopt);
  CHECK(s.labels == LabelSet{1});
  CHECK(s.text == "The target of this hateful meme is b");

  const auto small = make_task(TaskKind::multi_label, {"a", "b", "c"}, TemplateId::categories);
  const auto sc = infer::candidates(small);
  std::vector<double> scores(sc.size(), -5.0);
  for (std::size_t i = 0; i < sc.size(); ++i)
    if (sc[i].labels == LabelSet{0, 2}) scores[i] = -1.0;
  CHECK(infer::choose_semantic(small, sc, scores, std::nullopt).labels == LabelSet{0, 2});
}

TEST_CASE("containment keeps labels that beat the none rendering") {
  std::vector<std::string> many;
  for (int i = 0; i < 13; ++i) many.push_back("c" + std::to_string(i));
  const auto with_none = make_task(TaskKind::multi_label, many, TemplateId::categories, true);
  const auto cands = infer::candidates(with_none);
  std::vector<double> scores(cands.size(), -10.0);
  scores[0] = -4.0;  // "none"
  scores[3] = -2.0;
  scores[7] = -3.0;
  auto s = infer::choose_semantic(with_none, cands, scores, std::nullopt);
  CHECK(s.labels == LabelSet{cands[3].labels[0], cands[7].labels[0]});
  CHECK(s.none_score == -4.0);
  scores[3] = scores[7] = -10.0;
  s = infer::choose_semantic(with_none, cands, scores, std::nullopt);
  CHECK(s.labels.empty());
  CHECK(s.text == "Categories: none");

  // Without an allowed empty set the none score is a reference only; the
  // best singleton wins when nothing beats it.
  const auto no_none = make_task(TaskKind::multi_label, many, TemplateId::categories, false);
  const auto nc = infer::candidates(no_none);
  REQUIRE(nc.size() == 13);
  std::vector<double> ns(nc.size(), -9.0);
  ns[5] = -8.0;
  CHECK_THROWS_AS(infer::choose_semantic(no_none, nc, ns, std::nullopt), infer::InferError);
  CHECK(infer::choose_semantic(no_none, nc, ns, -1.0).labels == nc[5].labels);
  ns[2] = 0.0;
  CHECK(infer::choose_semantic(no_none, nc, ns, -1.0).labels == nc[2].labels);
}

TEST_CASE("heads_agreement") {
  CHECK(infer::heads_agreement({agreeing(true), agreeing(true), agreeing(true)}) == 1.0);
  CHECK(infer::heads_agreement({agreeing(true), agreeing(false), agreeing(false), agreeing(true)}) == 0.5);
  CHECK_THROWS_AS(infer::heads_agreement({}), infer::InferError);
}

TEST_CASE("decision comes from the classifier whatever the semantic head says") {
  Fixture f;
  model::DualHeadModel m(small_config(f.task), 5);
  infer::PredictOptions opt;
  opt.input.n = 2;
  auto& bias = m.param("cls_head.l2.b");
  bias.mutable_data()[0] = -50.0;
  bias.mutable_data()[1] = 50.0;
  const auto up = infer::predict_all(m, f.samples, f.task, opt);
  bias.mutable_data()[0] = 50.0;
  bias.mutable_data()[1] = -50.0;
  const auto down = infer::predict_all(m, f.samples, f.task, opt);
  for (std::size_t i = 0; i < f.samples.size(); ++i) {
    CHECK(up[i].decided == LabelSet{1});
    CHECK(down[i].decided == LabelSet{0});
    CHECK(up[i].semantic_text == down[i].semantic_text);
    CHECK(up[i].semantic == infer::decode(f.task, up[i].semantic_text));
    CHECK(up[i].heads_agree == (up[i].semantic == up[i].decided));
    CHECK(down[i].heads_agree != up[i].heads_agree);
  }
}

TEST_CASE("predictions are deterministic and independent of batching") {
  Fixture f;
  model::DualHeadModel m(small_config(f.task), 9);
  infer::PredictOptions opt;
  opt.input.n = 1;
  const auto a = infer::predict_all(m, f.samples, f.task, opt);
  opt.batch_size = 1;
  const auto b = infer::predict_all(m, f.samples, f.task, opt);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].to_json(f.task).dump() == b[i].to_json(f.task).dump());
    CHECK(a[i].semantic_probs == b[i].semantic_probs);
    CHECK(a[i].items_used == 1);
    double z = 0.0;
    for (double p : a[i].semantic_probs) z += p;
    CHECK(z == doctest::Approx(1.0));
  }
}

TEST_CASE("concurrent predict calls on one model agree with serial ones") {
  Fixture f;
  const model::DualHeadModel m(small_config(f.task), 2);
  infer::PredictOptions opt;
  opt.input.n = 2;
  std::vector<std::string> serial, parallel(f.samples.size());
  for (const auto& s : f.samples) serial.push_back(infer::predict(m, s, f.task, nullptr, opt).to_json(f.task).dump());
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < f.samples.size(); ++i)
    threads.emplace_back([&, i] { parallel[i] = infer::predict(m, f.samples[i], f.task, nullptr, opt).to_json(f.task).dump(); });
  for (auto& t : threads) t.join();
  CHECK(serial == parallel);
}

TEST_CASE("n = 0 skips the provider and uses no knowledge") {
  Fixture f;
  model::DualHeadModel m(small_config(f.task), 1);
  CountingProvider prov(true);
  infer::PredictOptions opt;
  opt.input.n = 0;
  const auto p = infer::predict(m, f.samples[0], f.task, &prov, opt);
  CHECK(prov.calls == 0);
  CHECK(p.items_used == 0);
  CHECK(p.probs.size() == 2);

  // Same as a sample whose description never carried entities.
  auto plain = f.samples[0];
  const auto stripped = knowledge::truncate_to_n(knowledge::parse(*plain.aug_text), 0);
  CHECK(stripped.item_count() == 0);
  plain.aug_text = knowledge::serialize(stripped);
  const auto q = infer::predict(m, plain, f.task, &prov, opt);
  CHECK(q.probs == p.probs);
}

TEST_CASE("the provider runs first for n >= 1 and its failures name the sample") {
  Fixture f;
  model::DualHeadModel m(small_config(f.task), 1);
  infer::PredictOptions opt;
  opt.input.n = 3;
  CountingProvider ok(false);
  const auto p = infer::predict(m, f.samples[0], f.task, &ok, opt);
  CHECK(ok.calls == 1);
  CHECK(p.items_used == 1);

  CountingProvider bad(true);
  try {
    infer::predict(m, f.samples[0], f.task, &bad, opt);
    FAIL("expected InferError");
  } catch (const infer::InferError& e) {
    const std::string what = e.what();
    CHECK(what.find("'" + f.samples[0].id + "'") != std::string::npos);
    CHECK(what.find("connection refused") != std::string::npos);
  }
}

TEST_CASE("prediction JSON") {
  Fixture f;
  model::DualHeadModel m(small_config(f.task), 4);
  infer::PredictOptions opt;
  opt.input.n = 2;
  const auto p = infer::predict(m, f.samples[0], f.task, nullptr, opt);
  const auto j = p.to_json(f.task);
  std::vector<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.push_back(k);
  CHECK(keys == std::vector<std::string>{"id", "probs", "decided", "semantic_text", "heads_agree", "items_used"});
  CHECK(j["id"] == f.samples[0].id);
  CHECK(j["probs"].size() == 2);
  CHECK(j["probs"][f.task.labels[1]].get<double>() == p.probs[1]);
  CHECK(j["decided"] == f.task.labels[p.decided[0]]);

  const auto multi = make_task(TaskKind::multi_label, {"a", "b", "c"}, TemplateId::categories, true);
  infer::Prediction mp;
  mp.id = "x";
  mp.probs = {0.9, 0.1, 0.6};
  mp.decided = {0, 2};
  CHECK(mp.to_json(multi)["decided"] == nlohmann::json::array({"a", "c"}));
}

TEST_CASE("the baseline head cannot be combined with semantic scoring") {
  Fixture f;
  auto cfg = small_config(f.task);
  cfg.baseline_head = true;
  model::DualHeadModel m(cfg, 1);
  infer::PredictOptions opt;
  opt.classifier = infer::Classifier::baseline_head;
  CHECK_THROWS_AS(infer::predict_all(m, f.samples, f.task, opt), infer::InferError);
  opt.semantic = false;
  const auto preds = infer::predict_all(m, f.samples, f.task, opt);
  CHECK(preds.size() == f.samples.size());
  CHECK(preds[0].semantic_text.empty());
}
