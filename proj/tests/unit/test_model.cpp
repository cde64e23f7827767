// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>

#include "kid/data/image.hpp"
#include "kid/data/tokenizer.hpp"
#include "kid/model/checkpoint.hpp"
#include "kid/model/grad_audit.hpp"
#include "kid/model/model.hpp"
#include "kid/util/io.hpp"

using namespace kid::model;
using kid::num::Tensor;

namespace {

Example make_example(std::uint64_t seed, const std::string& text, const std::string& desc,
                     std::optional<std::string> target, std::size_t n_classes, std::size_t cls) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Example ex;
  ex.patches.resize(kid::data::kPatchCount * kid::data::kPatchDim);
  for (auto& p : ex.patches) p = u(rng);
  ex.text = text;
  ex.description = desc;
  ex.target = std::move(target);
  ex.class_target.assign(n_classes, 0.0);
  ex.class_target[cls] = 1.0;
  return ex;
}

void zero_param(DualHeadModel& m, const std::string& name) {
  for (auto& v : m.param(name).mutable_data()) v = 0.0;
}

std::vector<double> rows_of(const Tensor& h, std::size_t begin, std::size_t end) {
  const auto d = h.data();
  return {d.begin() + static_cast<std::ptrdiff_t>(begin * h.cols()),
          d.begin() + static_cast<std::ptrdiff_t>(end * h.cols())};
}

bool bit_equal(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("batch layout") {
  const auto b = make_batch({make_example(1, "ab", "cd", std::string("xy"), 2, 0),
                             make_example(2, "a", "", std::nullopt, 2, 1)},
                            512);
  CHECK(b.batch_size == 2);
  // 16 patches, BOS, a b, SEP, c d, SEP, x y EOS
  CHECK(b.lengths[0] == 16 + 1 + 2 + 1 + 2 + 1 + 3);
  CHECK(b.seq_len == b.lengths[0]);
  CHECK(b.last_index[0] == 22);
  CHECK(b.token_ids[16] == kid::data::kBos);
  CHECK(b.token_ids[22] == kid::data::kSep);
  CHECK(b.target_begin[0] == 23);
  CHECK(b.target_end[0] == 26);
  CHECK(b.token_ids[25] == kid::data::kEos);
  CHECK(b.target_begin[1] == b.target_end[1]);
  CHECK(b.is_pad(1, b.lengths[1]));
  CHECK(b.token_ids[b.seq_len + b.lengths[1]] == kid::data::kPad);
  CHECK_THROWS_AS(make_batch({make_example(1, std::string(600, 'a'), "", std::nullopt, 2, 0)}, 512),
                  kid::data::SequenceOverflow);
  CHECK(description_budget(10, 5, true, 512) == 512 - 17 - 10 - 2 - 6);
}

TEST_CASE("encode: shape, eval determinism and config checks") {
  DualHeadModel m(ModelConfig{}, 3);
  CHECK(m.parameter_count() > 100000);
  const auto b = make_batch({make_example(1, "hello", "⟨x⟩ [y]", std::string("This meme is harmful"), 2, 1),
                             make_example(2, "hi", "", std::string("This meme is non-harmful"), 2, 0)},
                            512);
  const Tensor h1 = m.encode(b);
  const Tensor h2 = m.encode(b);
  CHECK(h1.rows() == b.batch_size * b.seq_len);
  CHECK(h1.cols() == 64);
  CHECK(bit_equal(h1.data(), h2.data()));
  std::mt19937_64 rng(1);
  const Tensor ht = m.encode(b, {true, &rng});
  CHECK_FALSE(bit_equal(h1.data(), ht.data()));
  CHECK_THROWS_AS(m.encode(b, {true, nullptr}), ModelError);

  ModelConfig bad;
  bad.n_heads = 5;
  CHECK_THROWS_AS(DualHeadModel(bad, 0), ModelError);
}

TEST_CASE("PAD tail does not change non-PAD hidden states") {
  DualHeadModel m(ModelConfig{}, 4);
  const auto short_ex = make_example(5, "sh", "d", std::string("t"), 2, 0);
  const auto long_ex = make_example(6, "a much longer caption", "⟨e⟩ [a long knowledge string]",
                                    std::string("target text"), 2, 1);
  const auto alone = make_batch({short_ex}, 512);
  auto padded = make_batch({short_ex, long_ex}, 512);
  const Tensor ha = m.encode(alone);
  const std::size_t n = alone.lengths[0];
  // Overwrite the PAD tail with arbitrary ids: nothing before it moves.
  std::mt19937_64 rng(9);
  for (std::size_t t = n; t < padded.seq_len; ++t) padded.token_ids[t] = static_cast<int>(rng() % 256);
  const Tensor hp = m.encode(padded);
  const auto a = rows_of(ha, 0, n);
  const auto p = rows_of(hp, 0, n);
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - p[i]));
  CHECK(worst <= 1e-12);
}

TEST_CASE("classification depends only on positions up to last_index") {
  DualHeadModel m(ModelConfig{}, 8);
  const auto b1 = make_batch({make_example(1, "cap", "desc", std::string("This meme is harmful"), 2, 1)}, 512);
  auto b2 = b1;
  for (std::size_t t = b2.target_begin[0]; t < b2.target_end[0]; ++t) b2.token_ids[t] = 'z';
  const Tensor p1 = m.cls_probs(m.cls_logits(m.encode(b1), b1));
  const Tensor p2 = m.cls_probs(m.cls_logits(m.encode(b2), b2));
  for (std::size_t i = 0; i < p1.size(); ++i) CHECK(std::abs(p1.data()[i] - p2.data()[i]) <= 1e-12);
  double total = 0;
  for (double v : p1.data()) total += v;
  CHECK(std::abs(total - 1.0) < 1e-9);

  auto broken = b1;
  broken.last_index[0] = broken.lengths[0];
  CHECK_THROWS_AS(m.cls_logits(m.encode(b1), broken), ModelError);
}

TEST_CASE("generation loss values") {
  DualHeadModel m(ModelConfig{}, 2);
  zero_param(m, "gen_head.w");
  zero_param(m, "gen_head.b");
  // "ab" + EOS is a 3-token target under uniform logits.
  const auto b = make_batch({make_example(1, "t", "d", std::string("ab"), 2, 0)}, 512);
  const double loss = m.gen_loss(m.encode(b), b).item();
  CHECK(std::abs(loss - std::log(260.0)) < 1e-12);

  std::vector<double> confident(2 * 260, 0.0);
  confident[0 * 260 + 7] = 20.0;
  confident[1 * 260 + 200] = 20.0;
  const std::vector<int> targets = {7, 200};
  const Tensor lp = pick_log_probs(Tensor::from({2, 260}, confident), targets);
  CHECK(-(lp.data()[0] + lp.data()[1]) / 2 < 1e-3);

  // Random logits against a hand log-softmax.
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 3.0);
  std::vector<double> logits(2 * 260);
  for (auto& v : logits) v = g(rng);
  const Tensor lr = pick_log_probs(Tensor::from({2, 260}, logits), targets);
  double expected = 0;
  for (int r = 0; r < 2; ++r) {
    double mx = -1e300;
    for (int c = 0; c < 260; ++c) mx = std::max(mx, logits[r * 260 + c]);
    double z = 0;
    for (int c = 0; c < 260; ++c) z += std::exp(logits[r * 260 + c] - mx);
    expected += -(logits[r * 260 + targets[r]] - mx - std::log(z)) / 2;
  }
  CHECK(std::abs(-(lr.data()[0] + lr.data()[1]) / 2 - expected) < 1e-9);

  const auto no_target = make_batch({make_example(1, "t", "d", std::nullopt, 2, 0)}, 512);
  CHECK_THROWS_AS(m.gen_loss(m.encode(no_target), no_target), ModelError);
  CHECK_THROWS_AS(m.total_loss(no_target, HeadMode::dual), ModelError);
}

TEST_CASE("classification loss values") {
  ModelConfig cfg;
  cfg.n_classes = 3;
  DualHeadModel m(cfg, 5);
  zero_param(m, "cls_head.l2.w");
  zero_param(m, "cls_head.l2.b");
  for (std::size_t cls = 0; cls < 3; ++cls) {
    const auto b = make_batch({make_example(cls, "t", "d", std::nullopt, 3, cls)}, 512);
    const double loss = m.cls_loss(m.cls_logits(m.encode(b), b), b).item();
    CHECK(std::abs(loss - std::log(3.0)) < 1e-12);
  }

  cfg.multi_label = true;
  DualHeadModel ml(cfg, 5);
  Batch b = make_batch({make_example(1, "t", "d", std::nullopt, 3, 0)}, 512);
  b.class_targets = {1, 0, 1};
  const double p[] = {0.9, 0.1, 0.8};
  std::vector<double> z;
  for (double v : p) z.push_back(std::log(v / (1 - v)));
  const double bce = ml.cls_loss(Tensor::from({1, 3}, z), b).item();
  CHECK(std::abs(bce - (-(std::log(0.9) + std::log(0.9) + std::log(0.8)) / 3)) < 1e-12);
  const Tensor probs = ml.cls_probs(Tensor::from({1, 3}, z));
  for (int i = 0; i < 3; ++i) CHECK(std::abs(probs.data()[i] - p[i]) < 1e-12);
}

TEST_CASE("total loss is the unweighted sum of the head losses") {
  DualHeadModel m(ModelConfig{}, 6);
  const auto b = make_batch({make_example(1, "cap", "⟨e⟩ [k]", std::string("This meme is harmful"), 2, 1),
                             make_example(2, "other", "", std::string("This meme is non-harmful"), 2, 0)},
                            512);
  const auto dual = m.total_loss(b, HeadMode::dual);
  CHECK(dual.total.item() == dual.gen.item() + dual.cls.item());
  const auto gen = m.total_loss(b, HeadMode::gen_only);
  CHECK(gen.total.item() == gen.gen.item());
  CHECK_FALSE(gen.cls.defined());
  CHECK(m.total_loss(b, HeadMode::cls_only).total.item() == dual.cls.item());
}

TEST_CASE("backbone gradient of the dual loss is the sum of per-head gradients") {
  DualHeadModel m(ModelConfig{}, 7);
  const auto b = make_batch({make_example(1, "cap", "⟨e⟩ [k]", std::string("This meme is harmful"), 2, 1),
                             make_example(2, "other", "dd", std::string("This meme is non-harmful"), 2, 0)},
                            512);
  auto grads = [&](HeadMode mode) {
    for (auto& p : m.params()) p.value.zero_grad();
    kid::num::backward(m.total_loss(b, mode).total);
    std::vector<std::vector<double>> out;
    for (auto& p : m.params()) {
      if (p.group != ParamGroup::backbone || p.name.rfind("gen_head", 0) == 0) continue;
      std::vector<double> g(p.value.size(), 0.0);
      if (p.value.has_grad()) std::copy(p.value.grad().begin(), p.value.grad().end(), g.begin());
      out.push_back(std::move(g));
    }
    return out;
  };
  const auto gd = grads(HeadMode::dual);
  const auto gg = grads(HeadMode::gen_only);
  const auto gc = grads(HeadMode::cls_only);
  double worst = 0;
  for (std::size_t i = 0; i < gd.size(); ++i)
    for (std::size_t j = 0; j < gd[i].size(); ++j) worst = std::max(worst, std::abs(gd[i][j] - gg[i][j] - gc[i][j]));
  CHECK(worst < 1e-9);
}

TEST_CASE("baseline head") {
  ModelConfig cfg;
  cfg.baseline_head = true;
  cfg.n_classes = 3;
  DualHeadModel m(cfg, 9);
  const auto b = make_batch({make_example(1, "caption", "x", std::nullopt, 3, 0),
                             make_example(2, "c", "", std::nullopt, 3, 2)},
                            512);
  const Tensor h = m.encode(b);
  const Tensor probs = m.cls_probs(m.baseline_logits(h, b));
  for (std::size_t r = 0; r < 2; ++r) {
    double t = 0;
    for (std::size_t c = 0; c < 3; ++c) t += probs.at(r, c);
    CHECK(std::abs(t - 1.0) < 1e-9);
  }
  const Tensor pooled = m.pooled(h, b);
  for (std::size_t s = 0; s < 2; ++s) {
    for (std::size_t c = 0; c < 64; ++c) {
      double mean = 0;
      for (std::size_t t = 0; t < b.lengths[s]; ++t) mean += h.at(s * b.seq_len + t, c);
      mean /= static_cast<double>(b.lengths[s]);
      CHECK(std::abs(pooled.at(s, c) - mean) < 1e-12);
    }
  }
  zero_param(m, "baseline_head.w");
  zero_param(m, "baseline_head.b");
  const Tensor uniform = m.cls_probs(m.baseline_logits(h, b));
  for (double v : uniform.data()) CHECK(std::abs(v - 1.0 / 3) < 1e-15);
  CHECK(std::abs(m.baseline_loss(b).item() - std::log(3.0)) < 1e-12);
  DualHeadModel plain(ModelConfig{}, 9);
  CHECK_THROWS_AS(plain.baseline_logits(h, b), ModelError);
}

TEST_CASE("full dual loss passes the gradient check on a toy batch") {
  // Single-label in eval mode, multi-label with reseeded dropout masks.
  for (bool multi : {false, true}) {
    const ModelConfig cfg = toy_config(3, multi);
    DualHeadModel m(cfg, 11);
    const Batch b = toy_batch(cfg, 12);
    const bool training = multi;
    for (const auto& c : check_loss_gradients(m, b, HeadMode::dual, training)) {
      INFO(c.param << " multi=" << multi << " rel=" << c.report.max_rel_err
                   << " a=" << c.report.analytic_at_worst << " n=" << c.report.numeric_at_worst);
      CHECK(c.report.pass);
    }
  }
}

TEST_CASE("checkpoint round trip is exact") {
  const auto dir = std::filesystem::temp_directory_path() / ("kid_ckpt_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  ModelConfig cfg;
  cfg.baseline_head = true;
  DualHeadModel m(cfg, 21);
  const auto b = make_batch({make_example(1, "cap", "⟨e⟩ [k]", std::string("This meme is harmful"), 2, 1)}, 512);
  save_checkpoint(dir / "m.ckpt", m, 21, {{"note", "x"}});
  const auto bytes = kid::util::read_file(dir / "m.ckpt");
  CHECK(bytes.substr(0, 8) == "KIDCKPT1");
  for (unsigned char c : bytes.substr(16, 200)) CHECK(c < 128);
  auto loaded = load_checkpoint(dir / "m.ckpt");
  CHECK(loaded.seed == 21);
  CHECK(loaded.metadata["note"] == "x");
  const Tensor a = m.cls_logits(m.encode(b), b);
  const Tensor c = loaded.model.cls_logits(loaded.model.encode(b), b);
  CHECK(bit_equal(a.data(), c.data()));
  CHECK(checkpoint_bytes(loaded.model, 21, {{"note", "x"}}) == bytes);

  std::string corrupt = bytes;
  corrupt[0] = 'X';
  CHECK_THROWS_AS(parse_checkpoint(corrupt), CheckpointError);
  CHECK_THROWS_AS(parse_checkpoint(bytes.substr(0, bytes.size() - 8)), CheckpointError);
  std::filesystem::remove_all(dir);
}
