// SPDX-License-Identifier: Apache-2.0
//
// kid: one binary, one subcommand per step of the pipeline. Values come
// from built-in defaults, then the --config file, then flags; the last one
// set wins.

#include <csignal>
#include <chrono>
#include <cstdio>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "kid/checks/checks.hpp"
#include "kid/eval/ablation.hpp"
#include "kid/model/checkpoint.hpp"
#include "kid/num/tensor.hpp"
#include "kid/provider/mock_teacher.hpp"
#include "kid/util/io.hpp"
#include "run_config.hpp"

using namespace kid;
using namespace kid::cli;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void write_timing(const fs::path& path, const std::string& command, double wall,
                  nlohmann::ordered_json extra = nlohmann::ordered_json::object()) {
  nlohmann::ordered_json j = {{"command", command}, {"wall_seconds", wall}};
  for (auto& [k, v] : extra.items()) j[k] = v;
  write_json(path, j);
}

// Flags shared by train, eval, predict and ablate. Every one is optional
// so that only flags actually given override the config file.
struct Overrides {
  std::string config;
  std::optional<std::string> task, train_data, val_data, test_data, kb, provider, mode, format;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs, batch_size, n, max_len, patience;
  std::optional<double> lr_backbone, lr_cls, max_failure_rate;
  bool no_cache = false;

  void add_data(CLI::App* app) {
    app->add_option("--config", config, "JSON run config")->check(CLI::ExistingFile);
    app->add_option("--task", task, "task JSON, or 'synthetic'");
    app->add_option("--kb", kb, "knowledge base for the oracle provider");
    app->add_option("--provider", provider, "oracle | cache:<path> | http:<url> | cache:<path>+http:<url>");
    app->add_flag("--no-cache", no_cache, "do not cache http teacher replies");
    app->add_option("--max-failure-rate", max_failure_rate, "tolerated share of failed provider calls");
  }
  void add_splits(CLI::App* app) {
    app->add_option("--train", train_data, "training JSONL");
    app->add_option("--val", val_data, "validation JSONL");
    app->add_option("--test", test_data, "test JSONL");
  }
  void add_training(CLI::App* app) {
    app->add_option("--seed", seed);
    app->add_option("--epochs", epochs);
    app->add_option("--batch-size", batch_size);
    app->add_option("--lr-backbone", lr_backbone);
    app->add_option("--lr-cls", lr_cls);
    app->add_option("--mode", mode, "gen_only | cls_only | dual | baseline");
    app->add_option("--format", format, "inline | appended");
    app->add_option("--max-len", max_len);
    app->add_option("--patience", patience);
  }
  void add_n(CLI::App* app) { app->add_option("--n", n, "knowledge items per sample"); }

  RunConfig resolve() const {
    RunConfig c = config.empty() ? RunConfig{} : load_run_config(config);
    if (task) c.task = *task;
    if (train_data) c.train_data = *train_data;
    if (val_data) c.val_data = *val_data;
    if (test_data) c.test_data = *test_data;
    if (kb) c.kb = *kb;
    if (provider) c.provider = *provider;
    if (no_cache) c.cache = false;
    if (max_failure_rate) c.max_failure_rate = *max_failure_rate;
    auto& t = c.train;
    try {
      if (seed) t.seed = *seed;
      if (epochs) t.max_epochs = *epochs;
      if (batch_size) t.batch_size = *batch_size;
      if (lr_backbone) t.lr_backbone = *lr_backbone;
      if (lr_cls) t.lr_cls_head = *lr_cls;
      if (mode) t.mode = train::parse_train_mode(*mode);
      if (format) t.format = knowledge::parse_format(*format);
      if (max_len) t.max_len = *max_len;
      if (patience) t.patience = *patience;
      if (n) t.knowledge_n = *n;
      t.validate();
    } catch (const std::exception& e) {
      throw UsageError(e.what());
    }
    if (!(c.max_failure_rate >= 0.0 && c.max_failure_rate <= 1.0)) {
      throw UsageError("--max-failure-rate: must lie in [0, 1]");
    }
    return c;
  }
};

// ---- generate --------------------------------------------------------------

struct GenerateArgs {
  std::string config, out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> n_train, n_val, n_test, entities;
};

int cmd_generate(const GenerateArgs& a) {
  data::SyntheticConfig sc;
  if (!a.config.empty()) sc = data::SyntheticConfig::from_json(nlohmann::json::parse(util::read_file(a.config)));
  if (a.seed) sc.seed = *a.seed;
  if (a.n_train) sc.n_train = *a.n_train;
  if (a.n_val) sc.n_val = *a.n_val;
  if (a.n_test) sc.n_test = *a.n_test;
  if (a.entities) sc.n_entities = *a.entities;
  data::SyntheticData d;
  try {
    d = data::generate_synthetic(sc);
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("generate: ") + e.what());
  }
  const fs::path dir(a.out);
  ensure_dir(dir);
  util::atomic_write(dir / "task.json", data::synthetic_task().to_json().dump(2) + "\n");
  data::write_jsonl(d.train, dir / "train.jsonl");
  data::write_jsonl(d.val, dir / "val.jsonl");
  data::write_jsonl(d.test, dir / "test.jsonl");
  d.kb.save((dir / "kb.json").string());
  write_json(dir / "generate.json", {{"provenance", provenance("generate", sc.to_json(), sc.seed, {})},
                                     {"counts", {{"train", d.train.size()}, {"val", d.val.size()},
                                                 {"test", d.test.size()}, {"entities", d.kb.entities.size()}}}});
  std::fprintf(stderr, "generate: %zu/%zu/%zu samples in %s\n", d.train.size(), d.val.size(), d.test.size(),
               dir.string().c_str());
  return kOk;
}

// ---- augment ---------------------------------------------------------------

struct AugmentArgs {
  Overrides o;
  std::string data, out;
  std::size_t workers = 4;
};

int cmd_augment(const AugmentArgs& a) {
  RunConfig cfg = a.o.resolve();
  const auto task = load_task_spec(cfg.task);
  const auto samples = load_split("--data", a.data, task);
  auto prov = open_provider(cfg);
  const std::size_t n = cfg.train.knowledge_n;
  nlohmann::ordered_json resolved = cfg.to_json();
  resolved["augment"] = {{"data", a.data}, {"n", n}};
  const auto prov_block = provenance("augment", resolved, cfg.train.seed, {cfg.task, a.data, cfg.kb});
  const fs::path manifest_path = a.out + ".manifest.json";
  ensure_dir(fs::path(a.out).parent_path());
  provider::AugmentResult r;
  try {
    r = provider::build_augmented_dataset(samples, *prov, n, cfg.max_failure_rate, std::max<std::size_t>(1, a.workers));
  } catch (const provider::FailureThresholdExceeded& e) {
    // The manifest says what failed; the dataset itself is not written.
    write_json(manifest_path, {{"provenance", prov_block}, {"manifest", e.manifest.to_json()}, {"complete", false}});
    throw;
  }
  data::write_jsonl(r.samples, a.out);
  write_json(manifest_path, {{"provenance", prov_block}, {"manifest", r.manifest.to_json()}, {"complete", true}});
  std::fprintf(stderr, "augment: %zu of %zu samples at n=%zu via %s\n", r.manifest.total - r.manifest.failures.size(),
               r.manifest.total, n, r.manifest.provider_name.c_str());
  return kOk;
}

// ---- train -----------------------------------------------------------------

struct TrainArgs {
  Overrides o;
  std::string out;
};

int cmd_train(const TrainArgs& a) {
  const RunConfig cfg = a.o.resolve();
  const auto task = load_task_spec(cfg.task);
  const auto train_set = load_split("data.train", cfg.train_data, task);
  const auto val_set = cfg.val_data.empty() ? std::vector<data::MemeSample>{} : load_split("data.val", cfg.val_data, task);
  model::ModelConfig mc;
  try {
    mc = train::model_config_for(task, cfg.train.mode, cfg.train.max_len, cfg.model);
  } catch (const train::TrainError& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  const fs::path dir(a.out);
  ensure_dir(dir);
  const auto t0 = std::chrono::steady_clock::now();
  model::DualHeadModel m(mc, cfg.train.seed);
  const auto log = train::train(m, train_set, val_set, task, cfg.train, [](const train::EpochLog& e) {
    std::fprintf(stderr, "epoch %zu: loss %.4f%s%s\n", e.epoch, e.mean_loss, e.val ? " val " : "",
                 e.val ? e.val->to_json().dump().c_str() : "");
  });
  const double wall = seconds_since(t0);
  const auto prov = provenance("train", cfg.to_json(), cfg.train.seed, {cfg.task, cfg.train_data, cfg.val_data});
  nlohmann::ordered_json meta = {{"task", task.to_json()}, {"train", cfg.train.to_json()},
                                 {"best_epoch", log.best_epoch}, {"provenance", prov}};
  model::save_checkpoint(dir / "model.ckpt", m, cfg.train.seed, meta);
  util::atomic_write(dir / "train_log.csv", log.to_csv());
  write_json(dir / "train_log.json", {{"provenance", prov}, {"log", log.to_json()}});
  write_timing(dir / "timing.json", "train", wall, {{"epochs", log.epochs.size()}});
  if (val_set.empty()) {
    std::fprintf(stderr, "train: %zu epochs, no validation split, kept the last, %.1fs\n", log.epochs.size(), wall);
  } else {
    std::fprintf(stderr, "train: best epoch %zu (%s %.4f), %.1fs\n", log.best_epoch, log.selection_metric.c_str(),
                 log.best_value, wall);
  }
  return kOk;
}

// ---- eval / predict --------------------------------------------------------

struct Loaded {
  model::LoadedCheckpoint ckpt;
  data::TaskSpec task;
  train::TrainConfig train;
};

Loaded open_checkpoint(const std::string& path, const std::optional<std::string>& task_flag) {
  if (!fs::exists(path)) throw UsageError("--checkpoint: no such file '" + path + "'");
  Loaded l{model::load_checkpoint(path), {}, {}};
  const auto& meta = l.ckpt.metadata;
  if (!meta.contains("task") || !meta.contains("train")) {
    throw UsageError("--checkpoint: '" + path + "' carries no task or training config");
  }
  l.task = data::TaskSpec::from_json(meta["task"]);
  l.train = train::TrainConfig::from_json(meta["train"]);
  if (task_flag) {
    const auto given = load_task_spec(*task_flag);
    if (given.labels != l.task.labels || given.kind != l.task.kind) {
      throw UsageError("--task: labels differ from the task the checkpoint was trained on");
    }
    l.task = given;
  }
  return l;
}

struct EvalArgs {
  std::string checkpoint, data, split, out;
  std::optional<std::string> task;
  std::optional<std::size_t> n;
};

int cmd_eval(const EvalArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  Loaded l = open_checkpoint(a.checkpoint, a.task);
  auto samples = load_split("--data", a.data, l.task);
  if (!a.split.empty()) samples = data::filter_split(samples, data::parse_split(a.split));
  if (samples.empty()) throw UsageError("eval: no samples to score");
  train::TrainConfig tc = l.train;
  if (a.n) tc.knowledge_n = *a.n;
  const auto opt = train::predict_options(tc.mode, tc.input());
  const auto preds = infer::predict_all(l.ckpt.model, samples, l.task, opt);
  const auto report = eval::score_predictions(preds, samples, l.task, train::metric_source(tc.mode));
  nlohmann::ordered_json resolved = {{"checkpoint", a.checkpoint}, {"data", a.data}, {"split", a.split},
                                     {"train", tc.to_json()}};
  nlohmann::ordered_json j = {{"provenance", provenance("eval", resolved, l.ckpt.seed, {a.checkpoint, a.data})},
                              {"metrics", report.to_json()}};
  if (tc.mode == train::TrainMode::dual) {
    j["semantic_metrics"] = eval::score_predictions(preds, samples, l.task, eval::Source::semantic).to_json();
  }
  const fs::path out(a.out);
  ensure_dir(out.parent_path());
  write_json(out, j);
  write_timing(out.string() + ".timing.json", "eval", seconds_since(t0));
  std::cout << report.to_json().dump() << "\n";
  return kOk;
}

struct PredictArgs {
  Overrides o;
  std::string checkpoint, data, out;
};

int cmd_predict(const PredictArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  Loaded l = open_checkpoint(a.checkpoint, a.o.task);
  RunConfig cfg = a.o.resolve();
  if (!a.o.max_failure_rate) cfg.max_failure_rate = 0.0;  // every sample needs its knowledge
  auto samples = load_split("--data", a.data, l.task);
  train::TrainConfig tc = l.train;
  if (a.o.n) tc.knowledge_n = *a.o.n;

  // Step one: knowledge from the provider, or the stored aug_text.
  if (tc.knowledge_n == 0) {
    for (auto& s : samples)
      if (s.aug_text) s.aug_text = knowledge::serialize(knowledge::truncate_to_n(knowledge::parse(*s.aug_text), 0));
  } else if (a.o.provider || !a.o.config.empty()) {
    auto prov = open_provider(cfg);
    samples = provider::build_augmented_dataset(samples, *prov, tc.knowledge_n, cfg.max_failure_rate).samples;
  }
  // Step two.
  const auto preds = infer::predict_all(l.ckpt.model, samples, l.task, train::predict_options(tc.mode, tc.input()));
  std::string out;
  for (const auto& p : preds) out += p.to_json(l.task).dump() + "\n";
  const fs::path path(a.out);
  ensure_dir(path.parent_path());
  util::atomic_write(path, out);
  nlohmann::ordered_json resolved = {{"checkpoint", a.checkpoint}, {"data", a.data},
                                     {"provider", tc.knowledge_n ? cfg.provider : ""},
                                     {"train", tc.to_json()}};
  write_json(path.string() + ".provenance.json", provenance("predict", resolved, l.ckpt.seed, {a.checkpoint, a.data}));
  write_timing(path.string() + ".timing.json", "predict", seconds_since(t0));
  if (train::predict_options(tc.mode, tc.input()).semantic && !preds.empty()) {
    std::fprintf(stderr, "predict: %zu predictions, heads agree on %.3f\n", preds.size(),
                 infer::heads_agreement(preds));
  } else {
    std::fprintf(stderr, "predict: %zu predictions\n", preds.size());
  }
  return kOk;
}

// ---- ablate ----------------------------------------------------------------

struct AblateArgs {
  Overrides o;
  std::vector<std::string> axes;
  std::string seeds, metric, out;
};

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const std::string tok = s.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    std::size_t used = 0;
    try {
      out.push_back(std::stoull(tok, &used));
    } catch (const std::exception&) {
      used = 0;
    }
    if (tok.empty() || used != tok.size()) throw UsageError("--seeds: bad seed '" + tok + "'");
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

int cmd_ablate(const AblateArgs& a) {
  RunConfig cfg = a.o.resolve();
  if (!a.axes.empty()) cfg.axes = a.axes;
  if (!a.seeds.empty()) cfg.seeds = parse_seeds(a.seeds);
  if (!a.metric.empty()) cfg.metric = a.metric;
  eval::Axes axes;
  axes.n = {cfg.train.knowledge_n};
  axes.format = {cfg.train.format};
  axes.mode = {std::string(train::train_mode_name(cfg.train.mode))};
  eval::GridSpec g;
  try {
    for (const auto& ax : cfg.axes) eval::apply_axis(axes, ax);
    g.cells = eval::cartesian(axes);
    g.seeds = cfg.seeds;
    g.metric = cfg.metric;
    g.base = cfg.train;
    g.model = cfg.model;
    g.max_failure_rate = cfg.max_failure_rate;
    g.validate();
  } catch (const eval::AblationError& e) {
    throw UsageError(e.what());
  }
  const auto task = load_task_spec(cfg.task);
  eval::AblationData d{load_split("data.train", cfg.train_data, task),
                       cfg.val_data.empty() ? std::vector<data::MemeSample>{} : load_split("data.val", cfg.val_data, task),
                       load_split("data.test", cfg.test_data, task), task};
  auto prov = open_provider(cfg);
  const fs::path dir(a.out);
  ensure_dir(dir);
  std::fprintf(stderr, "ablate: %zu cells x %zu seeds\n", g.cells.size(), g.seeds.size());
  const auto t0 = std::chrono::steady_clock::now();
  const auto grid = eval::run_ablation(g, d, *prov, [](const eval::RunResult& r) {
    std::fprintf(stderr, "  %s seed %llu: %.4f (best epoch %zu, %.1fs)\n", r.cell.key().c_str(),
                 static_cast<unsigned long long>(r.seed), r.value, r.best_epoch, r.wall_seconds);
  });
  const auto prov_block =
      provenance("ablate", cfg.to_json(), cfg.train.seed, {cfg.task, cfg.train_data, cfg.val_data, cfg.test_data, cfg.kb});
  util::atomic_write(dir / "grid.csv", grid.to_csv());
  util::atomic_write(dir / "plot.csv", grid.plot_csv());
  write_json(dir / "grid.json", {{"provenance", prov_block}, {"grid", grid.to_json()}});
  write_timing(dir / "timing.json", "ablate", seconds_since(t0), {{"grid", grid.to_json(true)}});
  std::cout << grid.to_csv();
  return kOk;
}

// ---- selftest --------------------------------------------------------------

struct SelftestArgs {
  std::string fault;
  std::uint64_t seed = 0;
};

int cmd_selftest(const SelftestArgs& a) {
  if (!a.fault.empty()) {
    std::optional<num::OpKind> kind;
    std::string names;
    for (int k = 1; k <= static_cast<int>(num::OpKind::mean); ++k) {
      const auto op = static_cast<num::OpKind>(k);
      names += (names.empty() ? "" : " ") + std::string(num::op_name(op));
      if (num::op_name(op) == a.fault) kind = op;
    }
    if (!kind) throw UsageError("--fault: unknown op '" + a.fault + "' (" + names + ")");
    num::testing::inject_backward_fault(*kind);
    std::fprintf(stderr, "selftest: backward of '%s' deliberately corrupted\n", a.fault.c_str());
  }
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<checks::CheckResult> all;
  auto run = [&](const char* group, auto&& fn) {
    const auto t = std::chrono::steady_clock::now();
    auto rs = fn();
    std::fprintf(stderr, "selftest: %s checks in %.2fs\n", group, seconds_since(t));
    all.insert(all.end(), rs.begin(), rs.end());
  };
  run("gradient", [&] { return checks::gradient_checks(a.seed); });
  run("parser", [&] { return checks::parser_checks(a.seed); });
  run("metric", [&] { return checks::metric_checks(a.seed); });
  run("template", [] { return checks::template_checks(); });
  num::testing::clear_backward_fault();
  std::size_t failed = 0;
  for (const auto& r : all) {
    std::printf("%s %s: %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
    failed += !r.passed;
  }
  std::printf("selftest: %zu of %zu checks passed in %.1fs\n", all.size() - failed, all.size(), seconds_since(t0));
  return failed ? kInternal : kOk;
}

// ---- mock-teacher ----------------------------------------------------------

struct MockArgs {
  std::string kb, fixed_reply, host = "127.0.0.1", port_file;
  int port = 8765;
  double fail_fraction = 0.0;
};

int cmd_mock_teacher(const MockArgs& a) {
  provider::MockTeacherOptions opt;
  opt.kb = load_kb(a.kb);
  opt.fixed_reply = a.fixed_reply;
  opt.fail_fraction = a.fail_fraction;
  if (!opt.kb && opt.fixed_reply.empty()) throw UsageError("mock-teacher: give --kb or --fixed-reply");
  // Block the stop signals before the server thread starts so that only
  // sigwait below sees them.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  provider::MockTeacher teacher(opt);
  int port = 0;
  try {
    port = teacher.start(a.host, a.port);
  } catch (const std::exception& e) {
    throw UsageError(std::string("mock-teacher: ") + e.what());
  }
  if (!a.port_file.empty()) util::atomic_write(a.port_file, std::to_string(port) + "\n");
  std::fprintf(stderr, "mock-teacher: listening on http://%s:%d\n", a.host.c_str(), port);
  int sig = 0;
  sigwait(&set, &sig);
  teacher.stop();
  std::fprintf(stderr, "mock-teacher: %zu requests served\n", teacher.requests());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kid: knowledge-injected dual-head meme classifier"};
  app.require_subcommand(1);
  app.set_version_flag("--version", KID_VERSION);
  int code = kOk;

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "write the synthetic held-out-entity task");
  g->add_option("--out", gen.out, "output directory")->required();
  g->add_option("--config", gen.config, "synthetic config JSON")->check(CLI::ExistingFile);
  g->add_option("--seed", gen.seed);
  g->add_option("--n-train", gen.n_train);
  g->add_option("--n-val", gen.n_val);
  g->add_option("--n-test", gen.n_test);
  g->add_option("--entities", gen.entities);
  g->callback([&] { code = cmd_generate(gen); });

  AugmentArgs aug;
  auto* au = app.add_subcommand("augment", "fill aug_text through a knowledge provider");
  aug.o.add_data(au);
  aug.o.add_n(au);
  au->add_option("--data", aug.data, "input JSONL")->required();
  au->add_option("--out", aug.out, "output JSONL; a .manifest.json is written beside it")->required();
  au->add_option("--workers", aug.workers, "concurrent provider calls");
  au->callback([&] { code = cmd_augment(aug); });

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train a model; writes model.ckpt and logs");
  tr.o.add_data(t);
  tr.o.add_splits(t);
  tr.o.add_training(t);
  tr.o.add_n(t);
  t->add_option("--out", tr.out, "output directory")->required();
  t->callback([&] { code = cmd_train(tr); });

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "score a checkpoint on a labelled split");
  e->add_option("--checkpoint", ev.checkpoint)->required();
  e->add_option("--data", ev.data, "JSONL with aug_text filled")->required();
  e->add_option("--task", ev.task, "task JSON; defaults to the checkpoint's");
  e->add_option("--split", ev.split, "keep only samples of this split");
  e->add_option("--n", ev.n, "knowledge items (default: as trained)");
  e->add_option("--out", ev.out, "metric JSON")->required();
  e->callback([&] { code = cmd_eval(ev); });

  PredictArgs pr;
  auto* p = app.add_subcommand("predict", "two-step prediction: knowledge, then both heads");
  pr.o.add_data(p);
  pr.o.add_n(p);
  p->add_option("--checkpoint", pr.checkpoint)->required();
  p->add_option("--data", pr.data, "JSONL of samples")->required();
  p->add_option("--out", pr.out, "prediction JSONL")->required();
  p->callback([&] { code = cmd_predict(pr); });

  AblateArgs ab;
  auto* a = app.add_subcommand("ablate", "train one model per (cell, seed) and compare");
  ab.o.add_data(a);
  ab.o.add_splits(a);
  ab.o.add_training(a);
  ab.o.add_n(a);
  a->add_option("--axis", ab.axes, "n=0..5 | format=inline,appended | mode=gen_only,dual (repeatable)");
  a->add_option("--seeds", ab.seeds, "comma-separated seeds");
  a->add_option("--metric", ab.metric, "accuracy | macro_f1 | auc | primary");
  a->add_option("--out", ab.out, "output directory")->required();
  a->callback([&] { code = cmd_ablate(ab); });

  SelftestArgs st;
  auto* s = app.add_subcommand("selftest", "gradient, parser, metric and template checks");
  s->add_option("--fault", st.fault, "corrupt one op's backward pass (negative control)");
  s->add_option("--seed", st.seed);
  s->callback([&] { code = cmd_selftest(st); });

  MockArgs mk;
  auto* m = app.add_subcommand("mock-teacher", "serve the bundled HTTP teacher until SIGINT/SIGTERM");
  m->add_option("--kb", mk.kb, "knowledge base to answer from");
  m->add_option("--fixed-reply", mk.fixed_reply, "reply for ids the knowledge base lacks");
  m->add_option("--host", mk.host);
  m->add_option("--port", mk.port, "0 picks a free port");
  m->add_option("--port-file", mk.port_file, "write the bound port here");
  m->add_option("--fail-fraction", mk.fail_fraction, "share of ids answered with 503");
  m->callback([&] { code = cmd_mock_teacher(mk); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? kOk : kValidation;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "kid: error: %s\n", err.what());
    return classify(err);
  }
  return code;
}
