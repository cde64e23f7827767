// SPDX-License-Identifier: Apache-2.0
#include "kid/data/synthetic.hpp"

#include <algorithm>
#include <random>
#include <set>
#include <stdexcept>

#include "kid/util/io.hpp"

namespace kid::data {

namespace {

constexpr const char* kFillers[] = {"is a thief", "is a saint", "is a river",
                                    "is a color", "is a song",  "is a town"};

std::vector<std::string> unique_names(std::size_t count, std::mt19937_64& rng) {
  static const std::string consonants = "bcdfghjklmnprstvwxz";
  static const std::string vowels = "aeiou";
  std::set<std::string> seen;
  std::vector<std::string> out;
  std::uniform_int_distribution<std::size_t> c(0, consonants.size() - 1);
  std::uniform_int_distribution<std::size_t> v(0, vowels.size() - 1);
  while (out.size() < count) {
    std::string name = {consonants[c(rng)], vowels[v(rng)], consonants[c(rng)]};
    if (seen.insert(name).second) out.push_back(name);
  }
  return out;
}

// Balanced attribute bits over `group`, then shuffled.
void assign_attributes(std::vector<KbEntity>& entities, const std::vector<std::size_t>& group,
                       Split split, std::mt19937_64& rng) {
  std::vector<int> bits(group.size());
  for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = static_cast<int>(i % 2);
  std::shuffle(bits.begin(), bits.end(), rng);
  for (std::size_t i = 0; i < group.size(); ++i) {
    auto& e = entities[group[i]];
    e.attribute = bits[i];
    e.group = split;
    e.knowledge = e.attribute ? kPositiveKnowledge : kNegativeKnowledge;
  }
}

Image render_glyph(const KbEntity& e, double noise, std::mt19937_64& rng) {
  Image img = blank_image();
  std::normal_distribution<double> jitter(0.0, noise);
  const std::size_t scale = kImageSide / 8;
  for (std::size_t r = 0; r < kImageSide; ++r) {
    for (std::size_t c = 0; c < kImageSide; ++c) {
      double v = e.glyph[(r / scale) * 8 + c / scale] ? 0.9 : 0.1;
      if (noise > 0) v += jitter(rng);
      img.pixels[r * kImageSide + c] = std::clamp(v, 0.0, 1.0);
    }
  }
  return img;
}

}  // namespace

nlohmann::ordered_json SyntheticConfig::to_json() const {
  return {{"n_entities", n_entities},         {"n_train", n_train},
          {"n_val", n_val},                   {"n_test", n_test},
          {"seed", seed},                     {"distractor_pool", distractor_pool},
          {"distractors_per_sample", distractors_per_sample}, {"image_noise", image_noise},
          {"train_cue_rate", train_cue_rate}};
}

SyntheticConfig SyntheticConfig::from_json(const nlohmann::json& j) {
  SyntheticConfig c;
  c.n_entities = j.value("n_entities", c.n_entities);
  c.n_train = j.value("n_train", c.n_train);
  c.n_val = j.value("n_val", c.n_val);
  c.n_test = j.value("n_test", c.n_test);
  c.seed = j.value("seed", c.seed);
  c.distractor_pool = j.value("distractor_pool", c.distractor_pool);
  c.distractors_per_sample = j.value("distractors_per_sample", c.distractors_per_sample);
  c.image_noise = j.value("image_noise", c.image_noise);
  c.train_cue_rate = j.value("train_cue_rate", c.train_cue_rate);
  return c;
}

knowledge::AugmentedText KnowledgeBase::describe(const std::string& id, std::size_t n) const {
  auto it = samples.find(id);
  if (it == samples.end()) throw std::out_of_range("knowledge base has no sample '" + id + "'");
  const KbSampleFacts& facts = it->second;
  const KbEntity& main = entities[facts.entity];
  knowledge::AugmentedText t;
  t.source_format = knowledge::Format::inlined;
  if (n == 0) {
    t.segments.push_back(knowledge::PlainSpan{main.name, std::nullopt});
    return t;
  }
  std::vector<knowledge::KnowledgeItem> items;
  items.push_back({main.name, main.knowledge, 0, " "});
  for (std::size_t k = 0; k + 1 < n && k < facts.distractors.size(); ++k) {
    const auto& d = distractors[facts.distractors[k]];
    items.push_back({d.name, d.knowledge, 0, " "});
  }
  std::mt19937_64 rng(util::fnv1a64(id) ^ (0x9e3779b97f4a7c15ull * (n + 1)));
  std::shuffle(items.begin(), items.end(), rng);
  for (std::size_t k = 0; k < items.size(); ++k) {
    if (k) t.segments.push_back(knowledge::PlainSpan{", ", std::nullopt});
    items[k].order_index = k;
    t.segments.emplace_back(items[k]);
  }
  return t;
}

nlohmann::ordered_json KnowledgeBase::to_json() const {
  nlohmann::ordered_json j;
  auto& ents = j["entities"] = nlohmann::ordered_json::array();
  for (const auto& e : entities) {
    ents.push_back({{"name", e.name}, {"attribute", e.attribute}, {"knowledge", e.knowledge},
                    {"glyph", e.glyph}, {"group", split_name(e.group)}});
  }
  auto& ds = j["distractors"] = nlohmann::ordered_json::array();
  for (const auto& d : distractors) ds.push_back({{"name", d.name}, {"knowledge", d.knowledge}});
  auto& ss = j["samples"] = nlohmann::ordered_json::object();
  for (const auto& [id, f] : samples) ss[id] = {{"entity", f.entity}, {"distractors", f.distractors}};
  return j;
}

KnowledgeBase KnowledgeBase::from_json(const nlohmann::json& j) {
  KnowledgeBase kb;
  try {
    for (const auto& e : j.at("entities")) {
      kb.entities.push_back({e.at("name").get<std::string>(), e.at("attribute").get<int>(),
                             e.at("knowledge").get<std::string>(),
                             e.at("glyph").get<std::vector<std::uint8_t>>(),
                             parse_split(e.at("group").get<std::string>())});
    }
    for (const auto& d : j.at("distractors")) {
      kb.distractors.push_back({d.at("name").get<std::string>(), d.at("knowledge").get<std::string>()});
    }
    for (const auto& [id, f] : j.at("samples").items()) {
      KbSampleFacts facts{f.at("entity").get<std::size_t>(),
                          f.at("distractors").get<std::vector<std::size_t>>()};
      if (facts.entity >= kb.entities.size()) throw SchemaError("kb: entity index out of range");
      for (auto d : facts.distractors) {
        if (d >= kb.distractors.size()) throw SchemaError("kb: distractor index out of range");
      }
      kb.samples.emplace(id, std::move(facts));
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("kb: ") + e.what());
  }
  return kb;
}

KnowledgeBase KnowledgeBase::load(const std::string& path) {
  try {
    return from_json(nlohmann::json::parse(util::read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(path + ": " + e.what());
  }
}

void KnowledgeBase::save(const std::string& path) const { util::atomic_write(path, to_json().dump()); }

std::vector<MemeSample> SyntheticData::all() const {
  std::vector<MemeSample> out = train;
  out.insert(out.end(), val.begin(), val.end());
  out.insert(out.end(), test.begin(), test.end());
  return out;
}

TaskSpec synthetic_task() {
  TaskSpec t;
  t.name = "synthetic";
  t.kind = TaskKind::binary;
  t.labels = {"non-harmful", "harmful"};
  t.template_id = TemplateId::this_meme_is;
  return t;
}

SyntheticData generate_synthetic(const SyntheticConfig& config) {
  const std::size_t n_test_entities = config.n_entities / 5;
  const std::size_t n_val_entities = config.n_entities / 10;
  const std::size_t n_train_entities = config.n_entities - n_test_entities - n_val_entities;
  if (n_test_entities < 2 || n_val_entities < 2 || n_train_entities < 2) {
    throw std::invalid_argument("synthetic: n_entities=" + std::to_string(config.n_entities) +
                                " is too small for disjoint train/val/test entity sets (need >= 20)");
  }
  if (config.n_entities + config.distractor_pool > 1500) {
    throw std::invalid_argument("synthetic: too many entities for the name space");
  }
  if (config.distractors_per_sample > config.distractor_pool) {
    throw std::invalid_argument("synthetic: distractors_per_sample exceeds distractor_pool");
  }
  if (!(config.train_cue_rate >= 0.0 && config.train_cue_rate <= 1.0)) {
    throw std::invalid_argument("synthetic: train_cue_rate must lie in [0, 1]");
  }

  std::mt19937_64 rng(config.seed);
  SyntheticData out;
  KnowledgeBase& kb = out.kb;
  const auto names = unique_names(config.n_entities + config.distractor_pool, rng);
  std::bernoulli_distribution coin(0.5);
  for (std::size_t i = 0; i < config.n_entities; ++i) {
    KbEntity e;
    e.name = names[i];
    e.glyph.resize(64);
    for (auto& g : e.glyph) g = coin(rng) ? 1 : 0;
    kb.entities.push_back(std::move(e));
  }
  std::uniform_int_distribution<std::size_t> filler(0, std::size(kFillers) - 1);
  for (std::size_t i = 0; i < config.distractor_pool; ++i) {
    kb.distractors.push_back({names[config.n_entities + i], kFillers[filler(rng)]});
  }

  std::vector<std::size_t> order(config.n_entities);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  const std::vector<std::size_t> train_group(order.begin(), order.begin() + n_train_entities);
  const std::vector<std::size_t> val_group(order.begin() + n_train_entities,
                                           order.begin() + n_train_entities + n_val_entities);
  const std::vector<std::size_t> test_group(order.begin() + n_train_entities + n_val_entities, order.end());
  assign_attributes(kb.entities, train_group, Split::train, rng);
  assign_attributes(kb.entities, val_group, Split::val, rng);
  assign_attributes(kb.entities, test_group, Split::test, rng);

  const TaskSpec task = synthetic_task();
  auto make_split = [&](Split split, std::size_t n, const std::vector<std::size_t>& group, double cue_rate) {
    // Exact (label, cue) counts: labels split evenly, and within each label
    // a cue_rate share is "hated", so the cue says nothing about the label.
    std::vector<std::pair<int, int>> cells;
    for (int y = 0; y < 2; ++y) {
      const std::size_t ny = n / 2 + (y == 0 ? n % 2 : 0);
      const auto hated = static_cast<std::size_t>(std::llround(cue_rate * static_cast<double>(ny)));
      for (std::size_t k = 0; k < ny; ++k) cells.emplace_back(y, k < hated ? 1 : 0);
    }
    std::shuffle(cells.begin(), cells.end(), rng);
    std::vector<std::size_t> by_attr[2];
    for (std::size_t ei : group) by_attr[kb.entities[ei].attribute].push_back(ei);
    std::vector<MemeSample> samples;
    for (std::size_t i = 0; i < n; ++i) {
      const auto [label, cue] = cells[i];
      const auto& pool_for = by_attr[label ^ cue];
      std::uniform_int_distribution<std::size_t> pick(0, pool_for.size() - 1);
      const std::size_t ei = pool_for[pick(rng)];
      const KbEntity& e = kb.entities[ei];
      MemeSample s;
      char id[32];
      std::snprintf(id, sizeof id, "syn-%s-%05zu", std::string(split_name(split)).c_str(), i);
      s.id = id;
      s.image = render_glyph(e, config.image_noise, rng);
      s.text = e.name + (cue ? " is hated" : " is loved");
      s.labels = {task.labels[static_cast<std::size_t>(label)]};
      s.split = split;
      KbSampleFacts facts{ei, {}};
      std::vector<std::size_t> pool(config.distractor_pool);
      for (std::size_t k = 0; k < pool.size(); ++k) pool[k] = k;
      for (std::size_t k = 0; k < config.distractors_per_sample; ++k) {
        std::uniform_int_distribution<std::size_t> d(k, pool.size() - 1);
        std::swap(pool[k], pool[d(rng)]);
        facts.distractors.push_back(pool[k]);
      }
      kb.samples.emplace(s.id, std::move(facts));
      samples.push_back(std::move(s));
    }
    return samples;
  };
  out.train = make_split(Split::train, config.n_train, train_group, config.train_cue_rate);
  out.val = make_split(Split::val, config.n_val, val_group, 0.5);
  out.test = make_split(Split::test, config.n_test, test_group, 0.5);
  return out;
}

int synthetic_cue(const MemeSample& s) {
  const auto pos = s.text.rfind(' ');
  return s.text.substr(pos + 1) == "hated" ? 1 : 0;
}

}  // namespace kid::data
