// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <filesystem>
#include <unistd.h>

#include "kid/provider/mock_teacher.hpp"
#include "kid/provider/provider.hpp"

using namespace kid::provider;
namespace kf = kid::knowledge;

namespace {

const std::string kPepe =
    "The image shows ⟨Pepe the Frog⟩ [an internet meme symbol often used by far-right groups], "
    "looking at...";

std::filesystem::path temp_dir(const std::string& tag) {
  auto d = std::filesystem::temp_directory_path() / ("kid_" + tag + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

kid::data::SyntheticData small_synthetic() {
  kid::data::SyntheticConfig c;
  c.n_entities = 60;
  c.n_train = 100;
  c.n_val = 20;
  c.n_test = 40;
  c.seed = 5;
  return kid::data::generate_synthetic(c);
}

HttpOptions fast_http() {
  HttpOptions o;
  o.backoff_ms = 1;
  o.timeout_ms = 2000;
  return o;
}

}  // namespace

TEST_CASE("base64") {
  CHECK(base64_encode("") == "");
  CHECK(base64_encode("M") == "TQ==");
  CHECK(base64_encode("Ma") == "TWE=");
  CHECK(base64_encode("Man") == "TWFu");
  CHECK(base64_encode(std::string("\xff\x00\x10", 3)) == "/wAQ");
}

TEST_CASE("teacher output repair and truncation") {
  const auto pepe = parse_teacher_output(kPepe, 5);
  REQUIRE(pepe);
  CHECK(pepe->item_count() == 1);
  CHECK(pepe->items()[0].entity == "Pepe the Frog");

  const auto orphan = parse_teacher_output("see ⟨Jio⟩ and ⟨A⟩ [ka] then ⟨B⟩ [kb]", 1);
  REQUIRE(orphan);
  CHECK(orphan->item_count() == 1);
  CHECK(kf::serialize(*orphan) == "see Jio and ⟨A⟩ [ka] then B");

  const auto unclosed = parse_teacher_output("x ⟨E⟩ [never closed", 3);
  REQUIRE(unclosed);
  std::vector<kf::ParseWarning> w;
  kf::parse(kf::serialize(*unclosed), &w);
  CHECK(w.empty());
}

TEST_CASE("oracle returns exactly the relevant item at n=1") {
  const auto d = small_synthetic();
  OracleProvider oracle(std::make_shared<kid::data::KnowledgeBase>(d.kb));
  for (const auto& s : d.test) {
    const auto r = oracle.augment(make_request(s, 1));
    REQUIRE(r.aug_text.item_count() == 1);
    const auto& facts = d.kb.samples.at(s.id);
    const auto& e = d.kb.entities[facts.entity];
    CHECK(r.aug_text.items()[0].entity == e.name);
    CHECK(r.aug_text.items()[0].knowledge == e.knowledge);
    CHECK_FALSE(r.cached);
    CHECK(kf::serialize(oracle.augment(make_request(s, 1)).aug_text) == kf::serialize(r.aug_text));
  }
  CHECK_THROWS_AS(oracle.augment({"nope", "t", "", 1}), ProviderError);
}

TEST_CASE("cache hits are byte-identical and persist") {
  const auto dir = temp_dir("cache");
  const auto d = small_synthetic();
  auto kb = std::make_shared<kid::data::KnowledgeBase>(d.kb);
  const auto req = make_request(d.train[0], 2);
  std::string first;
  {
    CachedProvider cache(dir / "c.jsonl", std::make_unique<OracleProvider>(kb));
    const auto a = cache.augment(req);
    const auto b = cache.augment(req);
    CHECK_FALSE(a.cached);
    CHECK(b.cached);
    first = kf::serialize(a.aug_text);
    CHECK(kf::serialize(b.aug_text) == first);
    CHECK(cache.name() == "cache+oracle");
  }
  CachedProvider reopened(dir / "c.jsonl");
  CHECK(reopened.size() == 1);
  const auto c = reopened.augment(req);
  CHECK(c.cached);
  CHECK(kf::serialize(c.aug_text) == first);
  auto other = req;
  other.max_items = 3;
  CHECK(cache_key(other) != cache_key(req));
  CHECK_THROWS_AS(reopened.augment(other), CacheMiss);
  std::filesystem::remove_all(dir);
}

TEST_CASE("http client against the mock teacher") {
  MockTeacherOptions opt;
  opt.fixed_reply = kPepe;
  opt.flaky_ids = {"flaky"};
  opt.fail_ids = {"down"};
  MockTeacher teacher(opt);
  teacher.start();
  HttpProvider http(teacher.url(), fast_http());
  const auto r = http.augment({"m1", "some caption", "P5\n1 1\n255\n\x01", 5});
  CHECK(r.aug_text.item_count() == 1);
  CHECK(kf::serialize(r.aug_text) == kPepe);
  CHECK(r.provider_name == "http:" + teacher.url());

  CHECK(http.augment({"m2", "c", "", 0}).aug_text.item_count() == 0);
  CHECK(http.augment({"flaky", "c", "", 1}).aug_text.item_count() == 1);
  CHECK_THROWS_AS(http.augment({"down", "c", "", 1}), TransportError);
  teacher.stop();

  HttpProvider dead("http://127.0.0.1:1", fast_http());
  CHECK_THROWS_AS(dead.augment({"m1", "c", "", 1}), TransportError);
}

TEST_CASE("orphan markup from the teacher is repaired") {
  const auto d = small_synthetic();
  MockTeacherOptions opt;
  opt.kb = std::make_shared<kid::data::KnowledgeBase>(d.kb);
  opt.orphan_ids = {d.train[0].id};
  MockTeacher teacher(opt);
  teacher.start();
  HttpProvider http(teacher.url(), fast_http());
  const auto r = http.augment(make_request(d.train[0], 2));
  CHECK(r.aug_text.item_count() == 2);
  std::vector<kf::ParseWarning> w;
  kf::parse(kf::serialize(r.aug_text), &w);
  CHECK(w.empty());
}

TEST_CASE("build_augmented_dataset with the oracle") {
  kid::data::SyntheticConfig c;
  c.n_entities = 60;
  c.n_train = 100;
  c.n_val = 20;
  c.n_test = 40;
  const auto d = kid::data::generate_synthetic(c);
  OracleProvider oracle(std::make_shared<kid::data::KnowledgeBase>(d.kb));
  const auto r = build_augmented_dataset(d.train, oracle, 2);
  CHECK(r.manifest.failures.empty());
  CHECK(r.manifest.total == 100);
  for (const auto& s : r.samples) {
    REQUIRE(s.aug_text);
    CHECK(kf::parse(*s.aug_text).item_count() <= 2);
    CHECK(kf::parse(*s.aug_text).item_count() == 2);
  }
  const auto zero = build_augmented_dataset(d.train, oracle, 0);
  for (const auto& s : zero.samples) CHECK(kf::parse(*s.aug_text).item_count() == 0);
  const auto j = r.manifest.to_json();
  CHECK(j["provider"] == "oracle");
  CHECK(j["n"] == 2);
}

TEST_CASE("mock failures are collected until the threshold") {
  const auto d = small_synthetic();
  std::vector<kid::data::MemeSample> samples(d.train.begin(), d.train.begin() + 100);
  MockTeacherOptions opt;
  opt.kb = std::make_shared<kid::data::KnowledgeBase>(d.kb);
  opt.fail_ids = {samples[3].id, samples[50].id, samples[97].id};
  MockTeacher teacher(opt);
  teacher.start();
  HttpOptions http = fast_http();
  http.max_in_flight = 2;
  HttpProvider provider(teacher.url(), http);
  const auto r = build_augmented_dataset(samples, provider, 1, 0.05, 8);
  CHECK(r.manifest.failures == std::vector<std::string>{samples[3].id, samples[50].id, samples[97].id});
  CHECK_FALSE(r.samples[3].aug_text);
  CHECK(r.samples[4].aug_text);
  // Same answers as the oracle for the rest, regardless of worker count.
  OracleProvider oracle(opt.kb);
  const auto ref = build_augmented_dataset(samples, oracle, 1, 0.05, 1);
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (r.samples[i].aug_text) CHECK(*r.samples[i].aug_text == *ref.samples[i].aug_text);

  CHECK_THROWS_AS(build_augmented_dataset(samples, provider, 1, 0.02), FailureThresholdExceeded);
  try {
    build_augmented_dataset(samples, provider, 1, 0.02);
  } catch (const FailureThresholdExceeded& e) {
    CHECK(e.manifest.failures.size() == 3);
  }
}

TEST_CASE("provider specs") {
  const auto d = small_synthetic();
  auto kb = std::make_shared<kid::data::KnowledgeBase>(d.kb);
  CHECK(make_provider("oracle", kb)->name() == "oracle");
  CHECK(make_provider("http:http://127.0.0.1:9", kb)->name() == "http:http://127.0.0.1:9");
  const auto dir = temp_dir("spec");
  CHECK(make_provider("cache:" + (dir / "x.jsonl").string() + "+oracle", kb)->name() == "cache+oracle");
  CHECK_THROWS_AS(make_provider("oracle", nullptr), std::invalid_argument);
  CHECK_THROWS_AS(make_provider("ftp:x", kb), std::invalid_argument);
  std::filesystem::remove_all(dir);
}
