// SPDX-License-Identifier: Apache-2.0
#include "kid/provider/provider.hpp"

#include <atomic>
#include <chrono>
#include <fstream>
#include <thread>

#include <boost/archive/iterators/base64_from_binary.hpp>
#include <boost/archive/iterators/transform_width.hpp>
#include <httplib.h>

#include "kid/util/io.hpp"

namespace kid::provider {

namespace kf = knowledge;

ProviderRequest make_request(const data::MemeSample& s, std::size_t max_items) {
  return {s.id, s.text, data::pgm_bytes(s.image), max_items};
}

std::optional<kf::AugmentedText> parse_teacher_output(const std::string& raw, std::size_t max_items) {
  auto attempt = [&](const std::string& text) -> std::optional<kf::AugmentedText> {
    std::vector<kf::ParseWarning> warnings;
    try {
      auto t = kf::parse(text, &warnings);
      if (!warnings.empty()) return std::nullopt;
      return kf::truncate_to_n(t, max_items);
    } catch (const kf::ParseError&) {
      return std::nullopt;
    }
  };
  if (auto t = attempt(raw)) return t;
  return attempt(kf::strip_orphan_delimiters(raw));
}

ProviderResponse OracleProvider::augment(const ProviderRequest& req) {
  if (!kb_->knows(req.id)) throw ProviderError("oracle: no knowledge for sample '" + req.id + "'");
  return {kb_->describe(req.id, req.max_items), name(), false};
}

std::string cache_key(const ProviderRequest& req) {
  std::string material;
  for (const std::string* part : {&req.id, &req.text, &req.image_bytes}) {
    material += std::to_string(part->size());
    material += ':';
    material += *part;
  }
  material += std::to_string(req.max_items);
  return util::hex64(util::fnv1a64(material));
}

CachedProvider::CachedProvider(std::filesystem::path file, std::unique_ptr<Provider> inner)
    : file_(std::move(file)), inner_(std::move(inner)) {
  std::ifstream in(file_);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      entries_[j.at("key").get<std::string>()] = j.at("aug_text").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw ProviderError(file_.string() + ":" + std::to_string(lineno) + ": bad cache line: " + e.what());
    }
  }
}

std::string CachedProvider::name() const { return inner_ ? "cache+" + inner_->name() : "cache"; }

std::size_t CachedProvider::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

ProviderResponse CachedProvider::augment(const ProviderRequest& req) {
  const std::string key = cache_key(req);
  {
    std::lock_guard lock(mu_);
    if (auto it = entries_.find(key); it != entries_.end()) {
      return {kf::parse(it->second), name(), true};
    }
  }
  if (!inner_) throw CacheMiss("cache: no entry for sample '" + req.id + "'");
  ProviderResponse r = inner_->augment(req);
  const std::string text = kf::serialize(r.aug_text, kf::Format::inlined);
  {
    std::lock_guard lock(mu_);
    entries_[key] = text;
    if (!file_.parent_path().empty()) std::filesystem::create_directories(file_.parent_path());
    std::ofstream out(file_, std::ios::app | std::ios::binary);
    out << nlohmann::json{{"key", key}, {"aug_text", text}}.dump() << '\n';
    if (!out) throw ProviderError("cache: cannot append to " + file_.string());
  }
  r.provider_name = name();
  r.cached = false;
  return r;
}

std::string base64_encode(const std::string& bytes) {
  using namespace boost::archive::iterators;
  using It = base64_from_binary<transform_width<std::string::const_iterator, 6, 8>>;
  std::string out(It(bytes.begin()), It(bytes.end()));
  out.append((3 - bytes.size() % 3) % 3, '=');
  return out;
}

HttpProvider::HttpProvider(std::string base_url, HttpOptions options)
    : base_url_(std::move(base_url)), options_(options), in_flight_(std::max(1, options.max_in_flight)) {
  while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
}

std::string HttpProvider::post(const ProviderRequest& req) {
  const nlohmann::json body = {{"id", req.id},
                               {"text", req.text},
                               {"image_b64", base64_encode(req.image_bytes)},
                               {"max_items", req.max_items}};
  const std::string payload = body.dump();
  std::string last_error;
  int backoff = options_.backoff_ms;
  for (int attempt = 0; attempt < std::max(1, options_.attempts); ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
      backoff *= 2;
    }
    in_flight_.acquire();
    httplib::Result res = [&] {
      httplib::Client client(base_url_);
      const auto t = std::chrono::milliseconds(options_.timeout_ms);
      client.set_connection_timeout(t);
      client.set_read_timeout(t);
      client.set_write_timeout(t);
      return client.Post("/augment", payload, "application/json");
    }();
    in_flight_.release();
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "status " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      std::string msg = "status " + std::to_string(res->status);
      try {
        msg += ": " + nlohmann::json::parse(res->body).at("error").get<std::string>();
      } catch (const nlohmann::json::exception&) {
      }
      throw ProviderError("http: sample '" + req.id + "' rejected with " + msg);
    }
    try {
      return nlohmann::json::parse(res->body).at("aug_text").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw MalformedOutput("http: sample '" + req.id + "' reply is not {aug_text}: " + e.what());
    }
  }
  throw TransportError("http: sample '" + req.id + "' failed after " + std::to_string(options_.attempts) +
                       " attempts (" + last_error + ") at " + base_url_);
}

ProviderResponse HttpProvider::augment(const ProviderRequest& req) {
  // Repair policy: strip orphan delimiters, then ask once more.
  for (int round = 0; round < 2; ++round) {
    if (auto t = parse_teacher_output(post(req), req.max_items)) return {std::move(*t), name(), false};
  }
  throw MalformedOutput("http: sample '" + req.id + "' output does not parse after repair and retry");
}

std::unique_ptr<Provider> make_provider(const std::string& spec, std::shared_ptr<const data::KnowledgeBase> kb,
                                        const HttpOptions& http) {
  if (spec == "oracle") {
    if (!kb) throw std::invalid_argument("provider 'oracle' needs a knowledge base file");
    return std::make_unique<OracleProvider>(std::move(kb));
  }
  if (spec.rfind("http:", 0) == 0) return std::make_unique<HttpProvider>(spec.substr(5), http);
  if (spec.rfind("cache:", 0) == 0) {
    const std::string rest = spec.substr(6);
    const auto plus = rest.find('+');
    if (plus == std::string::npos) return std::make_unique<CachedProvider>(rest);
    return std::make_unique<CachedProvider>(rest.substr(0, plus), make_provider(rest.substr(plus + 1), kb, http));
  }
  throw std::invalid_argument("unknown provider spec '" + spec + "' (oracle | cache:<path> | http:<url>)");
}

nlohmann::ordered_json AugmentManifest::to_json() const {
  nlohmann::ordered_json reasons = nlohmann::ordered_json::object();
  for (const auto& [id, why] : failure_reasons) reasons[id] = why;
  return {{"provider", provider_name}, {"n", n},
          {"total", total},            {"succeeded", total - failures.size()},
          {"failures", failures},      {"failure_rate", failure_rate()},
          {"failure_reasons", reasons}};
}

AugmentResult build_augmented_dataset(const std::vector<data::MemeSample>& samples, Provider& provider,
                                      std::size_t n, double max_failure_rate, std::size_t workers) {
  AugmentResult out;
  out.samples = samples;
  out.manifest.provider_name = provider.name();
  out.manifest.n = n;
  out.manifest.total = samples.size();
  std::vector<std::string> errors(samples.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < samples.size(); i = next++) {
      try {
        const auto r = provider.augment(make_request(samples[i], n));
        out.samples[i].aug_text = kf::serialize(r.aug_text, kf::Format::inlined);
      } catch (const std::exception& e) {
        out.samples[i].aug_text.reset();
        errors[i] = e.what();
        if (errors[i].empty()) errors[i] = "unknown error";
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < std::max<std::size_t>(1, workers); ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  // Collected in input order, independent of scheduling.
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (errors[i].empty()) continue;
    out.manifest.failures.push_back(samples[i].id);
    out.manifest.failure_reasons[samples[i].id] = errors[i];
  }
  if (out.manifest.failure_rate() > max_failure_rate) {
    throw FailureThresholdExceeded("augment: " + std::to_string(out.manifest.failures.size()) + " of " +
                                       std::to_string(out.manifest.total) + " samples failed (limit " +
                                       std::to_string(max_failure_rate) + ")",
                                   out.manifest);
  }
  return out;
}

}  // namespace kid::provider
