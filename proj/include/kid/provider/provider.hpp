// SPDX-License-Identifier: Apache-2.0
//
// Knowledge providers: something that turns (image, text) into an
// augmented description with at most max_items entity-knowledge items.

#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <semaphore>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "kid/data/sample.hpp"
#include "kid/data/synthetic.hpp"
#include "kid/knowledge/format.hpp"

namespace kid::provider {

struct ProviderRequest {
  std::string id;
  std::string text;
  std::string image_bytes;  // binary PGM
  std::size_t max_items = 0;
};

struct ProviderResponse {
  knowledge::AugmentedText aug_text;
  std::string provider_name;
  bool cached = false;
};

class ProviderError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Network failures and 5xx replies; worth retrying.
class TransportError : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

// Teacher output that still fails to parse after repair.
class MalformedOutput : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

class CacheMiss : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

class Provider {
 public:
  virtual ~Provider() = default;
  virtual ProviderResponse augment(const ProviderRequest& req) = 0;
  virtual std::string name() const = 0;
};

ProviderRequest make_request(const data::MemeSample& s, std::size_t max_items);

// Parses teacher output under the repair policy: a parse error or orphan
// entity triggers strip_orphan_delimiters and a second parse. Returns
// nullopt when that also fails. Items beyond max_items are truncated.
std::optional<knowledge::AugmentedText> parse_teacher_output(const std::string& raw, std::size_t max_items);

// Answers from the synthetic knowledge base.
class OracleProvider : public Provider {
 public:
  explicit OracleProvider(std::shared_ptr<const data::KnowledgeBase> kb) : kb_(std::move(kb)) {}
  ProviderResponse augment(const ProviderRequest& req) override;
  std::string name() const override { return "oracle"; }

 private:
  std::shared_ptr<const data::KnowledgeBase> kb_;
};

// Append-only JSONL cache {key, aug_text}; last write wins on load. With
// an inner provider, misses are forwarded and recorded; without one a miss
// throws CacheMiss.
class CachedProvider : public Provider {
 public:
  CachedProvider(std::filesystem::path file, std::unique_ptr<Provider> inner = nullptr);
  ProviderResponse augment(const ProviderRequest& req) override;
  std::string name() const override;
  std::size_t size() const;

 private:
  std::filesystem::path file_;
  std::unique_ptr<Provider> inner_;
  mutable std::mutex mu_;
  std::map<std::string, std::string> entries_;
};

std::string cache_key(const ProviderRequest& req);

struct HttpOptions {
  int attempts = 3;               // total tries per request on transport errors
  int backoff_ms = 50;            // doubled after each failure
  int timeout_ms = 5000;
  int max_in_flight = 4;
};

// POST {base}/augment {id, text, image_b64, max_items} -> {aug_text}.
class HttpProvider : public Provider {
 public:
  explicit HttpProvider(std::string base_url, HttpOptions options = {});
  ProviderResponse augment(const ProviderRequest& req) override;
  std::string name() const override { return "http:" + base_url_; }

 private:
  std::string post(const ProviderRequest& req);

  std::string base_url_;
  HttpOptions options_;
  std::counting_semaphore<> in_flight_;
};

// "oracle" (needs kb), "cache:<path>", "http:<url>", or
// "cache:<path>+http:<url>" for a caching HTTP client.
std::unique_ptr<Provider> make_provider(const std::string& spec, std::shared_ptr<const data::KnowledgeBase> kb,
                                        const HttpOptions& http = {});

std::string base64_encode(const std::string& bytes);

struct AugmentManifest {
  std::string provider_name;
  std::size_t n = 0;
  std::size_t total = 0;
  std::vector<std::string> failures;
  std::map<std::string, std::string> failure_reasons;
  double failure_rate() const { return total ? static_cast<double>(failures.size()) / total : 0.0; }
  nlohmann::ordered_json to_json() const;
};

class FailureThresholdExceeded : public ProviderError {
 public:
  FailureThresholdExceeded(const std::string& what, AugmentManifest manifest)
      : ProviderError(what), manifest(std::move(manifest)) {}
  AugmentManifest manifest;
};

struct AugmentResult {
  std::vector<data::MemeSample> samples;  // failed samples keep no aug_text
  AugmentManifest manifest;
};

// Fills aug_text for every sample; failures are collected. Throws
// FailureThresholdExceeded when the failure rate exceeds the threshold.
AugmentResult build_augmented_dataset(const std::vector<data::MemeSample>& samples, Provider& provider,
                                      std::size_t n, double max_failure_rate = 0.05, std::size_t workers = 4);

}  // namespace kid::provider
