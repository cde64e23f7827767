// SPDX-License-Identifier: Apache-2.0
//
// In-process HTTP teacher used by tests and the mock-teacher command. It
// answers POST /augment from a synthetic knowledge base, or with a fixed
// reply, and can be told to fail or misbehave for chosen sample ids.

#pragma once

#include <atomic>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>

#include "kid/data/synthetic.hpp"

namespace httplib {
class Server;
}

namespace kid::provider {

struct MockTeacherOptions {
  std::shared_ptr<const data::KnowledgeBase> kb;  // oracle answers when set
  std::string fixed_reply;                          // used when kb is null or lacks the id
  std::set<std::string> fail_ids;                   // always 503
  double fail_fraction = 0.0;                       // extra ids failing by stable hash
  std::set<std::string> flaky_ids;                  // 503 on the first request only
  std::set<std::string> orphan_ids;                 // reply carries an orphan entity
};

class MockTeacher {
 public:
  explicit MockTeacher(MockTeacherOptions options);
  ~MockTeacher();
  MockTeacher(const MockTeacher&) = delete;
  MockTeacher& operator=(const MockTeacher&) = delete;

  // Binds (port 0 picks a free port) and serves on a background thread.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  // Serves on the calling thread until stop().
  void run(const std::string& host, int port);
  void stop();

  int port() const { return port_; }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  std::size_t requests() const { return requests_; }

  bool fails(const std::string& id) const;

 private:
  void install();

  MockTeacherOptions options_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<std::size_t> requests_{0};
  std::mutex mu_;
  std::set<std::string> seen_flaky_;
};

}  // namespace kid::provider
