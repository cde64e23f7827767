// SPDX-License-Identifier: Apache-2.0
#include "kid/provider/mock_teacher.hpp"

#include <httplib.h>

#include "kid/util/io.hpp"

namespace kid::provider {

MockTeacher::MockTeacher(MockTeacherOptions options)
    : options_(std::move(options)), server_(std::make_unique<httplib::Server>()) {
  install();
}

MockTeacher::~MockTeacher() { stop(); }

bool MockTeacher::fails(const std::string& id) const {
  if (options_.fail_ids.count(id)) return true;
  if (options_.fail_fraction <= 0.0) return false;
  const double u = static_cast<double>(util::fnv1a64(id) >> 11) / 9007199254740992.0;
  return u < options_.fail_fraction;
}

void MockTeacher::install() {
  server_->Post("/augment", [this](const httplib::Request& req, httplib::Response& res) {
    ++requests_;
    nlohmann::json body;
    std::string id, text;
    std::size_t max_items = 0;
    try {
      body = nlohmann::json::parse(req.body);
      id = body.at("id").get<std::string>();
      text = body.at("text").get<std::string>();
      max_items = body.at("max_items").get<std::size_t>();
      body.at("image_b64").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      res.status = 400;
      res.set_content(nlohmann::json{{"error", std::string("bad request: ") + e.what()}}.dump(), "application/json");
      return;
    }
    if (fails(id)) {
      res.status = 503;
      res.set_content(R"({"error":"injected failure"})", "application/json");
      return;
    }
    if (options_.flaky_ids.count(id)) {
      std::lock_guard lock(mu_);
      if (seen_flaky_.insert(id).second) {
        res.status = 503;
        res.set_content(R"({"error":"transient failure"})", "application/json");
        return;
      }
    }
    std::string reply;
    if (options_.kb && options_.kb->knows(id)) {
      reply = knowledge::serialize(options_.kb->describe(id, max_items), knowledge::Format::inlined);
    } else if (!options_.fixed_reply.empty()) {
      reply = options_.fixed_reply;
    } else {
      reply = knowledge::escape(text);
    }
    if (options_.orphan_ids.count(id)) reply = "⟨" + text + "⟩ " + reply;
    res.set_content(nlohmann::json{{"aug_text", reply}}.dump(), "application/json");
  });
}

int MockTeacher::start(const std::string& host, int port) {
  if (port == 0) {
    port_ = server_->bind_to_any_port(host);
  } else {
    port_ = server_->bind_to_port(host, port) ? port : -1;
  }
  if (port_ <= 0) throw std::runtime_error("mock teacher: cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void MockTeacher::run(const std::string& host, int port) {
  port_ = port;
  if (!server_->listen(host, port)) {
    throw std::runtime_error("mock teacher: cannot listen on " + host + ":" + std::to_string(port));
  }
}

void MockTeacher::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace kid::provider
