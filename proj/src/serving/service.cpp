#include "forge/serving/service.hpp"

#include <algorithm>
#include <cmath>

#include <httplib.h>
#include <json.hpp>

namespace forge::serving {

namespace {
constexpr std::size_t kLatencyWindow = 4096;
}

std::string_view to_string(Tier t) { return t == Tier::cache ? "cache" : "online"; }

ModelScorer::ModelScorer(mlm::Checkpoint ckpt, corpus::Catalog catalog, mlm::RelevancePrompt prompt)
    : ckpt_(std::move(ckpt)),
      catalog_(std::move(catalog)),
      prompt_(std::move(prompt)),
      verbalizers_(mlm::verbalizer_ids(prompt_, ckpt_.vocab)) {}

double ModelScorer::score(std::string_view query, std::string_view item_id) const {
  auto it = catalog_.find(item_id);
  if (it == catalog_.end()) throw std::runtime_error("unknown item_id '" + std::string(item_id) + "'");
  const std::string q = corpus::normalize_text(query);
  if (q.empty()) throw std::invalid_argument("empty query");
  const auto ex = mlm::pet_render(prompt_, ckpt_.vocab, q, it->second);
  return mlm::relevance_from_example(ckpt_.model, ex, verbalizers_).score;
}

RelevanceService::RelevanceService(std::shared_ptr<const Snapshot> snapshot,
                                   std::shared_ptr<const OnlineScorer> online)
    : snapshot_(snapshot ? std::move(snapshot) : std::make_shared<const Snapshot>()),
      online_(std::move(online)) {
  latencies_.reserve(kLatencyWindow);
}

std::shared_ptr<const Snapshot> RelevanceService::snapshot() const {
  std::lock_guard lock(snapshot_mu_);
  return snapshot_;
}

ScoredResult RelevanceService::score_with_fallback(std::string_view query,
                                                   std::string_view item_id) {
  const auto start = std::chrono::steady_clock::now();
  const auto snap = snapshot();
  ScoredResult r;
  if (auto cached = snap->lookup(query, item_id)) {
    hits_.fetch_add(1, std::memory_order_relaxed);
    r.score = *cached;
    r.tier = Tier::cache;
    r.snapshot_version = snap->header().version;
  } else {
    misses_.fetch_add(1, std::memory_order_relaxed);
    r.tier = Tier::online;
    try {
      if (!online_) throw std::runtime_error("no online model configured");
      r.score = online_->score(query, item_id);
    } catch (const std::exception& e) {
      errors_.fetch_add(1, std::memory_order_relaxed);
      r.error = e.what();
    }
  }
  r.relevant = r.error.empty() && r.score >= 0.5;
  record_latency(
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count());
  return r;
}

SwapResult RelevanceService::swap_snapshot(std::shared_ptr<const Snapshot> next) {
  if (!next) return {false, "", "null snapshot"};
  std::lock_guard swap_lock(swap_mu_);
  SwapResult r{true, next->header().version, ""};
  std::shared_ptr<const Snapshot> old;
  {
    std::lock_guard lock(snapshot_mu_);
    old = std::exchange(snapshot_, std::move(next));
  }
  // `old` is released here, outside the lock; readers still holding it keep it alive.
  return r;
}

SwapResult RelevanceService::swap_snapshot(const std::filesystem::path& path) {
  std::shared_ptr<const Snapshot> next;
  try {
    next = std::make_shared<const Snapshot>(load_snapshot(path));
  } catch (const std::exception& e) {
    return {false, "", e.what()};
  }
  return swap_snapshot(std::move(next));
}

double RelevanceService::hit_rate() const {
  const auto h = hits_.load();
  const auto m = misses_.load();
  if (h + m == 0) throw std::logic_error("hit_rate undefined before the first lookup");
  return static_cast<double>(h) / static_cast<double>(h + m);
}

void RelevanceService::reset_counters() {
  hits_ = 0;
  misses_ = 0;
  errors_ = 0;
  std::lock_guard lock(latency_mu_);
  latencies_.clear();
  latency_next_ = 0;
}

void RelevanceService::record_latency(double ms) {
  std::lock_guard lock(latency_mu_);
  if (latencies_.size() < kLatencyWindow) {
    latencies_.push_back(ms);
  } else {
    latencies_[latency_next_] = ms;
    latency_next_ = (latency_next_ + 1) % kLatencyWindow;
  }
}

ServiceMetrics RelevanceService::metrics() const {
  ServiceMetrics m;
  m.hits = hits_.load();
  m.misses = misses_.load();
  m.errors = errors_.load();
  if (m.hits + m.misses > 0) {
    m.hit_rate = static_cast<double>(m.hits) / static_cast<double>(m.hits + m.misses);
  }
  std::vector<double> lat;
  {
    std::lock_guard lock(latency_mu_);
    lat = latencies_;
  }
  if (!lat.empty()) {
    std::sort(lat.begin(), lat.end());
    auto pct = [&](double p) {
      const auto idx = static_cast<std::size_t>(std::ceil(p * static_cast<double>(lat.size()))) - 1;
      return lat[std::min(idx, lat.size() - 1)];
    };
    m.p50_ms = pct(0.50);
    m.p99_ms = pct(0.99);
  }
  return m;
}

struct HttpFrontend::Impl {
  RelevanceService& service;
  httplib::Server server;
  explicit Impl(RelevanceService& s) : service(s) {}
};

HttpFrontend::HttpFrontend(RelevanceService& service) : impl_(std::make_unique<Impl>(service)) {
  auto& svc = impl_->service;
  auto json_reply = [](httplib::Response& res, int status, const nlohmann::ordered_json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  };
  impl_->server.Post("/score", [&svc, json_reply](const httplib::Request& req, httplib::Response& res) {
    std::string query, item_id;
    try {
      auto j = nlohmann::json::parse(req.body);
      query = j.at("query").get<std::string>();
      item_id = j.at("item_id").get<std::string>();
    } catch (const std::exception& e) {
      json_reply(res, 400, {{"error", std::string("bad request: ") + e.what()}});
      return;
    }
    const ScoredResult r = svc.score_with_fallback(query, item_id);
    nlohmann::ordered_json body;
    if (!r.error.empty()) {
      body["error"] = r.error;
      body["tier"] = to_string(r.tier);
      json_reply(res, 503, body);
      return;
    }
    body["score"] = r.score;
    body["relevant"] = r.relevant;
    body["tier"] = to_string(r.tier);
    body["snapshot"] = r.snapshot_version ? nlohmann::ordered_json(*r.snapshot_version)
                                          : nlohmann::ordered_json(nullptr);
    json_reply(res, 200, body);
  });
  impl_->server.Get("/healthz", [&svc, json_reply](const httplib::Request&, httplib::Response& res) {
    const auto snap = svc.snapshot();
    json_reply(res, 200, {{"status", "ok"}, {"snapshot", snap->header().version},
                          {"entries", snap->size()}});
  });
  impl_->server.Get("/metrics", [&svc, json_reply](const httplib::Request&, httplib::Response& res) {
    const ServiceMetrics m = svc.metrics();
    nlohmann::ordered_json body;
    body["hits"] = m.hits;
    body["misses"] = m.misses;
    body["errors"] = m.errors;
    body["hit_rate"] = m.hit_rate ? nlohmann::ordered_json(*m.hit_rate) : nlohmann::ordered_json(nullptr);
    body["p50_ms"] = m.p50_ms;
    body["p99_ms"] = m.p99_ms;
    json_reply(res, 200, body);
  });
  impl_->server.Post("/admin/swap", [&svc, json_reply](const httplib::Request& req, httplib::Response& res) {
    std::string path;
    try {
      path = nlohmann::json::parse(req.body).at("snapshot").get<std::string>();
    } catch (const std::exception& e) {
      json_reply(res, 400, {{"ok", false}, {"error", std::string("bad request: ") + e.what()}});
      return;
    }
    const SwapResult r = svc.swap_snapshot(std::filesystem::path(path));
    if (r.ok) {
      json_reply(res, 200, {{"ok", true}, {"version", r.version}});
    } else {
      json_reply(res, 409, {{"ok", false}, {"error", r.error}});
    }
  });
}

HttpFrontend::~HttpFrontend() { stop(); }

int HttpFrontend::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool HttpFrontend::serve() { return impl_->server.listen_after_bind(); }

void HttpFrontend::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace forge::serving
