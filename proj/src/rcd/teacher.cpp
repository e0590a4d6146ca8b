#include "forge/rcd/teacher.hpp"

#include <algorithm>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "forge/util/digest.hpp"
#include "forge/util/rng.hpp"
#include "forge/util/text.hpp"

namespace forge::rcd {

void TeacherClientConfig::validate() const {
  if (timeout.count() <= 0) throw std::invalid_argument("teacher timeout must be positive");
  if (backoff.count() < 0) throw std::invalid_argument("teacher backoff must be non-negative");
}

HttpTeacher::HttpTeacher(TeacherClientConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const auto scheme = cfg_.endpoint.find("://");
  if (scheme == std::string::npos) {
    throw std::invalid_argument("teacher endpoint must be an http URL: " + cfg_.endpoint);
  }
  const auto slash = cfg_.endpoint.find('/', scheme + 3);
  host_ = cfg_.endpoint.substr(0, slash);
  path_ = slash == std::string::npos ? "/" : cfg_.endpoint.substr(slash);
}

std::string HttpTeacher::complete(const std::string& prompt) {
  httplib::Client client(host_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg_.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(cfg_.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  const std::string body = nlohmann::json{{"prompt", prompt}}.dump();
  auto res = client.Post(path_, body, "application/json");
  if (!res) {
    throw TeacherError(TeacherError::Kind::transient,
                       "teacher request failed: " + httplib::to_string(res.error()));
  }
  if (res->status >= 500 || res->status == 408 || res->status == 429) {
    throw TeacherError(TeacherError::Kind::transient,
                       "teacher returned HTTP " + std::to_string(res->status));
  }
  if (res->status != 200) {
    throw TeacherError(TeacherError::Kind::permanent,
                       "teacher returned HTTP " + std::to_string(res->status));
  }
  try {
    auto j = nlohmann::json::parse(res->body);
    return j.at("text").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw TeacherError(TeacherError::Kind::malformed, "teacher payload: " + res->body);
  }
}

namespace {
struct PromptFields {
  std::string title, keywords, category, description;
  std::vector<std::string> queries;
};

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

PromptFields read_prompt(std::string_view prompt) {
  PromptFields f;
  std::istringstream in{std::string(prompt)};
  std::string line;
  bool in_queries = false;
  auto value = [&](std::string_view label) -> std::optional<std::string> {
    if (line.rfind(label, 0) == 0) return std::string(trim(std::string_view(line).substr(label.size())));
    return std::nullopt;
  };
  while (std::getline(in, line)) {
    if (auto v = value("Title:")) f.title = *v, in_queries = false;
    else if (auto v2 = value("Keywords:")) f.keywords = *v2, in_queries = false;
    else if (auto v3 = value("Category:")) f.category = *v3, in_queries = false;
    else if (auto v4 = value("Description:")) f.description = *v4, in_queries = false;
    else if (line.rfind("Queries:", 0) == 0) in_queries = true;
    else if (in_queries) {
      auto dot = line.find(". ");
      if (dot != std::string::npos && dot > 0 &&
          std::all_of(line.begin(), line.begin() + static_cast<long>(dot),
                      [](char c) { return c >= '0' && c <= '9'; })) {
        f.queries.emplace_back(trim(std::string_view(line).substr(dot + 2)));
      } else {
        in_queries = false;
      }
    }
  }
  return f;
}

std::vector<std::string> words(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ' ' || c == ',' || c == '\t') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}
}  // namespace

MockTeacher::MockTeacher(MockTeacherConfig cfg) : cfg_(cfg) {
  if (!(cfg_.failure_rate >= 0.0 && cfg_.failure_rate <= 1.0)) {
    throw std::invalid_argument("mock failure_rate must be in [0, 1]");
  }
}

MockTeacher::Fault MockTeacher::fault(std::string_view prompt, std::size_t attempt) const {
  if (cfg_.failure_rate <= 0.0) return Fault::none;
  Rng rng(splitmix64(stable_hash64(prompt, cfg_.seed) + splitmix64(attempt)));
  if (!rng.bernoulli(cfg_.failure_rate)) return Fault::none;
  const double u = rng.uniform01();
  if (u < cfg_.malformed_share) return Fault::malformed;
  return u < cfg_.malformed_share + (1.0 - cfg_.malformed_share) / 2 ? Fault::timeout
                                                                      : Fault::server_error;
}

std::string MockTeacher::respond(std::string_view prompt) const {
  const PromptFields f = read_prompt(prompt);
  if (prompt.find("Reason") != std::string_view::npos) {
    std::string out;
    for (std::size_t i = 0; i < f.queries.size(); ++i) {
      out += "Reason " + std::to_string(i + 1) + ": users searching " + f.queries[i] +
             " want " + f.title + ", which covers " + f.description + "\n";
    }
    return out;
  }
  if (prompt.find("Query") != std::string_view::npos) {
    std::size_t n = 3;
    if (auto pos = prompt.find("Generate "); pos != std::string_view::npos) {
      n = std::strtoul(std::string(prompt.substr(pos + 9, 4)).c_str(), nullptr, 10);
    }
    n = std::clamp<std::size_t>(n, 1, 20);
    auto visible = words(f.title);
    for (auto& w : words(f.keywords)) visible.push_back(std::move(w));
    auto hidden = words(f.description);
    if (visible.empty()) visible = {f.title};
    if (hidden.empty()) hidden = visible;
    Rng rng(stable_hash64(prompt, cfg_.seed ^ 0x51u));
    std::string out;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::string> q = {visible[rng.index(visible.size())],
                                    hidden[rng.index(hidden.size())]};
      if (rng.bernoulli(0.5)) std::swap(q[0], q[1]);
      out += "Query " + std::to_string(i + 1) + ": " + join(q, " ") + "\n";
    }
    return out;
  }
  std::string out = "Summary: " + f.title + " is a " +
                    (f.category.empty() ? std::string("general") : f.category) +
                    " service for " + f.keywords + ".\n";
  if (!f.description.empty()) out += "Background: " + f.title + " offers " + f.description + ".\n";
  return out;
}

std::string MockTeacher::complete(const std::string& prompt) {
  std::size_t attempt;
  {
    std::lock_guard lock(mu_);
    attempt = attempts_[prompt]++;
    log_.push_back(prompt);
  }
  switch (fault(prompt, attempt)) {
    case Fault::none: return respond(prompt);
    case Fault::timeout: throw TeacherError(TeacherError::Kind::transient, "mock timeout");
    case Fault::server_error: throw TeacherError(TeacherError::Kind::transient, "mock HTTP 503");
    case Fault::malformed: return "\x01<<garbled teacher payload>>";
  }
  return {};
}

std::size_t MockTeacher::calls() const {
  std::lock_guard lock(mu_);
  return log_.size();
}

std::vector<std::string> MockTeacher::call_log() const {
  std::lock_guard lock(mu_);
  return log_;
}

}  // namespace forge::rcd
