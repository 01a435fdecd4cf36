#pragma once

#include <httplib.h>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "groundkit/errors.hpp"
#include "groundkit/geometry.hpp"
#include "groundkit/hash.hpp"
#include "groundkit/image.hpp"

namespace groundkit {

struct ChatRequest {
  std::vector<RasterImage> images;  // one, or two for refinement stages
  std::string prompt;
  int max_tokens = 512;
  double temperature = 0.0;

  void validate() const {
    if (images.empty() || images.size() > 2) {
      throw ArgumentError("chat request must carry 1 or 2 images, got " + std::to_string(images.size()));
    }
    if (max_tokens < 1) throw ArgumentError("max_tokens must be >= 1");
    if (!(temperature >= 0.0)) throw ArgumentError("temperature must be >= 0");
  }
};

// What the controller knows about the call it is making. Network models
// ignore it; offline mocks read it to answer exactly, and the response cache
// uses the identifying fields for its key.
struct StageContext {
  std::string sample_id;
  std::string method_digest;
  std::string method_kind;
  int stage = 0;
  int shown_w = 0;  // dimensions of the last image in the request
  int shown_h = 0;
  std::optional<GridSpec> grid;  // grid drawn on the last image, if any
  Transform to_original;         // last image pixels -> original pixels
  std::optional<BBox> gt;        // ground truth, original pixels (mocks only)
};

struct Completion {
  std::string text;
  int attempts = 1;
  int prompt_tokens = 0;
  int completion_tokens = 0;
  bool from_cache = false;
};

class Model {
 public:
  virtual ~Model() = default;
  virtual std::string name() const = 0;
  virtual Completion complete(const ChatRequest& req, const StageContext& ctx) = 0;
};

// Shortest decimal form: integers without a fraction, otherwise up to three
// decimals with trailing zeros trimmed.
inline std::string format_number(double v) {
  if (std::abs(v - std::round(v)) < 1e-9) return std::to_string(static_cast<long long>(std::llround(v)));
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(3);
  os << v;
  std::string s = os.str();
  while (!s.empty() && s.back() == '0') s.pop_back();
  if (!s.empty() && s.back() == '.') s.pop_back();
  return s;
}

inline std::string format_point(const Point& p) {
  return "(" + format_number(p.x) + ", " + format_number(p.y) + ")";
}

inline std::string format_extremity_ids(const ExtremityIds& ids) {
  return "leftmost: " + std::to_string(ids.leftmost) + ", topmost: " + std::to_string(ids.topmost) +
         ", rightmost: " + std::to_string(ids.rightmost) + ", bottommost: " + std::to_string(ids.bottommost);
}

// The answer a flawless reader of the overlay would give: extremity cell ids
// of the ground truth under the current grid, or the ground-truth center in
// the shown image's pixels.
inline std::string mock_perfect_reader(const StageContext& ctx) {
  if (!ctx.gt) throw ArgumentError("perfect reader needs the sample ground truth");
  const BBox shown = transform_to_crop(*ctx.gt, ctx.to_original);
  if (ctx.grid) return format_extremity_ids(extremity_ids_for(*ctx.grid, shown));
  return format_point(shown.center());
}

class PerfectReaderModel : public Model {
 public:
  std::string name() const override { return "mock-perfect"; }
  Completion complete(const ChatRequest& req, const StageContext& ctx) override {
    req.validate();
    return {mock_perfect_reader(ctx)};
  }
};

class ScriptExhaustedError : public Error {
 public:
  using Error::Error;
};

// Replays scripted answers in order, one per call.
class FixedResponderModel : public Model {
 public:
  explicit FixedResponderModel(std::vector<std::string> script, std::string name = "mock-fixed")
      : script_(script.begin(), script.end()), name_(std::move(name)) {}

  std::string name() const override { return name_; }
  Completion complete(const ChatRequest& req, const StageContext&) override {
    req.validate();
    std::lock_guard lock(mu_);
    if (script_.empty()) throw ScriptExhaustedError("fixed responder script exhausted after " +
                                                    std::to_string(calls_) + " calls");
    ++calls_;
    Completion c{std::move(script_.front())};
    script_.pop_front();
    return c;
  }
  int calls() const {
    std::lock_guard lock(mu_);
    return calls_;
  }
  std::size_t remaining() const {
    std::lock_guard lock(mu_);
    return script_.size();
  }

 private:
  mutable std::mutex mu_;
  std::deque<std::string> script_;
  std::string name_;
  int calls_ = 0;
};

// Same answer for every call.
class ConstantResponderModel : public Model {
 public:
  explicit ConstantResponderModel(std::string text, std::string name = "mock-constant")
      : text_(std::move(text)), name_(std::move(name)) {}
  std::string name() const override { return name_; }
  Completion complete(const ChatRequest& req, const StageContext&) override {
    req.validate();
    return {text_};
  }

 private:
  std::string text_;
  std::string name_;
};

// Always answers the center of the shown image.
class CenterResponderModel : public Model {
 public:
  std::string name() const override { return "mock-center"; }
  Completion complete(const ChatRequest& req, const StageContext& ctx) override {
    req.validate();
    return {format_point({ctx.shown_w / 2.0, ctx.shown_h / 2.0})};
  }
};

// Grants at most one request per 1/rate seconds, shared by every caller.
// Grants are spaced by at least the interval, so any one-second window sees
// at most ceil(rate) of them.
class RateLimiter {
 public:
  using Clock = std::chrono::steady_clock;

  explicit RateLimiter(double per_second) {
    if (!(per_second > 0.0)) throw ConfigError("rate_limit must be > 0");
    interval_ = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(1.0 / per_second));
  }

  Clock::time_point acquire() {
    std::lock_guard lock(mu_);
    if (has_last_) {
      const auto earliest = last_ + interval_;
      while (Clock::now() < earliest) std::this_thread::sleep_until(earliest);
    }
    last_ = Clock::now();
    has_last_ = true;
    return last_;
  }

 private:
  std::mutex mu_;
  Clock::duration interval_{};
  Clock::time_point last_{};
  bool has_last_ = false;
};

struct ModelEndpoint {
  std::string base_url;                     // e.g. https://host/v1
  std::string model_name;
  std::string auth_env = "GROUND_API_KEY";  // variable name; empty means no auth header
  double request_timeout_s = 120.0;
  int max_retries = 3;
  double rate_limit = 2.0;  // requests per second
  double backoff_initial_s = 1.0;
  double backoff_max_s = 30.0;

  void validate() const {
    if (base_url.empty()) throw ConfigError("endpoint base_url is empty (set --base-url or GROUND_BASE_URL)");
    if (model_name.empty()) throw ConfigError("endpoint model_name is empty");
    if (max_retries < 0) throw ConfigError("max_retries must be >= 0");
    if (!(rate_limit > 0.0)) throw ConfigError("rate_limit must be > 0");
    if (!(request_timeout_s > 0.0)) throw ConfigError("request_timeout must be > 0");
  }
};

// OpenAI-compatible chat-completions body; images travel as base64 PNG.
inline nlohmann::json build_chat_body(const std::string& model_name, const ChatRequest& req) {
  nlohmann::json content = nlohmann::json::array();
  content.push_back({{"type", "text"}, {"text", req.prompt}});
  for (const auto& img : req.images) {
    const auto png = encode_png(img);
    content.push_back(
        {{"type", "image_url"}, {"image_url", {{"url", "data:image/png;base64," + base64_encode(png)}}}});
  }
  return {{"model", model_name},
          {"messages", nlohmann::json::array({{{"role", "user"}, {"content", content}}})},
          {"max_tokens", req.max_tokens},
          {"temperature", req.temperature}};
}

inline Completion parse_chat_response(const std::string& body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception&) {
    throw TransportError("chat response is not JSON");
  }
  if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty()) {
    throw TransportError("chat response has no choices");
  }
  const auto& msg = j["choices"][0].value("message", nlohmann::json::object());
  Completion c;
  const auto content = msg.value("content", nlohmann::json());
  if (content.is_string()) {
    c.text = content.get<std::string>();
  } else if (content.is_array()) {
    for (const auto& part : content) {
      if (part.is_object() && part.value("type", "") == "text") c.text += part.value("text", "");
    }
  }
  if (j.contains("usage") && j["usage"].is_object()) {
    c.prompt_tokens = j["usage"].value("prompt_tokens", 0);
    c.completion_tokens = j["usage"].value("completion_tokens", 0);
  }
  return c;
}

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;    // prefix without trailing slash
};

inline ParsedUrl split_base_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("base_url must start with http:// or https://");
  const auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") throw ConfigError("base_url scheme must be http or https");
  const auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl out{url.substr(0, path_start), path_start == std::string::npos ? "" : url.substr(path_start)};
  while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
  return out;
}

// Chat-completions client with retries, exponential backoff and a shared
// rate limiter. The API key is read from the environment variable named by
// the endpoint and never written to logs or errors.
class HttpModel : public Model {
 public:
  explicit HttpModel(ModelEndpoint ep) : ep_(std::move(ep)) {
    ep_.validate();
    url_ = split_base_url(ep_.base_url);
    limiter_ = std::make_shared<RateLimiter>(ep_.rate_limit);
    if (!ep_.auth_env.empty()) {
      const char* key = std::getenv(ep_.auth_env.c_str());
      if (key == nullptr || *key == '\0') {
        throw ConfigError("environment variable " + ep_.auth_env + " is not set");
      }
      token_ = key;
    }
  }

  std::string name() const override { return ep_.model_name; }
  const ModelEndpoint& endpoint() const { return ep_; }

  Completion complete(const ChatRequest& req, const StageContext&) override {
    req.validate();
    const std::string body = build_chat_body(ep_.model_name, req).dump();
    httplib::Headers headers;
    if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);

    std::string last_error;
    for (int attempt = 0; attempt <= ep_.max_retries; ++attempt) {
      if (attempt > 0) {
        const double wait = std::min(ep_.backoff_max_s, ep_.backoff_initial_s * std::pow(2.0, attempt - 1));
        std::this_thread::sleep_for(std::chrono::duration<double>(wait));
      }
      limiter_->acquire();
      httplib::Client cli(url_.origin);
      const auto timeout = std::chrono::duration<double>(ep_.request_timeout_s);
      cli.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
      cli.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
      cli.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
      auto res = cli.Post(url_.path + "/chat/completions", headers, body, "application/json");
      if (!res) {
        last_error = "connection error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status >= 200 && res->status < 300) {
        Completion c = parse_chat_response(res->body);
        c.attempts = attempt + 1;
        return c;
      }
      if (res->status == 429 || res->status >= 500) {
        last_error = "HTTP " + std::to_string(res->status);
        continue;
      }
      throw RequestError(res->status, "HTTP " + std::to_string(res->status) + ": " + server_message(res->body));
    }
    throw TransportError("request to " + url_.origin + " failed after " + std::to_string(ep_.max_retries + 1) +
                         " attempts: " + last_error);
  }

 private:
  static std::string server_message(const std::string& body) {
    try {
      const auto j = nlohmann::json::parse(body);
      if (j.contains("error")) {
        const auto& e = j["error"];
        if (e.is_string()) return e.get<std::string>();
        if (e.is_object() && e.contains("message") && e["message"].is_string()) return e["message"].get<std::string>();
      }
    } catch (const nlohmann::json::exception&) {
    }
    return body.substr(0, 300);
  }

  ModelEndpoint ep_;
  ParsedUrl url_;
  std::shared_ptr<RateLimiter> limiter_;
  std::string token_;
};

}  // namespace groundkit
