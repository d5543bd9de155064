#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <optional>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "cotd/error.hpp"
#include "cotd/teacher.hpp"

namespace cotd {

struct HttpTeacherConfig {
  std::string endpoint;  // e.g. http://localhost:8000/v1/completions
  std::string api_key;
  std::string model;     // sent only when non-empty
  int timeout_seconds = 120;

  /// From TEACHER_ENDPOINT / TEACHER_API_KEY (and optional TEACHER_MODEL).
  static HttpTeacherConfig from_env() {
    HttpTeacherConfig c;
    if (const char* e = std::getenv("TEACHER_ENDPOINT")) c.endpoint = e;
    if (const char* k = std::getenv("TEACHER_API_KEY")) c.api_key = k;
    if (const char* m = std::getenv("TEACHER_MODEL")) c.model = m;
    return c;
  }
};

/// Completion-endpoint client. Request body:
///   {prompt, n, max_tokens, temperature, logprobs}
/// Reply: {choices: [{index, text, logprobs: {tokens: [...], top_logprobs: [{tok: lp}...]}}]}
class HttpTeacher final : public TeacherClient {
public:
  explicit HttpTeacher(HttpTeacherConfig config) : config_(std::move(config)) {
    if (config_.endpoint.empty()) throw ValidationError("TEACHER_ENDPOINT is not set");
    const auto scheme_end = config_.endpoint.find("://");
    const auto path_start =
        config_.endpoint.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    base_ = config_.endpoint.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/" : config_.endpoint.substr(path_start);
  }

  static nlohmann::json request_body(const CompletionRequest& r, const std::string& model = {}) {
    nlohmann::json body = {{"prompt", r.prompt},
                           {"n", r.n},
                           {"max_tokens", r.params.max_tokens},
                           {"temperature", r.params.temperature},
                           {"logprobs", r.params.top_logprobs}};
    if (!model.empty()) body["model"] = model;
    return body;
  }

  /// Converts a reply body into completions ordered by choice index.
  static std::vector<Completion> parse_reply(const nlohmann::json& reply) {
    std::vector<std::pair<std::size_t, Completion>> indexed;
    std::size_t position = 0;
    for (const auto& choice : reply.at("choices")) {
      Completion c;
      c.text = choice.at("text").get<std::string>();
      if (choice.contains("logprobs") && !choice.at("logprobs").is_null()) {
        const auto& lp = choice.at("logprobs");
        const auto& tokens = lp.at("tokens");
        const auto& tops = lp.at("top_logprobs");
        if (tokens.size() != tops.size()) throw ValidationError("logprobs: tokens/top_logprobs length differ");
        for (std::size_t i = 0; i < tokens.size(); ++i) {
          TeacherStep step;
          step.chosen_surface = tokens[i].get<std::string>();
          if (!tops[i].is_null())
            for (const auto& [surface, logp] : tops[i].items())
              step.top_k.emplace_back(surface, std::exp(logp.get<double>()));
          std::stable_sort(step.top_k.begin(), step.top_k.end(),
                           [](const auto& a, const auto& b) { return a.second > b.second; });
          c.steps.push_back(std::move(step));
        }
      }
      const std::size_t index = choice.value("index", position);
      indexed.emplace_back(index, std::move(c));
      ++position;
    }
    std::stable_sort(indexed.begin(), indexed.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<Completion> out;
    out.reserve(indexed.size());
    for (auto& [i, c] : indexed) out.push_back(std::move(c));
    return out;
  }

  std::vector<Completion> complete(const CompletionRequest& request) override {
    httplib::Client client(base_);
    client.set_read_timeout(config_.timeout_seconds, 0);
    client.set_connection_timeout(10, 0);
    httplib::Headers headers;
    if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
    auto res = client.Post(path_, headers, request_body(request, config_.model).dump(), "application/json");
    if (!res) throw EndpointError(-1, request.first_sample, httplib::to_string(res.error()));
    if (res->status != 200) throw EndpointError(res->status, request.first_sample, res->body.substr(0, 200));
    std::vector<Completion> out;
    try {
      out = parse_reply(nlohmann::json::parse(res->body));
    } catch (const nlohmann::json::exception& e) {
      throw EndpointError(res->status, request.first_sample, std::string("malformed reply: ") + e.what());
    }
    if (out.size() != request.n)
      throw EndpointError(res->status, request.first_sample + out.size(),
                          "expected " + std::to_string(request.n) + " choices");
    return out;
  }

private:
  HttpTeacherConfig config_;
  std::string base_;
  std::string path_;
};

}  // namespace cotd
