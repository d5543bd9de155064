#include <cmath>
#include <cstdlib>
#include <thread>

#include <gtest/gtest.h>

#include "cotd/http_teacher.hpp"

using namespace cotd;

namespace {

// Local completion endpoint; records the last request it saw.
class FakeEndpoint {
public:
  explicit FakeEndpoint(int status = 200) {
    server_.Post("/v1/completions", [this, status](const httplib::Request& req, httplib::Response& res) {
      last_body = nlohmann::json::parse(req.body);
      last_auth = req.get_header_value("Authorization");
      if (status != 200) {
        res.status = status;
        res.set_content("overloaded", "text/plain");
        return;
      }
      nlohmann::json choices = nlohmann::json::array();
      const auto n = last_body.at("n").get<std::size_t>();
      // Deliberately out of order: the client sorts by index.
      for (std::size_t k = n; k-- > 0;)
        choices.push_back({{"index", k},
                           {"text", " 7"},
                           {"logprobs",
                            {{"tokens", {" 7"}},
                             {"top_logprobs", {{{" 7", std::log(0.75)}, {" 8", std::log(0.2)}}}}}}});
      res.set_content(nlohmann::json{{"choices", choices}}.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeEndpoint() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/completions"; }

  nlohmann::json last_body;
  std::string last_auth;

private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace

TEST(HttpTeacher, SendsRequestAndParsesReply) {
  FakeEndpoint endpoint;
  HttpTeacher teacher({endpoint.url(), "secret", "", 30});
  const auto out = teacher.complete({"Question: x\nAnswer:", 3, 0, {.max_tokens = 64, .temperature = 0.5}});
  EXPECT_EQ(endpoint.last_body.at("prompt"), "Question: x\nAnswer:");
  EXPECT_EQ(endpoint.last_body.at("n"), 3);
  EXPECT_EQ(endpoint.last_body.at("max_tokens"), 64);
  EXPECT_EQ(endpoint.last_body.at("temperature"), 0.5);
  EXPECT_EQ(endpoint.last_body.at("logprobs"), 5);
  EXPECT_FALSE(endpoint.last_body.contains("model"));
  EXPECT_EQ(endpoint.last_auth, "Bearer secret");
  ASSERT_EQ(out.size(), 3u);
  ASSERT_EQ(out[0].steps.size(), 1u);
  EXPECT_EQ(out[0].steps[0].chosen_surface, " 7");
  EXPECT_NEAR(out[0].steps[0].top_k[0].second, 0.75, 1e-15);
  EXPECT_EQ(out[0].steps[0].top_k[1].first, " 8");
  EXPECT_EQ(out[0].steps[0].defect(), "");
}

TEST(HttpTeacher, ErrorStatusBecomesEndpointError) {
  FakeEndpoint endpoint(503);
  HttpTeacher teacher({endpoint.url(), "", "", 30});
  try {
    teacher.complete({"p", 1, 4, {}});
    FAIL() << "expected EndpointError";
  } catch (const EndpointError& e) {
    EXPECT_EQ(e.status(), 503);
    EXPECT_EQ(e.sample_index(), 4u);
  }
}

TEST(HttpTeacher, ConnectionFailureHasNoStatus) {
  int port = 0;
  {
    httplib::Server probe;
    port = probe.bind_to_any_port("127.0.0.1");
  }
  HttpTeacher teacher({"http://127.0.0.1:" + std::to_string(port) + "/v1/completions", "", "", 2});
  try {
    teacher.complete({"p", 1, 0, {}});
    FAIL() << "expected EndpointError";
  } catch (const EndpointError& e) {
    EXPECT_EQ(e.status(), -1);
  }
}

TEST(HttpTeacher, RequiresEndpoint) {
  EXPECT_THROW(HttpTeacher(HttpTeacherConfig{}), ValidationError);
}

TEST(HttpTeacher, ParseReplyOrdersChoicesAndToleratesMissingLogprobs) {
  const auto reply = nlohmann::json::parse(R"({"choices":[{"index":1,"text":"b"},{"index":0,"text":"a","logprobs":null}]})");
  const auto out = HttpTeacher::parse_reply(reply);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].text, "a");
  EXPECT_TRUE(out[0].steps.empty());
  const auto bad = nlohmann::json::parse(R"({"choices":[{"text":"a","logprobs":{"tokens":["a"],"top_logprobs":[]}}]})");
  EXPECT_THROW(HttpTeacher::parse_reply(bad), ValidationError);
}

TEST(HttpTeacherConfig, ReadsEnvironment) {
  ::setenv("TEACHER_ENDPOINT", "http://h:1/v1/completions", 1);
  ::setenv("TEACHER_API_KEY", "k", 1);
  ::setenv("TEACHER_MODEL", "m", 1);
  const auto c = HttpTeacherConfig::from_env();
  EXPECT_EQ(c.endpoint, "http://h:1/v1/completions");
  EXPECT_EQ(c.api_key, "k");
  EXPECT_EQ(c.model, "m");
  EXPECT_EQ(HttpTeacher::request_body({"p", 1, 0, {}}, c.model).at("model"), "m");
  ::unsetenv("TEACHER_ENDPOINT");
  ::unsetenv("TEACHER_API_KEY");
  ::unsetenv("TEACHER_MODEL");
}
