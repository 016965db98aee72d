#include <gtest/gtest.h>

#include <atomic>
#include <sstream>
#include <thread>

#include "forumstrat/annotation_http.hpp"
#include "../common/support.hpp"

using namespace forumstrat;
using nlohmann::json;

namespace {

class ApiServer {
 public:
  explicit ApiServer(const std::string& name)
      : tokens_(TokenTable::from_json({{"annotators", {{"alice", "tok-a"}, {"bob", "tok-b"}}}})),
        svc_(CodingScheme({{"x", "X", "", ""}, {"y", "Y", "", ""}}), tokens_.annotators()) {
    AnnotationSample s{"s1", {}};
    for (int i = 0; i < 3; ++i) s.posts.push_back({"p" + std::to_string(i), "body", "title", "board"});
    svc_.add_sample(s, testsupport::temp_dir(name));
    mount_annotation_api(server_, svc_, tokens_);
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~ApiServer() {
    server_.stop();
    thread_.join();
  }

  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(std::chrono::seconds(10));
    return c;
  }
  httplib::Server& server() { return server_; }
  AnnotationService& service() { return svc_; }

 private:
  TokenTable tokens_;
  AnnotationService svc_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

httplib::Headers bearer(const std::string& t) { return {{"Authorization", "Bearer " + t}}; }

httplib::Result post_label(httplib::Client& c, const std::string& token, const std::string& post,
                           const std::string& cls) {
  return c.Post("/api/samples/s1/labels", bearer(token), json{{"post_id", post}, {"class_id", cls}}.dump(),
                "application/json");
}

}  // namespace

TEST(Http, SchemeIsPublic) {
  ApiServer s("http_scheme");
  auto c = s.client();
  auto r = c.Get("/api/scheme");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  auto j = json::parse(r->body);
  ASSERT_EQ(j["classes"].size(), 2u);
  EXPECT_EQ(j["classes"][0]["id"], "x");
}

TEST(Http, TokensAreChecked) {
  ApiServer s("http_auth");
  auto c = s.client();
  auto none = c.Get("/api/samples/s1/next");
  ASSERT_TRUE(none);
  EXPECT_EQ(none->status, 401);
  auto wrong = c.Get("/api/samples/s1/next", bearer("nope"));
  ASSERT_TRUE(wrong);
  EXPECT_EQ(wrong->status, 401);

  auto other = c.Get("/api/samples/s1/next?annotator=bob", bearer("tok-a"));
  ASSERT_TRUE(other);
  EXPECT_EQ(other->status, 403);

  auto forged = c.Post("/api/samples/s1/labels", bearer("tok-a"),
                       json{{"annotator", "bob"}, {"post_id", "p0"}, {"class_id", "x"}}.dump(), "application/json");
  ASSERT_TRUE(forged);
  EXPECT_EQ(forged->status, 403);
  EXPECT_TRUE(s.service().label_rows("s1").empty());
}

TEST(Http, NextAndLabelFlow) {
  ApiServer s("http_flow");
  auto c = s.client();
  for (int i = 0; i < 3; ++i) {
    auto r = c.Get("/api/samples/s1/next", bearer("tok-a"));
    ASSERT_TRUE(r);
    ASSERT_EQ(r->status, 200);
    auto j = json::parse(r->body);
    EXPECT_FALSE(j["done"].get<bool>());
    EXPECT_EQ(j["post"]["post_id"], "p" + std::to_string(i));
    EXPECT_EQ(j["progress"]["labeled"], i);
    auto l = post_label(c, "tok-a", j["post"]["post_id"], "x");
    ASSERT_TRUE(l);
    EXPECT_EQ(l->status, 201);
  }
  auto done = json::parse(c.Get("/api/samples/s1/next", bearer("tok-a"))->body);
  EXPECT_TRUE(done["done"].get<bool>());
  EXPECT_TRUE(done["post"].is_null());
  // Bob's queue is independent of Alice's labels and never shows them.
  auto bob = c.Get("/api/samples/s1/next", bearer("tok-b"));
  auto bj = json::parse(bob->body);
  EXPECT_EQ(bj["post"]["post_id"], "p0");
  EXPECT_EQ(bob->body.find("\"x\":"), std::string::npos);
  EXPECT_EQ(bj["progress"]["labeled"], 0);
}

TEST(Http, LabelErrors) {
  ApiServer s("http_errors");
  auto c = s.client();
  EXPECT_EQ(post_label(c, "tok-a", "p0", "nope")->status, 400);
  EXPECT_EQ(post_label(c, "tok-a", "p7", "x")->status, 404);
  EXPECT_EQ(c.Post("/api/samples/s1/labels", bearer("tok-a"), "{not json", "application/json")->status, 400);
  EXPECT_EQ(c.Post("/api/samples/s1/labels", bearer("tok-a"), "{}", "application/json")->status, 400);
  EXPECT_EQ(c.Get("/api/samples/zz/next", bearer("tok-a"))->status, 404);
}

TEST(Http, OverwriteReturnsUpdated) {
  ApiServer s("http_overwrite");
  auto c = s.client();
  EXPECT_EQ(post_label(c, "tok-a", "p0", "x")->status, 201);
  auto again = post_label(c, "tok-a", "p0", "x");
  EXPECT_EQ(again->status, 200);
  EXPECT_EQ(json::parse(again->body)["status"], "unchanged");
  auto upd = post_label(c, "tok-a", "p0", "y");
  EXPECT_EQ(upd->status, 200);
  EXPECT_EQ(json::parse(upd->body)["status"], "updated");
  EXPECT_EQ(s.service().audit("s1").size(), 1u);
}

TEST(Http, RetryAfterLostResponseDoesNotDuplicate) {
  ApiServer s("http_retry");
  // The first label response is held back past the client's timeout, after
  // the label has been committed.
  std::atomic<int> delayed{0};
  s.server().set_post_routing_handler([&](const httplib::Request& req, httplib::Response&) {
    if (req.method == "POST" && delayed.fetch_add(1) == 0) std::this_thread::sleep_for(std::chrono::milliseconds(600));
  });
  httplib::Client c = s.client();
  c.set_read_timeout(std::chrono::milliseconds(200));
  auto first = post_label(c, "tok-a", "p1", "y");
  EXPECT_FALSE(first);
  c.set_read_timeout(std::chrono::seconds(10));
  auto retry = post_label(c, "tok-a", "p1", "y");
  ASSERT_TRUE(retry);
  EXPECT_EQ(retry->status, 200);
  EXPECT_EQ(json::parse(retry->body)["status"], "unchanged");
  const auto rows = s.service().label_rows("s1");
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].post_id, "p1");
  EXPECT_TRUE(s.service().audit("s1").empty());
}

TEST(Http, AgreementExportAndResolution) {
  ApiServer s("http_agree");
  auto c = s.client();
  EXPECT_EQ(c.Get("/api/samples/s1/agreement", bearer("tok-a"))->status, 409);
  post_label(c, "tok-a", "p0", "x");
  post_label(c, "tok-a", "p1", "y");
  post_label(c, "tok-b", "p0", "x");
  post_label(c, "tok-b", "p1", "x");

  auto ag = c.Get("/api/samples/s1/agreement", bearer("tok-b"));
  ASSERT_EQ(ag->status, 200);
  auto aj = json::parse(ag->body);
  EXPECT_EQ(aj["kind"], "cohen");
  EXPECT_EQ(aj["conflicts"], json::array({"p1"}));
  EXPECT_EQ(aj["n_items"], 2);
  EXPECT_DOUBLE_EQ(aj["kappa"].get<double>(),
                   cohen_kappa(std::vector<std::string>{"x", "y"}, std::vector<std::string>{"x", "x"}).value);

  EXPECT_EQ(c.Get("/api/samples/s1/export.csv", bearer("tok-a"))->status, 409);
  auto early = c.Post("/api/samples/s1/resolutions", bearer("tok-a"), json{{"post_id", "p1"}, {"class_id", "y"}}.dump(),
                      "application/json");
  EXPECT_EQ(early->status, 409);

  auto ph = c.Post("/api/samples/s1/phase", bearer("tok-a"), R"({"phase":"resolution"})", "application/json");
  ASSERT_EQ(ph->status, 200);
  EXPECT_EQ(json::parse(ph->body)["phase"], "resolution");
  EXPECT_EQ(post_label(c, "tok-a", "p2", "x")->status, 409);
  EXPECT_EQ(c.Post("/api/samples/s1/phase", bearer("tok-a"), R"({"phase":"later"})", "application/json")->status, 400);

  auto res = c.Post("/api/samples/s1/resolutions", bearer("tok-a"), json{{"post_id", "p1"}, {"class_id", "y"}}.dump(),
                    "application/json");
  EXPECT_EQ(res->status, 200);

  auto ex = c.Get("/api/samples/s1/export.csv", bearer("tok-b"));
  ASSERT_EQ(ex->status, 200);
  EXPECT_EQ(ex->get_header_value("Content-Type"), "text/csv");
  std::istringstream in(ex->body);
  auto parsed = read_export(in);
  EXPECT_EQ(parsed.labels.size(), 4u);
  EXPECT_EQ(parsed.finals, (std::vector<std::pair<std::string, std::string>>{{"p0", "x"}, {"p1", "y"}}));
}

TEST(Http, TokenTableValidation) {
  EXPECT_THROW(TokenTable::from_json({{"annotators", {{"a", "t"}, {"b", "t"}}}}), ValidationError);
  EXPECT_THROW(TokenTable::from_json({{"annotators", {{"a", ""}}}}), ValidationError);
  EXPECT_THROW(TokenTable::from_json(json::object()), DataError);
  auto t = TokenTable::from_json({{"annotators", {{"a", "t1"}}}});
  EXPECT_EQ(t.annotator("t1"), "a");
  EXPECT_FALSE(t.annotator("t2"));
}
