#include <doctest.h>

#include <fstream>
#include <httplib.h>
#include <json.hpp>

#include "sfk/triage/server.hpp"
#include "support.hpp"

using namespace sfk;
using namespace sfk::triage;
using nlohmann::json;

namespace {

struct Running {
  TriageStore store;
  std::unique_ptr<TriageServer> server;
  std::unique_ptr<httplib::Client> client;

  explicit Running(ServerOptions opts = {}) {
    store.import_cases(testing::error_cases(4), "test", 20);
    opts.port = 0;
    server = std::make_unique<TriageServer>(store, std::move(opts));
    const int port = server->start();
    client = std::make_unique<httplib::Client>("127.0.0.1", port);
  }

  json get(const std::string& path, int expected = 200) {
    auto r = client->Get(path);
    REQUIRE(r);
    CHECK(r->status == expected);
    return json::parse(r->body);
  }

  json post(const std::string& path, const json& body, int expected) {
    auto r = client->Post(path, body.dump(), "application/json");
    REQUIRE(r);
    CHECK(r->status == expected);
    return json::parse(r->body);
  }
};

}  // namespace

TEST_SUITE("server") {
  TEST_CASE("fresh store lists every case unreviewed") {
    Running s;
    const auto j = s.get("/api/cases");
    CHECK(j["count"] == 4);
    for (const auto& c : j["cases"]) {
      CHECK(c["status"] == "unreviewed");
      CHECK(c["current"].is_null());
      CHECK(c["clip_url"].get<std::string>().rfind("/media/", 0) == 0);
    }
    CHECK(s.get("/api/cases?status=reviewed")["count"] == 0);
    CHECK(s.get("/api/cases?true_class=flat%20service")["count"] == 4);
  }

  TEST_CASE("assignment is visible in the next report") {
    Running s;
    const auto a = s.post("/api/cases/e01/assignments",
                          {{"categories", {"serve confusion", "beginners"}}, {"comment", "x"}, {"reviewer", "ann"}}, 201);
    CHECK(a["status"] == "reviewed");
    CHECK(a["history"].size() == 1);
    const auto r = s.get("/api/report");
    CHECK(r["reviewed"] == 1);
    CHECK(r["total_errors"] == 4);
    for (const auto& row : r["rows"]) {
      if (row["category"] == "serve confusion") CHECK(row["percent"].get<double>() == doctest::Approx(25.0));
    }
    auto tsv = s.client->Get("/api/report.tsv");
    REQUIRE(tsv);
    CHECK(tsv->body.find("serve confusion\t25.0") != std::string::npos);
    const auto one = s.get("/api/cases/e01");
    CHECK(one["current"]["reviewer"] == "ann");
  }

  TEST_CASE("two reviewers on one case: later timestamp wins, both in history") {
    Running s;
    s.post("/api/cases/e00/assignments", {{"categories", {"others"}}, {"reviewer", "b"}, {"timestamp", 2000}}, 201);
    s.post("/api/cases/e00/assignments", {{"categories", {"beginners"}}, {"reviewer", "a"}, {"timestamp", 1000}}, 201);
    const auto c = s.get("/api/cases/e00");
    CHECK(c["current"]["reviewer"] == "b");
    CHECK(c["history"].size() == 2);
  }

  TEST_CASE("malformed submissions get 4xx with the offending field") {
    Running s;
    CHECK(s.post("/api/cases/e00/assignments", {{"categories", json::array()}}, 400)["field"] == "categories");
    CHECK(s.post("/api/cases/e00/assignments", {{"categories", "others"}}, 400)["field"] == "categories");
    CHECK(s.post("/api/cases/e00/assignments", {{"categories", {"others"}}, {"timestamp", "soon"}}, 400)["field"] ==
          "timestamp");
    auto raw = s.client->Post("/api/cases/e00/assignments", "{oops", "application/json");
    REQUIRE(raw);
    CHECK(raw->status == 400);
    CHECK(s.post("/api/cases/zz/assignments", {{"categories", {"others"}}}, 404).contains("error"));
    CHECK(s.get("/api/cases/zz", 404).contains("error"));
    CHECK(s.get("/api/cases?status=maybe", 400)["field"] == "status");
    CHECK(s.post("/api/ranking", {{"efforts", {{"others", "huge"}}}}, 400).contains("error"));
  }

  TEST_CASE("categories and ranking endpoints") {
    Running s;
    CHECK(s.post("/api/categories", {{"name", "lighting"}}, 201)["added"] == true);
    CHECK(s.post("/api/categories", {{"name", "lighting"}}, 200)["added"] == false);
    CHECK(s.get("/api/categories")["categories"].size() == 6);
    CHECK(s.get("/api/ranking")["empty"] == false);
    s.post("/api/cases/e00/assignments", {{"categories", {"others", "beginners"}}}, 201);
    s.post("/api/cases/e01/assignments", {{"categories", {"others"}}}, 201);
    CHECK(s.get("/api/ranking")["ranking"][0]["category"] == "others");
    const auto ranked = s.post("/api/ranking", {{"efforts", {{"others", "high"}, {"beginners", "low"}}}}, 200);
    CHECK(ranked["ranking"][0]["category"] == "beginners");
    CHECK(s.get("/api/ranking")["ranking"][0]["category"] == "beginners");
  }

  TEST_CASE("confusion matrix endpoint") {
    {
      Running s;
      s.get("/api/confusion", 404);
    }
    eval::ConfusionMatrix cm({"a", "b"});
    cm.add(0, 0);
    cm.add(0, 1);
    Running s(ServerOptions{.confusion = cm});
    const auto j = s.get("/api/confusion");
    CHECK(j["classes"] == json({"a", "b"}));
    CHECK(j["counts"][0][1] == 1);
    CHECK(j["per_class_accuracy"][0].get<double>() == doctest::Approx(50.0));
    CHECK(j["per_class_accuracy"][1] == "n/a");
  }

  TEST_CASE("media supports byte ranges") {
    testing::TempDir dir("media");
    {
      std::ofstream f(dir / "clip.avi", std::ios::binary);
      for (int i = 0; i < 1000; ++i) f.put(static_cast<char>(i % 251));
    }
    ServerOptions opts;
    const auto file = dir / "clip.avi";
    opts.media_for = [file](const std::string& id) -> std::optional<std::filesystem::path> {
      if (id == "e00") return file;
      return std::nullopt;
    };
    Running s(opts);
    auto full = s.client->Get("/media/e00");
    REQUIRE(full);
    CHECK(full->status == 200);
    CHECK(full->body.size() == 1000);
    CHECK(full->get_header_value("Accept-Ranges") == "bytes");
    auto part = s.client->Get("/media/e00", {{"Range", "bytes=100-109"}});
    REQUIRE(part);
    CHECK(part->status == 206);
    REQUIRE(part->body.size() == 10);
    CHECK(static_cast<unsigned char>(part->body[0]) == 100);
    CHECK(s.client->Get("/media/e01")->status == 404);
    CHECK(s.client->Get("/media/unknown")->status == 404);
  }
}
