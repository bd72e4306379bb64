#include "sfk/triage/server.hpp"

#include <fstream>
#include <httplib.h>
#include <json.hpp>

#include "sfk/error.hpp"

namespace sfk::triage {
using nlohmann::json;

namespace {

json assignment_json(const CategoryAssignment& a) {
  return {{"categories", a.categories}, {"comment", a.comment}, {"reviewer", a.reviewer}, {"timestamp", a.timestamp_ms}};
}

json case_json(const TriageStore& store, const ErrorCase& c) {
  json j{{"video_id", c.video_id},
         {"true_label", c.true_label},
         {"predicted_label", c.predicted_label},
         {"scores", c.scores},
         {"confidence", c.confidence},
         {"status", to_string(c.status)},
         {"clip_url", "/media/" + httplib::detail::encode_url(c.video_id)}};
  const auto cur = store.current(c.video_id);
  j["current"] = cur ? assignment_json(*cur) : json(nullptr);
  return j;
}

json report_json(const CategoryReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows) rows.push_back({{"category", row.category}, {"count", row.count}, {"percent", row.percent}});
  return {{"empty", r.empty},           {"total_errors", r.total_errors}, {"reviewed", r.reviewed},
          {"unreviewed", r.unreviewed}, {"source_split", r.source_split}, {"rows", rows}};
}

json ranking_json(const std::vector<RankedCategory>& ranking) {
  json out = json::array();
  for (const auto& r : ranking) {
    out.push_back({{"rank", r.rank},
                   {"category", r.category},
                   {"percent", r.percent},
                   {"effort", r.effort ? json(to_string(*r.effort)) : json(nullptr)},
                   {"score", r.score}});
  }
  return out;
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message, const std::string& field = {}) {
  json body{{"error", message}};
  if (!field.empty()) body["field"] = field;
  send_json(res, status, body);
}

json parse_body(const httplib::Request& req) {
  try {
    return json::parse(req.body);
  } catch (const json::exception&) {
    throw InvalidArgument("request body is not valid JSON", "body");
  }
}

std::string content_type_for(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".mp4" || ext == ".m4v") return "video/mp4";
  if (ext == ".webm") return "video/webm";
  if (ext == ".avi") return "video/x-msvideo";
  if (ext == ".mkv") return "video/x-matroska";
  if (ext == ".ogv") return "video/ogg";
  return "application/octet-stream";
}

/// Runs a handler, mapping toolkit errors onto HTTP statuses.
template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const NotFoundError& e) {
      send_error(res, 404, e.what());
    } catch (const InvalidArgument& e) {
      send_error(res, 400, e.what(), e.field());
    } catch (const std::exception& e) {
      send_error(res, 500, e.what());
    }
  };
}

}  // namespace

TriageServer::TriageServer(TriageStore& store, ServerOptions options)
    : store_(store), options_(std::move(options)), server_(std::make_unique<httplib::Server>()) {
  routes();
}

TriageServer::~TriageServer() { stop(); }

void TriageServer::routes() {
  auto& s = *server_;
  TriageStore& store = store_;

  s.Get("/api/cases", guarded([&store](const httplib::Request& req, httplib::Response& res) {
    CaseFilter f;
    if (req.has_param("status")) f.status = parse_review_status(req.get_param_value("status"));
    if (req.has_param("true_class")) f.true_class = req.get_param_value("true_class");
    const auto cases = store.cases(f);
    json arr = json::array();
    for (const auto& c : cases) arr.push_back(case_json(store, c));
    send_json(res, 200, {{"cases", arr}, {"count", cases.size()}});
  }));

  s.Get(R"(/api/cases/([^/]+))", guarded([&store](const httplib::Request& req, httplib::Response& res) {
    const auto id = httplib::detail::decode_url(req.matches[1], false);
    auto j = case_json(store, store.get_case(id));
    json hist = json::array();
    for (const auto& a : store.history(id)) hist.push_back(assignment_json(a));
    j["history"] = hist;
    send_json(res, 200, j);
  }));

  s.Post(R"(/api/cases/([^/]+)/assignments)", guarded([&store](const httplib::Request& req, httplib::Response& res) {
    const auto id = httplib::detail::decode_url(req.matches[1], false);
    const auto body = parse_body(req);
    if (!body.is_object()) throw InvalidArgument("request body must be a JSON object", "body");
    if (!body.contains("categories") || !body["categories"].is_array()) {
      throw InvalidArgument("categories must be an array of names", "categories");
    }
    std::set<std::string> cats;
    for (const auto& c : body["categories"]) {
      if (!c.is_string()) throw InvalidArgument("categories must be strings", "categories");
      cats.insert(c.get<std::string>());
    }
    const auto str_field = [&](const char* name) -> std::string {
      if (!body.contains(name) || body[name].is_null()) return {};
      if (!body[name].is_string()) throw InvalidArgument(std::string(name) + " must be a string", name);
      return body[name].get<std::string>();
    };
    std::optional<std::int64_t> ts;
    if (body.contains("timestamp") && !body["timestamp"].is_null()) {
      if (!body["timestamp"].is_number_integer()) throw InvalidArgument("timestamp must be integer milliseconds", "timestamp");
      ts = body["timestamp"].get<std::int64_t>();
    }
    const auto updated = store.assign(id, cats, str_field("comment"), str_field("reviewer"), ts);
    auto j = case_json(store, updated);
    json hist = json::array();
    for (const auto& a : store.history(id)) hist.push_back(assignment_json(a));
    j["history"] = hist;
    send_json(res, 201, j);
  }));

  s.Get("/api/report", guarded([&store](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, report_json(store.report()));
  }));

  s.Get("/api/report.tsv", guarded([&store](const httplib::Request&, httplib::Response& res) {
    res.set_content(store.report().to_delimited('\t'), "text/tab-separated-values");
  }));

  const auto ranking = [&store](std::optional<std::map<std::string, Effort>> efforts, httplib::Response& res) {
    const auto rep = store.report();
    if (rep.empty) {
      send_json(res, 200, {{"empty", true}, {"ranking", json::array()}});
      return;
    }
    send_json(res, 200, {{"empty", false}, {"ranking", ranking_json(rank_categories(rep, efforts))}});
  };

  s.Get("/api/ranking", guarded([&store, ranking](const httplib::Request&, httplib::Response& res) {
    auto e = store.efforts();
    ranking(e.empty() ? std::nullopt : std::optional(e), res);
  }));

  s.Post("/api/ranking", guarded([&store, ranking](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req);
    if (!body.is_object() || !body.contains("efforts") || !body["efforts"].is_object()) {
      throw InvalidArgument("efforts must be an object mapping category to low/med/high", "efforts");
    }
    std::map<std::string, Effort> parsed;
    for (const auto& [cat, v] : body["efforts"].items()) {
      if (!v.is_string()) throw InvalidArgument("effort for '" + cat + "' must be a string", "efforts");
      parsed[cat] = parse_effort(v.get<std::string>());
    }
    for (const auto& [cat, e] : parsed) store.set_effort(cat, e);
    ranking(store.efforts(), res);
  }));

  s.Get("/api/categories", guarded([&store](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, {{"categories", store.categories()}});
  }));

  s.Post("/api/categories", guarded([&store](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req);
    if (!body.is_object() || !body.contains("name") || !body["name"].is_string()) {
      throw InvalidArgument("name must be a string", "name");
    }
    const bool added = store.add_category(body["name"].get<std::string>());
    send_json(res, added ? 201 : 200, {{"added", added}, {"categories", store.categories()}});
  }));

  const auto confusion = options_.confusion;
  s.Get("/api/confusion", guarded([confusion](const httplib::Request&, httplib::Response& res) {
    if (!confusion) throw NotFoundError("no confusion matrix was loaded");
    json counts = json::array();
    for (std::size_t t = 0; t < confusion->size(); ++t) {
      json row = json::array();
      for (std::size_t p = 0; p < confusion->size(); ++p) row.push_back(confusion->count(static_cast<int>(t), static_cast<int>(p)));
      counts.push_back(row);
    }
    json per_class = json::array();
    for (const auto& a : per_class_accuracy(*confusion)) per_class.push_back(a ? json(*a) : json("n/a"));
    send_json(res, 200, {{"classes", confusion->class_names()}, {"counts", counts}, {"per_class_accuracy", per_class}});
  }));

  const auto media_for = options_.media_for;
  s.Get(R"(/media/([^/]+))", guarded([&store, media_for](const httplib::Request& req, httplib::Response& res) {
    const auto id = httplib::detail::decode_url(req.matches[1], false);
    store.get_case(id);
    const auto path = media_for ? media_for(id) : std::nullopt;
    if (!path || !std::filesystem::is_regular_file(*path)) throw NotFoundError("no media file for case '" + id + "'");
    const auto size = static_cast<std::size_t>(std::filesystem::file_size(*path));
    auto file = std::make_shared<std::ifstream>(*path, std::ios::binary);
    if (!*file) throw NotFoundError("cannot open media for case '" + id + "'");
    res.set_header("Accept-Ranges", "bytes");
    res.set_content_provider(size, content_type_for(*path),
                             [file](std::size_t offset, std::size_t length, httplib::DataSink& sink) {
                               std::vector<char> buf(std::min<std::size_t>(length, 1 << 16));
                               file->clear();
                               file->seekg(static_cast<std::streamoff>(offset));
                               file->read(buf.data(), static_cast<std::streamsize>(buf.size()));
                               const auto got = static_cast<std::size_t>(file->gcount());
                               if (got == 0) return false;
                               sink.write(buf.data(), got);
                               return true;
                             });
  }));
}

int TriageServer::bind() {
  if (options_.port == 0) {
    port_ = server_->bind_to_any_port(options_.host);
    if (port_ <= 0) throw RuntimeError("cannot bind triage server on " + options_.host);
  } else {
    if (!server_->bind_to_port(options_.host, options_.port)) {
      throw RuntimeError("cannot bind triage server on " + options_.host + ":" + std::to_string(options_.port));
    }
    port_ = options_.port;
  }
  return port_;
}

void TriageServer::serve() { server_->listen_after_bind(); }

int TriageServer::start() {
  const int p = bind();
  thread_ = std::thread([this] { serve(); });
  server_->wait_until_ready();
  return p;
}

void TriageServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace sfk::triage
