#include "mpctune/labeling_service.hpp"

// After Eigen: <resolv.h> (pulled in by httplib) defines a macro named _res.
#include <httplib.h>

namespace mpctune::labeling {

namespace {

using nlohmann::json;

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void error(httplib::Response& res, int status, const std::string& msg) { reply(res, status, json{{"error", msg}}); }

}  // namespace

json item_to_json(const QueueItem& item) {
  json samples = json::array();
  const auto& r = item.response;
  for (std::size_t k = 0; k < r.size(); ++k)
    samples.push_back({r.time[k], r.y[0][k], r.y[1][k], r.reference_at(0, r.time[k]), r.reference_at(1, r.time[k])});
  json j{{"id", item.id},
         {"status", to_string(item.status)},
         {"score", item.score},
         {"features", item.features},
         {"feature_names", features::feature_names()},
         {"window", r.window},
         {"samples", samples}};
  if (!item.response_path.empty()) j["response_path"] = item.response_path;
  if (item.grade) j["grade"] = *item.grade;
  return j;
}

LabelingServer::LabelingServer(LabelingService& service)
    : service_(service), server_(std::make_unique<httplib::Server>()) {
  server_->Get("/queue/next", [this](const httplib::Request&, httplib::Response& res) {
    const auto item = service_.next_unlabeled();
    if (!item) {
      res.status = 204;
      return;
    }
    reply(res, 200, item_to_json(*item));
  });

  server_->Post("/labels", [this](const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception&) {
      return error(res, 400, "body is not JSON");
    }
    if (!body.is_object() || !body.contains("id") || !body["id"].is_string() || !body.contains("grade") ||
        !body["grade"].is_number())
      return error(res, 400, "expected {\"id\": string, \"grade\": number}");
    try {
      const auto row = service_.submit_label(body["id"].get<std::string>(), body["grade"].get<double>());
      reply(res, 200, surrogate::sample_to_json(row));
    } catch (const NotFoundError& e) {
      error(res, 404, e.what());
    } catch (const ConflictError& e) {
      error(res, 409, e.what());
    } catch (const PreconditionError& e) {
      error(res, 400, e.what());
    } catch (const std::exception& e) {
      error(res, 500, e.what());
    }
  });

  server_->Get("/dataset/export", [this](const httplib::Request&, httplib::Response& res) {
    try {
      res.set_content(service_.export_dataset(), "application/x-ndjson");
    } catch (const std::exception& e) {
      error(res, 500, e.what());
    }
  });

  server_->Get("/progress", [this](const httplib::Request&, httplib::Response& res) {
    const Progress p = service_.progress();
    reply(res, 200, json{{"labeled", p.labeled}, {"pending", p.pending}});
  });
}

LabelingServer::~LabelingServer() { stop(); }

int LabelingServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int p = server_->bind_to_any_port(host);
    if (p < 0) throw Error("cannot bind " + host);
    return p;
  }
  if (!server_->bind_to_port(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void LabelingServer::start() {
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
}

void LabelingServer::listen() { server_->listen_after_bind(); }

void LabelingServer::stop() {
  if (server_->is_running()) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace mpctune::labeling
