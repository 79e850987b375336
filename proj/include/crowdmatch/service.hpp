#pragma once

#include <memory>
#include <mutex>
#include <string>
#include <string_view>

#include <json.hpp>

#include "crowdmatch/app.hpp"

namespace crowdmatch {

inline constexpr std::size_t kIssuesPerPage = 50;

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

/// Builds an error response; `code` is an error_code_name or one of
/// "invalid_body", "not_found", "internal_error".
ApiResponse api_error(int status, std::string_view code, std::string_view message);
ApiResponse api_error(const Error& e);

/// Request handlers over one workspace, callable without a socket.
class ApiService {
 public:
  explicit ApiService(std::shared_ptr<AppContext> ctx);

  /// POST /api/match
  ApiResponse match(std::string_view body) const;
  /// POST /api/triage
  ApiResponse triage(std::string_view body);
  /// GET /api/stats
  ApiResponse stats() const;
  /// GET /api/issues?query=&page= (page is 1-based, default 1)
  ApiResponse issues(std::string_view query, std::string_view page) const;

  const AppContext& context() const noexcept { return *ctx_; }

 private:
  std::shared_ptr<AppContext> ctx_;
  std::mutex write_mutex_;
};

/// httplib front end: JSON everywhere, CORS for the configured origin.
class ApiServer {
 public:
  ApiServer(std::shared_ptr<ApiService> service, std::string cors_origin);
  ~ApiServer();
  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  /// Port 0 picks a free port. Returns the bound port; throws NetworkFailure.
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  void run();
  /// run() on a background thread; returns once the server accepts requests.
  void start();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace crowdmatch
