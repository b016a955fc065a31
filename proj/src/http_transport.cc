#include "http_transport.h"

#include "httplib.h"
#include "rpo/error.h"

namespace rpo::detail {
namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path prefix without trailing slash
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::ConfigError, "endpoint url needs a scheme: " + url);
  }
  const auto path_start = url.find('/', scheme_end + 3);
  SplitUrl out;
  if (path_start == std::string::npos) {
    out.origin = url;
  } else {
    out.origin = url.substr(0, path_start);
    out.prefix = url.substr(path_start);
    while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
  }
  return out;
}

}  // namespace

HttpResponse http_post_json(const std::string& base_url,
                            const std::string& path, const std::string& body,
                            const std::string& bearer_token, int timeout_ms) {
  const auto url = split_url(base_url);
  httplib::Client client(url.origin);
  if (!client.is_valid()) {
    throw Error(ErrorCode::ConfigError, "unsupported endpoint url " + base_url);
  }
  const auto sec = timeout_ms / 1000;
  const auto usec = (timeout_ms % 1000) * 1000;
  client.set_connection_timeout(sec, usec);
  client.set_read_timeout(sec, usec);
  client.set_write_timeout(sec, usec);
  client.set_keep_alive(false);

  httplib::Headers headers;
  if (!bearer_token.empty()) {
    headers.emplace("Authorization", "Bearer " + bearer_token);
  }
  auto target = url.prefix + path;
  if (target.empty()) target = "/";
  auto res = client.Post(target, headers, body, "application/json");
  if (!res) {
    throw Error(ErrorCode::Timeout, "no response from " + base_url + path +
                                        " (" + httplib::to_string(res.error()) +
                                        ")");
  }
  return {res->status, res->body};
}

}  // namespace rpo::detail
