#pragma once

#include <string>

namespace rpo::detail {

struct HttpResponse {
  int status = 0;
  std::string body;
};

// POSTs a JSON body to base_url + path. base_url may carry a path prefix
// ("http://host:8000/api"). Transport failures (refused, unreachable, timed
// out) throw Error(Timeout); HTTP status codes are returned, not thrown.
HttpResponse http_post_json(const std::string& base_url,
                            const std::string& path, const std::string& body,
                            const std::string& bearer_token, int timeout_ms);

}  // namespace rpo::detail
