#pragma once

#include <string>
#include <string_view>

#include "crowdmatch/error.hpp"

namespace crowdmatch::detail {

struct UrlParts {
  std::string origin;  // scheme://host[:port]
  std::string path;    // no trailing slash; may be empty
};

/// Splits "http://host:port/prefix" into origin and path prefix.
inline UrlParts split_url(std::string_view url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) {
    throw Error(ErrorCode::InvalidArgument, "URL needs a scheme: " + std::string(url));
  }
  const auto path_begin = url.find('/', scheme_end + 3);
  UrlParts parts;
  if (path_begin == std::string_view::npos) {
    parts.origin = std::string(url);
  } else {
    parts.origin = std::string(url.substr(0, path_begin));
    parts.path = std::string(url.substr(path_begin));
  }
  while (!parts.path.empty() && parts.path.back() == '/') parts.path.pop_back();
  return parts;
}

}  // namespace crowdmatch::detail
