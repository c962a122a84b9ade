#pragma once

#include <string>

#include "sleepgraph/error.hpp"

namespace sleepgraph::detail {

struct UrlParts {
  std::string base;  // scheme://host[:port]
  std::string path;  // always starts with '/'
};

inline UrlParts split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos)
    throw Error(Errc::InvalidConfig, "endpoint URL needs a scheme: " + url);
  const auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https")
    throw Error(Errc::InvalidConfig, "unsupported URL scheme '" + scheme + "'");
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace sleepgraph::detail
