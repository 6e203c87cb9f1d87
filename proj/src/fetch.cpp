#include "pd4ml/fetch.hpp"

#include <httplib.h>

#include <fstream>

#include "pd4ml/errors.hpp"

namespace pd4ml {

namespace fs = std::filesystem;

namespace {

struct UrlParts {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

UrlParts split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw FetchError("not an absolute URL: " + url);
  const std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") throw FetchError("unsupported URL scheme '" + scheme + "'");
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

void http_download(const std::string& url, const fs::path& dest) {
  const UrlParts parts = split_url(url);
  if (dest.has_parent_path()) fs::create_directories(dest.parent_path());
  fs::path part = dest;
  part += ".part";
  const std::uintmax_t have = fs::exists(part) ? fs::file_size(part) : 0;

  httplib::Client client(parts.origin);
  client.set_follow_location(true);
  client.set_connection_timeout(30);
  client.set_read_timeout(120);

  httplib::Headers headers;
  if (have > 0) headers.emplace("Range", "bytes=" + std::to_string(have) + "-");

  std::ofstream out;
  int status = 0;
  auto on_response = [&](const httplib::Response& r) {
    status = r.status;
    if (r.status == 206 && have > 0) {
      out.open(part, std::ios::binary | std::ios::app);
    } else if (r.status == 200) {
      out.open(part, std::ios::binary | std::ios::trunc);
    } else {
      return false;
    }
    return static_cast<bool>(out);
  };
  auto on_data = [&](const char* data, std::size_t n) {
    out.write(data, static_cast<std::streamsize>(n));
    return static_cast<bool>(out);
  };

  const std::string hint = "; partial data kept in " + part.string() + ", re-run to resume";
  auto res = client.Get(parts.path, headers, on_response, on_data);
  out.close();
  if (status == 416 && have > 0) {
    // Range past the end: the partial file is already complete.
  } else if (status != 0 && status != 200 && status != 206) {
    throw FetchError("download of " + url + " returned HTTP " + std::to_string(status) + hint);
  } else if (!res) {
    throw FetchError("download of " + url + " failed: " + httplib::to_string(res.error()) + hint);
  }
  fs::rename(part, dest);
}

}  // namespace pd4ml
