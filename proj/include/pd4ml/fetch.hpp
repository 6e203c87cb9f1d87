#pragma once

#include <filesystem>
#include <string>

namespace pd4ml {

// GET `url` (http:// or https://) into `dest`. Bytes stream into dest + ".part";
// an existing partial file is resumed with a Range request. The finished file
// is renamed into place. Failures throw FetchError and keep the partial file.
void http_download(const std::string& url, const std::filesystem::path& dest);

}  // namespace pd4ml
