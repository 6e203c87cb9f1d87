#pragma once

#include <functional>
#include <string>

namespace pd4ml {

using WarningSink = std::function<void(const std::string&)>;

// Routes a warning to the installed sink (stderr by default).
void warn(const std::string& message);

// Installs `sink` for the lifetime of this object, then restores the previous one.
class ScopedWarningSink {
 public:
  explicit ScopedWarningSink(WarningSink sink);
  ~ScopedWarningSink();
  ScopedWarningSink(const ScopedWarningSink&) = delete;
  ScopedWarningSink& operator=(const ScopedWarningSink&) = delete;

 private:
  WarningSink previous_;
};

}  // namespace pd4ml
