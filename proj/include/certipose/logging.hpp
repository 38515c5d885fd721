#pragma once

#include <functional>
#include <string>

namespace certipose {

/// Receives human-readable warnings; defaults to stderr. Not thread-safe to swap.
using WarningSink = std::function<void(const std::string&)>;

void set_warning_sink(WarningSink sink);
void warn(const std::string& message);

}  // namespace certipose
