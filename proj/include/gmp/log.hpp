#pragma once

#include <functional>
#include <string>

namespace gmp {

using WarningSink = std::function<void(const std::string&)>;

// Emits a warning through the installed sink (stderr by default).
void warn(const std::string& message);

// Replaces the sink; returns the previous one. Passing nullptr silences output.
WarningSink set_warning_sink(WarningSink sink);

}  // namespace gmp
