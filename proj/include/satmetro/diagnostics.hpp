#pragma once

#include <functional>
#include <string_view>

namespace satmetro {

using WarningHandler = std::function<void(std::string_view)>;

/// Installs a process-wide sink for non-fatal model warnings and returns the
/// previous one. The default sink writes "warning: ..." lines to stderr.
WarningHandler set_warning_handler(WarningHandler handler);

void warn(std::string_view message);

} // namespace satmetro
