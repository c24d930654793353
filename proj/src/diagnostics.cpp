#include "satmetro/diagnostics.hpp"

#include <iostream>
#include <mutex>
#include <string>
#include <utility>

namespace satmetro {
namespace {

std::mutex g_mutex;

WarningHandler &handler_slot() {
  static WarningHandler handler = [](std::string_view msg) {
    std::cerr << "warning: " << msg << '\n';
  };
  return handler;
}

} // namespace

WarningHandler set_warning_handler(WarningHandler handler) {
  std::lock_guard lock(g_mutex);
  return std::exchange(handler_slot(), std::move(handler));
}

void warn(std::string_view message) {
  std::lock_guard lock(g_mutex);
  if (auto &h = handler_slot())
    h(message);
}

} // namespace satmetro
