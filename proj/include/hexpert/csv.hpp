#pragma once

#include <charconv>
#include <ostream>
#include <string>
#include <type_traits>

namespace hexpert {

// Shortest round-trip decimal form, independent of stream locale and state.
inline std::string fmt_num(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc{} ? std::string(buf, ptr) : std::string("nan");
}

// Writes values separated by commas and terminated by a newline.
template <typename... Ts>
void csv_row(std::ostream& os, const Ts&... values) {
  bool first = true;
  auto put = [&](const auto& v) {
    if (!first) os << ',';
    first = false;
    if constexpr (std::is_floating_point_v<std::decay_t<decltype(v)>>)
      os << fmt_num(v);
    else
      os << v;
  };
  (put(values), ...);
  os << '\n';
}

}  // namespace hexpert
