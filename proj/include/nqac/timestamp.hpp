#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>

namespace nqac {

// Second-resolution civil time (no time zone; log timestamps are taken as-is).
class Timestamp {
 public:
  Timestamp() = default;
  explicit Timestamp(std::chrono::sys_seconds t) : t_(t) {}

  static Timestamp from_civil(int year, unsigned month, unsigned day, int hour = 0, int minute = 0,
                              int second = 0);

  // Accepts "YYYY-MM-DD HH:MM:SS" and the ISO-8601 "YYYY-MM-DDTHH:MM:SS" form
  // (an optional trailing "Z" is ignored).
  static std::optional<Timestamp> parse(std::string_view text);
  static Timestamp now();

  std::chrono::sys_seconds time_point() const { return t_; }
  int hour() const;
  int minute() const;
  int second() const;
  int seconds_of_day() const;
  // Monday = 0 ... Sunday = 6.
  int weekday_index() const;

  // "YYYY-MM-DD HH:MM:SS"
  std::string to_string() const;

  friend bool operator==(const Timestamp&, const Timestamp&) = default;
  friend auto operator<=>(const Timestamp&, const Timestamp&) = default;

 private:
  std::chrono::sys_seconds t_{};
};

}  // namespace nqac
