#include "nqac/timestamp.hpp"

#include <cctype>
#include <cstdio>

namespace nqac {

namespace {

bool read_int(std::string_view s, std::size_t pos, std::size_t len, int& out) {
  if (pos + len > s.size()) return false;
  int v = 0;
  for (std::size_t i = pos; i < pos + len; ++i) {
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
    v = v * 10 + (s[i] - '0');
  }
  out = v;
  return true;
}

}  // namespace

Timestamp Timestamp::from_civil(int year, unsigned month, unsigned day, int hour, int minute,
                                int second) {
  using namespace std::chrono;
  const sys_days d{std::chrono::year{year} / std::chrono::month{month} / std::chrono::day{day}};
  return Timestamp(d + hours{hour} + minutes{minute} + seconds{second});
}

std::optional<Timestamp> Timestamp::parse(std::string_view text) {
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) text.remove_prefix(1);
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);
  if (!text.empty() && (text.back() == 'Z' || text.back() == 'z')) text.remove_suffix(1);
  if (text.size() != 19) return std::nullopt;
  if (text[4] != '-' || text[7] != '-' || (text[10] != ' ' && text[10] != 'T') || text[13] != ':' ||
      text[16] != ':')
    return std::nullopt;
  int y, mo, d, h, mi, s;
  if (!read_int(text, 0, 4, y) || !read_int(text, 5, 2, mo) || !read_int(text, 8, 2, d) ||
      !read_int(text, 11, 2, h) || !read_int(text, 14, 2, mi) || !read_int(text, 17, 2, s))
    return std::nullopt;
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{unsigned(mo)},
                                        std::chrono::day{unsigned(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || s > 59) return std::nullopt;
  return from_civil(y, unsigned(mo), unsigned(d), h, mi, s);
}

Timestamp Timestamp::now() {
  return Timestamp(std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now()));
}

int Timestamp::seconds_of_day() const {
  using namespace std::chrono;
  const auto day_start = floor<days>(t_);
  return static_cast<int>((t_ - day_start).count());
}

int Timestamp::hour() const { return seconds_of_day() / 3600; }
int Timestamp::minute() const { return (seconds_of_day() / 60) % 60; }
int Timestamp::second() const { return seconds_of_day() % 60; }

int Timestamp::weekday_index() const {
  const std::chrono::weekday wd{std::chrono::floor<std::chrono::days>(t_)};
  return static_cast<int>(wd.iso_encoding()) - 1;
}

std::string Timestamp::to_string() const {
  using namespace std::chrono;
  const auto dp = floor<days>(t_);
  const year_month_day ymd{dp};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u %02d:%02d:%02d", int(ymd.year()),
                unsigned(ymd.month()), unsigned(ymd.day()), hour(), minute(), second());
  return buf;
}

}  // namespace nqac
