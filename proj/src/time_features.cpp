#include <cmath>
#include <numbers>

#include "nqac/features.hpp"

namespace nqac::features {

TimeFeatures encode_time(const Timestamp& t) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  const double day_fraction = static_cast<double>(t.seconds_of_day()) / 86400.0;
  const double day_angle = kTwoPi * day_fraction;
  const double week_angle = kTwoPi * (static_cast<double>(t.weekday_index()) + day_fraction) / 7.0;
  return {std::sin(day_angle), std::cos(day_angle), std::sin(week_angle), std::cos(week_angle)};
}

}  // namespace nqac::features
