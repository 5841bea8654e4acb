#include "readmit/timeutil.hpp"

namespace readmit {

namespace {

// Floor division so that negative timestamps land on the right day.
std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if (a % b != 0 && ((a < 0) != (b < 0))) --q;
    return q;
}

}  // namespace

CivilDate civil_from_epoch(std::int64_t t) {
    std::int64_t z = floor_div(t, kSecondsPerDay);
    z += 719468;
    const std::int64_t era = floor_div(z, 146097);
    const std::int64_t doe = z - era * 146097;                               // [0, 146096]
    const std::int64_t yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;  // [0, 399]
    const std::int64_t y = yoe + era * 400;
    const std::int64_t doy = doe - (365 * yoe + yoe / 4 - yoe / 100);        // [0, 365]
    const std::int64_t mp = (5 * doy + 2) / 153;                             // [0, 11]
    const std::int64_t d = doy - (153 * mp + 2) / 5 + 1;                     // [1, 31]
    const std::int64_t m = mp < 10 ? mp + 3 : mp - 9;                        // [1, 12]
    return CivilDate{static_cast<int>(y + (m <= 2)), static_cast<int>(m), static_cast<int>(d)};
}

std::int64_t epoch_from_civil(int year, int month, int day) {
    std::int64_t y = year;
    y -= month <= 2;
    const std::int64_t era = floor_div(y, 400);
    const std::int64_t yoe = y - era * 400;                                  // [0, 399]
    const std::int64_t mp = month > 2 ? month - 3 : month + 9;
    const std::int64_t doy = (153 * mp + 2) / 5 + day - 1;                   // [0, 365]
    const std::int64_t doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;          // [0, 146096]
    return (era * 146097 + doe - 719468) * kSecondsPerDay;
}

int year_of(std::int64_t t) { return civil_from_epoch(t).year; }

}  // namespace readmit
