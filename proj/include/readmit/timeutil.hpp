#pragma once

#include <cstdint>

namespace readmit {

inline constexpr std::int64_t kSecondsPerHour = 3600;
inline constexpr std::int64_t kSecondsPerDay = 86400;

struct CivilDate {
    int year;
    int month;  // 1..12
    int day;    // 1..31
};

// Proleptic Gregorian calendar, UTC. Timestamps are integer seconds.
CivilDate civil_from_epoch(std::int64_t t);
std::int64_t epoch_from_civil(int year, int month, int day);
int year_of(std::int64_t t);

}  // namespace readmit
