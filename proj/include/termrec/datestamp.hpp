#pragma once

#include <chrono>
#include <compare>
#include <optional>
#include <string>
#include <string_view>

namespace termrec {

/// A UTC datestamp in one of the two OAI-PMH granularities:
/// YYYY-MM-DD or YYYY-MM-DDThh:mm:ssZ.
class Datestamp {
public:
    enum class Granularity { day, second };

    Datestamp() = default;
    Datestamp(std::chrono::sys_seconds t, Granularity g) : time_(t), granularity_(g) {}

    static std::optional<Datestamp> parse(std::string_view text);
    static Datestamp now();

    std::chrono::sys_seconds time() const { return time_; }
    Granularity granularity() const { return granularity_; }
    std::string str() const;

    friend bool operator==(const Datestamp& a, const Datestamp& b) { return a.time_ == b.time_; }
    friend auto operator<=>(const Datestamp& a, const Datestamp& b) { return a.time_ <=> b.time_; }

private:
    std::chrono::sys_seconds time_{};
    Granularity granularity_ = Granularity::second;
};

/// ISO-8601 UTC rendering of a wall-clock instant, second precision.
std::string iso_utc(std::chrono::system_clock::time_point t);

}  // namespace termrec
