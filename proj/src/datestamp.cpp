#include "termrec/datestamp.hpp"

#include <cctype>
#include <cstdio>

namespace termrec {

namespace {

bool read_int(std::string_view s, std::size_t pos, std::size_t len, int& out) {
    if (pos + len > s.size())
        return false;
    int v = 0;
    for (std::size_t i = pos; i < pos + len; ++i) {
        if (!std::isdigit(static_cast<unsigned char>(s[i])))
            return false;
        v = v * 10 + (s[i] - '0');
    }
    out = v;
    return true;
}

}  // namespace

std::optional<Datestamp> Datestamp::parse(std::string_view text) {
    using namespace std::chrono;
    int y, m, d;
    if (!read_int(text, 0, 4, y) || text.size() < 10 || text[4] != '-' || !read_int(text, 5, 2, m) ||
        text[7] != '-' || !read_int(text, 8, 2, d))
        return std::nullopt;
    year_month_day ymd{year{y}, month{static_cast<unsigned>(m)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok())
        return std::nullopt;
    sys_seconds base = sys_days{ymd};
    if (text.size() == 10)
        return Datestamp(base, Granularity::day);

    int hh, mm, ss;
    if (text.size() != 20 || text[10] != 'T' || !read_int(text, 11, 2, hh) || text[13] != ':' ||
        !read_int(text, 14, 2, mm) || text[16] != ':' || !read_int(text, 17, 2, ss) || text[19] != 'Z')
        return std::nullopt;
    if (hh > 23 || mm > 59 || ss > 60)
        return std::nullopt;
    return Datestamp(base + hours{hh} + minutes{mm} + seconds{ss}, Granularity::second);
}

Datestamp Datestamp::now() {
    return Datestamp(std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now()),
                     Granularity::second);
}

std::string Datestamp::str() const {
    using namespace std::chrono;
    auto days = floor<std::chrono::days>(time_);
    year_month_day ymd{days};
    char buf[32];
    if (granularity_ == Granularity::day) {
        std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                      static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    } else {
        hh_mm_ss hms{time_ - days};
        std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                      static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                      static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                      static_cast<int>(hms.seconds().count()));
    }
    return buf;
}

std::string iso_utc(std::chrono::system_clock::time_point t) {
    return Datestamp(std::chrono::floor<std::chrono::seconds>(t), Datestamp::Granularity::second).str();
}

}  // namespace termrec
