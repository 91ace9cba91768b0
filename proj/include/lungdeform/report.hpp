#pragma once

#include <cmath>
#include <string>
#include <vector>

namespace lungdeform {

// Serialized report values are rounded to 1e-6 so reruns compare equal.
inline double round_for_report(double x)
{
    if (!std::isfinite(x)) return x;
    const double r = std::round(x * 1e6) / 1e6;
    return r == 0.0 ? 0.0 : r; // no negative zero
}

struct Summary {
    double mean = 0.0;
    double min = 0.0;
    double max = 0.0;
    std::size_t count = 0;
};

// Mean (in index order) with min and max; an empty input gives count 0.
Summary summarize(const std::vector<double>& values);

// "mean (min - max)" with the given number of decimals, as in the
// registration comparison tables.
std::string format_summary(const Summary& s, int decimals = 2);

// Fixed-width text table: first row is the header.
std::string format_table(const std::vector<std::vector<std::string>>& rows);

} // namespace lungdeform
