#include "lungdeform/report.hpp"

#include <algorithm>
#include <cstdio>

namespace lungdeform {

Summary summarize(const std::vector<double>& values)
{
    Summary s;
    s.count = values.size();
    if (values.empty()) return s;
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / static_cast<double>(values.size());
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    s.min = *lo;
    s.max = *hi;
    return s;
}

std::string format_summary(const Summary& s, int decimals)
{
    if (s.count == 0) return "n/a";
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%.*f (%.*f - %.*f)", decimals, s.mean, decimals, s.min,
                  decimals, s.max);
    return buf;
}

std::string format_table(const std::vector<std::vector<std::string>>& rows)
{
    std::vector<std::size_t> width;
    for (const auto& row : rows) {
        if (row.size() > width.size()) width.resize(row.size(), 0);
        for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
    }
    std::string out;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
            const auto& cell = rows[r][c];
            out += cell;
            if (c + 1 < rows[r].size()) out += std::string(width[c] - cell.size() + 2, ' ');
        }
        out += '\n';
        if (r == 0) {
            std::size_t total = 0;
            for (std::size_t c = 0; c < width.size(); ++c) total += width[c] + (c + 1 < width.size() ? 2 : 0);
            out += std::string(total, '-') + '\n';
        }
    }
    return out;
}

} // namespace lungdeform
