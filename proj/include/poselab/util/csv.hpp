#pragma once

#include <cstdio>
#include <string>
#include <vector>

namespace poselab {

// Fixed "%.6f" formatting keeps experiment CSVs byte-stable across runs.
inline std::string fmt_double(double v, int precision = 6) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
    return buf;
}

class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header);
    void add_row(std::vector<std::string> cells);
    std::string to_string() const;
    void save(const std::string& path) const;
    std::size_t row_count() const { return rows_.size(); }

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

}  // namespace poselab
