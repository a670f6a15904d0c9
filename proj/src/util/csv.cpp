#include "poselab/util/csv.hpp"

#include <filesystem>
#include <fstream>

#include "poselab/util/error.hpp"

namespace poselab {

CsvWriter::CsvWriter(std::vector<std::string> header) : header_(std::move(header)) {}

void CsvWriter::add_row(std::vector<std::string> cells) {
    require(cells.size() == header_.size(), "csv: row has ", cells.size(),
            " cells, header has ", header_.size());
    rows_.push_back(std::move(cells));
}

std::string CsvWriter::to_string() const {
    std::string out;
    auto join = [&out](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out += ',';
            out += cells[i];
        }
        out += '\n';
    };
    join(header_);
    for (const auto& r : rows_) join(r);
    return out;
}

void CsvWriter::save(const std::string& path) const {
    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream f(path, std::ios::binary);
    require(f.good(), "csv: cannot open ", path, " for writing");
    f << to_string();
}

}  // namespace poselab
