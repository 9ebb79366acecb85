#include "glamap/io/csv.hpp"

#include <sstream>
#include <stdexcept>

namespace glamap::io {

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& header)
    : out_(path), ncols_(header.size()) {
    if (!out_) throw std::runtime_error("csv: cannot open " + path + " for writing");
    row(header);
}

void CsvWriter::row(const std::vector<std::string>& fields) {
    if (fields.size() != ncols_)
        throw std::invalid_argument("csv: row width " + std::to_string(fields.size()) +
                                    " does not match header width " + std::to_string(ncols_));
    for (size_t i = 0; i < fields.size(); ++i) out_ << (i ? "," : "") << fields[i];
    out_ << "\n";
    out_.flush();
}

std::string CsvWriter::num(double v, int precision) {
    std::ostringstream os;
    os.precision(precision);
    os << v;
    return os.str();
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("csv: cannot open " + path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::string cur;
        for (char c : line) {
            if (c == ',') {
                fields.push_back(cur);
                cur.clear();
            } else
                cur += c;
        }
        fields.push_back(cur);
        rows.push_back(std::move(fields));
    }
    return rows;
}

}  // namespace glamap::io
