#pragma once

#include <fstream>
#include <string>
#include <vector>

namespace glamap::io {

/// Line-oriented CSV writer; fields are written verbatim (no quoting — the
/// toolkit never emits fields containing commas or newlines).
class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header);
    void row(const std::vector<std::string>& fields);
    static std::string num(double v, int precision = 6);

private:
    std::ofstream out_;
    size_t ncols_;
};

/// Reads a whole CSV file into rows of fields (header included).
std::vector<std::vector<std::string>> read_csv(const std::string& path);

}  // namespace glamap::io
