#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace cvae::csv {

// Numeric table with a header row. Numbers are written with 17 significant
// digits so values survive a round trip exactly.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    // Index of a column; throws ContractError listing the header if absent.
    std::size_t column(std::string_view name) const;
    bool has_column(std::string_view name) const;
    std::vector<double> values(std::string_view name) const;
};

void write_table(std::ostream& out, const Table& table);
void save_table(const std::filesystem::path& path, const Table& table);

// Throws FormatError (byte offset of the offending line) on malformed input.
Table read_table(std::istream& in);
Table load_table(const std::filesystem::path& path);

std::string format_number(double v);

}  // namespace cvae::csv
