#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sgmv/market_data.hpp"

namespace sgmv {

/// A labelled numeric table: first column is a string key (usually `date`),
/// remaining columns are doubles. No missing cells.
struct LabeledTable {
    std::string key_header = "date";
    std::vector<std::string> keys;
    std::vector<std::string> columns;
    Eigen::MatrixXd values;

    bool operator==(const LabeledTable& other) const;
};

/// Parses the CSV schema shared by every file the tool reads or writes:
/// header row required, `.` decimal point, no thousands separators, no empty
/// cells. Errors name the offending row and column.
LabeledTable read_table_csv(const std::filesystem::path& path);
LabeledTable parse_table_csv(const std::string& text, const std::string& source = "<memory>");

/// Doubles are written in shortest round-trip form, so write->read is lossless.
void write_table_csv(const std::filesystem::path& path, const LabeledTable& table);
std::string format_table_csv(const LabeledTable& table);

PricePanel read_prices_csv(const std::filesystem::path& path);
ReturnPanel read_returns_csv(const std::filesystem::path& path);
void write_returns_csv(const std::filesystem::path& path, const ReturnPanel& panel);

/// Square matrix with an `asset` key column and one column per asset.
void write_matrix_csv(const std::filesystem::path& path, const std::vector<std::string>& ids,
                      const Eigen::MatrixXd& m);

std::string format_double(double v);

}  // namespace sgmv
