#include "sgmv/csv_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "sgmv/errors.hpp"

namespace sgmv {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t pos = 0;
    while (true) {
        const std::size_t comma = line.find(',', pos);
        if (comma == std::string_view::npos) {
            cells.push_back(trim(line.substr(pos)));
            break;
        }
        cells.push_back(trim(line.substr(pos, comma - pos)));
        pos = comma + 1;
    }
    return cells;
}

}  // namespace

bool LabeledTable::operator==(const LabeledTable& other) const {
    return key_header == other.key_header && keys == other.keys && columns == other.columns &&
           values.rows() == other.values.rows() && values.cols() == other.values.cols() &&
           values == other.values;
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

LabeledTable parse_table_csv(const std::string& text, const std::string& source) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;

    LabeledTable table;
    bool have_header = false;
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto cells = split(line);
        if (!have_header) {
            if (cells.size() < 2) {
                throw ValidationError(source + ": header needs a key column and at least one value column");
            }
            table.key_header = std::string(cells[0]);
            for (std::size_t c = 1; c < cells.size(); ++c) {
                if (cells[c].empty()) {
                    throw ValidationError(source + ": empty column name in header at column " +
                                          std::to_string(c + 1));
                }
                table.columns.emplace_back(cells[c]);
            }
            have_header = true;
            continue;
        }
        if (cells.size() != table.columns.size() + 1) {
            throw ValidationError(source + ": row " + std::to_string(line_no) + " has " +
                                  std::to_string(cells.size()) + " cells, expected " +
                                  std::to_string(table.columns.size() + 1));
        }
        if (cells[0].empty()) {
            throw ValidationError(source + ": row " + std::to_string(line_no) + " has an empty key");
        }
        std::vector<double> values(table.columns.size());
        for (std::size_t c = 1; c < cells.size(); ++c) {
            const std::string_view cell = cells[c];
            if (cell.empty()) {
                throw ValidationError(source + ": missing value at row " + std::to_string(line_no) +
                                      ", column '" + table.columns[c - 1] + "'");
            }
            double v = 0.0;
            const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
                throw ValidationError(source + ": cannot parse '" + std::string(cell) + "' at row " +
                                      std::to_string(line_no) + ", column '" +
                                      table.columns[c - 1] + "'");
            }
            values[c - 1] = v;
        }
        table.keys.emplace_back(cells[0]);
        rows.push_back(std::move(values));
    }
    if (!have_header) throw ValidationError(source + ": empty file");

    table.values.resize(static_cast<Eigen::Index>(rows.size()),
                        static_cast<Eigen::Index>(table.columns.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
            table.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
        }
    }
    return table;
}

LabeledTable read_table_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_table_csv(buf.str(), path.string());
}

std::string format_table_csv(const LabeledTable& table) {
    std::string out = table.key_header;
    for (const auto& c : table.columns) {
        out += ',';
        out += c;
    }
    out += '\n';
    for (Eigen::Index r = 0; r < table.values.rows(); ++r) {
        out += table.keys[static_cast<std::size_t>(r)];
        for (Eigen::Index c = 0; c < table.values.cols(); ++c) {
            out += ',';
            out += format_double(table.values(r, c));
        }
        out += '\n';
    }
    return out;
}

void write_table_csv(const std::filesystem::path& path, const LabeledTable& table) {
    if (static_cast<Eigen::Index>(table.keys.size()) != table.values.rows() ||
        static_cast<Eigen::Index>(table.columns.size()) != table.values.cols()) {
        throw ValidationError("table labels do not match its values");
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write '" + path.string() + "'");
    out << format_table_csv(table);
}

PricePanel read_prices_csv(const std::filesystem::path& path) {
    LabeledTable t = read_table_csv(path);
    for (Eigen::Index r = 0; r < t.values.rows(); ++r) {
        for (Eigen::Index c = 0; c < t.values.cols(); ++c) {
            if (!(t.values(r, c) > 0.0)) {
                throw ValidationError(path.string() + ": non-positive price " +
                                      format_double(t.values(r, c)) + " at date '" +
                                      t.keys[static_cast<std::size_t>(r)] + "', column '" +
                                      t.columns[static_cast<std::size_t>(c)] + "'");
            }
        }
    }
    return PricePanel(std::move(t.keys), std::move(t.columns), std::move(t.values));
}

ReturnPanel read_returns_csv(const std::filesystem::path& path) {
    LabeledTable t = read_table_csv(path);
    return ReturnPanel(std::move(t.keys), std::move(t.columns), std::move(t.values));
}

void write_returns_csv(const std::filesystem::path& path, const ReturnPanel& panel) {
    write_table_csv(path, LabeledTable{"date", panel.dates(), panel.asset_ids(), panel.returns()});
}

void write_matrix_csv(const std::filesystem::path& path, const std::vector<std::string>& ids,
                      const Eigen::MatrixXd& m) {
    write_table_csv(path, LabeledTable{"asset", ids, ids, m});
}

}  // namespace sgmv
