#include "robustgp/csv_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "robustgp/errors.hpp"

namespace robustgp {

namespace {

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

int x_columns(const CsvTable& t) {
    int d = 0;
    while (t.column("x" + std::to_string(d + 1)) >= 0) ++d;
    if (d == 0) throw DataError("CSV needs input columns x1..xd");
    return d;
}

}  // namespace

int CsvTable::column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return static_cast<int>(i);
    return -1;
}

CsvTable read_csv(std::istream& in) {
    CsvTable t;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!trim(line).empty()) break;
    }
    if (trim(line).empty()) throw DataError("CSV is empty (a header row is required)");
    for (const auto& h : split(line)) t.header.push_back(trim(h));
    const std::size_t ncol = t.header.size();

    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto cells = split(line);
        if (cells.size() != ncol)
            throw DataError("CSV line " + std::to_string(lineno) + ": expected " + std::to_string(ncol) +
                            " columns, found " + std::to_string(cells.size()));
        std::vector<double> row(ncol);
        for (std::size_t c = 0; c < ncol; ++c) {
            const std::string s = trim(cells[c]);
            double v = 0.0;
            const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
            if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v))
                throw DataError("CSV line " + std::to_string(lineno) + ", column " + std::to_string(c + 1) + " ('" +
                                t.header[c] + "'): not a finite number: '" + s + "'");
            row[c] = v;
        }
        rows.push_back(std::move(row));
    }
    t.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(ncol));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < ncol; ++c) t.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    return t;
}

CsvTable read_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "' for reading");
    return read_csv(in);
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

void write_csv(std::ostream& out, const std::vector<std::string>& header, const Matrix& values) {
    for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
    out << '\n';
    for (Eigen::Index r = 0; r < values.rows(); ++r) {
        for (Eigen::Index c = 0; c < values.cols(); ++c) out << (c ? "," : "") << format_double(values(r, c));
        out << '\n';
    }
}

void write_csv_file(const std::string& path, const std::vector<std::string>& header, const Matrix& values) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    write_csv(out, header, values);
    if (!out) throw DataError("write to '" + path + "' failed");
}

void write_dataset_csv(const std::string& path, const Dataset& data, const std::vector<bool>* outlier_mask) {
    const Eigen::Index d = data.dim();
    std::vector<std::string> header;
    for (Eigen::Index k = 0; k < d; ++k) header.push_back("x" + std::to_string(k + 1));
    header.emplace_back("y");
    if (outlier_mask) {
        if (outlier_mask->size() != static_cast<std::size_t>(data.size())) throw DataError("mask length does not match N");
        header.emplace_back("is_outlier");
    }
    Matrix m(data.size(), static_cast<Eigen::Index>(header.size()));
    m.leftCols(d) = data.X;
    m.col(d) = data.y;
    if (outlier_mask)
        for (Eigen::Index i = 0; i < data.size(); ++i) m(i, d + 1) = (*outlier_mask)[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
    write_csv_file(path, header, m);
}

LabeledDataset read_dataset_csv(const std::string& path) {
    const CsvTable t = read_csv_file(path);
    const int d = x_columns(t);
    const int yc = t.column("y");
    if (yc < 0) throw DataError("'" + path + "' has no 'y' column");
    if (t.values.rows() == 0) throw DataError("'" + path + "' has no data rows");
    Matrix X(t.values.rows(), d);
    for (int k = 0; k < d; ++k) X.col(k) = t.values.col(t.column("x" + std::to_string(k + 1)));
    LabeledDataset out;
    out.data = Dataset(std::move(X), t.values.col(yc));
    if (const int mc = t.column("is_outlier"); mc >= 0)
        for (Eigen::Index i = 0; i < t.values.rows(); ++i) out.outlier_mask.push_back(t.values(i, mc) != 0.0);
    return out;
}

Matrix read_inputs_csv(const std::string& path) {
    const CsvTable t = read_csv_file(path);
    const int d = x_columns(t);
    Matrix X(t.values.rows(), d);
    for (int k = 0; k < d; ++k) X.col(k) = t.values.col(t.column("x" + std::to_string(k + 1)));
    return X;
}

}  // namespace robustgp
