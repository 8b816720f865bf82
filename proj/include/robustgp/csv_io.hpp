#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "robustgp/gp_core.hpp"

namespace robustgp {

/// Numeric table with a header row.
struct CsvTable {
    std::vector<std::string> header;
    Matrix values;  // rows x header.size()

    /// Index of a column, or -1.
    int column(const std::string& name) const;
};

/// Parses comma-separated numbers under a required header. Throws DataError
/// naming the 1-based line and column of a bad cell or a ragged row.
CsvTable read_csv(std::istream& in);
CsvTable read_csv_file(const std::string& path);

/// Writes with 17 significant digits so values read back exactly.
void write_csv(std::ostream& out, const std::vector<std::string>& header, const Matrix& values);
void write_csv_file(const std::string& path, const std::vector<std::string>& header, const Matrix& values);

/// Formats one value the way write_csv does.
std::string format_double(double v);

/// Columns x1..xd, y and, if a mask is given, is_outlier (0/1).
void write_dataset_csv(const std::string& path, const Dataset& data, const std::vector<bool>* outlier_mask = nullptr);

struct LabeledDataset {
    Dataset data;
    std::vector<bool> outlier_mask;  // empty when the file has no is_outlier column
};

/// Reads x1..xd (consecutive, at least x1) and y.
LabeledDataset read_dataset_csv(const std::string& path);

/// Reads only the x1..xd columns.
Matrix read_inputs_csv(const std::string& path);

}  // namespace robustgp
