#pragma once
// Data ingestion, output formats and run manifests.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mve/errors.hpp"
#include "mve/evaluation.hpp"
#include "mve/experiments.hpp"

namespace mve {

enum class CsvErrorKind { MissingFile, EmptyFile, BlankCell, NonNumeric, RaggedRow, MissingTarget };

std::string_view csv_error_kind_name(CsvErrorKind k);

// Rows and columns are 1-based file positions; 0 when not applicable.
class CsvError : public DataError {
public:
    CsvError(CsvErrorKind kind, std::size_t row, std::size_t column, const std::string& what);

    CsvErrorKind kind() const { return kind_; }
    std::size_t row() const { return row_; }
    std::size_t column() const { return column_; }

private:
    CsvErrorKind kind_;
    std::size_t row_;
    std::size_t column_;
};

struct CsvOptions {
    // Header name, or 0-based column index. Empty selects the last column.
    std::string target;
    bool header = true;
    char delimiter = ',';
};

// Every cell must parse as a number; nothing is imputed.
Dataset load_csv(const std::filesystem::path& path, const CsvOptions& options = {});
Dataset parse_csv(std::string_view text, const CsvOptions& options = {}, const std::string& label = "csv");

// Scientific notation with 6 significant digits ("1.23457e+00"); inf and nan
// are written as "inf", "-inf" and "nan".
std::string format_number(double v);

// Shortest representation that reads back to the identical double.
std::string format_exact(double v);

using CsvRow = std::vector<std::string>;

std::string to_csv(const CsvRow& header, const std::vector<CsvRow>& rows);

// Columns x1..xp, y with exact formatting so that load_csv reproduces the
// values bit for bit.
std::string dataset_to_csv(const Dataset& d);

void write_text_file(const std::filesystem::path& path, std::string_view text);
std::string read_text_file(const std::filesystem::path& path);

// Lower-case hex SHA-256.
std::string sha256_hex(std::string_view bytes);

// ---------------------------------------------------------------- results

struct ResultsRow {
    std::string dataset;
    Strategy strategy = Strategy::NoWarmup;
    RegMode mode = RegMode::Equal;
    std::optional<MetricsAggregate> value;
    // This arm is the significantly better one of its Equal/Separate pair.
    bool loglik_significant = false;
    bool rmse_significant = false;
};

// One row per (dataset, strategy, mode). Rendered like the published tables:
// one line per data set, three strategy column pairs (Equal, Separate).
struct ResultsTable {
    std::vector<ResultsRow> rows;

    void add(const RunSummary& summary);
    std::vector<std::string> datasets() const;
    const ResultsRow* find(const std::string& dataset, Strategy s, RegMode m) const;

    // metric: "loglik" or "rmse". Significant cells are marked with '*'.
    std::string render(std::string_view metric) const;
    std::string to_csv() const;
};

// ---------------------------------------------------------------- manifest

struct RunManifest {
    std::string tool = "mve";
    std::string version;
    std::string command;
    std::vector<std::string> argv;  // arguments after the program name
    std::uint64_t seed = 0;
    std::string started_utc;
    std::string finished_utc;
    std::vector<std::string> configs;          // config_to_text of every resolved configuration
    std::optional<CvPlan> plan;
    std::vector<std::pair<std::string, std::string>> inputs;   // (path or label, sha256)
    std::vector<std::pair<std::string, std::string>> outputs;  // (file name, sha256)
    int exit_code = 0;

    std::string to_json() const;
    static RunManifest from_json(std::string_view text);
};

std::string utc_timestamp();
std::string tool_version();

}  // namespace mve
