#include "mve/cli_io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <memory>
#include <nlohmann/json.hpp>
#include <sstream>

#ifndef MVE_VERSION
#define MVE_VERSION "0.0.0"
#endif

namespace mve {

using nlohmann::json;

std::string_view csv_error_kind_name(CsvErrorKind k) {
    switch (k) {
        case CsvErrorKind::MissingFile: return "missing file";
        case CsvErrorKind::EmptyFile: return "empty file";
        case CsvErrorKind::BlankCell: return "blank cell";
        case CsvErrorKind::NonNumeric: return "non-numeric cell";
        case CsvErrorKind::RaggedRow: return "wrong number of columns";
        case CsvErrorKind::MissingTarget: return "missing target column";
    }
    return "csv error";
}

CsvError::CsvError(CsvErrorKind kind, std::size_t row, std::size_t column, const std::string& what)
    : DataError(what), kind_(kind), row_(row), column_(column) {}

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::string unquote(std::string_view s) {
    s = trim(s);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return std::string(s);
}

std::vector<std::string_view> split(std::string_view line, char delim) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(delim, start);
        if (pos == std::string_view::npos) {
            cells.push_back(line.substr(start));
            break;
        }
        cells.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return cells;
}

std::optional<double> parse_number(std::string_view s) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

std::string location(const std::string& label, std::size_t row, std::size_t col) {
    std::string s = label + ": row " + std::to_string(row);
    if (col != 0) s += ", column " + std::to_string(col);
    return s;
}

}  // namespace

Dataset parse_csv(std::string_view text, const CsvOptions& options, const std::string& label) {
    // Non-empty lines with their 1-based line numbers.
    std::vector<std::pair<std::size_t, std::string_view>> lines;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto pos = text.find('\n', start);
        const std::string_view line = text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
        ++line_no;
        if (!trim(line).empty()) lines.emplace_back(line_no, line);
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    if (lines.empty()) throw CsvError(CsvErrorKind::EmptyFile, 0, 0, label + ": file is empty");

    const std::size_t width = split(lines.front().second, options.delimiter).size();
    std::vector<std::string> names;
    std::size_t first_data = 0;
    if (options.header) {
        for (std::string_view c : split(lines.front().second, options.delimiter)) names.push_back(unquote(c));
        first_data = 1;
    }
    if (lines.size() <= first_data) throw CsvError(CsvErrorKind::EmptyFile, 0, 0, label + ": no data rows");
    if (width < 2) throw CsvError(CsvErrorKind::MissingTarget, lines.front().first, 0, label + ": need at least two columns");

    std::size_t target = width - 1;
    if (!options.target.empty()) {
        const auto it = std::find(names.begin(), names.end(), options.target);
        if (it != names.end()) {
            target = static_cast<std::size_t>(it - names.begin());
        } else {
            std::size_t idx = 0;
            const auto [ptr, ec] =
                std::from_chars(options.target.data(), options.target.data() + options.target.size(), idx);
            if (ec != std::errc() || ptr != options.target.data() + options.target.size() || idx >= width) {
                throw CsvError(CsvErrorKind::MissingTarget, 0, 0,
                               label + ": target column '" + options.target + "' not found");
            }
            target = idx;
        }
    }

    const std::size_t n = lines.size() - first_data;
    Dataset d;
    d.label = label;
    d.X = Matrix(n, width - 1);
    d.y.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
        const auto& [row_no, line] = lines[first_data + r];
        const std::vector<std::string_view> cells = split(line, options.delimiter);
        if (cells.size() != width) {
            throw CsvError(CsvErrorKind::RaggedRow, row_no, 0,
                           location(label, row_no, 0) + ": expected " + std::to_string(width) + " columns, found " +
                               std::to_string(cells.size()));
        }
        std::size_t out_col = 0;
        for (std::size_t c = 0; c < width; ++c) {
            if (trim(cells[c]).empty()) {
                throw CsvError(CsvErrorKind::BlankCell, row_no, c + 1, location(label, row_no, c + 1) + ": blank cell");
            }
            const std::optional<double> v = parse_number(cells[c]);
            if (!v) {
                throw CsvError(CsvErrorKind::NonNumeric, row_no, c + 1,
                               location(label, row_no, c + 1) + ": non-numeric value '" + std::string(trim(cells[c])) +
                                   "'");
            }
            if (c == target) {
                d.y[r] = *v;
            } else {
                d.X(r, out_col++) = *v;
            }
        }
    }
    return d;
}

Dataset load_csv(const std::filesystem::path& path, const CsvOptions& options) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CsvError(CsvErrorKind::MissingFile, 0, 0, path.string() + ": cannot open file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_csv(ss.str(), options, path.stem().string());
}

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.5e", v);
    return buf;
}

std::string format_exact(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

std::string to_csv(const CsvRow& header, const std::vector<CsvRow>& rows) {
    std::string out;
    auto emit = [&](const CsvRow& row) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out += ',';
            out += row[i];
        }
        out += '\n';
    };
    emit(header);
    for (const CsvRow& r : rows) emit(r);
    return out;
}

std::string dataset_to_csv(const Dataset& d) {
    CsvRow header;
    for (std::size_t c = 0; c < d.X.cols; ++c) header.push_back("x" + std::to_string(c + 1));
    header.push_back("y");
    std::vector<CsvRow> rows;
    rows.reserve(d.size());
    for (std::size_t r = 0; r < d.size(); ++r) {
        CsvRow row;
        for (double v : d.X.row(r)) row.push_back(format_exact(v));
        row.push_back(format_exact(d.y[r]));
        rows.push_back(std::move(row));
    }
    return to_csv(header, rows);
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError(path.string() + ": cannot write file");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw DataError(path.string() + ": write failed");
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(path.string() + ": cannot open file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
        throw std::runtime_error("sha256 computation failed");
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += kHex[digest[i] >> 4];
        out += kHex[digest[i] & 0xF];
    }
    return out;
}

// ---------------------------------------------------------------- results

void ResultsTable::add(const RunSummary& summary) {
    for (const ArmSummary& arm : summary.arms) {
        ResultsRow row;
        row.dataset = summary.dataset_label;
        row.strategy = arm.strategy;
        row.mode = arm.mode;
        row.value = arm.aggregate;
        for (const ModeComparison& c : summary.comparisons) {
            if (c.strategy != arm.strategy) continue;
            // a = Equal, b = Separate; mean_difference = Equal - Separate.
            if (c.loglik && c.loglik->significant) {
                const bool equal_better = c.loglik->mean_difference > 0;
                row.loglik_significant = equal_better == (arm.mode == RegMode::Equal);
            }
            if (c.rmse && c.rmse->significant) {
                const bool equal_better = c.rmse->mean_difference < 0;
                row.rmse_significant = equal_better == (arm.mode == RegMode::Equal);
            }
        }
        rows.push_back(std::move(row));
    }
}

std::vector<std::string> ResultsTable::datasets() const {
    std::vector<std::string> out;
    for (const ResultsRow& r : rows) {
        if (std::find(out.begin(), out.end(), r.dataset) == out.end()) out.push_back(r.dataset);
    }
    return out;
}

const ResultsRow* ResultsTable::find(const std::string& dataset, Strategy s, RegMode m) const {
    for (const ResultsRow& r : rows) {
        if (r.dataset == dataset && r.strategy == s && r.mode == m) return &r;
    }
    return nullptr;
}

namespace {

std::string pad(std::string s, std::size_t width) {
    // Width in code points so that the multi-byte '±' does not skew columns.
    std::size_t cps = 0;
    for (unsigned char ch : s) cps += (ch & 0xC0) != 0x80;
    if (cps < width) s.append(width - cps, ' ');
    return s;
}

}  // namespace

std::string ResultsTable::render(std::string_view metric) const {
    const bool ll = metric == "loglik";
    if (!ll && metric != "rmse") throw ConfigError("unknown metric '" + std::string(metric) + "'");
    constexpr std::size_t kCell = 22;
    std::size_t name_w = 8;
    for (const std::string& d : datasets()) name_w = std::max(name_w, d.size() + 2);

    std::string out = pad(ll ? "loglik" : "rmse", name_w);
    for (Strategy s : kAllStrategies) out += pad(std::string(strategy_name(s)), 2 * kCell);
    out += '\n' + pad("", name_w);
    for (std::size_t i = 0; i < 3; ++i) {
        for (RegMode m : kAllRegModes) out += pad(std::string(reg_mode_name(m)), kCell);
    }
    out += '\n';
    for (const std::string& d : datasets()) {
        out += pad(d, name_w);
        for (Strategy s : kAllStrategies) {
            for (RegMode m : kAllRegModes) {
                const ResultsRow* r = find(d, s, m);
                std::string cell = "-";
                if (r && r->value) {
                    const Aggregate& a = ll ? r->value->loglik : r->value->rmse;
                    char buf[64];
                    std::snprintf(buf, sizeof buf, "%.3f ± %.3f", a.mean, a.standard_error);
                    cell = buf;
                    if (ll ? r->loglik_significant : r->rmse_significant) cell += " *";
                } else if (r) {
                    cell = "n/a";
                }
                out += pad(cell, kCell);
            }
        }
        out += '\n';
    }
    out += "* significantly better than the other regularization mode (paired two-tailed t-test)\n";
    return out;
}

std::string ResultsTable::to_csv() const {
    std::vector<CsvRow> out;
    for (const ResultsRow& r : rows) {
        CsvRow row{r.dataset, std::string(strategy_name(r.strategy)), std::string(reg_mode_name(r.mode))};
        if (r.value) {
            for (double v : {r.value->loglik.mean, r.value->loglik.standard_error, r.value->rmse.mean,
                             r.value->rmse.standard_error}) {
                row.push_back(format_number(v));
            }
        } else {
            row.insert(row.end(), 4, "nan");
        }
        row.push_back(r.loglik_significant ? "1" : "0");
        row.push_back(r.rmse_significant ? "1" : "0");
        out.push_back(std::move(row));
    }
    return mve::to_csv({"dataset", "strategy", "mode", "loglik_mean", "loglik_se", "rmse_mean", "rmse_se",
                        "loglik_significant", "rmse_significant"},
                       out);
}

// ---------------------------------------------------------------- manifest

namespace {

json plan_to_json(const CvPlan& p) {
    return json{{"outer_folds", p.outer_folds},
                {"inner_folds", p.inner_folds},
                {"lambda_grid", p.lambda_grid},
                {"seed", p.seed},
                {"outer_assignment", p.outer_assignment}};
}

CvPlan plan_from_json(const json& j) {
    CvPlan p;
    p.outer_folds = j.at("outer_folds").get<std::size_t>();
    p.inner_folds = j.at("inner_folds").get<std::size_t>();
    p.lambda_grid = j.at("lambda_grid").get<std::vector<double>>();
    p.seed = j.at("seed").get<std::uint64_t>();
    p.outer_assignment = j.at("outer_assignment").get<std::vector<std::size_t>>();
    return p;
}

json pairs_to_json(const std::vector<std::pair<std::string, std::string>>& v) {
    json arr = json::array();
    for (const auto& [name, sum] : v) arr.push_back({{"name", name}, {"sha256", sum}});
    return arr;
}

std::vector<std::pair<std::string, std::string>> pairs_from_json(const json& j) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const json& e : j) out.emplace_back(e.at("name").get<std::string>(), e.at("sha256").get<std::string>());
    return out;
}

}  // namespace

std::string RunManifest::to_json() const {
    json j{{"tool", tool},
           {"version", version},
           {"command", command},
           {"argv", argv},
           {"seed", seed},
           {"started_utc", started_utc},
           {"finished_utc", finished_utc},
           {"configs", configs},
           {"inputs", pairs_to_json(inputs)},
           {"outputs", pairs_to_json(outputs)},
           {"exit_code", exit_code}};
    j["plan"] = plan ? plan_to_json(*plan) : json(nullptr);
    return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json(std::string_view text) {
    try {
        const json j = json::parse(text);
        RunManifest m;
        m.tool = j.at("tool").get<std::string>();
        m.version = j.at("version").get<std::string>();
        m.command = j.at("command").get<std::string>();
        m.argv = j.at("argv").get<std::vector<std::string>>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.started_utc = j.value("started_utc", "");
        m.finished_utc = j.value("finished_utc", "");
        m.configs = j.value("configs", std::vector<std::string>{});
        if (j.contains("plan") && !j["plan"].is_null()) m.plan = plan_from_json(j["plan"]);
        m.inputs = pairs_from_json(j.value("inputs", json::array()));
        m.outputs = pairs_from_json(j.value("outputs", json::array()));
        m.exit_code = j.value("exit_code", 0);
        return m;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed manifest: ") + e.what());
    }
}

std::string utc_timestamp() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string tool_version() { return MVE_VERSION; }

}  // namespace mve
