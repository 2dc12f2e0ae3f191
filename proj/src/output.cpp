#include "calderon/output.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>

#include "calderon/error.hpp"

namespace calderon {

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::string& command, const std::string& config_hash,
                     const std::string& units, const std::vector<std::string>& columns)
    : path_(path), columns_(columns.size())
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    out_.open(path, std::ios::binary | std::ios::trunc);
    if (!out_)
        throw ConfigError("cannot write '" + path.string() + "'");
    out_ << "# calderon " << command << " config_hash=" << config_hash << " generated=" << utc_timestamp() << "\n";
    out_ << "# units: " << units << "\n";
    for (size_t i = 0; i < columns.size(); ++i)
        out_ << (i ? "," : "") << columns[i];
    out_ << "\n";
    out_.flush();
}

void CsvWriter::row(const std::vector<std::string>& cells)
{
    if (cells.size() != columns_)
        throw Error("CSV row width does not match the header of " + path_.string());
    std::lock_guard lock(mutex_);
    for (size_t i = 0; i < cells.size(); ++i)
        out_ << (i ? "," : "") << cells[i];
    out_ << "\n";
    out_.flush();
}

std::string cell(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string cell(long v) { return std::to_string(v); }
std::string cell(unsigned long long v) { return std::to_string(v); }
std::string cell(const std::string& v) { return v; }

std::string utc_timestamp()
{
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_plot_script(const std::filesystem::path& path, const std::string& body)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw ConfigError("cannot write '" + path.string() + "'");
    out << "# gnuplot script generated by calderon\n"
        << "set datafile separator ','\n"
        << "set datafile commentschars '#'\n"
        << "set key autotitle columnhead\n"
        << body;
}

std::vector<std::string> csv_data_rows(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ConfigError("cannot read '" + path.string() + "'");
    std::vector<std::string> rows;
    std::string line;
    bool header = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line[0] == '#')
            continue;
        if (!header) {
            header = true;
            continue;
        }
        rows.push_back(line);
    }
    return rows;
}

} // namespace calderon
