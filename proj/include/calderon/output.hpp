#pragma once

#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <vector>

namespace calderon {

/// CSV file with a three-line preamble:
///   # calderon <command> config_hash=<hex> generated=<UTC timestamp>
///   # units: <free text>
///   <column header>
/// Only the first line varies between identical runs. Rows are flushed as
/// they are written so partial results survive a failure.
class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::string& command, const std::string& config_hash,
              const std::string& units, const std::vector<std::string>& columns);

    void row(const std::vector<std::string>& cells);
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    std::ofstream out_;
    size_t columns_;
    std::mutex mutex_;
};

/// Shortest round-trip representation ("%.17g").
std::string cell(double v);
std::string cell(long v);
std::string cell(unsigned long long v);
std::string cell(const std::string& v);

std::string utc_timestamp();

/// Writes a gnuplot script; never executes it.
void write_plot_script(const std::filesystem::path& path, const std::string& body);

/// Data rows of a CSV written by CsvWriter (preamble and header dropped).
std::vector<std::string> csv_data_rows(const std::filesystem::path& path);

} // namespace calderon
