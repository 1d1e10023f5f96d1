#pragma once

#include <filesystem>
#include <string>

#include "pwabc/models.hpp"

namespace pwabc {

/// Shortest decimal that parses back to the same double.
std::string format_real(double v);
double parse_real(const std::string& text);

/// CSV `time,s1[,s2,...]`; discrete states are written as plain integers.
std::string dataset_to_csv(const Dataset& data);
/// Parses the CSV body; metadata fields stay at their defaults.
Dataset dataset_from_csv(const std::string& text, bool discrete);

/// Writes `<stem>.csv` and the `<stem>.json` metadata sidecar.
void write_dataset(const Dataset& data, const std::filesystem::path& csv_path);
/// Reads the CSV and, when present, the sidecar next to it.
Dataset read_dataset(const std::filesystem::path& csv_path);

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace pwabc
