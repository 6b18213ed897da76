#pragma once

#include <string>
#include <vector>

#include "eenas/search.hpp"

#include "json.hpp"

namespace eenas {

inline constexpr const char* kArchiveVersion = "0.1.0";

nlohmann::json archive_entry_to_json(const ArchiveEntry& e);
ArchiveEntry archive_entry_from_json(const nlohmann::json& j);

/// Newline-delimited JSON, one ArchiveEntry per line.
void save_archive(const std::string& path, const std::vector<ArchiveEntry>& archive);

/// Validates every record; a corrupt or partial line rejects the whole file
/// with its line number. Older record versions warn and proceed when they
/// still validate.
std::vector<ArchiveEntry> load_archive(const std::string& path);

}  // namespace eenas
