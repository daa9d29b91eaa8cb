#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "axir/axioms.hpp"

namespace axir {

// `id<TAB>text` per line.
std::vector<TextRecord> read_tsv(const std::filesystem::path& path);
void write_tsv(const std::filesystem::path& path, const std::vector<TextRecord>& records);

// TREC run format: `qid Q0 docid rank score tag`.
std::vector<RunEntry> read_run(const std::filesystem::path& path);
void write_run(const std::filesystem::path& path, const std::vector<RunEntry>& run);

nlohmann::json triple_to_json(const DiagnosticTriple& t);
DiagnosticTriple triple_from_json(const nlohmann::json& j);

// One DiagnosticTriple per line.
void write_dataset(const std::filesystem::path& path, const std::vector<DiagnosticTriple>& triples);
std::vector<DiagnosticTriple> read_dataset(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& contents);

}  // namespace axir
