// Run artifacts shared by the command-line tool and the acceptance checks.
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ihanas/hwcost.hpp"
#include "ihanas/search.hpp"

namespace ihanas::tools {

/// Shortest text that reads back to the same double ("inf"/"nan" spelled out).
std::string num(double v);

std::string generations_csv(const SearchResult& r);
/// One row per archive member, sorted by id.
std::string archive_csv(const SearchResult& r);
std::string events_jsonl(const SearchResult& r);

/// val_loss vs. E_tok scatter; colour follows TTFT, radius follows TPOT.
std::string front_svg(const std::vector<Individual>& front, const std::string& title);

std::string ablation_csv(const AblationResult& a);
/// Mean hypervolume per generation with a one-std band, one curve per recipe.
std::string ablation_svg(const AblationResult& a);

/// Per grid point: index,n_mac,w_core_kb,n_chips_max,feasible
std::string grid_csv(const GridSearchResult& g);

void write_text(const std::filesystem::path& p, const std::string& text);
std::string read_text(const std::filesystem::path& p);

}  // namespace ihanas::tools
