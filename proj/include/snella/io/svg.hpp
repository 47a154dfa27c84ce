#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace snella {

struct Heatmap {
    std::vector<std::string> row_labels;     // one per row (layers)
    std::vector<std::string> column_labels;  // one per column (epochs)
    std::vector<std::vector<double>> values; // in [0, 1]
};

/// Grey-scale grid, white at 0 and black at 1. Throws std::invalid_argument on a ragged
/// table, mismatched label counts or a value outside [0, 1].
std::string heatmap_svg(const Heatmap& map);
void emit_heatmap_svg(const Heatmap& map, const std::filesystem::path& path);

}  // namespace snella
