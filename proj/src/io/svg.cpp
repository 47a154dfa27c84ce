#include "snella/io/svg.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace snella {

namespace {

constexpr int cell = 24, left = 90, top = 40;

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

std::string heatmap_svg(const Heatmap& map) {
    const std::size_t rows = map.values.size();
    const std::size_t cols = rows ? map.values.front().size() : 0;
    for (std::size_t i = 0; i < rows; ++i) {
        if (map.values[i].size() != cols) throw std::invalid_argument("ragged heatmap: row " + std::to_string(i));
        for (std::size_t j = 0; j < cols; ++j) {
            const double v = map.values[i][j];
            if (!(v >= 0.0 && v <= 1.0)) {
                throw std::invalid_argument("heatmap value at (" + std::to_string(i) + ", " + std::to_string(j) +
                                            ") outside [0, 1]");
            }
        }
    }
    if (!map.row_labels.empty() && map.row_labels.size() != rows) throw std::invalid_argument("row label count");
    if (!map.column_labels.empty() && map.column_labels.size() != cols) throw std::invalid_argument("column label count");

    const int width = left + static_cast<int>(cols) * cell + 10, height = top + static_cast<int>(rows) * cell + 10;
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" font-family=\"monospace\" font-size=\"10\">\n";
    svg << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"#ffffff\"/>\n";
    for (std::size_t j = 0; j < cols; ++j) {
        const std::string label = map.column_labels.empty() ? std::to_string(j) : map.column_labels[j];
        svg << "<text x=\"" << left + static_cast<int>(j) * cell + cell / 2 << "\" y=\"" << top - 6
            << "\" text-anchor=\"middle\">" << escape(label) << "</text>\n";
    }
    for (std::size_t i = 0; i < rows; ++i) {
        const int y = top + static_cast<int>(i) * cell;
        const std::string label = map.row_labels.empty() ? std::to_string(i) : map.row_labels[i];
        svg << "<text x=\"" << left - 6 << "\" y=\"" << y + cell / 2 + 4 << "\" text-anchor=\"end\">" << escape(label)
            << "</text>\n";
        for (std::size_t j = 0; j < cols; ++j) {
            const int grey = static_cast<int>(std::lround(255.0 * (1.0 - map.values[i][j])));
            char fill[8];
            std::snprintf(fill, sizeof fill, "#%02x%02x%02x", grey, grey, grey);
            svg << "<rect x=\"" << left + static_cast<int>(j) * cell << "\" y=\"" << y << "\" width=\"" << cell
                << "\" height=\"" << cell << "\" fill=\"" << fill << "\" stroke=\"#999999\"/>\n";
        }
    }
    svg << "</svg>\n";
    return svg.str();
}

void emit_heatmap_svg(const Heatmap& map, const std::filesystem::path& path) {
    const std::string text = heatmap_svg(map);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

}  // namespace snella
