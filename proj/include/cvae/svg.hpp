#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "cvae/csv.hpp"

namespace cvae::svg {

enum class FigureKind { Scatter, Line, Box, LatentField };

std::string_view to_string(FigureKind k);
FigureKind figure_kind_from_string(std::string_view s);

// Columns each figure kind reads. Scatter reads the two columns named in
// PlotOptions (the first two columns by default).
std::vector<std::string> required_columns(FigureKind kind);

struct Series {
    std::string label;
    csv::Table table;
};

struct PlotOptions {
    std::string title;
    std::string x_column;  // scatter only
    std::string y_column;  // scatter only
    double width = 640;
    double height = 480;
};

// Scatter: one colour per series. Line: one polyline per (series, component)
// over radius vs count. Box: one box per series over its `count` column.
// Latent field: one greyscale cell per (z0, z1) entry, min white, max black.
// Throws ContractError naming the expected columns on a schema mismatch.
std::string render(FigureKind kind, const std::vector<Series>& series, const PlotOptions& options = {});

}  // namespace cvae::svg
