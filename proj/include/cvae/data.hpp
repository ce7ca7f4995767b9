#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "cvae/matrix.hpp"

namespace cvae::data {

// Paired (condition, target) rows.
struct DatasetSplit {
    Matrix conditions;
    Matrix targets;
    std::string name;

    std::size_t size() const { return conditions.rows; }
    std::size_t condition_dim() const { return conditions.cols; }
    std::size_t target_dim() const { return targets.cols; }
    void validate() const;
    DatasetSplit subset(std::size_t begin, std::size_t count) const;
};

struct ToyInterval {
    double low = 0.0;
    double high = 1.0;
    std::vector<double> modes;
};

struct ToySpec {
    std::vector<ToyInterval> intervals;
    double sigma = 0.02;
    std::size_t samples_per_interval = 500;

    // Mode counts 1/3/1/2 over [0,1), [1,2), [2,3), [3,4].
    static ToySpec default_spec();
    void validate() const;
    // Interval containing x (the last interval is closed on the right).
    const ToyInterval* find_interval(double x) const;
};

// n points split evenly over four 2-D Gaussians at (±2, ±2), sigma 0.1; the
// condition column is the constant 0.
DatasetSplit gen_four_gaussians(std::size_t n, std::uint64_t seed);
// Component index (0..3) of point i in gen_four_gaussians output.
std::size_t four_gaussians_component(std::size_t i);
extern const std::array<std::array<double, 2>, 4> kFourGaussianMeans;

// Noise is clipped to ±6 sigma so every target lies in a mode band.
DatasetSplit gen_toy_structured(const ToySpec& spec, std::uint64_t seed);

// Unsigned-byte image stack from an IDX rank-3 file.
struct ImageSet {
    std::size_t count = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> pixels;

    std::size_t pixels_per_image() const { return rows * cols; }
    ImageSet subset(std::size_t begin, std::size_t n) const;
};

ImageSet load_idx(const std::filesystem::path& path);
ImageSet parse_idx_images(std::istream& in);
std::vector<std::uint8_t> load_idx_labels(const std::filesystem::path& path);
std::vector<std::uint8_t> parse_idx_labels(std::istream& in);

inline constexpr std::size_t kImageSide = 28;
inline constexpr std::size_t kTargetRows = 18;
inline constexpr std::size_t kConditionRows = 10;

struct ConditionTarget {
    std::vector<double> condition;  // bottom 10 rows, 280 values
    std::vector<double> target;     // top 18 rows, 504 values
};

// image: 784 binary values, row-major.
ConditionTarget split_condition_target(std::span<const double> image);
std::vector<double> assemble_image(std::span<const double> target, std::span<const double> condition);

enum class BinarizeMode { Fixed, Stochastic };

// Returns count × 784 matrix of {0, 1}.
Matrix binarize(const ImageSet& images, double threshold, std::uint64_t seed, BinarizeMode mode);

// Splits every binary image into condition (bottom) and target (top) parts.
DatasetSplit make_completion_split(const Matrix& binary_images, std::string name);

// Header x0..x{Nx-1},y0..y{Ny-1}; 9 significant digits.
void write_csv(std::ostream& out, const DatasetSplit& split);

}  // namespace cvae::data
