#include "cvae/data.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>

#include "cvae/random.hpp"

namespace cvae::data {

const std::array<std::array<double, 2>, 4> kFourGaussianMeans = {{{-2.0, -2.0}, {-2.0, 2.0}, {2.0, -2.0}, {2.0, 2.0}}};

void DatasetSplit::validate() const {
    if (conditions.rows != targets.rows) throw ContractError("DatasetSplit: condition/target row counts differ");
    for (double v : conditions.data)
        if (std::isnan(v)) throw ContractError("DatasetSplit: NaN condition");
    for (double v : targets.data)
        if (std::isnan(v)) throw ContractError("DatasetSplit: NaN target");
}

DatasetSplit DatasetSplit::subset(std::size_t begin, std::size_t count) const {
    return {take_rows(conditions, begin, count), take_rows(targets, begin, count), name};
}

ToySpec ToySpec::default_spec() {
    ToySpec spec;
    spec.intervals = {
        {0.0, 1.0, {0.5}},
        {1.0, 2.0, {0.2, 0.5, 0.8}},
        {2.0, 3.0, {0.5}},
        {3.0, 4.0, {0.25, 0.75}},
    };
    spec.sigma = 0.02;
    spec.samples_per_interval = 500;
    return spec;
}

void ToySpec::validate() const {
    if (intervals.empty()) throw ContractError("ToySpec: no intervals");
    if (!(sigma >= 0.0)) throw ContractError("ToySpec: sigma must be non-negative");
    for (std::size_t i = 0; i < intervals.size(); ++i) {
        const auto& iv = intervals[i];
        if (!(iv.low < iv.high)) throw ContractError("ToySpec: interval with low >= high");
        if (iv.modes.empty()) throw ContractError("ToySpec: interval without modes");
        if (i > 0 && iv.low < intervals[i - 1].high) throw ContractError("ToySpec: intervals overlap or are unordered");
    }
}

const ToyInterval* ToySpec::find_interval(double x) const {
    for (std::size_t i = 0; i < intervals.size(); ++i) {
        const auto& iv = intervals[i];
        const bool last = i + 1 == intervals.size();
        if (x >= iv.low && (x < iv.high || (last && x <= iv.high))) return &iv;
    }
    return nullptr;
}

std::size_t four_gaussians_component(std::size_t i) { return i % 4; }

DatasetSplit gen_four_gaussians(std::size_t n, std::uint64_t seed) {
    if (n < 4) throw ContractError("gen_four_gaussians: need n >= 4");
    Rng rng(seed);
    std::normal_distribution<double> noise(0.0, 0.1);
    DatasetSplit ds{Matrix(n, 1), Matrix(n, 2), "four_gaussians"};
    for (std::size_t i = 0; i < n; ++i) {
        const auto& mean = kFourGaussianMeans[four_gaussians_component(i)];
        ds.targets(i, 0) = mean[0] + noise(rng);
        ds.targets(i, 1) = mean[1] + noise(rng);
    }
    return ds;
}

DatasetSplit gen_toy_structured(const ToySpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::size_t n = spec.intervals.size() * spec.samples_per_interval;
    DatasetSplit ds{Matrix(n, 1), Matrix(n, 1), "toy_structured"};
    std::size_t row = 0;
    for (const auto& iv : spec.intervals) {
        std::uniform_real_distribution<double> where(iv.low, iv.high);
        std::uniform_int_distribution<std::size_t> which(0, iv.modes.size() - 1);
        for (std::size_t i = 0; i < spec.samples_per_interval; ++i, ++row) {
            ds.conditions(row, 0) = where(rng);
            const double mode = iv.modes[which(rng)];
            const double eps = std::clamp(normal(rng), -6.0, 6.0);
            ds.targets(row, 0) = mode + spec.sigma * eps;
        }
    }
    return ds;
}

// ---------------------------------------------------------------------------

namespace {

std::uint32_t read_be32(std::istream& in, std::size_t offset) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4) throw FormatError("IDX: truncated header", offset + static_cast<std::size_t>(in.gcount()));
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) | b[3];
}

void check_magic(std::istream& in, unsigned char rank) {
    unsigned char magic[4];
    in.read(reinterpret_cast<char*>(magic), 4);
    const auto got = static_cast<std::size_t>(in.gcount());
    for (std::size_t i = 0; i < got; ++i) {
        const unsigned char expected[4] = {0, 0, 0x08, rank};
        if (magic[i] != expected[i]) throw FormatError("IDX: bad magic number", i);
    }
    if (got != 4) throw FormatError("IDX: truncated magic number", got);
}

// Bytes left in a seekable stream, or SIZE_MAX when the stream cannot seek.
std::size_t remaining_bytes(std::istream& in) {
    const auto here = in.tellg();
    if (here < 0) return SIZE_MAX;
    in.seekg(0, std::ios::end);
    const auto end = in.tellg();
    in.seekg(here);
    return end < here ? 0 : static_cast<std::size_t>(end - here);
}

// Reads `total` payload bytes that start at byte `start`, reporting the first
// missing offset when the file is short.
void read_payload(std::istream& in, std::uint8_t* dst, std::size_t total, std::size_t start, const char* what) {
    const std::size_t available = remaining_bytes(in);
    if (available < total) throw FormatError(std::string("IDX: truncated ") + what, start + available);
    in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(total));
    const auto got = static_cast<std::size_t>(in.gcount());
    if (got != total) throw FormatError(std::string("IDX: truncated ") + what, start + got);
}

}  // namespace

ImageSet ImageSet::subset(std::size_t begin, std::size_t n) const {
    if (begin + n > count) throw ContractError("ImageSet::subset: range exceeds image count");
    ImageSet out{n, rows, cols, {}};
    const auto stride = static_cast<std::ptrdiff_t>(pixels_per_image());
    out.pixels.assign(pixels.begin() + static_cast<std::ptrdiff_t>(begin) * stride,
                      pixels.begin() + static_cast<std::ptrdiff_t>(begin + n) * stride);
    return out;
}

ImageSet parse_idx_images(std::istream& in) {
    check_magic(in, 0x03);
    ImageSet set;
    set.count = read_be32(in, 4);
    set.rows = read_be32(in, 8);
    set.cols = read_be32(in, 12);
    std::size_t total = 0;
    const bool overflow = __builtin_mul_overflow(set.count, set.rows, &total) ||
                          __builtin_mul_overflow(total, set.cols, &total);
    if (std::size_t available = remaining_bytes(in); overflow || available < total)
        throw FormatError("IDX: truncated pixel data", 16 + available);
    set.pixels.resize(total);
    read_payload(in, set.pixels.data(), total, 16, "pixel data");
    return set;
}

std::vector<std::uint8_t> parse_idx_labels(std::istream& in) {
    check_magic(in, 0x01);
    const std::size_t count = read_be32(in, 4);
    if (std::size_t available = remaining_bytes(in); available < count)
        throw FormatError("IDX: truncated label data", 8 + available);
    std::vector<std::uint8_t> labels(count);
    read_payload(in, labels.data(), count, 8, "label data");
    return labels;
}

ImageSet load_idx(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ContractError("cannot open " + path.string());
    return parse_idx_images(in);
}

std::vector<std::uint8_t> load_idx_labels(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ContractError("cannot open " + path.string());
    return parse_idx_labels(in);
}

ConditionTarget split_condition_target(std::span<const double> image) {
    constexpr std::size_t n = kImageSide * kImageSide;
    if (image.size() != n) throw ContractError("split_condition_target: expected a 28x28 image");
    for (double v : image)
        if (v != 0.0 && v != 1.0) throw ContractError("split_condition_target: image must be binary");
    const std::size_t cut = kTargetRows * kImageSide;
    return {std::vector<double>(image.begin() + cut, image.end()), std::vector<double>(image.begin(), image.begin() + cut)};
}

std::vector<double> assemble_image(std::span<const double> target, std::span<const double> condition) {
    if (target.size() != kTargetRows * kImageSide || condition.size() != kConditionRows * kImageSide)
        throw ContractError("assemble_image: part sizes must be 504 (target) and 280 (condition)");
    std::vector<double> image(target.begin(), target.end());
    image.insert(image.end(), condition.begin(), condition.end());
    return image;
}

Matrix binarize(const ImageSet& images, double threshold, std::uint64_t seed, BinarizeMode mode) {
    Matrix out(images.count, images.pixels_per_image());
    if (mode == BinarizeMode::Fixed) {
        for (std::size_t i = 0; i < images.pixels.size(); ++i)
            out.data[i] = images.pixels[i] >= threshold * 255.0 ? 1.0 : 0.0;
    } else {
        Rng rng(seed);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (std::size_t i = 0; i < images.pixels.size(); ++i)
            out.data[i] = u(rng) < images.pixels[i] / 255.0 ? 1.0 : 0.0;
    }
    return out;
}

DatasetSplit make_completion_split(const Matrix& binary_images, std::string name) {
    const std::size_t n = binary_images.rows;
    DatasetSplit ds{Matrix(n, kConditionRows * kImageSide), Matrix(n, kTargetRows * kImageSide), std::move(name)};
    for (std::size_t i = 0; i < n; ++i) {
        const auto parts = split_condition_target(binary_images.row(i));
        std::copy(parts.condition.begin(), parts.condition.end(), ds.conditions.row(i).begin());
        std::copy(parts.target.begin(), parts.target.end(), ds.targets.row(i).begin());
    }
    return ds;
}

void write_csv(std::ostream& out, const DatasetSplit& split) {
    split.validate();
    for (std::size_t j = 0; j < split.condition_dim(); ++j) out << (j ? "," : "") << 'x' << j;
    for (std::size_t j = 0; j < split.target_dim(); ++j) out << ',' << 'y' << j;
    out << '\n';
    char buf[32];
    for (std::size_t i = 0; i < split.size(); ++i) {
        for (std::size_t j = 0; j < split.condition_dim(); ++j) {
            std::snprintf(buf, sizeof buf, "%.9g", split.conditions(i, j));
            out << (j ? "," : "") << buf;
        }
        for (std::size_t j = 0; j < split.target_dim(); ++j) {
            std::snprintf(buf, sizeof buf, "%.9g", split.targets(i, j));
            out << ',' << buf;
        }
        out << '\n';
    }
}

}  // namespace cvae::data
