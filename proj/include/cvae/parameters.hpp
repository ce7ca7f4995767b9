#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>

#include "cvae/matrix.hpp"

namespace cvae {

// Named trainable arrays. Iteration order is the lexicographic name order,
// which fixes the layout of the serialized container.
class ParameterSet {
public:
    using Storage = std::map<std::string, Matrix, std::less<>>;

    void set(std::string name, Matrix value) { entries_[std::move(name)] = std::move(value); }
    bool contains(std::string_view name) const { return entries_.find(name) != entries_.end(); }

    const Matrix& at(std::string_view name) const;
    Matrix& at(std::string_view name);

    // Adds every entry of `other`; names must not collide.
    void merge(const ParameterSet& other);

    // Same names, same shapes, all zeros.
    ParameterSet zeros_like() const;

    std::size_t entry_count() const { return entries_.size(); }
    std::size_t scalar_count() const;
    bool same_layout(const ParameterSet& other) const;

    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

    bool operator==(const ParameterSet&) const = default;

private:
    Storage entries_;
};

// Container format: a text header followed by a raw little-endian float64
// payload.
//
//   cvae-params 1
//   entries <n>
//   <name> <rows> <cols> <offset>     (n lines, offset in bytes from payload start)
//   payload <bytes>
//   <payload>
void write_parameters(std::ostream& out, const ParameterSet& params);
ParameterSet read_parameters(std::istream& in);

void save_parameters(const std::filesystem::path& path, const ParameterSet& params);
ParameterSet load_parameters(const std::filesystem::path& path);

}  // namespace cvae
