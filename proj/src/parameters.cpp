#include "cvae/parameters.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <vector>

static_assert(std::endian::native == std::endian::little,
              "parameter container I/O assumes a little-endian host");

namespace cvae {

namespace {

constexpr std::string_view kMagic = "cvae-params 1";

// Reads one '\n'-terminated header line, tracking the byte offset.
std::string read_header_line(std::istream& in, std::size_t& offset) {
    std::string line;
    const std::size_t start = offset;
    if (!std::getline(in, line)) throw FormatError("parameter container: truncated header", start);
    offset += line.size() + 1;
    return line;
}

}  // namespace

const Matrix& ParameterSet::at(std::string_view name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ContractError("ParameterSet: no entry named '" + std::string(name) + "'");
    return it->second;
}

Matrix& ParameterSet::at(std::string_view name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ContractError("ParameterSet: no entry named '" + std::string(name) + "'");
    return it->second;
}

void ParameterSet::merge(const ParameterSet& other) {
    for (const auto& [name, value] : other) {
        if (contains(name)) throw ContractError("ParameterSet::merge: duplicate entry '" + name + "'");
        entries_.emplace(name, value);
    }
}

ParameterSet ParameterSet::zeros_like() const {
    ParameterSet out;
    for (const auto& [name, value] : entries_) out.set(name, Matrix(value.rows, value.cols));
    return out;
}

std::size_t ParameterSet::scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, value] : entries_) n += value.size();
    return n;
}

bool ParameterSet::same_layout(const ParameterSet& other) const {
    if (entries_.size() != other.entries_.size()) return false;
    auto it = other.entries_.begin();
    for (const auto& [name, value] : entries_) {
        if (name != it->first || !value.same_shape(it->second)) return false;
        ++it;
    }
    return true;
}

void write_parameters(std::ostream& out, const ParameterSet& params) {
    std::ostringstream header;
    header << kMagic << '\n' << "entries " << params.entry_count() << '\n';
    std::size_t offset = 0;
    for (const auto& [name, value] : params) {
        if (name.empty() || name.find_first_of(" \t\n") != std::string::npos)
            throw ContractError("write_parameters: entry names must be non-empty and free of whitespace");
        header << name << ' ' << value.rows << ' ' << value.cols << ' ' << offset << '\n';
        offset += value.size() * sizeof(double);
    }
    header << "payload " << offset << '\n';
    out << header.str();
    for (const auto& [name, value] : params)
        out.write(reinterpret_cast<const char*>(value.data.data()),
                  static_cast<std::streamsize>(value.size() * sizeof(double)));
    if (!out) throw ContractError("write_parameters: stream write failed");
}

ParameterSet read_parameters(std::istream& in) {
    std::size_t offset = 0;
    if (read_header_line(in, offset) != kMagic) throw FormatError("parameter container: bad magic line", 0);

    std::size_t line_start = offset;
    std::istringstream counts(read_header_line(in, offset));
    std::string keyword;
    std::size_t n = 0;
    if (!(counts >> keyword >> n) || keyword != "entries")
        throw FormatError("parameter container: expected 'entries <n>'", line_start);

    struct Entry {
        std::string name;
        std::size_t rows, cols, offset;
    };
    std::vector<Entry> entries;
    std::size_t expected_offset = 0;
    for (std::size_t i = 0; i < n; ++i) {
        line_start = offset;
        std::istringstream line(read_header_line(in, offset));
        Entry e;
        if (!(line >> e.name >> e.rows >> e.cols >> e.offset))
            throw FormatError("parameter container: malformed entry line", line_start);
        if (e.offset != expected_offset)
            throw FormatError("parameter container: entry '" + e.name + "' has inconsistent offset", line_start);
        expected_offset += e.rows * e.cols * sizeof(double);
        entries.push_back(std::move(e));
    }

    line_start = offset;
    std::istringstream payload_line(read_header_line(in, offset));
    std::size_t payload_bytes = 0;
    if (!(payload_line >> keyword >> payload_bytes) || keyword != "payload")
        throw FormatError("parameter container: expected 'payload <bytes>'", line_start);
    if (payload_bytes != expected_offset)
        throw FormatError("parameter container: payload size disagrees with entries", line_start);

    const std::size_t payload_start = offset;
    ParameterSet params;
    for (const auto& e : entries) {
        Matrix m(e.rows, e.cols);
        const auto bytes = static_cast<std::streamsize>(m.size() * sizeof(double));
        in.read(reinterpret_cast<char*>(m.data.data()), bytes);
        if (in.gcount() != bytes)
            throw FormatError("parameter container: truncated payload in entry '" + e.name + "'",
                              payload_start + e.offset + static_cast<std::size_t>(in.gcount()));
        params.set(e.name, std::move(m));
    }
    return params;
}

void save_parameters(const std::filesystem::path& path, const ParameterSet& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ContractError("cannot open " + path.string() + " for writing");
    write_parameters(out, params);
}

ParameterSet load_parameters(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ContractError("cannot open " + path.string());
    return read_parameters(in);
}

}  // namespace cvae
