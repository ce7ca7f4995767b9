#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cvae {

// Violated precondition (shape mismatch, out-of-range argument).
class ContractError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A NaN or infinity showed up while evaluating or differentiating.
class NumericalError : public std::runtime_error {
public:
    NumericalError(const std::string& what, std::size_t op_id, std::string op_name)
        : std::runtime_error(what), op_id_(op_id), op_name_(std::move(op_name)) {}

    std::size_t op_id() const noexcept { return op_id_; }
    const std::string& op_name() const noexcept { return op_name_; }

private:
    std::size_t op_id_;
    std::string op_name_;
};

// Malformed binary or text input; offset is a byte offset into the file.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
          offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

}  // namespace cvae
