#ifndef EROSEG_ERRORS_HPP
#define EROSEG_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace eroseg {

// Caller passed structurally broken input (mismatched extents).
class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

// Input violates a documented precondition (bad range, bad config value).
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed SGT1/SGM1 bytes; offset is the byte position that failed.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
          offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_ = 0;
};

// API misuse by calling code (e.g. backward on a non-scalar).
class ContractError : public std::logic_error {
public:
    explicit ContractError(const std::string& what) : std::logic_error(what) {}
};

// Optimization diverged; carries where it happened.
class TrainingError : public std::runtime_error {
public:
    TrainingError(const std::string& what, int epoch, int batch)
        : std::runtime_error(what + " (epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch) + ")"),
          epoch_(epoch),
          batch_(batch) {}

    int epoch() const noexcept { return epoch_; }
    int batch() const noexcept { return batch_; }

private:
    int epoch_ = 0;
    int batch_ = 0;
};

}  // namespace eroseg

#endif  // EROSEG_ERRORS_HPP
