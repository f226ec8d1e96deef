#pragma once

#include <stdexcept>
#include <string>

namespace nwp {

// Base class for everything this library throws.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Matrix/tensor dimension mismatch.
struct ShapeError : Error {
    using Error::Error;
};

// Invalid value domain: non-finite input, empty corpus, zero sizes.
struct DomainError : Error {
    using Error::Error;
};

// Parameter outside its legal range (lo >= hi, rank out of bounds, T <= 0).
struct RangeError : Error {
    using Error::Error;
};

// Out-of-range index (word id past vocabulary end).
struct IndexError : Error {
    using Error::Error;
};

// Malformed or truncated model file. Message names the byte offset.
struct FormatError : Error {
    using Error::Error;
};

// Training diverged or produced a non-finite loss.
struct TrainingError : Error {
    using Error::Error;
};

} // namespace nwp
