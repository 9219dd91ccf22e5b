#pragma once

#include <stdexcept>
#include <string>

namespace mde {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class UnknownWordError : public Error {
public:
    explicit UnknownWordError(const std::string& word)
        : Error("unknown word: '" + word + "'"), word_(word) {}
    const std::string& word() const { return word_; }

private:
    std::string word_;
};

class ShapeMismatchError : public Error {
public:
    using Error::Error;
};

class AlignmentOutOfRangeError : public Error {
public:
    using Error::Error;
};

class DegenerateSegmentationError : public Error {
public:
    using Error::Error;
};

class EmptyMaskError : public Error {
public:
    using Error::Error;
};

class DivergedTrainingError : public Error {
public:
    using Error::Error;
};

class DivergedOptimizationError : public Error {
public:
    using Error::Error;
};

class NonFiniteGradientError : public Error {
public:
    using Error::Error;
};

class MissingClassifierError : public Error {
public:
    using Error::Error;
};

class MissingExtractorError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace mde
