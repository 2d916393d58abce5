#pragma once
#include <stdexcept>
#include <string>

namespace lfseg {

/// Base class for every error raised by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Container magic bytes do not identify a known format.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Container is recognized but its payload is inconsistent with the header.
class CorruptFile : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class IndexError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// A column of a stage-2 label map lacks a required layer class.
class MissingLayer : public Error {
public:
    MissingLayer(int column, int class_id)
        : Error("column " + std::to_string(column) + " is missing layer class " +
                std::to_string(class_id)),
          column(column), class_id(class_id) {}
    int column;
    int class_id;
};

/// No column of a stage-1 label map yields a usable retina run.
class SurfaceExtractionError : public Error {
public:
    using Error::Error;
};

/// Surface pair with y1 >= y2 at some column.
class DegenerateSurface : public Error {
public:
    explicit DegenerateSurface(int column)
        : Error("degenerate surface pair (y1 >= y2) at column " + std::to_string(column)),
          column(column) {}
    int column;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
    DivergenceError(int epoch, int batch)
        : Error("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                std::to_string(batch)),
          epoch(epoch), batch(batch) {}
    int epoch;
    int batch;
};

} // namespace lfseg
