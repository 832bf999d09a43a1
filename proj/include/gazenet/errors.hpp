#pragma once

#include <stdexcept>
#include <string>

namespace gazenet {

// All toolkit failures derive from Error so callers can catch one type.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

// Raised when a pose pair whose pupil is not visible is handed to the renderer.
class RejectionError : public Error {
public:
    using Error::Error;
};

class ProtocolError : public Error {
public:
    using Error::Error;
};

class TargetingInfeasible : public Error {
public:
    using Error::Error;
};

class TrainingDiverged : public Error {
public:
    TrainingDiverged(const std::string& what, std::size_t batch_index)
        : Error(what), batch_index_(batch_index) {}
    std::size_t batch_index() const noexcept { return batch_index_; }

private:
    std::size_t batch_index_;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace gazenet
