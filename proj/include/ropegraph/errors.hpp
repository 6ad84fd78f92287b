#pragma once

#include <stdexcept>
#include <string>

namespace ropegraph {

// All library failures derive from Error so callers can catch broadly and
// still dispatch on the concrete kind.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define ROPEGRAPH_ERROR(Name)                                     \
    class Name : public Error {                                   \
    public:                                                       \
        explicit Name(const std::string& what) : Error(what) {}  \
    }

ROPEGRAPH_ERROR(InvalidGeometry);
ROPEGRAPH_ERROR(OutOfWorkspace);
ROPEGRAPH_ERROR(ShapeMismatch);
ROPEGRAPH_ERROR(InsufficientForeground);
ROPEGRAPH_ERROR(InsufficientUnits);
ROPEGRAPH_ERROR(DegenerateGraph);
ROPEGRAPH_ERROR(NoGraph);
ROPEGRAPH_ERROR(NoSupport);
ROPEGRAPH_ERROR(ConfigError);
ROPEGRAPH_ERROR(TrainingDiverged);
ROPEGRAPH_ERROR(BadMagic);
ROPEGRAPH_ERROR(VersionMismatch);
ROPEGRAPH_ERROR(IoError);

#undef ROPEGRAPH_ERROR

class TruncatedFile : public Error {
public:
    // step < 0 means the header itself was cut short.
    TruncatedFile(const std::string& what, long step) : Error(what), step_(step) {}
    long step() const { return step_; }

private:
    long step_;
};

}  // namespace ropegraph
