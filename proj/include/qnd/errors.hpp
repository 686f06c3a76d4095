// errors.hpp - shared exception taxonomy.
#pragma once

#include <stdexcept>
#include <string>

namespace qnd {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define QND_ERROR_TYPE(Name)                                          \
    struct Name : Error {                                             \
        explicit Name(const std::string& msg) : Error(msg) {}         \
    }

QND_ERROR_TYPE(NonHermitian);
QND_ERROR_TYPE(DimensionMismatch);
QND_ERROR_TYPE(UnknownSymbol);
QND_ERROR_TYPE(HorizonExceeded);
QND_ERROR_TYPE(OverlapDetected);
QND_ERROR_TYPE(WindowOverlap);
QND_ERROR_TYPE(NullWeight);
QND_ERROR_TYPE(EmptyTrajectory);
QND_ERROR_TYPE(InsufficientData);
QND_ERROR_TYPE(ClusterAmbiguity);
QND_ERROR_TYPE(BoundaryPredicate);
QND_ERROR_TYPE(ConfigError);
QND_ERROR_TYPE(MissingSeries);

#undef QND_ERROR_TYPE

}  // namespace qnd
