#include "robtree/error.hpp"

namespace robtree {

const char* to_string(ErrorKind kind) noexcept
{
    switch (kind) {
    case ErrorKind::Validation: return "validation";
    case ErrorKind::ResourceCap: return "resource-cap";
    case ErrorKind::Backend: return "backend";
    }
    return "unknown";
}

} // namespace robtree
