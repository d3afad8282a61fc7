#include "tutorloop/errors.hpp"

namespace tutorloop {

Error::Error(std::string tag, const std::string& message)
    : std::runtime_error(message), tag_(std::move(tag)) {}

}  // namespace tutorloop
