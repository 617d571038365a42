#include "prefstream/backend.hpp"

#include "prefstream/error.hpp"

namespace prefstream {

std::vector<double> Backend::score(std::string_view, std::string_view) {
    throw CapabilityError(describe() + " does not support token scoring");
}

std::vector<double> Backend::embed(std::string_view) {
    throw CapabilityError(describe() + " does not support embeddings");
}

} // namespace prefstream
