#include "uwkit/tensor.hpp"

#include <sstream>

namespace uwkit {

std::string shape_to_string(const std::vector<int64_t>& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << ", ";
        os << s[i];
    }
    os << "]";
    return os.str();
}

std::string Tensor::shape_str() const { return shape_to_string(shape); }

}  // namespace uwkit
