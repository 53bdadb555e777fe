#include "climdiff/error.hpp"

namespace climdiff {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Io: return "io";
    case ErrorKind::Format: return "format";
    case ErrorKind::Shape: return "shape";
    case ErrorKind::Range: return "range";
    case ErrorKind::Config: return "config";
    case ErrorKind::Usage: return "usage";
  }
  return "unknown";
}

}  // namespace climdiff
