#include "evade/error.hpp"

namespace evade {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::EmptyCorpus: return "EmptyCorpus";
    case ErrorKind::EmptyText: return "EmptyText";
    case ErrorKind::ZeroTemperature: return "ZeroTemperature";
    case ErrorKind::MissingClass: return "MissingClass";
    case ErrorKind::TooShort: return "TooShort";
    case ErrorKind::InsufficientMaskable: return "InsufficientMaskable";
    case ErrorKind::NoSurvivors: return "NoSurvivors";
    case ErrorKind::NoWords: return "NoWords";
    case ErrorKind::EmptyQuery: return "EmptyQuery";
    case ErrorKind::EmptyBatch: return "EmptyBatch";
    case ErrorKind::Timeout: return "Timeout";
    case ErrorKind::Network: return "Network";
    case ErrorKind::ProtocolError: return "ProtocolError";
    case ErrorKind::HttpStatus: return "HttpStatus";
    case ErrorKind::Io: return "Io";
    case ErrorKind::Config: return "Config";
  }
  return "Unknown";
}

}  // namespace evade
