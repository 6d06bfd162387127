#pragma once

#include <string>

namespace httplib {
class Server;
}

namespace appraisal {

class Appraiser;

/// Registers the /api routes on an existing server:
///   GET  /api/health, /api/datasets, /api/strategies, /api/comparables
///   POST /api/appraise
/// Validation problems answer 400 with per-field errors; a model failure
/// answers 502 with whatever was computed before it (always the kNN anchor).
void install_routes(httplib::Server& server, const Appraiser& appraiser);

/// Blocking listen. Returns false when the address cannot be bound.
bool serve(const Appraiser& appraiser, const std::string& host, int port);

}  // namespace appraisal
