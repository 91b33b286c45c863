#pragma once

#include <chrono>
#include <string>

#include "json.hpp"
#include "promptevo/agents.hpp"

namespace promptevo::detail {

// POST a JSON body and return the parsed JSON response. Retries with
// exponential backoff on 429, 5xx and transport failures; other statuses and
// unparseable bodies fail immediately as protocol errors.
nlohmann::json post_json_with_retry(const std::string& endpoint_url,
                                    const nlohmann::json& body,
                                    const std::string& auth_env,
                                    std::chrono::milliseconds timeout,
                                    int retry_budget,
                                    std::chrono::milliseconds retry_base_delay,
                                    RateGate* gate);

}  // namespace promptevo::detail
