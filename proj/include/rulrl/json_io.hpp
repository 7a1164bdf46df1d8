#ifndef RULRL_JSON_IO_HPP
#define RULRL_JSON_IO_HPP

#include "json.hpp"
#include "rulrl/labeling.hpp"

namespace rulrl {

inline nlohmann::ordered_json cost_to_json(const CostModel& c) {
  nlohmann::ordered_json j;
  j["failure_base"] = c.failure_base;
  j["failure_jitter"] = c.failure_jitter;
  j["repair_base"] = c.repair_base;
  j["repair_jitter"] = c.repair_jitter;
  j["profit_base"] = c.profit_base;
  j["profit_jitter"] = c.profit_jitter;
  j["lead_time"] = c.lead_time;
  j["seed"] = c.seed;
  return j;
}

inline CostModel cost_from_json(const nlohmann::json& j) {
  CostModel c;
  c.failure_base = j.at("failure_base").get<double>();
  c.failure_jitter = j.at("failure_jitter").get<double>();
  c.repair_base = j.at("repair_base").get<double>();
  c.repair_jitter = j.at("repair_jitter").get<double>();
  c.profit_base = j.at("profit_base").get<double>();
  c.profit_jitter = j.at("profit_jitter").get<double>();
  c.lead_time = j.at("lead_time").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

}  // namespace rulrl

#endif  // RULRL_JSON_IO_HPP
