#pragma once

#include "scenario.hpp"

#include <string>

namespace bncbf {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Writes traj.csv, barriers.csv, events.json and summary.json into dir
/// (created if missing). Doubles are printed with 17 significant digits.
void write_run(const RunLog& log, const std::string& dir);

/// Reads the four files back into a RunLog.
RunLog read_run(const std::string& dir);

nlohmann::json summary_json(const RunLog& log);

}  // namespace bncbf
