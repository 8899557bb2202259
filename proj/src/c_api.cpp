#include "bncbf/bncbf.h"

#include "run_log_io.hpp"
#include "scenario.hpp"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <string>

struct bncbf_scenario {
  bncbf::Scenario scenario;
};

struct bncbf_run {
  bncbf::RunLog log;
};

namespace {

thread_local std::string g_last_error;

bncbf_status fail(bncbf_status status, const std::string& msg) {
  g_last_error = msg;
  return status;
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out != nullptr) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

template <class Fn>
bncbf_status guarded(Fn&& fn) {
  try {
    fn();
    return BNCBF_OK;
  } catch (const bncbf::ValidationFailed& e) {
    return fail(BNCBF_ERR_VALIDATION, e.what());
  } catch (const bncbf::ScenarioError& e) {
    return fail(BNCBF_ERR_PARSE, e.what());
  } catch (const bncbf::TreeError& e) {
    return fail(BNCBF_ERR_PARSE, e.what());
  } catch (const bncbf::IoError& e) {
    return fail(BNCBF_ERR_IO, e.what());
  } catch (const bncbf::DistanceSolveError& e) {
    return fail(BNCBF_ERR_SOLVER, e.what());
  } catch (const std::domain_error& e) {
    return fail(BNCBF_ERR_DOMAIN, e.what());
  } catch (const std::invalid_argument& e) {
    return fail(BNCBF_ERR_INVALID_ARGUMENT, e.what());
  } catch (const std::exception& e) {
    return fail(BNCBF_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(BNCBF_ERR_INTERNAL, "unknown error");
  }
}

#define BNCBF_REQUIRE(cond, msg) \
  if (!(cond)) return fail(BNCBF_ERR_INVALID_ARGUMENT, msg)

}  // namespace

extern "C" {

const char* bncbf_version(void) { return "1.0.0"; }

const char* bncbf_status_name(bncbf_status status) {
  switch (status) {
    case BNCBF_OK: return "ok";
    case BNCBF_ERR_INVALID_ARGUMENT: return "invalid argument";
    case BNCBF_ERR_PARSE: return "parse error";
    case BNCBF_ERR_VALIDATION: return "validation failed";
    case BNCBF_ERR_DOMAIN: return "domain error";
    case BNCBF_ERR_SOLVER: return "solver error";
    case BNCBF_ERR_IO: return "io error";
    case BNCBF_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* bncbf_last_error(void) { return g_last_error.c_str(); }

void bncbf_string_free(char* s) { std::free(s); }

bncbf_status bncbf_scenario_load(const char* path, bncbf_scenario** out) {
  BNCBF_REQUIRE(path != nullptr && out != nullptr, "null argument");
  *out = nullptr;
  return guarded([&] {
    if (!std::ifstream(path)) throw bncbf::IoError(std::string("cannot open scenario file '") + path + "'");
    *out = new bncbf_scenario{bncbf::load_scenario(path)};
  });
}

bncbf_status bncbf_scenario_parse(const char* json_text, bncbf_scenario** out) {
  BNCBF_REQUIRE(json_text != nullptr && out != nullptr, "null argument");
  *out = nullptr;
  return guarded([&] {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
      throw bncbf::ScenarioError(std::string("scenario is not valid JSON: ") + e.what());
    }
    *out = new bncbf_scenario{bncbf::parse_scenario(j)};
  });
}

void bncbf_scenario_free(bncbf_scenario* scenario) { delete scenario; }

bncbf_status bncbf_scenario_set(bncbf_scenario* scenario, const char* key, double value) {
  BNCBF_REQUIRE(scenario != nullptr && key != nullptr, "null argument");
  bncbf::Scenario& s = scenario->scenario;
  const std::string k = key;
  auto positive = [&](const char* what) {
    if (!(value > 0.0) || !std::isfinite(value)) throw std::invalid_argument(std::string(what) + " must be positive");
  };
  return guarded([&] {
    if (k == "dt") {
      positive("dt");
      s.dt = value;
    } else if (k == "duration") {
      if (!(value >= 0.0) || !std::isfinite(value)) throw std::invalid_argument("duration must be nonnegative");
      s.duration = value;
    } else if (k == "eps1") {
      if (!(value >= 0.0)) throw std::invalid_argument("eps1 must be nonnegative");
      s.params.eps1 = value;
    } else if (k == "eps2") {
      positive("eps2");
      s.params.eps2 = value;
    } else if (k == "alpha_slope") {
      positive("alpha_slope");
      s.params.alpha_slope = value;
    } else if (k == "seed") {
      if (!(value >= 0.0) || value != std::floor(value)) throw std::invalid_argument("seed must be a nonnegative integer");
      s.seed = static_cast<std::uint64_t>(value);
    } else if (k == "filter_bypass") {
      s.filter_bypass = value != 0.0;
    } else if (k == "broad_phase") {
      s.broad_phase = value != 0.0;
    } else {
      throw std::invalid_argument("unknown scenario key '" + k + "'");
    }
  });
}

bncbf_status bncbf_scenario_follower_count(const bncbf_scenario* scenario, int* out) {
  BNCBF_REQUIRE(scenario != nullptr && out != nullptr, "null argument");
  int n = 0;
  for (const auto& a : scenario->scenario.agents) n += a.role == bncbf::Role::Follower ? 1 : 0;
  *out = n;
  return BNCBF_OK;
}

bncbf_status bncbf_scenario_with_followers(const bncbf_scenario* scenario, int n, bncbf_scenario** out) {
  BNCBF_REQUIRE(scenario != nullptr && out != nullptr, "null argument");
  BNCBF_REQUIRE(n >= 1, "follower count must be at least 1");
  *out = nullptr;
  return guarded([&] { *out = new bncbf_scenario{bncbf::with_follower_count(scenario->scenario, n)}; });
}

bncbf_status bncbf_validate(const bncbf_scenario* scenario, int* ok, char** report_json) {
  BNCBF_REQUIRE(scenario != nullptr && ok != nullptr, "null argument");
  *ok = 0;
  if (report_json != nullptr) *report_json = nullptr;
  return guarded([&] {
    nlohmann::json rep;
    try {
      const bncbf::Simulator sim(scenario->scenario);
      const bncbf::ValidationReport r = sim.validate();
      *ok = r.ok ? 1 : 0;
      int ca = 0, los = 0;
      for (const auto& l : sim.leaves()) {
        ca += l.type == bncbf::LeafSpec::Type::Collision ? 1 : 0;
        los += l.type == bncbf::LeafSpec::Type::Los ? 1 : 0;
      }
      rep = {{"ok", r.ok},
             {"problems", r.problems},
             {"negative_leaves", r.negative_leaves},
             {"h_g", std::isfinite(r.h_g) ? nlohmann::json(r.h_g) : nlohmann::json(nullptr)},
             {"leaves", sim.leaves().size()},
             {"collision_leaves", ca},
             {"los_leaves", los},
             {"input_dim", sim.input_dim()}};
    } catch (const bncbf::ScenarioError& e) {
      rep = {{"ok", false}, {"problems", {e.what()}}};
    } catch (const bncbf::TreeError& e) {
      rep = {{"ok", false}, {"problems", {e.what()}}};
    }
    if (report_json != nullptr) *report_json = dup_string(rep.dump(2));
  });
}

bncbf_status bncbf_run_scenario(const bncbf_scenario* scenario, int threads, bncbf_run** out) {
  BNCBF_REQUIRE(scenario != nullptr && out != nullptr, "null argument");
  *out = nullptr;
  return guarded([&] {
    const bncbf::Simulator sim(scenario->scenario, threads > 0 ? threads : bncbf::threads_from_env());
    *out = new bncbf_run{sim.run()};
  });
}

void bncbf_run_free(bncbf_run* run) { delete run; }

bncbf_status bncbf_run_write(const bncbf_run* run, const char* dir) {
  BNCBF_REQUIRE(run != nullptr && dir != nullptr, "null argument");
  return guarded([&] { bncbf::write_run(run->log, dir); });
}

bncbf_status bncbf_run_read(const char* dir, bncbf_run** out) {
  BNCBF_REQUIRE(dir != nullptr && out != nullptr, "null argument");
  *out = nullptr;
  return guarded([&] { *out = new bncbf_run{bncbf::read_run(dir)}; });
}

bncbf_status bncbf_run_summary(const bncbf_run* run, char** json) {
  BNCBF_REQUIRE(run != nullptr && json != nullptr, "null argument");
  *json = nullptr;
  return guarded([&] { *json = dup_string(bncbf::summary_json(run->log).dump(2)); });
}

bncbf_status bncbf_run_counts(const bncbf_run* run, int* violations, int* faults, int* aborted) {
  BNCBF_REQUIRE(run != nullptr, "null argument");
  return guarded([&] {
    const bncbf::Summary s = bncbf::stats(run->log);
    if (violations != nullptr) *violations = s.violations;
    if (faults != nullptr) *faults = s.faults;
    if (aborted != nullptr) *aborted = s.aborted ? 1 : 0;
  });
}

bncbf_status bncbf_run_min_hg(const bncbf_run* run, double* out) {
  BNCBF_REQUIRE(run != nullptr && out != nullptr, "null argument");
  return guarded([&] { *out = bncbf::stats(run->log).min_h_g; });
}

}  // extern "C"
